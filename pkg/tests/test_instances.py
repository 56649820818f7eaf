from fractions import Fraction

import numpy as np
import pytest

from wcmdp.instances import (
    FORBIDDEN_COST,
    ScreeningParams,
    build_counterexample,
    build_screening_model,
    exact_gap_oracle,
    load_preset,
    one_question_update,
    scenario_params,
    screening_states,
    two_question_update,
)
from wcmdp.model import validate_model
from wcmdp.relaxation import solve_relaxed


def test_counterexample_metadata():
    inst = build_counterexample(0.3)
    assert inst.v_rel_exact == pytest.approx(0.6)
    assert not inst.degenerate_expected
    assert build_counterexample(0.5).degenerate_expected
    assert validate_model(inst.model) == []
    with pytest.raises(ValueError):
        build_counterexample(0.6)


def test_exact_gap_oracle_frozen_values():
    # hand-derived binomial sums: sum_{k<Nb} (Nb - k) C(N, k) / 2^N / N
    assert exact_gap_oracle(0.5, 10) == pytest.approx(630 / 10240, abs=1e-15)
    assert exact_gap_oracle(0.3, 10) == pytest.approx(68 / 10240, abs=1e-15)
    assert exact_gap_oracle(0.3, 33) >= 0.1 / 33
    assert exact_gap_oracle(0.3, 77) >= 0.1 / 77


def test_exact_gap_oracle_randomized_mode():
    g = exact_gap_oracle(0.3, 10, rounding="randomized")
    # no truncation loss: only the binomial shortfall term remains
    expected = sum(
        (Fraction(3, 10) - Fraction(k, 10)) * Fraction(_comb(10, k), 1024)
        for k in range(3)
    )
    assert g == pytest.approx(float(expected), abs=1e-15)
    with pytest.raises(ValueError):
        exact_gap_oracle(0.3, 7, rounding="randomized")


def _comb(n, k):
    from math import comb

    return comb(n, k)


def test_gap_oracle_randomized_strictly_decreasing():
    gaps = [exact_gap_oracle(0.3, N, rounding="randomized")
            for N in (50, 100, 150)]
    assert gaps[0] > gaps[1] > gaps[2] > 0
    assert gaps[1] <= 1e-3


def test_gap_oracle_agrees_with_direct_fraction_sum():
    # independent recomputation with plain Fractions
    for b, N in ((0.5, 10), (0.3, 10), (0.3, 33), (0.5, 16)):
        bf = Fraction(b).limit_denominator(10**9)
        fl = (N * bf).numerator // (N * bf).denominator
        tail = sum(
            _comb(N, k) * min(Fraction(k, N) - bf, 0) for k in range(N + 1)
        ) / Fraction(2**N)
        gap = float(2 * bf - (Fraction(fl, N) + bf + tail))
        assert exact_gap_oracle(b, N) == pytest.approx(gap, abs=1e-15)


def test_posterior_updates_are_exact():
    moves = one_question_update(1, 1)
    assert moves == [((2, 1), Fraction(1, 2)), ((1, 2), Fraction(1, 2))]
    moves = two_question_update(1, 1)
    assert moves == [
        ((3, 1), Fraction(1, 3)),
        ((2, 2), Fraction(1, 3)),
        ((1, 3), Fraction(1, 3)),
    ]
    for a, b in ((1, 1), (2, 5), (7, 3)):
        assert sum(p for _, p in one_question_update(a, b)) == 1
        assert sum(p for _, p in two_question_update(a, b)) == 1


def test_posterior_mean_martingale():
    for a, b in ((1, 1), (2, 2), (3, 5), (9, 1)):
        mean = Fraction(a, a + b)
        for updater in (one_question_update, two_question_update):
            post = sum(
                p * Fraction(a2, a2 + b2) for (a2, b2), p in updater(a, b)
            )
            assert post == mean  # exact rational identity


def test_screening_state_count():
    cap = 10
    states = screening_states((1, 1), cap)
    assert len(states) == sum(k + 1 for k in range(cap + 1)) == 66
    inst = build_screening_model(scenario_params("scarce", False))
    assert inst.model.d == 132
    assert len(set(inst.catalog)) == 132


def test_screening_model_valid_and_configured():
    inst = build_screening_model(scenario_params("scarce", True))
    model = inst.model
    assert validate_model(model) == []
    assert model.J == 3 and model.horizon == 11
    assert inst.m0.sum() == pytest.approx(1.0)
    assert inst.m0[inst.prior_states[0]] == 0.5
    assert inst.m0[inst.prior_states[1]] == 0.5
    # interview consumption: one question costs 1, two questions cost 1.5
    na = model.num_actions
    ep = model.params(0)
    i0 = inst.prior_states[0]
    assert ep.D[0, i0 * na + 1] == 1.0
    assert ep.D[0, i0 * na + 2] == 1.5
    assert ep.b[0] == 0.15 and ep.b[1] == ep.b[2] == 0.1


def test_screening_transitions_match_updates():
    inst = build_screening_model(scenario_params("scarce", False))
    model = inst.model
    index = {gs: i for i, gs in enumerate(inst.catalog)}
    i = index[(0, 1, 1)]
    P = model.params(0).P
    assert P[1, i, index[(0, 2, 1)]] == pytest.approx(0.5)
    assert P[1, i, index[(0, 1, 2)]] == pytest.approx(0.5)
    assert P[2, i, index[(0, 3, 1)]] == pytest.approx(1 / 3)
    assert P[2, i, index[(0, 2, 2)]] == pytest.approx(1 / 3)
    assert P[2, i, index[(0, 1, 3)]] == pytest.approx(1 / 3)
    assert np.allclose(P[0], np.eye(model.d))


def test_screening_phi_from_prior():
    # all mass on the first group's prior, everyone asked one question
    from wcmdp.relaxation import phi

    inst = build_screening_model(scenario_params("scarce", False))
    model = inst.model
    index = {gs: i for i, gs in enumerate(inst.catalog)}
    y = np.zeros((model.d, model.num_actions))
    y[index[(0, 1, 1)], 1] = 1.0
    out = phi(model, 0, y)
    assert out[index[(0, 2, 1)]] == pytest.approx(0.5)
    assert out[index[(0, 1, 2)]] == pytest.approx(0.5)
    assert out.sum() == pytest.approx(1.0)


def test_screening_cap_states_forced_passive():
    inst = build_screening_model(scenario_params("scarce", False))
    model = inst.model
    na = model.num_actions
    ep = model.params(0)
    for i, (g, a, b) in enumerate(inst.catalog):
        asked = (a - inst.params.priors[g][0]) + (b - inst.params.priors[g][1])
        if asked + 1 > inst.params.question_cap:
            assert ep.D[0, i * na + 1] == FORBIDDEN_COST
        if asked + 2 > inst.params.question_cap:
            assert ep.D[0, i * na + 2] == FORBIDDEN_COST


def test_screening_final_round():
    inst = build_screening_model(scenario_params("scarce", False))
    model = inst.model
    final = model.params(model.horizon - 1)
    na = model.num_actions
    for i, (g, a, b) in enumerate(inst.catalog):
        assert final.R[i, 1] == pytest.approx(a / (a + b))
        assert final.R[i, 0] == 0.0
        assert final.D[0, i * na + 1] == 1.0
        assert final.D[0, i * na + 2] == FORBIDDEN_COST
    assert final.b[0] == pytest.approx(0.1)
    assert np.allclose(final.P[0], np.eye(model.d))


def test_screening_admission_budget_saturated():
    # admitting any positive-mean applicant helps, so the LP fills the quota
    inst = build_screening_model(scenario_params("scarce", False))
    sol = solve_relaxed(inst.model, inst.m0, 0)
    admitted = sol.y_at(inst.model.horizon - 1)[:, 1].sum()
    assert admitted == pytest.approx(inst.params.beta, abs=1e-8)


def test_fairness_params_validated():
    with pytest.raises(ValueError, match="gamma < alpha"):
        ScreeningParams(alpha=0.3, gamma=0.3, fairness=True)
    ScreeningParams(alpha=0.3, gamma=0.2, fairness=True)  # valid
    with pytest.raises(ValueError):
        scenario_params("plentiful")


def test_fairness_value_relations():
    scarce_off = build_screening_model(scenario_params("scarce", False))
    scarce_on = build_screening_model(scenario_params("scarce", True))
    v_off = solve_relaxed(scarce_off.model, scarce_off.m0, 0).value
    v_on = solve_relaxed(scarce_on.model, scarce_on.m0, 0).value
    assert v_on <= v_off + 1e-9  # extra rows never help
    abundant_off = build_screening_model(scenario_params("abundant", False))
    abundant_on = build_screening_model(scenario_params("abundant", True))
    a_off = solve_relaxed(abundant_off.model, abundant_off.m0, 0).value
    a_on = solve_relaxed(abundant_on.model, abundant_on.m0, 0).value
    assert a_on == pytest.approx(a_off, abs=1e-8)


def test_presets():
    model, m0, label = load_preset("counterexample:b=0.3")
    assert model.d == 2 and np.allclose(m0, [0.5, 0.5])
    model, m0, _ = load_preset("screening:scarce,fairness")
    assert model.J == 3
    model, m0, _ = load_preset("screening:abundant")
    assert model.J == 1
    for bad in ("counterexample:x=1", "screening:", "screening:scarce,quick",
                "mystery:1"):
        with pytest.raises(ValueError):
            load_preset(bad)
