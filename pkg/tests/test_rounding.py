import itertools

import numpy as np
import pytest

from wcmdp.model import is_feasible_decision
from wcmdp.rounding import (
    floor_round,
    min_distance_round,
    randomized_round,
    supports_perfect_rounding,
)
from wcmdp.relaxation import solve_relaxed
from _oracles import grid_config, random_model


def test_floor_example():
    y = np.array([[0.13, 0.37], [0.5, 0.0]])
    m = np.array([0.5, 0.5])
    out = floor_round(y, m, 10)
    assert np.allclose(out.decision, [[0.2, 0.3], [0.5, 0.0]], atol=1e-12)
    assert out.method == "floor"


def test_floor_is_identity_on_grid():
    y = np.array([[0.2, 0.3], [0.4, 0.1]])
    out = floor_round(y, np.array([0.5, 0.5]), 10)
    assert np.allclose(out.decision, y, atol=1e-12)
    assert out.distance <= 1e-12


def test_floor_handles_float_grid_edge():
    # 10 * 0.3 is a hair below 3.0 in floats; naive flooring loses a unit
    y = np.array([[0.2, 0.3], [0.5, 0.0]])
    out = floor_round(y, np.array([0.5, 0.5]), 10)
    assert np.allclose(out.decision[0, 1], 0.3, atol=1e-12)


def test_floor_feasibility_and_error_bounds(rng):
    for _ in range(40):
        model, _ = random_model(rng)
        N = int(rng.integers(2, 51))
        m = grid_config(rng, model.d, N)
        t = int(rng.integers(0, model.horizon))
        y = solve_relaxed(model, m, t).y_at(t)
        out = floor_round(y, m, N)
        assert is_feasible_decision(model, t, m, out.decision, N)
        A = model.num_actions - 1
        assert np.abs(out.decision[:, 1:] - y[:, 1:]).max() < 1 / N + 1e-12
        assert out.distance <= model.d * A / N + 1e-12


def test_floor_rejects_bad_inputs():
    with pytest.raises(ValueError):
        floor_round(np.array([[0.6, 0.0], [0.5, 0.0]]), [0.5, 0.5], 10)
    with pytest.raises(ValueError):
        floor_round(np.array([[0.5, 0.0], [0.5, 0.0]]), [0.5, 0.5], 7)


def test_min_distance_matches_floor_on_budget_bound(counterexample_03):
    # ceiling the active entry would break the budget, so floor is optimal
    model = counterexample_03.model
    y = np.array([[0.13, 0.37], [0.5, 0.0]])
    m = np.array([0.5, 0.5])
    out = min_distance_round(y, m, 10, model, 0)
    assert np.allclose(out.decision, [[0.2, 0.3], [0.5, 0.0]], atol=1e-12)
    assert not out.fell_back


def test_min_distance_zero_on_grid(counterexample_03):
    y = np.array([[0.2, 0.3], [0.5, 0.0]])
    out = min_distance_round(y, np.array([0.5, 0.5]), 10,
                             counterexample_03.model, 0)
    assert out.distance <= 1e-12


def _exhaustive_min_distance(y, m, N, model, t, tol=1e-9):
    """Independent oracle: try every floor/ceil combination."""
    d, na = y.shape
    z = y * N
    lo = np.floor(z + tol)
    entries = [(s, a) for s in range(d) for a in range(1, na)]
    best = None
    for mask in itertools.product((0, 1), repeat=len(entries)):
        counts = lo.copy()
        for bit, (s, a) in zip(mask, entries):
            counts[s, a] += bit
        counts[:, 0] = np.rint(m * N) - counts[:, 1:].sum(axis=1)
        Y = counts / N
        if np.any(Y[:, 0] < -tol):
            continue
        ep = model.params(t)
        if np.any(ep.D @ Y.ravel() > ep.b + tol):
            continue
        dist = np.abs(Y - y).max()
        if best is None or dist < best - 1e-15:
            best = dist
    return best


def test_min_distance_optimality_small(rng):
    for _ in range(25):
        model, _ = random_model(rng, d_max=3, na_max=3)
        N = int(rng.integers(3, 20))
        m = grid_config(rng, model.d, N)
        sol = solve_relaxed(model, m, 0)
        y = sol.y_at(0)
        out = min_distance_round(y, m, N, model, 0)
        oracle = _exhaustive_min_distance(y, m, N, model, 0)
        assert out.distance == pytest.approx(oracle, abs=1e-12)
        assert out.distance <= floor_round(y, m, N).distance + 1e-15
        assert is_feasible_decision(model, 0, m, out.decision, N)


def test_min_distance_guard_falls_back(rng):
    from wcmdp.instances import build_screening_model, scenario_params

    inst = build_screening_model(scenario_params("scarce", False))
    sol = solve_relaxed(inst.model, inst.m0, 0)
    out = min_distance_round(sol.y_at(0), inst.m0, 20, inst.model, 0)
    assert out.fell_back
    assert is_feasible_decision(inst.model, 0, inst.m0, out.decision, 20)


def test_randomized_round_identity_on_grid(counterexample_03, rng):
    y = np.array([[0.2, 0.3], [0.5, 0.0]])
    out = randomized_round(y, np.array([0.5, 0.5]), 10,
                           np.random.default_rng(0),
                           model=counterexample_03.model, t=0)
    assert np.allclose(out.decision, y, atol=1e-12)


def test_randomized_round_two_coordinate_law(rng):
    # fractional parts (0.5, 0.5) with the total fixed at 3: the outcome is
    # one of two grid points, each with probability 1/2, mean equal to y
    y = np.array([[0.35, 0.15], [0.35, 0.15]])
    m = np.array([0.5, 0.5])
    seen = {(0.2, 0.1): 0, (0.1, 0.2): 0}
    samples = 4000
    g = np.random.default_rng(7)
    for _ in range(samples):
        out = randomized_round(y, m, 10, g)
        key = (round(out.decision[0, 1], 10), round(out.decision[1, 1], 10))
        assert key in seen
        seen[key] += 1
    frac = seen[(0.2, 0.1)] / samples
    assert abs(frac - 0.5) < 4 * 0.5 / np.sqrt(samples)


def test_randomized_round_unbiased_and_feasible(rng, counterexample_03):
    model = counterexample_03.model
    N = 10
    g = np.random.default_rng(123)
    for _ in range(8):
        counts = g.multinomial(N, [0.5, 0.5])
        m = counts / N
        # admissible fractional decision: activate up to min(b, m) per state
        y = np.zeros((2, 2))
        total = 0.3 * g.random()
        y[0, 1] = min(total * g.random(), m[0])
        y[1, 1] = min(total - y[0, 1], m[1])
        y[:, 0] = m - y[:, 1]
        samples = 3000
        acc = np.zeros((2, 2))
        for _ in range(samples):
            out = randomized_round(y, m, N, g, model=model, t=0)
            acc += out.decision
            assert is_feasible_decision(model, 0, m, out.decision, N)
            z = out.decision[:, 1] * N
            assert np.allclose(z, np.rint(z), atol=1e-9)
            assert np.all(np.floor(y[:, 1] * N + 1e-9) - 1e-9 <= z)
            assert np.all(z <= np.ceil(y[:, 1] * N - 1e-9) + 1e-9)
        mean = acc / samples
        # each scaled coordinate moves within one unit: per-sample sd <= 1/(2N)
        se = 0.5 / (N * np.sqrt(samples))
        assert np.abs(mean - y).max() <= 4 * se


def test_randomized_round_budget_saturation_kept(counterexample_03):
    # fractional activations summing exactly to the scaled budget stay there
    model = counterexample_03.model
    y = np.array([[0.35, 0.15], [0.35, 0.15]])
    m = np.array([0.5, 0.5])
    g = np.random.default_rng(5)
    for _ in range(200):
        out = randomized_round(y, m, 10, g, model=model, t=0)
        assert out.decision[:, 1].sum() == pytest.approx(0.3, abs=1e-12)


def test_randomized_round_preconditions(counterexample_03, rng):
    model = counterexample_03.model
    y = np.array([[0.2, 0.3], [0.5, 0.0]])
    m = np.array([0.5, 0.5])
    with pytest.raises(ValueError):
        # 7 * 0.3 not integer
        randomized_round(y, m, 7, np.random.default_rng(0), model=model, t=0)
    assert supports_perfect_rounding(model)
    model2, _ = random_model(rng, na_max=3)
    if model2.num_actions != 2:
        assert not supports_perfect_rounding(model2)
