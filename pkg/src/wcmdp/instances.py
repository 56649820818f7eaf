"""Built-in instance families.

Two generators ship with the package:

* :func:`build_counterexample` -- the two-state, two-action restless bandit
  whose optimality gaps are known in closed form (exact binomial summation in
  :func:`exact_gap_oracle`), used to pin down the convergence-rate regimes.
* :func:`build_screening_model` -- the applicant screening problem: two
  applicant groups with beta priors, interview actions asking one or two
  questions with consumption (0, 1, 1.5), an optional per-group fairness
  budget, and a final admission round rewarded by the posterior mean.

The screening transition rows are assembled in exact rational arithmetic and
converted to floats at the end, so each row sums to one exactly before the
conversion.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb

import numpy as np

from .model import EpochParams, WcMdpModel

#: consumption sentinel that exceeds any budget, used to forbid actions
FORBIDDEN_COST = 1e6


# ---------------------------------------------------------------------------
# counterexample family
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CounterexampleInstance:
    model: WcMdpModel
    m0: np.ndarray
    v_rel_exact: float
    degenerate_expected: bool


def build_counterexample(b: float) -> CounterexampleInstance:
    """Two-state bandit with uniform transitions and budget ``b``.

    Two epochs, reward 1 for activating state 0, every transition row is
    (1/2, 1/2).  The relaxed value is exactly ``2 b``; the instance is
    degenerate precisely at ``b = 0.5`` where the budget and the state-0 mass
    bind together.
    """
    if not 0 < b <= 0.5:
        raise ValueError(f"budget must lie in (0, 0.5], got {b!r}")
    P = np.full((2, 2, 2), 0.5)
    R = np.array([[0.0, 1.0], [0.0, 0.0]])
    D = np.array([[0.0, 1.0, 0.0, 1.0]])
    ep = EpochParams(P=P, R=R, D=D, b=np.array([b]))
    model = WcMdpModel.stationary(d=2, num_actions=2, J=1, horizon=2, params=ep)
    return CounterexampleInstance(
        model=model,
        m0=np.array([0.5, 0.5]),
        v_rel_exact=2.0 * b,
        degenerate_expected=(b == 0.5),
    )


def _as_fraction(x: float) -> Fraction:
    """Interpret a CLI/test float as the decimal it prints as."""
    return Fraction(x).limit_denominator(10**9)


def exact_gap_oracle(b: float, N: int, rounding: str = "floor") -> float:
    """Exact optimality gap of the LP-update policy on the counterexample.

    Computed by exact binomial summation over the epoch-1 configuration
    (state-0 count is Binomial(N, 1/2)).  ``floor`` mode charges the grid
    truncation of the budget at epoch 0 and compares the epoch-1 mass against
    the exact budget; ``randomized`` mode (requires ``N * b`` integer) has no
    truncation loss and keeps the exact fractions throughout.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    bf = _as_fraction(b)
    floor_nb = (N * bf).numerator // (N * bf).denominator
    if rounding == "floor":
        first_step = Fraction(floor_nb, N)
    elif rounding == "randomized":
        if (N * bf).denominator != 1:
            raise ValueError(f"randomized mode needs N*b integer, got {N}*{b}")
        first_step = bf
    else:
        raise ValueError(f"unknown rounding mode {rounding!r}")
    tail = Fraction(0)
    for k in range(N + 1):
        loss = min(Fraction(k, N) - bf, Fraction(0))
        if loss:
            tail += comb(N, k) * loss
    tail = Fraction(tail, 2**N)
    value = first_step + bf + tail
    return float(2 * bf - value)


# ---------------------------------------------------------------------------
# applicant screening
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScreeningParams:
    """Configuration of the applicant screening instance.

    ``alpha`` is the per-arm interview budget, ``beta`` the admission
    fraction, ``gamma`` the per-group interview budget enforced only when
    ``fairness`` is set (in which case ``gamma < alpha < 2 gamma`` must
    hold).  Each group's belief state starts at its prior and can absorb at
    most ``question_cap`` questions.
    """

    alpha: float
    gamma: float
    beta: float = 0.1
    fairness: bool = False
    T_interview: int = 10
    question_cap: int = 10
    priors: tuple[tuple[int, int], tuple[int, int]] = ((1, 1), (2, 2))
    group_shares: tuple[float, float] = (0.5, 0.5)

    def __post_init__(self):
        if self.fairness and not (self.gamma < self.alpha < 2 * self.gamma):
            raise ValueError(
                f"fairness requires gamma < alpha < 2*gamma, "
                f"got gamma={self.gamma}, alpha={self.alpha}"
            )
        if abs(sum(self.group_shares) - 1.0) > 1e-12:
            raise ValueError("group shares must sum to 1")


SCENARIOS = {"scarce": (0.15, 0.1), "abundant": (0.3, 0.2)}


def scenario_params(scenario: str, fairness: bool = False) -> ScreeningParams:
    """The two preset resource regimes (admission fraction fixed at 0.1)."""
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}; use scarce|abundant")
    alpha, gamma = SCENARIOS[scenario]
    return ScreeningParams(alpha=alpha, gamma=gamma, beta=0.1, fairness=fairness)


def one_question_update(a: int, b: int) -> list[tuple[tuple[int, int], Fraction]]:
    """Posterior move after one question, exact probabilities."""
    return [
        ((a + 1, b), Fraction(a, a + b)),
        ((a, b + 1), Fraction(b, a + b)),
    ]


def two_question_update(a: int, b: int) -> list[tuple[tuple[int, int], Fraction]]:
    """Posterior move after two questions, exact probabilities."""
    den = (a + b) * (1 + a + b)
    return [
        ((a + 2, b), Fraction(a * (1 + a), den)),
        ((a + 1, b + 1), Fraction(2 * a * b, den)),
        ((a, b + 2), Fraction(b * (1 + b), den)),
    ]


def screening_states(prior: tuple[int, int], cap: int) -> list[tuple[int, int]]:
    """Belief states reachable from ``prior`` within ``cap`` questions."""
    a0, b0 = prior
    return [
        (a0 + i, b0 + k - i)
        for k in range(cap + 1)
        for i in range(k + 1)
    ]


@dataclass(frozen=True)
class ScreeningInstance:
    model: WcMdpModel
    m0: np.ndarray
    params: ScreeningParams
    catalog: tuple[tuple[int, int, int], ...]  # (group, a, b) per state index
    prior_states: tuple[int, int]  # indices of the two prior states


def build_screening_model(params: ScreeningParams) -> ScreeningInstance:
    """Assemble the screening instance as a weakly coupled MDP.

    States are (group, posterior) pairs; the two groups share one state
    space by direct sum, with group-restricted budget rows when fairness is
    on.  Interview epochs carry zero reward; the final epoch relabels the
    actions to not-admit / admit (the two-question action is forbidden
    there), charges one budget unit per admission against ``beta`` and pays
    the posterior mean for each admitted arm.  Actions that would exceed the
    question cap are forbidden through a consumption sentinel larger than
    any budget.
    """
    cap = params.question_cap
    catalog: list[tuple[int, int, int]] = []
    for g, prior in enumerate(params.priors):
        catalog.extend((g, a, b) for a, b in screening_states(prior, cap))
    index = {gs: i for i, gs in enumerate(catalog)}
    d = len(catalog)
    na = 3
    J = 3 if params.fairness else 1
    u = d * na

    P_frac: list[list[dict[int, Fraction]]] = [
        [dict() for _ in range(d)] for _ in range(na)
    ]
    interview_D = np.zeros((J, u))
    for i, (g, a, b) in enumerate(catalog):
        asked = (a - params.priors[g][0]) + (b - params.priors[g][1])
        P_frac[0][i][i] = Fraction(1)
        if asked + 1 <= cap:
            for (a2, b2), p in one_question_update(a, b):
                P_frac[1][i][index[(g, a2, b2)]] = p
            cost1 = 1.0
        else:
            P_frac[1][i][i] = Fraction(1)
            cost1 = FORBIDDEN_COST
        if asked + 2 <= cap:
            for (a2, b2), p in two_question_update(a, b):
                P_frac[2][i][index[(g, a2, b2)]] = p
            cost2 = 1.5
        else:
            P_frac[2][i][i] = Fraction(1)
            cost2 = FORBIDDEN_COST
        interview_D[0, i * na + 1] = cost1
        interview_D[0, i * na + 2] = cost2
        if params.fairness:
            interview_D[1 + g, i * na + 1] = cost1
            interview_D[1 + g, i * na + 2] = cost2

    P = np.zeros((na, d, d))
    for a in range(na):
        for i in range(d):
            row = P_frac[a][i]
            assert sum(row.values()) == 1  # exact rational stochasticity
            for j, p in row.items():
                P[a, i, j] = float(p)

    interview = EpochParams(
        P=P,
        R=np.zeros((d, na)),
        D=interview_D,
        b=np.array([params.alpha] + [params.gamma] * (J - 1)),
    )

    # final round: action 0 = not admit, 1 = admit, 2 forbidden
    identity = np.zeros((na, d, d))
    identity[:] = np.eye(d)
    admit_R = np.zeros((d, na))
    admit_D = np.zeros((J, u))
    for i, (g, a, b) in enumerate(catalog):
        admit_R[i, 1] = a / (a + b)
        admit_D[0, i * na + 1] = 1.0
        admit_D[0, i * na + 2] = FORBIDDEN_COST
    final = EpochParams(
        P=identity,
        R=admit_R,
        D=admit_D,
        b=np.array([params.beta] + [1.0] * (J - 1)),
    )

    labels = tuple(f"g{g}:({a},{b})" for g, a, b in catalog)
    model = WcMdpModel(
        d=d,
        num_actions=na,
        J=J,
        horizon=params.T_interview + 1,
        epochs=(interview,) * params.T_interview + (final,),
        state_labels=labels,
    )
    m0 = np.zeros(d)
    prior_idx = []
    for g, prior in enumerate(params.priors):
        i = index[(g, prior[0], prior[1])]
        m0[i] = params.group_shares[g]
        prior_idx.append(i)
    return ScreeningInstance(
        model=model,
        m0=m0,
        params=params,
        catalog=tuple(catalog),
        prior_states=(prior_idx[0], prior_idx[1]),
    )


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

def load_preset(name: str):
    """Resolve a builtin preset name to ``(model, m0, label)``.

    Recognized forms: ``counterexample:b=<float>`` and
    ``screening:<scarce|abundant>[,fairness]``.
    """
    kind, _, body = name.partition(":")
    if kind == "counterexample":
        key, _, val = body.partition("=")
        if key != "b" or not val:
            raise ValueError(f"expected counterexample:b=<float>, got {name!r}")
        inst = build_counterexample(float(val))
        return inst.model, inst.m0, name
    if kind == "screening":
        tokens = [tok for tok in body.split(",") if tok]
        if not tokens:
            raise ValueError(f"expected screening:<scenario>[,fairness], got {name!r}")
        scenario = tokens[0]
        fairness = False
        for tok in tokens[1:]:
            if tok == "fairness":
                fairness = True
            else:
                raise ValueError(f"unknown screening option {tok!r}")
        inst = build_screening_model(scenario_params(scenario, fairness))
        return inst.model, inst.m0, name
    raise ValueError(f"unknown preset {name!r}")
