"""Active-set analysis of a relaxed-LP trajectory.

At each epoch of an optimal trajectory three sets are active: budget rows
that are tight, decision entries that are zero, and states carrying positive
mass.  Stacking the corresponding equality rows gives a matrix ``C(t)`` (zero
rows for the null entries, then the tight budget rows of ``D``, then the
state-aggregation rows).  The trajectory is non-degenerate when ``C(t)`` has
full row rank at every interior epoch; in that case the optimal decision is,
near the anchor configuration, the linear map

    y(m) = y*(t) + C(t)^+ [0; 0; (m - m*(t)) restricted to the support]

which the selective-update policy evaluates instead of re-solving the LP.

Membership in the active sets is decided with an absolute threshold
``delta_active`` because the anchor trajectory comes out of a floating-point
LP solve.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .model import WcMdpModel
from .numerics import RankDeficiencyError, matrix_rank, right_inverse
from .relaxation import RelaxedSolution


def delta_active(model: WcMdpModel, t: int) -> float:
    """Default active-set threshold at epoch ``t``: 1e-7 * max(1, |b|_inf)."""
    b = model.params(t).b
    return 1e-7 * max(1.0, float(np.abs(b).max(initial=0.0)))


@dataclass(frozen=True)
class ActiveSets:
    """Active sets of an optimal trajectory at one epoch.

    tight_budgets   : indices j with (D y*(t))_j = b_j (within delta)
    zero_entries    : pairs (s, a) with y*[s, a](t) = 0
    positive_states : states s with m*[s](t) > delta
    """

    t: int
    tight_budgets: tuple[int, ...]
    zero_entries: tuple[tuple[int, int], ...]
    positive_states: tuple[int, ...]
    delta: float

    @property
    def n_rows(self) -> int:
        return (len(self.tight_budgets) + len(self.zero_entries)
                + len(self.positive_states))


def active_sets(model: WcMdpModel, sol: RelaxedSolution, t: int,
                delta: float | None = None) -> ActiveSets:
    """Extract the active sets of ``sol`` at absolute epoch ``t``."""
    if delta is None:
        delta = delta_active(model, t)
    y = sol.y_at(t)
    m = sol.m_at(t)
    ep = model.params(t)
    slack = ep.b - ep.D @ y.ravel() if ep.D.size else np.empty(0)
    tight = tuple(int(j) for j in np.flatnonzero(slack <= delta))
    zero = tuple(
        (int(s), int(a))
        for s, a in np.argwhere(y <= delta)
    )
    support = tuple(int(s) for s in np.flatnonzero(m > delta))
    return ActiveSets(t, tight, zero, support, delta)


def build_active_matrix(model: WcMdpModel, active: ActiveSets) -> np.ndarray:
    """The stacked equality matrix for one epoch's active sets.

    Row order is part of the contract: one unit row per zero entry, then the
    tight budget rows of ``D``, then one aggregation row per positive state.
    """
    na = model.num_actions
    u = model.pair_count
    ep = model.params(active.t)
    rows = []
    for s, a in active.zero_entries:
        e = np.zeros(u)
        e[s * na + a] = 1.0
        rows.append(e)
    for j in active.tight_budgets:
        rows.append(ep.D[j].copy())
    for s in active.positive_states:
        e = np.zeros(u)
        e[s * na:(s + 1) * na] = 1.0
        rows.append(e)
    if not rows:
        return np.zeros((0, u))
    return np.vstack(rows)


def active_rhs(model: WcMdpModel, active: ActiveSets, m) -> np.ndarray:
    """Right-hand side [0; b restricted; m restricted] matching the matrix rows."""
    ep = model.params(active.t)
    m = np.asarray(m, dtype=float)
    return np.concatenate([
        np.zeros(len(active.zero_entries)),
        ep.b[list(active.tight_budgets)],
        m[list(active.positive_states)],
    ])


def rank_condition(model: WcMdpModel, active: ActiveSets) -> tuple[int, int]:
    """(rank, required rank) of the active matrix, without materializing it.

    The unit rows for zero entries pivot their own columns, so
    ``rank = n_zero + rank(reduced)`` where ``reduced`` keeps only the tight
    budget rows and aggregation rows on the non-zero-entry columns.  Equal to
    ``matrix_rank(build_active_matrix(...))`` but much cheaper on large
    instances.
    """
    reduced, _ = _reduced_system(model, active)
    rank = len(active.zero_entries) + matrix_rank(reduced)
    return rank, active.n_rows


def _reduced_system(model: WcMdpModel, active: ActiveSets):
    """Tight-budget and aggregation rows restricted to free columns.

    Budget rows are scaled to unit inf-norm: rank is invariant under row
    scaling and the scaled rows keep the SVD tolerance meaningful when ``D``
    carries huge action-forbidding sentinel costs.  Their right-hand side in
    the local map is zero, so the scaling does not touch the decision.
    """
    na = model.num_actions
    u = model.pair_count
    ep = model.params(active.t)
    zero_idx = np.array(
        [s * na + a for s, a in active.zero_entries], dtype=int
    )
    free = np.setdiff1d(np.arange(u), zero_idx)
    rows = []
    for j in active.tight_budgets:
        row = ep.D[j, free]
        scale = np.abs(row).max(initial=0.0)
        rows.append(row / scale if scale > 0 else row)
    for s in active.positive_states:
        e = np.zeros(u)
        e[s * na:(s + 1) * na] = 1.0
        rows.append(e[free])
    reduced = np.vstack(rows) if rows else np.zeros((0, free.size))
    return reduced, free


@dataclass
class LocalLinearMap:
    """Local linear decision rule anchored at one epoch of a trajectory.

    ``decide(m)`` evaluates the anchored linear map.  It reproduces the
    defining equalities exactly but offers no feasibility guarantee; callers
    must test the result against the feasible set for the realized
    configuration.
    """

    t: int
    y_anchor: np.ndarray
    m_anchor: np.ndarray
    active: ActiveSets
    _model: WcMdpModel
    _reduced: np.ndarray
    _free: np.ndarray
    _gram_inv: np.ndarray

    @cached_property
    def matrix(self) -> np.ndarray:
        """The stacked active matrix (materialized on demand)."""
        return build_active_matrix(self._model, self.active)

    @cached_property
    def right_inverse(self) -> np.ndarray:
        """Right inverse of :attr:`matrix` (materialized on demand)."""
        return right_inverse(self.matrix)

    def decide(self, m) -> np.ndarray:
        """Decision for configuration ``m`` via the anchored linear map.

        Solves the reduced normal equations; identical to
        ``y_anchor + right_inverse @ [0; 0; (m - m_anchor)|support]`` without
        forming the full pseudo-inverse.
        """
        m = np.asarray(m, dtype=float)
        delta = np.concatenate([
            np.zeros(len(self.active.tight_budgets)),
            (m - self.m_anchor)[list(self.active.positive_states)],
        ])
        w = self._gram_inv @ delta
        y = self.y_anchor.copy().ravel()
        y[self._free] += self._reduced.T @ w
        return y.reshape(self.y_anchor.shape)


def build_local_map(model: WcMdpModel, sol: RelaxedSolution, t: int,
                    delta: float | None = None) -> LocalLinearMap:
    """Build the local linear map at epoch ``t``; raises on rank failure."""
    act = active_sets(model, sol, t, delta)
    reduced, free = _reduced_system(model, act)
    rank = len(act.zero_entries) + matrix_rank(reduced)
    if rank < act.n_rows:
        raise RankDeficiencyError(
            f"active matrix at epoch {t} has rank {rank} < {act.n_rows}"
        )
    gram = reduced @ reduced.T
    try:
        gram_inv = np.linalg.inv(gram)
    except np.linalg.LinAlgError as exc:
        raise RankDeficiencyError(f"active system singular at epoch {t}: {exc}")
    return LocalLinearMap(
        t=t,
        y_anchor=sol.y_at(t).copy(),
        m_anchor=sol.m_at(t).copy(),
        active=act,
        _model=model,
        _reduced=reduced,
        _free=free,
        _gram_inv=gram_inv,
    )


@dataclass(frozen=True)
class EpochRankRow:
    t: int
    n_tight: int
    n_support: int
    n_zero: int
    rank: int
    required: int
    passed: bool
    diagnostic: bool  # epoch 0 is reported but excluded from the verdict


@dataclass(frozen=True)
class DegeneracyReport:
    rows: tuple[EpochRankRow, ...]
    passed: bool

    def __str__(self) -> str:
        head = f"{'epoch':>5} {'|J*|':>5} {'|S*|':>5} {'|U*|':>5} {'rank':>5} {'req':>5}  pass"
        lines = [head]
        for r in self.rows:
            note = " (diagnostic)" if r.diagnostic else ""
            lines.append(
                f"{r.t:>5} {r.n_tight:>5} {r.n_support:>5} {r.n_zero:>5} "
                f"{r.rank:>5} {r.required:>5}  {'yes' if r.passed else 'NO'}{note}"
            )
        verdict = (
            "non-degenerate" if self.passed
            else "degenerate at the computed vertex"
        )
        lines.append(f"verdict: {verdict}")
        return "\n".join(lines)


def is_nondegenerate(model: WcMdpModel, sol: RelaxedSolution,
                     delta: float | None = None) -> DegeneracyReport:
    """Per-epoch rank report plus the global verdict.

    The verdict quantifies over interior epochs ``1..T-1``; epoch 0 (when
    present in the trajectory) appears in the report as a diagnostic row
    only.  The verdict is conditional on the vertex the solver returned:
    another optimal vertex could pass where this one fails.
    """
    rows = []
    passed = True
    for t in range(sol.t0, model.horizon):
        act = active_sets(model, sol, t, delta)
        rank, required = rank_condition(model, act)
        ok = rank == required
        diagnostic = t < 1
        if not diagnostic and not ok:
            passed = False
        rows.append(EpochRankRow(
            t=t,
            n_tight=len(act.tight_budgets),
            n_support=len(act.positive_states),
            n_zero=len(act.zero_entries),
            rank=rank,
            required=required,
            passed=ok,
            diagnostic=diagnostic,
        ))
    return DegeneracyReport(tuple(rows), passed)


def local_value(model: WcMdpModel, lmap: LocalLinearMap, m,
                backend: str = "auto") -> float:
    """Value at ``(m, t)`` predicted by the local linear map.

    Immediate reward of ``lmap.decide(m)`` plus the relaxed value of the
    pushed-forward configuration from the next epoch on.  Near the anchor of
    a rank-passing epoch this equals a fresh LP solve at ``(m, t)``.
    """
    from .relaxation import phi, solve_relaxed  # local import, cycle-free

    t = lmap.t
    y = lmap.decide(m)
    reward = float(np.sum(model.params(t).R * y))
    if t + 1 >= model.horizon:
        return reward
    m_next = phi(model, t, y, check=False)
    return reward + solve_relaxed(model, m_next, t + 1, backend=backend).value


class UnsupportedModelError(ValueError):
    """Model does not meet the preconditions of a specialized routine."""


def twoaction_nondegenerate(model: WcMdpModel, sol: RelaxedSolution,
                            delta: float | None = None) -> bool:
    """Split-state non-degeneracy test for two-action single-budget models.

    Requires actions {0, 1}, one budget row with unit cost on the active
    action, and a trajectory solved with the budget posed as an equality.
    The trajectory is non-degenerate in this classical sense iff at every
    interior epoch some state splits its mass across both actions.
    """
    if model.num_actions != 2 or model.J != 1:
        raise UnsupportedModelError(
            "split-state test needs a two-action, single-budget model"
        )
    for t, ep in enumerate(model.epochs):
        active_cols = ep.D[0, 1::2]
        if np.any(active_cols != 1.0) or np.any(ep.D[0, 0::2] != 0.0):
            raise UnsupportedModelError(
                f"epoch {t}: active action must cost exactly 1 in every state"
            )
    for t in range(sol.t0, model.horizon):
        ep = model.params(t)
        used = float(ep.D[0] @ sol.y_at(t).ravel())
        if abs(used - ep.b[0]) > 1e-6 * max(1.0, ep.b[0]):
            raise UnsupportedModelError(
                f"epoch {t}: budget not saturated ({used!r} vs {ep.b[0]!r}); "
                "solve with equality budgets"
            )
    for t in range(max(sol.t0, 1), model.horizon):
        d_act = delta if delta is not None else delta_active(model, t)
        y = sol.y_at(t)
        split = np.flatnonzero((y[:, 0] > d_act) & (y[:, 1] > d_act))
        if split.size == 0:
            return False
    return True
