"""Integer-feasible roundings of fractional decision vectors.

Three routes from a feasible fractional decision ``y`` to a decision whose
scaled entries ``N * Y`` are integers:

* :func:`floor_round` -- truncate the non-passive entries down to the grid
  and absorb the residual mass into the passive action.  Always feasible
  because consumption is nonnegative and the passive action is free.
* :func:`min_distance_round` -- exact branch-and-bound search over floor/ceil
  choices per non-passive entry, minimizing the sup distance to ``y``.
* :func:`randomized_round` -- dependent rounding for two-action single-budget
  models with unit cost and integer scaled budget: unbiased and almost surely
  feasible (pairwise merges of fractional coordinates, sum-preserving).

All grid arithmetic snaps to integers with an absolute tolerance: values such
as ``10 * 0.3`` fall a few ulps below their exact integer and plain flooring
would be off by one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import FEAS_TOL, WcMdpModel, check_config

#: absolute slack when snapping scaled decisions onto the integer grid
GRID_TOL = 1e-9


class UnsupportedRoundingError(ValueError):
    """The requested rounding scheme does not apply to this input."""


@dataclass(frozen=True)
class RoundingOutcome:
    decision: np.ndarray
    distance: float  # sup-norm distance to the fractional input
    method: str  # floor | min_distance | randomized
    fell_back: bool = False  # min_distance guard exceeded, floor used


def _snap_floor(z: np.ndarray, tol: float = GRID_TOL) -> np.ndarray:
    return np.floor(z + tol)


def _check_round_inputs(y, m, N, tol):
    y = np.asarray(y, dtype=float)
    m = check_config(m, N=N, tol=tol)
    if y.ndim != 2 or y.shape[0] != m.shape[0]:
        raise ValueError(f"decision shape {y.shape} incompatible with m")
    if np.any(y < -tol):
        raise ValueError("decision has negative entries")
    if np.max(np.abs(y.sum(axis=1) - m)) > tol:
        raise ValueError("decision rows do not sum to the configuration")
    if N < 1 or int(N) != N:
        raise ValueError(f"N must be a positive integer, got {N!r}")
    return y, m


def floor_round(y, m, N: int, tol: float = FEAS_TOL) -> RoundingOutcome:
    """Truncate non-passive entries to the 1/N grid; passive absorbs the rest."""
    y, m = _check_round_inputs(y, m, N, tol)
    Y = _snap_floor(y * N) / N
    Y[:, 0] = m - Y[:, 1:].sum(axis=1)
    dist = float(np.abs(Y - y).max())
    return RoundingOutcome(Y, dist, "floor")


#: above this many non-passive entries the exact search falls back to floor
MIN_DISTANCE_GUARD = 20


def min_distance_round(y, m, N: int, model: WcMdpModel, t: int,
                       tol: float = FEAS_TOL) -> RoundingOutcome:
    """Closest grid decision among per-entry floor/ceil choices.

    Exact depth-first search over the non-passive entries, feasibility
    (budgets and passive nonnegativity) enforced, ties broken toward floor in
    lexicographic (s, a) order.  Models with more than ``MIN_DISTANCE_GUARD``
    non-passive entries fall back to plain flooring, flagged on the outcome.
    """
    y, m = _check_round_inputs(y, m, N, tol)
    d, na = y.shape
    base = floor_round(y, m, N, tol)
    if d * (na - 1) > MIN_DISTANCE_GUARD:
        return RoundingOutcome(base.decision, base.distance, "min_distance",
                               fell_back=True)

    ep = model.params(t)
    entries = [(s, a) for s in range(d) for a in range(1, na)]
    z = y * N
    lo = _snap_floor(z)
    frac_mask = {
        (s, a): abs(z[s, a] - lo[s, a]) > tol and abs(lo[s, a] + 1 - z[s, a]) > tol
        for s, a in entries
    }

    best = {"dist": base.distance, "Y": base.decision}
    counts = lo.copy()
    counts[:, 0] = np.rint(m * N) - lo[:, 1:].sum(axis=1)

    def leaf_distance(counts_):
        Y = counts_ / N
        return float(np.abs(Y - y).max()), Y

    def feasible(counts_):
        Y = counts_ / N
        if np.any(Y[:, 0] < -tol):
            return False
        return not (ep.D.size and np.any(ep.D @ Y.ravel() > ep.b + tol))

    def dfs(idx, counts_, running):
        if running >= best["dist"] - 1e-15:
            return
        if idx == len(entries):
            if feasible(counts_):
                dist, Y = leaf_distance(counts_)
                if dist < best["dist"] - 1e-15:
                    best["dist"] = dist
                    best["Y"] = Y
            return
        s, a = entries[idx]
        options = (0.0, 1.0) if frac_mask[(s, a)] else (0.0,)
        for up in options:  # floor first: lexicographic preference on ties
            counts_[s, a] = lo[s, a] + up
            counts_[s, 0] -= up
            err = abs(counts_[s, a] / N - y[s, a])
            dfs(idx + 1, counts_, max(running, err))
            counts_[s, 0] += up
        counts_[s, a] = lo[s, a]

    dfs(0, counts, 0.0)
    return RoundingOutcome(best["Y"], best["dist"], "min_distance")


def supports_perfect_rounding(model: WcMdpModel) -> bool:
    """Whether the dependent-rounding scheme applies to this model family."""
    if model.num_actions != 2 or model.J != 1:
        return False
    for ep in model.epochs:
        if np.any(ep.D[0, 1::2] != 1.0) or np.any(ep.D[0, 0::2] != 0.0):
            return False
    return True


def randomized_round(y, m, N: int, rng: np.random.Generator,
                     model: WcMdpModel | None = None, t: int | None = None,
                     tol: float = FEAS_TOL) -> RoundingOutcome:
    """Unbiased feasible rounding for two-action unit-cost single-budget models.

    The scaled active column ``z = N * y[:, 1]`` is rounded by pairwise
    merges: each merge moves two fractional coordinates within their unit
    intervals, preserves their sum exactly and the expectation of each.  A
    single leftover fractional coordinate is rounded up with probability equal
    to its fractional part.  Consequences: every coordinate lands on its own
    floor or ceiling, the total never exceeds the scaled budget when that
    budget is integer, and ``E[Y] = y`` entrywise.
    """
    y, m = _check_round_inputs(y, m, N, tol)
    if y.shape[1] != 2:
        raise UnsupportedRoundingError("randomized rounding needs two actions")
    if model is not None:
        if not supports_perfect_rounding(model):
            raise UnsupportedRoundingError(
                "model is not a two-action unit-cost single-budget instance"
            )
        ep = model.params(t if t is not None else 0)
        alpha_N = ep.b[0] * N
        if abs(alpha_N - round(alpha_N)) > tol:
            raise UnsupportedRoundingError(
                f"scaled budget {ep.b[0]}*{N} is not an integer"
            )
        if y[:, 1].sum() > ep.b[0] + tol:
            raise UnsupportedRoundingError("decision already exceeds the budget")

    z = y[:, 1] * N
    lo = _snap_floor(z)
    frac = z - lo
    frac[np.abs(frac) <= tol] = 0.0
    near_one = np.abs(frac - 1.0) <= tol
    lo[near_one] += 1.0
    frac[near_one] = 0.0
    # ceiling safety: z <= N*m integer, so lifting a coordinate stays valid
    up = np.zeros_like(frac)

    open_idx = [int(i) for i in np.flatnonzero(frac > 0)]
    while len(open_idx) >= 2:
        i, j = open_idx[0], open_idx[1]
        fi, fj = frac[i] + up[i], frac[j] + up[j]
        gain_i = min(1.0 - fi, fj)  # push i up, j down
        gain_j = min(1.0 - fj, fi)  # push j up, i down
        if rng.random() < gain_j / (gain_i + gain_j):
            fi += gain_i
            fj -= gain_i
        else:
            fi -= gain_j
            fj += gain_j
        for k, fk in ((i, fi), (j, fj)):
            up[k] = fk - frac[k]
            if fk <= tol or fk >= 1.0 - tol:
                frac[k] = round(fk)
                up[k] = 0.0
                lo[k] += frac[k]
                frac[k] = 0.0
                open_idx.remove(k)
    if open_idx:
        k = open_idx[0]
        if rng.random() < frac[k] + up[k]:
            lo[k] += 1.0
        frac[k] = 0.0

    Y = np.empty_like(y)
    Y[:, 1] = lo / N
    Y[:, 0] = m - Y[:, 1]
    if np.any(Y[:, 0] < -tol):
        raise AssertionError("ceiling safety violated: passive mass negative")
    dist = float(np.abs(Y - y).max())
    return RoundingOutcome(Y, dist, "randomized")
