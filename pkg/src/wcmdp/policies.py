"""Decision policies for the finite population system.

All policies share one contract: after ``reset(model, m0, N)``, each call
``decide(t, M, rng)`` returns a feasible decision whose scaled entries
``N * Y`` are integers.  A policy instance is confined to one episode at a
time; distinct episodes may run concurrently only with distinct instances.

* ``lp-update-full`` -- re-solve the relaxed LP from the observed
  configuration at every epoch, then round.
* ``lp-update-selective`` -- keep the trajectory from the last solve and try
  the anchored local linear map first; re-solve only when the map fails the
  rank condition or produces an infeasible decision.
* ``occupation`` -- one LP solve up front; every arm samples an action from
  the per-state occupation measure, accepted while budget remains.
* ``passive`` -- every arm takes the free action; feasibility anchor.

LP solves are memoized across episodes keyed by (epoch, scaled
configuration): the policies are deterministic functions of those keys, so
the cache changes nothing observable except runtime.
"""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from .model import (
    FEAS_TOL,
    WcMdpModel,
    as_counts,
    check_config,
    is_feasible_decision,
    passive_decision,
)
from .degeneracy import LocalLinearMap, build_local_map
from .numerics import RankDeficiencyError
from .relaxation import RelaxedSolution, solve_relaxed
from .rounding import (
    UnsupportedRoundingError,
    floor_round,
    min_distance_round,
    randomized_round,
    supports_perfect_rounding,
)

POLICY_KINDS = ("lp-update-full", "lp-update-selective", "occupation", "passive")
ROUNDING_MODES = ("floor", "min_distance", "randomized")


class _Lru:
    """Small LRU map; values must be immutable or treated as such."""

    def __init__(self, maxsize: int):
        self.maxsize = maxsize
        self._data: OrderedDict = OrderedDict()

    def get(self, key):
        if key not in self._data:
            return None
        self._data.move_to_end(key)
        return self._data[key]

    def put(self, key, value):
        self._data[key] = value
        self._data.move_to_end(key)
        if len(self._data) > self.maxsize:
            self._data.popitem(last=False)


class Policy:
    """Base decision engine; see module docstring for the contract."""

    kind: str = "abstract"

    def __init__(self):
        self.model: WcMdpModel | None = None
        self.N: int | None = None
        self.update_count = 0

    def reset(self, model: WcMdpModel, m0, N: int) -> None:
        check_config(m0, N)
        self.model = model
        self.N = int(N)
        self.update_count = 0

    def decide(self, t: int, M, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError


class PassivePolicy(Policy):
    kind = "passive"

    def decide(self, t, M, rng):
        as_counts(M, self.N)
        return passive_decision(self.model, M)


class _LpPolicy(Policy):
    """Shared LP-solve cache and rounding dispatch."""

    def __init__(self, rounding: str = "floor", backend: str = "auto",
                 cache_size: int = 4096):
        super().__init__()
        if rounding not in ROUNDING_MODES:
            raise ValueError(f"unknown rounding mode {rounding!r}")
        self.rounding = rounding
        self.backend = backend
        self._cache = _Lru(cache_size)

    def reset(self, model, m0, N):
        if self.model is not model:
            self._cache = _Lru(self._cache.maxsize)
        super().reset(model, m0, N)
        if self.rounding == "randomized":
            if not supports_perfect_rounding(model):
                raise UnsupportedRoundingError(
                    "randomized rounding requires a two-action unit-cost "
                    "single-budget model"
                )
            for t, ep in enumerate(model.epochs):
                scaled = ep.b[0] * N
                if abs(scaled - round(scaled)) > FEAS_TOL:
                    raise UnsupportedRoundingError(
                        f"epoch {t}: scaled budget {ep.b[0]}*{N} not integer"
                    )

    def _key(self, t, M):
        return t, as_counts(M, self.N).tobytes()

    def _round(self, y, M, t, rng) -> np.ndarray:
        if self.rounding == "floor":
            return floor_round(y, M, self.N).decision
        if self.rounding == "min_distance":
            return min_distance_round(y, M, self.N, self.model, t).decision
        return randomized_round(y, M, self.N, rng, model=self.model, t=t).decision


class LpUpdateFullPolicy(_LpPolicy):
    """Re-solve the relaxed LP from (M, t) at every epoch, then round."""

    kind = "lp-update-full"

    def decide(self, t, M, rng):
        M = np.asarray(M, dtype=float)
        key = self._key(t, M)
        y = self._cache.get(key)
        if y is None:
            y = solve_relaxed(self.model, M, t, backend=self.backend).y_at(t)
            self._cache.put(key, y)
        self.update_count += 1
        return self._round(y, M, t, rng)


class _Trajectory:
    """A cached solve plus lazily-built local maps (None = rank failed)."""

    __slots__ = ("sol", "maps")

    def __init__(self, sol: RelaxedSolution):
        self.sol = sol
        self.maps: dict[int, LocalLinearMap | None] = {}


class LpUpdateSelectivePolicy(_LpPolicy):
    """Track the cached trajectory; re-solve only when forced.

    Per epoch: if the previous epoch left the update flag down, check the
    rank condition of the cached trajectory at ``t`` and evaluate the local
    linear map; accept its decision if feasible for the observed
    configuration.  Otherwise solve a fresh LP from ``(M, t)``, which resets
    the anchor trajectory.  ``update_count`` counts LP solves, the initial
    one included.
    """

    kind = "lp-update-selective"

    # cached trajectories carry their local maps, so keep the LRU modest
    def __init__(self, rounding="floor", backend="auto", cache_size=512):
        super().__init__(rounding, backend, cache_size)
        self._traj: _Trajectory | None = None
        self._update = True

    def reset(self, model, m0, N):
        super().reset(model, m0, N)
        self._traj = None
        self._update = True

    def _local_map(self, t) -> LocalLinearMap | None:
        maps = self._traj.maps
        if t not in maps:
            try:
                maps[t] = build_local_map(self.model, self._traj.sol, t)
            except RankDeficiencyError:
                maps[t] = None
        return maps[t]

    def decide(self, t, M, rng):
        M = np.asarray(M, dtype=float)
        y = None
        if not self._update:
            self._update = True
            lmap = self._local_map(t)
            if lmap is not None:
                cand = lmap.decide(M)
                if is_feasible_decision(self.model, t, M, cand, "relaxed"):
                    y = np.clip(cand, 0.0, None)
                    self._update = False
        if self._update:
            key = self._key(t, M)
            traj = self._cache.get(key)
            if traj is None:
                traj = _Trajectory(
                    solve_relaxed(self.model, M, t, backend=self.backend)
                )
                self._cache.put(key, traj)
            self._traj = traj
            y = traj.sol.y_at(t)
            self.update_count += 1
            self._update = False
        return self._round(y, M, t, rng)


class OccupationMeasurePolicy(Policy):
    """One-pass benchmark: sample per-arm actions from the occupation measure.

    The LP is solved once per episode (memoized across episodes).  At each
    epoch every arm, visited in canonical order (states ascending, arms
    within a state in sample order; optionally a seeded shuffle), draws an
    action from the per-state occupation measure of the cached trajectory and
    keeps it only if the remaining budget covers its consumption.
    """

    kind = "occupation"

    def __init__(self, backend: str = "auto", shuffle_arms: bool = False,
                 cache_size: int = 64):
        super().__init__()
        self.backend = backend
        self.shuffle_arms = shuffle_arms
        self._cache = _Lru(cache_size)
        self._sol: RelaxedSolution | None = None
        self._cdf: np.ndarray | None = None

    def reset(self, model, m0, N):
        if self.model is not model:
            self._cache = _Lru(self._cache.maxsize)
        super().reset(model, m0, N)
        key = as_counts(m0, N).tobytes()
        entry = self._cache.get(key)
        if entry is None:
            sol = solve_relaxed(model, m0, 0, backend=self.backend)
            entry = (sol, _occupation_cdfs(model, sol))
            self._cache.put(key, entry)
        self._sol, self._cdf = entry
        self.update_count = 1

    def decide(self, t, M, rng):
        model, N = self.model, self.N
        d, na = model.d, model.num_actions
        counts = as_counts(M, N)
        ep = model.params(t)
        D = ep.D.reshape(model.J, d, na)
        budget = ep.b * N
        out = np.zeros((d, na), dtype=np.int64)
        cdf = self._cdf[t]

        proposals: list[tuple[int, int]] = []
        for s in np.flatnonzero(counts):
            k = int(counts[s])
            draws = np.searchsorted(cdf[s], rng.random(k), side="right")
            np.clip(draws, 0, na - 1, out=draws)
            active = draws[draws > 0]
            out[s, 0] += k - active.size
            proposals.extend((int(s), int(a)) for a in active)
        if self.shuffle_arms and len(proposals) > 1:
            proposals = [proposals[i] for i in rng.permutation(len(proposals))]
        for s, a in proposals:
            cost = D[:, s, a]
            if np.all(budget - cost >= -FEAS_TOL * N):
                budget -= cost
                out[s, a] += 1
            else:
                out[s, 0] += 1
        return out / N


def _occupation_cdfs(model: WcMdpModel, sol: RelaxedSolution) -> np.ndarray:
    """Per-epoch, per-state action sampling CDFs from a trajectory.

    States without mass in the trajectory fall back to the passive action.
    """
    T, d, na = model.horizon, model.d, model.num_actions
    mu = np.zeros((T, d, na))
    for t in range(sol.t0, T):
        y = sol.y_at(t)
        m = sol.m_at(t)
        for s in range(d):
            if m[s] > 1e-12:
                mu[t, s] = y[s] / m[s]
            else:
                mu[t, s, 0] = 1.0
    return np.cumsum(mu, axis=2)


def make_policy(kind: str, rounding: str = "floor", backend: str = "auto",
                shuffle_arms: bool = False) -> Policy:
    """Factory used by the CLI and the test harness."""
    if kind == "lp-update-full":
        return LpUpdateFullPolicy(rounding=rounding, backend=backend)
    if kind == "lp-update-selective":
        return LpUpdateSelectivePolicy(rounding=rounding, backend=backend)
    if kind == "occupation":
        return OccupationMeasurePolicy(backend=backend, shuffle_arms=shuffle_arms)
    if kind == "passive":
        return PassivePolicy()
    raise ValueError(f"unknown policy kind {kind!r}")
