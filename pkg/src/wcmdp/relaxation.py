"""The budget-relaxed linear program over a horizon and its solution.

Relaxing the per-realization budget constraints to hold only in expectation
turns the population control problem into one LP over the decision variables
``y[s, a](t)`` for ``t0 <= t < T``:

    maximize   sum_t R_t . y(t)
    subject to sum_a y[s, a](t0)   = m0[s]                (initial condition)
               sum_a y[s, a](t+1)  = phi_t(y(t))[s]       (expected flow)
               D_t y(t)           <= b_t                  (per-epoch budgets)
               y >= 0

Its value upper-bounds the per-arm value of any feasible policy, and its
trajectory anchors every policy in this package.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sparse

from .model import FEAS_TOL, WcMdpModel, check_config
from .numerics import LpSolution, SolverFailure, StandardLp, solve_lp

#: LPs with at least this many variables are built sparse for the HiGHS path
SPARSE_THRESHOLD = 1500


def phi(model: WcMdpModel, t: int, y, check: bool = True) -> np.ndarray:
    """Expected next configuration under decision ``y`` at epoch ``t``.

    ``phi(y)[s'] = sum_{s, a} y[s, a] * P_t[a, s, s']``.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (model.d, model.num_actions):
        raise ValueError(
            f"decision shape {y.shape} != {(model.d, model.num_actions)}"
        )
    if check:
        if np.any(y < -FEAS_TOL):
            raise ValueError("decision has negative entries")
        if abs(y.sum() - 1.0) > FEAS_TOL:
            raise ValueError(f"decision mass {y.sum()!r} != 1")
    P = model.params(t).P
    return np.einsum("sa,asd->d", y, P)


@dataclass
class RelaxedSolution:
    """Optimal trajectory of the relaxed LP solved from ``(m0, t0)``.

    ``y_star[k]`` is the decision at absolute epoch ``t0 + k`` (shape
    ``(d, num_actions)``); ``m_star[k]`` the configuration at ``t0 + k``,
    with the terminal ``m_star[T - t0]`` obtained by pushing the last
    decision through ``phi``.
    """

    t0: int
    y_star: np.ndarray
    m_star: np.ndarray
    value: float

    @property
    def horizon(self) -> int:
        return self.y_star.shape[0]

    def y_at(self, t: int) -> np.ndarray:
        if not self.t0 <= t < self.t0 + self.horizon:
            raise IndexError(f"epoch {t} outside trajectory "
                             f"{self.t0}..{self.t0 + self.horizon - 1}")
        return self.y_star[t - self.t0]

    def m_at(self, t: int) -> np.ndarray:
        if not self.t0 <= t <= self.t0 + self.horizon:
            raise IndexError(f"epoch {t} outside trajectory "
                             f"{self.t0}..{self.t0 + self.horizon}")
        return self.m_star[t - self.t0]

    def to_json(self) -> dict:
        return {
            "t0": self.t0,
            "value": self.value,
            "y_star": self.y_star.tolist(),
            "m_star": self.m_star.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RelaxedSolution":
        return cls(
            t0=int(obj["t0"]),
            y_star=np.asarray(obj["y_star"], dtype=float),
            m_star=np.asarray(obj["m_star"], dtype=float),
            value=float(obj["value"]),
        )


def build_relaxed_lp(model: WcMdpModel, m0, t0: int = 0,
                     sparse_matrices: bool = False,
                     equality_budgets: bool = False) -> StandardLp:
    """Assemble the relaxed LP from epoch ``t0`` with initial configuration ``m0``.

    Variables are ``y[s, a](t)`` in epoch-major flat order.  Equality rows:
    the ``d`` initial conditions, then ``d`` flow rows per epoch transition.
    Inequality rows: the ``J`` budget rows per epoch (moved into the equality
    block when ``equality_budgets`` is set, which the two-action equivalence
    check requires).
    """
    m0 = check_config(m0)
    if not 0 <= t0 < model.horizon:
        raise ValueError(f"t0={t0} outside 0..{model.horizon - 1}")
    d, na, J = model.d, model.num_actions, model.J
    u = model.pair_count
    steps = model.horizon - t0
    n = steps * u

    rows, cols, vals = [], [], []
    b_eq = []
    r = 0

    def put(i, j, v):
        rows.append(i)
        cols.append(j)
        vals.append(v)

    for s in range(d):  # initial condition
        for a in range(na):
            put(r, s * na + a, 1.0)
        b_eq.append(m0[s])
        r += 1
    for k in range(steps - 1):  # flow: next-epoch mass minus phi of current
        P = model.params(t0 + k).P
        for s in range(d):
            for a in range(na):
                put(r, (k + 1) * u + s * na + a, 1.0)
            for a in range(na):
                col = P[a, :, s]
                for sp in np.flatnonzero(col):
                    put(r, k * u + sp * na + a, -col[sp])
            b_eq.append(0.0)
            r += 1

    ub_rows, ub_cols, ub_vals, b_ub = [], [], [], []
    for k in range(steps):
        ep = model.params(t0 + k)
        for j in range(J):
            base = len(b_ub)
            for idx in np.flatnonzero(ep.D[j]):
                ub_rows.append(base)
                ub_cols.append(k * u + idx)
                ub_vals.append(ep.D[j, idx])
            b_ub.append(ep.b[j])

    c = np.concatenate([model.params(t0 + k).R.ravel() for k in range(steps)])

    def materialize(r_, c_, v_, shape):
        mat = sparse.csr_matrix((v_, (r_, c_)), shape=shape)
        return mat if sparse_matrices else mat.toarray()

    A_eq = materialize(rows, cols, vals, (r, n))
    A_ub = materialize(ub_rows, ub_cols, ub_vals, (len(b_ub), n))
    b_eq = np.asarray(b_eq)
    b_ub = np.asarray(b_ub)
    if equality_budgets:
        stack = sparse.vstack if sparse_matrices else np.vstack
        A_eq = stack([A_eq, A_ub])
        b_eq = np.concatenate([b_eq, b_ub])
        A_ub = A_ub[:0]
        b_ub = b_ub[:0]
    return StandardLp(c=c, A_eq=A_eq, b_eq=b_eq, A_ub=A_ub, b_ub=b_ub)


def solve_relaxed(model: WcMdpModel, m0, t0: int = 0, backend: str = "auto",
                  equality_budgets: bool = False) -> RelaxedSolution:
    """Solve the relaxed LP and unpack the optimal trajectory.

    The passive action is always feasible, so a valid model yields status
    "optimal"; anything else raises :class:`SolverFailure`.
    """
    steps = model.horizon - t0
    n = steps * model.pair_count
    lp = build_relaxed_lp(
        model, m0, t0,
        sparse_matrices=n >= SPARSE_THRESHOLD,
        equality_budgets=equality_budgets,
    )
    res: LpSolution = solve_lp(lp, backend=backend)
    if res.status != "optimal":
        raise SolverFailure(
            f"relaxed LP from epoch {t0} (horizon {steps}) is {res.status}"
        )
    y = np.clip(res.y, 0.0, None).reshape(steps, model.d, model.num_actions)
    m = np.empty((steps + 1, model.d))
    m[:steps] = y.sum(axis=2)
    m[steps] = phi(model, model.horizon - 1, y[-1], check=False)
    sol = RelaxedSolution(t0=t0, y_star=y, m_star=m, value=res.value)
    _check_solution(model, sol, np.asarray(m0, dtype=float))
    return sol


def _check_solution(model, sol, m0, tol=1e-8):
    """Defensive postconditions on a fresh LP solve."""
    if np.max(np.abs(sol.m_star[0] - m0)) > tol:
        raise SolverFailure("relaxed trajectory does not start at m0")
    for k in range(sol.horizon - 1):
        drift = sol.m_star[k + 1] - phi(model, sol.t0 + k, sol.y_star[k], check=False)
        if np.max(np.abs(drift)) > tol:
            raise SolverFailure(f"flow constraint violated at step {k}")
    for k in range(sol.horizon):
        ep = model.params(sol.t0 + k)
        if ep.D.size and np.any(ep.D @ sol.y_star[k].ravel() > ep.b + tol):
            raise SolverFailure(f"budget violated at step {k}")
