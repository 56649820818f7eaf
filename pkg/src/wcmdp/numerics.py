"""Dense LP solver, matrix rank and right inverse.

Two solver backends sit behind one contract:

* ``embedded`` -- a self-contained dense tableau simplex, two-phase with
  Bland's rule (smallest-index entering column; ties in the ratio test broken
  by smallest basic variable index).  Deterministic and exact enough for the
  desk-scale instances; used by default for small problems.
* ``highs`` -- scipy's HiGHS dual simplex, used for the large staircase LPs
  produced by long-horizon models, where a pure-Python tableau would be far
  too slow.  Also deterministic for identical input.

``matrix_rank`` counts singular values above a tolerance (SVD route, fixed);
``right_inverse`` computes ``M^T (M M^T)^{-1}`` via a direct solve against
the Gram matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sparse
from scipy.optimize import linprog

#: a simplex pivot below this magnitude is numerical breakdown
PIVOT_TOL = 1e-11
#: reduced-cost threshold for optimality
REDCOST_TOL = 1e-9

#: auto backend: largest problem handed to the embedded simplex
EMBEDDED_MAX_VARS = 400
EMBEDDED_MAX_ROWS = 200


class SolverFailure(RuntimeError):
    """LP solve broke down numerically; carries diagnostics in the message."""


class RankDeficiencyError(ValueError):
    """A matrix expected to have full row rank does not."""


@dataclass
class StandardLp:
    """maximize c @ y subject to A_eq y = b_eq, A_ub y <= b_ub, y >= 0.

    ``A_eq`` / ``A_ub`` may be dense arrays or scipy sparse matrices; the
    embedded backend densifies them.
    """

    c: np.ndarray
    A_eq: object
    b_eq: np.ndarray
    A_ub: object
    b_ub: np.ndarray

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.b_eq = np.asarray(self.b_eq, dtype=float)
        self.b_ub = np.asarray(self.b_ub, dtype=float)
        n = self.c.shape[0]
        for name in ("A_eq", "A_ub"):
            mat = getattr(self, name)
            if not sparse.issparse(mat):
                mat = np.atleast_2d(np.asarray(mat, dtype=float))
                if mat.size == 0:
                    mat = mat.reshape(0, n)
                setattr(self, name, mat)
        if self.A_eq.shape[1] != n or self.A_ub.shape[1] != n:
            raise ValueError("constraint matrices disagree with len(c)")
        if self.A_eq.shape[0] != self.b_eq.shape[0]:
            raise ValueError("A_eq / b_eq row mismatch")
        if self.A_ub.shape[0] != self.b_ub.shape[0]:
            raise ValueError("A_ub / b_ub row mismatch")

    @property
    def n(self) -> int:
        return self.c.shape[0]

    @property
    def n_rows(self) -> int:
        return self.A_eq.shape[0] + self.A_ub.shape[0]


@dataclass
class LpSolution:
    """Outcome of an LP solve.

    ``basis`` is the index set of basic variables for the embedded backend
    (indices >= n refer to slacks of the inequality rows, in row order).  The
    highs backend does not expose its basis, so there it is the support of
    ``y`` -- documented proxy, only the embedded basis feeds basis-sensitive
    tests.
    """

    status: str  # "optimal" | "infeasible" | "unbounded"
    y: np.ndarray | None = None
    value: float = np.nan
    basis: np.ndarray | None = None


def solve_lp(lp: StandardLp, backend: str = "auto") -> LpSolution:
    """Solve a :class:`StandardLp`; deterministic for identical input.

    status "optimal" comes with a basic feasible optimal vertex and
    ``value == c @ y``.  Infeasible and unbounded problems are reported via
    ``status``; numerical breakdown raises :class:`SolverFailure`.
    """
    if backend == "auto":
        backend = (
            "embedded"
            if lp.n <= EMBEDDED_MAX_VARS and lp.n_rows <= EMBEDDED_MAX_ROWS
            else "highs"
        )
    if backend == "embedded":
        return _solve_embedded(lp)
    if backend == "highs":
        return _solve_highs(lp)
    raise ValueError(f"unknown backend {backend!r}")


# ---------------------------------------------------------------------------
# embedded two-phase tableau simplex, Bland's rule
# ---------------------------------------------------------------------------

_MAX_PIVOTS = 200_000


def _pivot(T: np.ndarray, r: int, c: int) -> None:
    piv = T[r, c]
    T[r] /= piv
    col = T[:, c].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])
    T[:, c] = 0.0
    T[r, c] = 1.0


def _bland_iterate(T, basis, usable, phase) -> str:
    """Run simplex pivots on tableau ``T`` (last row = objective, maximize).

    Returns "optimal" or "unbounded".  Raises SolverFailure on breakdown.
    """
    m = T.shape[0] - 1
    for _ in range(_MAX_PIVOTS):
        red = T[-1, :usable]
        improving = np.flatnonzero(red > REDCOST_TOL)
        if improving.size == 0:
            return "optimal"
        ent = int(improving[0])  # Bland: smallest improving index
        col = T[:m, ent]
        pos = np.flatnonzero(col > PIVOT_TOL)
        if pos.size == 0:
            if np.any(col > 0):
                raise SolverFailure(
                    f"phase {phase}: all candidate pivots in column {ent} "
                    f"are below {PIVOT_TOL} (max {col.max():.3e})"
                )
            return "unbounded"
        ratios = T[pos, -1] / col[pos]
        best = ratios.min()
        ties = pos[ratios <= best + 1e-12]
        # Bland: among minimal ratios, leave the smallest basic variable
        leave = int(ties[np.argmin(basis[ties])])
        _pivot(T, leave, ent)
        basis[leave] = ent
    raise SolverFailure(f"phase {phase}: pivot limit {_MAX_PIVOTS} exceeded")


def _solve_embedded(lp: StandardLp) -> LpSolution:
    A_eq = lp.A_eq.toarray() if sparse.issparse(lp.A_eq) else lp.A_eq
    A_ub = lp.A_ub.toarray() if sparse.issparse(lp.A_ub) else lp.A_ub
    n = lp.n
    me, mu = A_eq.shape[0], A_ub.shape[0]
    m = me + mu
    n2 = n + mu  # structural + slack

    if m == 0:
        if np.any(lp.c > REDCOST_TOL):
            return LpSolution(status="unbounded")
        y = np.zeros(n)
        return LpSolution("optimal", y, 0.0, np.array([], dtype=int))

    A = np.zeros((m, n2))
    A[:me, :n] = A_eq
    A[me:, :n] = A_ub
    A[me:, n:] = np.eye(mu)
    rhs = np.concatenate([lp.b_eq, lp.b_ub]).astype(float)
    neg = rhs < 0
    A[neg] *= -1.0
    rhs = np.abs(rhs)

    # phase 1: artificial basis, maximize -sum(artificials)
    T = np.zeros((m + 1, n2 + m + 1))
    T[:m, :n2] = A
    T[:m, n2:n2 + m] = np.eye(m)
    T[:m, -1] = rhs
    T[-1, :n2] = A.sum(axis=0)  # price out the artificial basis
    T[-1, -1] = rhs.sum()
    basis = np.arange(n2, n2 + m)

    _bland_iterate(T, basis, usable=n2, phase=1)
    # value cell tracks the negated objective, i.e. the artificial residual
    feas_tol = 1e-8 * (1.0 + np.abs(rhs).max(initial=0.0))
    if T[-1, -1] > feas_tol:
        return LpSolution(status="infeasible")

    # drive leftover artificials out of the basis, dropping redundant rows
    keep = np.ones(m, dtype=bool)
    for i in range(m):
        if basis[i] < n2:
            continue
        row = T[i, :n2]
        cand = np.flatnonzero(np.abs(row) > 1e-9)
        if cand.size:
            _pivot(T, i, int(cand[0]))
            basis[i] = int(cand[0])
        else:
            keep[i] = False
    if not keep.all():
        T = np.vstack([T[:m][keep], T[-1:]])
        basis = basis[keep]
        m = int(keep.sum())

    # phase 2: true objective over structural + slack columns
    c2 = np.zeros(n2)
    c2[:n] = lp.c
    T[-1, :] = 0.0
    T[-1, :n2] = c2
    for i in range(m):
        cb = c2[basis[i]]
        if cb != 0.0:
            T[-1] -= cb * T[i]
    status = _bland_iterate(T, basis, usable=n2, phase=2)
    if status == "unbounded":
        return LpSolution(status="unbounded")

    x = np.zeros(n2)
    x[basis] = T[:m, -1]
    y = x[:n]
    return LpSolution("optimal", y, float(lp.c @ y), np.sort(basis))


def _solve_highs(lp: StandardLp) -> LpSolution:
    kw = {}
    if lp.A_ub.shape[0]:
        kw["A_ub"], kw["b_ub"] = lp.A_ub, lp.b_ub
    if lp.A_eq.shape[0]:
        kw["A_eq"], kw["b_eq"] = lp.A_eq, lp.b_eq
    res = linprog(
        -lp.c,
        bounds=(0, None),
        method="highs-ds",
        options={
            "primal_feasibility_tolerance": 1e-9,
            "dual_feasibility_tolerance": 1e-9,
        },
        **kw,
    )
    if res.status == 2:
        return LpSolution(status="infeasible")
    if res.status == 3:
        return LpSolution(status="unbounded")
    if res.status != 0:
        raise SolverFailure(f"highs backend failed: {res.message}")
    y = np.asarray(res.x, dtype=float)
    return LpSolution("optimal", y, float(lp.c @ y), np.flatnonzero(y > 1e-11))


# ---------------------------------------------------------------------------
# rank and right inverse
# ---------------------------------------------------------------------------

def matrix_rank(M, tol: float | None = None) -> int:
    """Rank of a dense matrix: number of singular values above ``tol``.

    Route is fixed: SVD.  Default tolerance is
    ``1e-8 * max|M| * max(p, q)``.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0
    scale = np.abs(M).max()
    if scale == 0.0:
        return 0
    if tol is None:
        tol = 1e-8 * scale * max(M.shape)
    svals = np.linalg.svd(M, compute_uv=False)
    return int(np.count_nonzero(svals > tol))


def right_inverse(M) -> np.ndarray:
    """Right inverse ``C = M^T (M M^T)^{-1}`` of a full-row-rank matrix.

    Raises :class:`RankDeficiencyError` when ``rank(M) < p`` or when the Gram
    solve does not reproduce the identity to 1e-8.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    p, q = M.shape
    r = matrix_rank(M)
    if r < p:
        raise RankDeficiencyError(f"matrix is {p}x{q} but has rank {r} < {p}")
    gram = M @ M.T
    try:
        C = np.linalg.solve(gram, M).T
    except np.linalg.LinAlgError as exc:
        raise RankDeficiencyError(f"Gram matrix is singular: {exc}") from exc
    resid = np.abs(M @ C - np.eye(p)).max()
    if resid > 1e-8:
        raise RankDeficiencyError(
            f"right inverse residual {resid:.3e} exceeds 1e-8 (ill-conditioned)"
        )
    return C
