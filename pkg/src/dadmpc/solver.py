"""Certified LP / convex QP front end.

LPs go to HiGHS (through :func:`scipy.optimize.linprog`), QPs to Clarabel.
Both are deterministic for a fixed input, so every result here is a pure
function of the problem data.  Whatever the backend claims, an ``Optimal``
status is only returned after the primal point has been re-checked against
the original constraints.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import clarabel
import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

LP_TOL = 1e-8
QP_TOL = 1e-7
PHASE1_TOL = 1e-7


class SolveKind(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass(frozen=True)
class SolveStatus:
    kind: SolveKind
    objective: float = float("nan")
    solution: Optional[np.ndarray] = None
    dual: Optional[np.ndarray] = None

    def __post_init__(self):
        if (self.kind is SolveKind.OPTIMAL) != (self.solution is not None):
            raise ValueError("solution must be present iff kind is Optimal")

    @property
    def optimal(self) -> bool:
        return self.kind is SolveKind.OPTIMAL


def _as_pair(pair, n, name):
    if pair is None:
        return None
    mat, vec = pair
    if sp.issparse(mat):
        mat = sp.csr_matrix(mat, dtype=float)
        if mat.data.size and not np.all(np.isfinite(mat.data)):
            raise ValueError(f"{name} matrix has non-finite entries")
    else:
        mat = np.atleast_2d(np.asarray(mat, dtype=float))
        if mat.size == 0:
            mat = mat.reshape(0, n)
        if not np.all(np.isfinite(mat)):
            raise ValueError(f"{name} matrix has non-finite entries")
    vec = np.asarray(vec, dtype=float).reshape(-1)
    if mat.shape[1] != n or mat.shape[0] != vec.size:
        raise ValueError(f"{name} dimensions inconsistent: {mat.shape} vs {vec.size}")
    if not np.all(np.isfinite(vec)):
        raise ValueError(f"{name} vector has non-finite entries")
    return mat, vec


@dataclass(frozen=True)
class LinearProgram:
    """min c'z  s.t.  M z <= m,  E z = e,  lb <= z <= ub."""

    objective: np.ndarray
    ineq: Optional[tuple] = None
    eq: Optional[tuple] = None
    bounds: Optional[np.ndarray] = None  # (n, 2), +-inf allowed

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=float).reshape(-1)
        if not np.all(np.isfinite(c)):
            raise ValueError("objective has non-finite entries")
        n = c.size
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "ineq", _as_pair(self.ineq, n, "ineq"))
        object.__setattr__(self, "eq", _as_pair(self.eq, n, "eq"))
        if self.bounds is not None:
            b = np.asarray(self.bounds, dtype=float).reshape(n, 2)
            if np.any(np.isnan(b)) or np.any(b[:, 0] == np.inf) or np.any(b[:, 1] == -np.inf):
                raise ValueError("invalid variable bounds")
            object.__setattr__(self, "bounds", b)

    @property
    def n(self) -> int:
        return self.objective.size


@dataclass(frozen=True)
class QuadraticProgram:
    """min 1/2 z'Hz + c'z  s.t.  M z <= m,  E z = e.

    The hessian may be dense or scipy-sparse.
    """

    hessian: object
    linear: np.ndarray
    ineq: Optional[tuple] = None
    eq: Optional[tuple] = None
    check_psd: bool = field(default=True, compare=False)

    def __post_init__(self):
        c = np.asarray(self.linear, dtype=float).reshape(-1)
        n = c.size
        H = self.hessian
        if sp.issparse(H):
            H = sp.csc_matrix(H, dtype=float)
            asym = abs(H - H.T)
            if asym.nnz and asym.max() > 1e-9:
                raise ValueError("hessian is not symmetric")
        else:
            H = np.atleast_2d(np.asarray(H, dtype=float))
            if not np.allclose(H, H.T, atol=1e-9, rtol=0):
                raise ValueError("hessian is not symmetric")
        if H.shape != (n, n):
            raise ValueError(f"hessian shape {H.shape} does not match {n} variables")
        if self.check_psd:
            dense = H.toarray() if sp.issparse(H) else H
            if not np.all(np.isfinite(dense)):
                raise ValueError("hessian has non-finite entries")
            if n and np.linalg.eigvalsh(dense).min() < -1e-8:
                raise ValueError("hessian is not positive semidefinite")
        object.__setattr__(self, "hessian", H)
        object.__setattr__(self, "linear", c)
        object.__setattr__(self, "ineq", _as_pair(self.ineq, n, "ineq"))
        object.__setattr__(self, "eq", _as_pair(self.eq, n, "eq"))

    @property
    def n(self) -> int:
        return self.linear.size


def _violation(pair, z, equality=False):
    if pair is None or pair[1].size == 0:
        return 0.0
    mat, vec = pair
    r = mat @ z - vec
    return float(np.max(np.abs(r))) if equality else float(max(np.max(r), 0.0))


def _scale(*arrays):
    s = 1.0
    for a in arrays:
        if a is not None and np.size(a):
            s = max(s, float(np.max(np.abs(a))))
    return s


def _phase1_infeasible(prob: LinearProgram, tol: float) -> Optional[bool]:
    """Minimise the largest inequality violation; None if phase 1 itself fails."""
    if prob.ineq is None and prob.eq is None and prob.bounds is None:
        return False
    n = prob.n
    rows, rhs = [], []
    if prob.ineq is not None:
        M, m = prob.ineq
        M = M.toarray() if sp.issparse(M) else M
        rows.append(np.hstack([M, -np.ones((M.shape[0], 1))]))
        rhs.append(m)
    if prob.bounds is not None:
        for j, (lo, hi) in enumerate(prob.bounds):
            e = np.zeros(n + 1)
            if np.isfinite(hi):
                e[j], e[-1] = 1.0, -1.0
                rows.append(e[None, :].copy())
                rhs.append([hi])
            if np.isfinite(lo):
                e[:] = 0.0
                e[j], e[-1] = -1.0, -1.0
                rows.append(e[None, :].copy())
                rhs.append([-lo])
    A_ub = np.vstack(rows) if rows else None
    b_ub = np.concatenate([np.asarray(r, float) for r in rhs]) if rhs else None
    A_eq = b_eq = None
    if prob.eq is not None:
        E, e = prob.eq
        E = E.toarray() if sp.issparse(E) else E
        A_eq = np.hstack([E, np.zeros((E.shape[0], 1))])
        b_eq = e
    c = np.zeros(n + 1)
    c[-1] = 1.0
    bounds = [(None, None)] * n + [(0.0, None)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds,
                  method="highs")
    if res.status == 2:
        return True  # equality part alone is inconsistent
    if res.status != 0:
        return None
    return bool(res.fun > max(tol, PHASE1_TOL))


def solve_lp(prob: LinearProgram, tol: float = LP_TOL) -> SolveStatus:
    """Solve an LP; Optimal is only returned once primal feasibility is re-checked."""
    kw = {}
    if prob.ineq is not None and prob.ineq[1].size:
        kw["A_ub"], kw["b_ub"] = prob.ineq
    if prob.eq is not None and prob.eq[1].size:
        kw["A_eq"], kw["b_eq"] = prob.eq
    if prob.bounds is not None:
        kw["bounds"] = [(None if not np.isfinite(lo) else lo, None if not np.isfinite(hi) else hi)
                        for lo, hi in prob.bounds]
    else:
        kw["bounds"] = (None, None)
    opts = {"primal_feasibility_tolerance": max(tol, 1e-10),
            "dual_feasibility_tolerance": max(tol, 1e-10)}
    try:
        res = linprog(prob.objective, method="highs", options=opts, **kw)
    except ValueError:
        return SolveStatus(SolveKind.NUMERICAL_FAILURE)

    if res.status == 0:
        z = np.asarray(res.x, dtype=float)
        viol = max(_violation(prob.ineq, z), _violation(prob.eq, z, equality=True))
        if prob.bounds is not None:
            lo, hi = prob.bounds[:, 0], prob.bounds[:, 1]
            viol = max(viol, float(np.max(np.maximum(lo - z, 0.0), initial=0.0)),
                       float(np.max(np.maximum(z - hi, 0.0), initial=0.0)))
        rhs_scale = _scale(None if prob.ineq is None else prob.ineq[1],
                           None if prob.eq is None else prob.eq[1])
        if viol > tol * rhs_scale * 10:
            return SolveStatus(SolveKind.NUMERICAL_FAILURE)
        dual = None
        if getattr(res, "ineqlin", None) is not None and prob.ineq is not None:
            dual = np.asarray(res.ineqlin.marginals, dtype=float)
        return SolveStatus(SolveKind.OPTIMAL, float(res.fun), z, dual)
    if res.status in (2, 3):
        infeasible = _phase1_infeasible(prob, tol)
        if infeasible is None:
            return SolveStatus(SolveKind.NUMERICAL_FAILURE)
        if infeasible:
            return SolveStatus(SolveKind.INFEASIBLE, float("inf"))
        if res.status == 3:
            return SolveStatus(SolveKind.UNBOUNDED, float("-inf"))
        return SolveStatus(SolveKind.NUMERICAL_FAILURE)
    return SolveStatus(SolveKind.NUMERICAL_FAILURE)


def _clarabel_settings(tol):
    s = clarabel.DefaultSettings()
    s.verbose = False
    s.tol_gap_abs = tol
    s.tol_gap_rel = tol
    s.tol_feas = tol
    s.tol_infeas_abs = tol
    s.tol_infeas_rel = tol
    s.max_iter = 200
    return s


def solve_qp(prob: QuadraticProgram, tol: float = QP_TOL) -> SolveStatus:
    """Solve a convex QP with Clarabel and certify the result."""
    n = prob.n
    blocks, rhs, cones = [], [], []
    if prob.eq is not None and prob.eq[1].size:
        blocks.append(sp.csc_matrix(prob.eq[0]))
        rhs.append(prob.eq[1])
        cones.append(clarabel.ZeroConeT(prob.eq[1].size))
    if prob.ineq is not None and prob.ineq[1].size:
        blocks.append(sp.csc_matrix(prob.ineq[0]))
        rhs.append(prob.ineq[1])
        cones.append(clarabel.NonnegativeConeT(prob.ineq[1].size))
    if blocks:
        A = sp.vstack(blocks, format="csc")
        b = np.concatenate(rhs)
    else:
        A = sp.csc_matrix((0, n))
        b = np.zeros(0)
    P = sp.triu(sp.csc_matrix(prob.hessian), format="csc")

    solver = clarabel.DefaultSolver(P, prob.linear, A, b, cones, _clarabel_settings(tol))
    sol = solver.solve()
    status = str(sol.status)

    if status in ("Solved", "AlmostSolved"):
        z = np.asarray(sol.x, dtype=float)
        viol = max(_violation(prob.ineq, z), _violation(prob.eq, z, equality=True))
        if not np.all(np.isfinite(z)) or viol > 10 * tol * max(_scale(b), _scale(z)):
            return SolveStatus(SolveKind.NUMERICAL_FAILURE)
        H = prob.hessian
        obj = 0.5 * float(z @ (H @ z)) + float(prob.linear @ z)
        dual = np.asarray(sol.z, dtype=float)
        return SolveStatus(SolveKind.OPTIMAL, obj, z, dual)
    if status in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        return SolveStatus(SolveKind.INFEASIBLE, float("inf"))
    if status in ("DualInfeasible", "AlmostDualInfeasible"):
        return SolveStatus(SolveKind.UNBOUNDED, float("-inf"))
    return SolveStatus(SolveKind.NUMERICAL_FAILURE)
