"""Halfspace-representation polytopes.

Everything is done in H-representation with LPs as the workhorse; there is
no vertex enumeration here.  A polytope with zero rows is the whole space.
Facet normals are never rescaled, so tolerances are applied per row relative
to the row norm where that matters.
"""

from __future__ import annotations

import json

import numpy as np

from .exceptions import EmptySetError, SolverFailure, UnboundedSetError
from .solver import LinearProgram, SolveKind, solve_lp

REDUNDANCY_TOL = 1e-7


class HPolytope:
    """The set ``{x | normals @ x <= offsets}``; immutable."""

    def __init__(self, normals, offsets, dim=None):
        F = np.asarray(normals, dtype=float)
        f = np.asarray(offsets, dtype=float).reshape(-1)
        if F.size == 0:
            if dim is None:
                dim = F.shape[1] if F.ndim == 2 else None
            if dim is None:
                raise ValueError("dim is required for a polytope with no rows")
            F = F.reshape(0, dim)
        F = np.atleast_2d(F)
        if dim is not None and F.shape[1] != dim:
            raise ValueError(f"normals have {F.shape[1]} columns, expected {dim}")
        if F.shape[0] != f.size:
            raise ValueError("normals row count must equal offsets length")
        if F.shape[1] < 1:
            raise ValueError("dim must be >= 1")
        if not (np.all(np.isfinite(F)) and np.all(np.isfinite(f))):
            raise ValueError("polytope data must be finite")
        F.setflags(write=False)
        f.setflags(write=False)
        self._F = F
        self._f = f

    @property
    def normals(self) -> np.ndarray:
        return self._F

    @property
    def offsets(self) -> np.ndarray:
        return self._f

    @property
    def dim(self) -> int:
        return self._F.shape[1]

    @property
    def n_rows(self) -> int:
        return self._F.shape[0]

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim}, rows={self.n_rows})"

    def __contains__(self, x):
        return contains(self, x)

    @classmethod
    def whole_space(cls, dim):
        return cls(np.zeros((0, dim)), np.zeros(0), dim=dim)

    @classmethod
    def empty(cls, dim):
        return cls(np.zeros((1, dim)), [-1.0])

    def to_dict(self):
        return {"normals": self._F.tolist(), "offsets": self._f.tolist()}

    @classmethod
    def from_dict(cls, data, dim=None):
        normals = data["normals"]
        if dim is None and len(normals) == 0:
            dim = data.get("dim")
        return cls(normals, data["offsets"], dim=dim)

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


class BoxSet(HPolytope):
    """Axis-aligned box ``lower <= x <= upper``; rows are ``[I; -I]``."""

    def __init__(self, lower, upper):
        lo = np.asarray(lower, dtype=float).reshape(-1)
        hi = np.asarray(upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape or lo.size == 0:
            raise ValueError("lower and upper must be nonempty and of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("box bounds must be finite")
        if np.any(lo > hi):
            raise ValueError("box requires lower <= upper")
        n = lo.size
        super().__init__(np.vstack([np.eye(n), -np.eye(n)]), np.concatenate([hi, -lo]))
        lo.setflags(write=False)
        hi.setflags(write=False)
        self.lower = lo
        self.upper = hi

    @classmethod
    def symmetric(cls, half_width, dim=None):
        h = np.asarray(half_width, dtype=float)
        if h.ndim == 0:
            h = np.full(dim, float(h))
        return cls(-h, h)

    def __repr__(self):
        return f"BoxSet(lower={self.lower.tolist()}, upper={self.upper.tolist()})"


def as_box(P: HPolytope):
    """Return P as a BoxSet if its rows are exactly ``[I; -I]`` (in that order)."""
    if isinstance(P, BoxSet):
        return P
    n = P.dim
    if P.n_rows == 2 * n and np.array_equal(P.normals, np.vstack([np.eye(n), -np.eye(n)])):
        hi, lo = P.offsets[:n], -P.offsets[n:]
        if np.all(lo <= hi):
            return BoxSet(lo, hi)
    return None


def _check_point(P, x):
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != P.dim:
        raise ValueError(f"point has dimension {x.size}, polytope has {P.dim}")
    return x


def _check_same_dim(P, Q):
    if P.dim != Q.dim:
        raise ValueError(f"dimension mismatch: {P.dim} vs {Q.dim}")


def contains(P: HPolytope, x, tol: float = 1e-9) -> bool:
    x = _check_point(P, x)
    if P.n_rows == 0:
        return True
    return bool(np.all(P.normals @ x <= P.offsets + tol))


def _certified(status):
    if status.kind is SolveKind.NUMERICAL_FAILURE:
        raise SolverFailure("LP solver failed")
    return status


def is_empty(P: HPolytope) -> bool:
    """Phase-1 test: minimise the largest row violation."""
    if P.n_rows == 0:
        return False
    zero = np.all(P.normals == 0.0, axis=1)
    if np.any(P.offsets[zero] < -REDUNDANCY_TOL):
        return True
    box = as_box(P)
    if box is not None:
        return False
    F, f = P.normals[~zero], P.offsets[~zero]
    if F.shape[0] == 0:
        return False
    n = P.dim
    c = np.zeros(n + 1)
    c[-1] = 1.0
    A = np.hstack([F, -np.ones((F.shape[0], 1))])
    bounds = np.array([[-np.inf, np.inf]] * n + [[0.0, np.inf]])
    st = _certified(solve_lp(LinearProgram(c, ineq=(A, f), bounds=bounds)))
    if st.kind is not SolveKind.OPTIMAL:
        raise SolverFailure(f"phase-1 LP returned {st.kind.value}")
    return st.objective > REDUNDANCY_TOL


def support(P: HPolytope, direction) -> float:
    """max over P of direction'x; ``inf`` if unbounded in that direction."""
    d = _check_point(P, direction)
    box = as_box(P)
    if box is not None:
        return float(np.sum(np.where(d >= 0, d * box.upper, d * box.lower)))
    if P.n_rows == 0:
        if np.all(d == 0):
            return 0.0
        return float("inf")
    st = _certified(solve_lp(LinearProgram(-d, ineq=(P.normals, P.offsets))))
    if st.kind is SolveKind.INFEASIBLE:
        raise EmptySetError("support of an empty polytope")
    if st.kind is SolveKind.UNBOUNDED:
        return float("inf")
    return -st.objective


def pontryagin_diff(P: HPolytope, W: HPolytope) -> HPolytope:
    """{y | y + w in P for all w in W}."""
    _check_same_dim(P, W)
    if is_empty(W):
        raise EmptySetError("Pontryagin difference with an empty set")
    h = np.array([support(W, row) for row in P.normals])
    if np.any(np.isinf(h)):
        raise UnboundedSetError("Pontryagin difference with an unbounded set")
    return HPolytope(P.normals, P.offsets - h, dim=P.dim)


def _dedupe(F, f):
    """Drop trivially true zero rows and exact duplicate directions (keep tightest)."""
    norms = np.linalg.norm(F, axis=1)
    zero = norms == 0.0
    if np.any(f[zero] < 0):
        return None
    F, f, norms = F[~zero], f[~zero], norms[~zero]
    if F.shape[0] == 0:
        return F, f
    Fn = np.round(F / norms[:, None], 12) + 0.0  # folds -0.0 into 0.0
    fn = f / norms
    best = {}
    for i in range(F.shape[0]):
        k = Fn[i].tobytes()
        if k not in best or fn[i] < fn[best[k]]:
            best[k] = i
    keep = np.sort(np.fromiter(best.values(), dtype=int))
    return F[keep], f[keep]


def remove_redundancy(P: HPolytope, tol: float = REDUNDANCY_TOL) -> HPolytope:
    """Drop rows implied by the remaining ones; the point set is unchanged.

    Rows are examined in turn against the rows still retained, so of two
    identical facets exactly one survives.
    """
    n = P.dim
    if P.n_rows == 0:
        return P
    d = _dedupe(P.normals, P.offsets)
    if d is None:
        return HPolytope.empty(n)
    F, f = d
    if F.shape[0] == 0:
        return HPolytope.whole_space(n)
    if is_empty(HPolytope(F, f, dim=n)):
        return HPolytope.empty(n)
    if F.shape[0] == 1:
        return HPolytope(F, f, dim=n)
    keep = np.ones(F.shape[0], dtype=bool)
    for i in range(F.shape[0]):
        keep[i] = False
        others = keep.copy()
        if not np.any(others):
            keep[i] = True
            continue
        # bound the LP by the row itself shifted outwards
        A = np.vstack([F[others], F[i]])
        b = np.concatenate([f[others], [f[i] + 1.0]])
        st = _certified(solve_lp(LinearProgram(-F[i], ineq=(A, b))))
        if st.kind is not SolveKind.OPTIMAL:
            raise SolverFailure(f"redundancy LP returned {st.kind.value}")
        scale = max(1.0, float(np.linalg.norm(F[i])))
        if -st.objective > f[i] + tol * scale:
            keep[i] = True
    return HPolytope(F[keep], f[keep], dim=n)


def intersect(P: HPolytope, Q: HPolytope) -> HPolytope:
    _check_same_dim(P, Q)
    bp, bq = as_box(P), as_box(Q)
    if bp is not None and bq is not None:
        lo = np.maximum(bp.lower, bq.lower)
        hi = np.minimum(bp.upper, bq.upper)
        if np.all(lo <= hi):
            return BoxSet(lo, hi)
    stacked = HPolytope(np.vstack([P.normals, Q.normals]),
                        np.concatenate([P.offsets, Q.offsets]), dim=P.dim)
    return remove_redundancy(stacked)


def is_subset(P: HPolytope, Q: HPolytope, tol: float = 1e-6) -> bool:
    """True iff every row of Q holds on all of P (vacuously true for empty P)."""
    _check_same_dim(P, Q)
    if is_empty(P):
        return True
    for g, h in zip(Q.normals, Q.offsets):
        if support(P, g) > h + tol:
            return False
    return True


def _fm_eliminate(F, f, j):
    """Fourier-Motzkin elimination of column j."""
    a = F[:, j]
    pos, neg, zer = a > 0, a < 0, a == 0
    rows = [F[zer]]
    rhs = [f[zer]]
    if np.any(pos) and np.any(neg):
        Fp, fp = F[pos] / a[pos, None], f[pos] / a[pos]
        Fn, fn = F[neg] / -a[neg, None], f[neg] / -a[neg]
        comb = (Fp[:, None, :] + Fn[None, :, :]).reshape(-1, F.shape[1])
        rows.append(comb)
        rhs.append((fp[:, None] + fn[None, :]).reshape(-1))
    F2 = np.delete(np.vstack(rows), j, axis=1)
    f2 = np.concatenate(rhs)
    F2[np.abs(F2) < 1e-14] = 0.0
    return F2, f2


def project(P: HPolytope, keep) -> HPolytope:
    """Shadow of P on the coordinates in ``keep`` (in the order given).

    One coordinate is eliminated at a time, with redundancy removal after
    each elimination to keep the row count in check.
    """
    keep = [int(k) for k in keep]
    n = P.dim
    if not keep or len(set(keep)) != len(keep) or len(keep) >= n:
        raise ValueError("keep must be a strict nonempty subset of coordinates")
    if any(k < 0 or k >= n for k in keep):
        raise ValueError("keep index out of range")
    if is_empty(P):
        return HPolytope.empty(len(keep))
    cols = list(range(n))
    F, f = P.normals.copy(), P.offsets.copy()
    for j in sorted(set(range(n)) - set(keep), reverse=True):
        F, f = _fm_eliminate(F, f, cols.index(j))
        cols.remove(j)
        reduced = remove_redundancy(HPolytope(F, f, dim=len(cols)))
        F, f = reduced.normals.copy(), reduced.offsets.copy()
    order = [cols.index(k) for k in keep]
    return HPolytope(F[:, order], f, dim=len(keep))


def chebyshev_center(P: HPolytope):
    """(center, radius) of the largest inscribed ball; radius < 0 means empty."""
    n = P.dim
    if P.n_rows == 0:
        return np.zeros(n), float("inf")
    norms = np.linalg.norm(P.normals, axis=1)
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A = np.hstack([P.normals, norms[:, None]])
    bounds = np.array([[-np.inf, np.inf]] * n + [[-1.0, np.inf]])
    st = _certified(solve_lp(LinearProgram(c, ineq=(A, P.offsets), bounds=bounds)))
    if st.kind is SolveKind.UNBOUNDED:
        return None, float("inf")
    if st.kind is not SolveKind.OPTIMAL:
        return None, -1.0
    return st.solution[:n], float(st.solution[-1])


def sample_hit_and_run(P: HPolytope, n_samples: int, rng, burn_in: int = 1000,
                       thin: int = 1):
    """Hit-and-run samples from a bounded, full-dimensional polytope."""
    x, r = chebyshev_center(P)
    if x is None or not np.isfinite(r):
        raise UnboundedSetError("hit-and-run needs a bounded polytope")
    if r <= 0:
        raise EmptySetError("hit-and-run needs a full-dimensional polytope")
    F, f = P.normals, P.offsets
    out = np.empty((n_samples, P.dim))
    total = burn_in + n_samples * thin
    k = 0
    for step in range(total):
        d = rng.standard_normal(P.dim)
        d /= np.linalg.norm(d)
        Fd = F @ d
        slack = f - F @ x
        with np.errstate(divide="ignore", invalid="ignore"):
            t = slack / Fd
        hi = np.min(t[Fd > 1e-14], initial=np.inf)
        lo = np.max(t[Fd < -1e-14], initial=-np.inf)
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise UnboundedSetError("hit-and-run needs a bounded polytope")
        x = x + rng.uniform(lo, hi) * d
        if step >= burn_in and (step - burn_in) % thin == 0:
            out[k] = x
            k += 1
    return out


def bounding_box(P: HPolytope) -> BoxSet:
    n = P.dim
    hi = np.array([support(P, e) for e in np.eye(n)])
    lo = -np.array([support(P, -e) for e in np.eye(n)])
    if not (np.all(np.isfinite(hi)) and np.all(np.isfinite(lo))):
        raise UnboundedSetError("unbounded polytope has no bounding box")
    return BoxSet(lo, hi)


def polytopes_to_json(polys):
    return [p.to_dict() for p in polys]
