"""Affine disturbance-feedback MPC with soft state constraints.

Inputs over the horizon are ``u_0 = v_0`` and ``u_i = v_i + sum_{j<i} K_{i,j} w_j``.
Each scalar constraint must hold for every disturbance sequence drawn from
the per-step set ``{w | H w <= k}``.  Because the stacked set is a product
of identical per-step sets, the worst case splits by step, and each term is
replaced by its LP dual: a nonnegative row ``z`` with ``z H = c(K)`` that
contributes ``z . k`` to the left-hand side.  That keeps the whole problem a
single convex QP.

The sparse constraint matrix only depends on the plant, the configuration
and the disturbance normals ``H``, so it is assembled once per such triple.
Per call, only the ``k`` entries, the right-hand side and the FRI rows change.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .geometry import HPolytope, as_box, bounding_box
from .invariance import PlantModel
from .solver import QP_TOL, QuadraticProgram, SolveKind, solve_qp

DEFAULT_SLACK_WEIGHT = 1e4


@dataclass(frozen=True, eq=False)
class MpcConfig:
    horizon: int
    q_matrix: np.ndarray
    r_matrix: np.ndarray
    x_set: HPolytope
    u_set: HPolytope
    slack_weight: float = DEFAULT_SLACK_WEIGHT

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.q_matrix, dtype=float))
        R = np.atleast_2d(np.asarray(self.r_matrix, dtype=float))
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ValueError("horizon must be a positive integer")
        if not np.allclose(Q, Q.T) or np.linalg.eigvalsh(Q).min() < -1e-10:
            raise ValueError("Q must be symmetric PSD")
        if not np.allclose(R, R.T) or np.linalg.eigvalsh(R).min() <= 0:
            raise ValueError("R must be symmetric PD")
        if not self.slack_weight > 0:
            raise ValueError("slack weight must be positive")
        if Q.shape[0] != self.x_set.dim or R.shape[0] != self.u_set.dim:
            raise ValueError("cost weights do not match the constraint dimensions")
        Q.setflags(write=False)
        R.setflags(write=False)
        object.__setattr__(self, "q_matrix", Q)
        object.__setattr__(self, "r_matrix", R)

    def key(self):
        return (int(self.horizon), self.q_matrix.tobytes(), self.r_matrix.tobytes(),
                self.x_set.normals.tobytes(), self.x_set.offsets.tobytes(),
                self.u_set.normals.tobytes(), self.u_set.offsets.tobytes(),
                self.x_set.n_rows, self.u_set.n_rows, float(self.slack_weight))


@dataclass(frozen=True)
class AffinePolicy:
    """``gain_blocks[(i, j)]`` is K_{i,j} (n_u x n_x), present only for j < i."""

    gain_blocks: dict
    nominal: np.ndarray  # (N, n_u)

    def __post_init__(self):
        for i, j in self.gain_blocks:
            if not j < i:
                raise ValueError(f"gain block ({i}, {j}) violates causality")

    def inputs(self, w_seq):
        """Input sequence for a disturbance sequence ``w_seq`` of shape (N, n_x)."""
        u = np.array(self.nominal, dtype=float)
        for (i, j), K in self.gain_blocks.items():
            u[i] += K @ w_seq[j]
        return u


@dataclass(frozen=True)
class MpcSolution:
    first_input: Optional[np.ndarray]
    policy: Optional[AffinePolicy]
    slacks: Optional[np.ndarray]  # (N, n_f)
    objective: float
    status: SolveKind


# value slots of constraint entries that depend on the disturbance set
_CONST, _UPPER, _WIDTH, _OFFSET = 0, 1, 2, 3


@dataclass(frozen=True, eq=False)
class _Layout:
    N: int
    n_x: int
    n_u: int
    n_f: int
    i_v: int
    i_s: int
    n_var: int
    k_blocks: dict  # (i, j) -> offset of K_{i,j} (row-major n_u x n_x)


@dataclass(frozen=True, eq=False)
class _Template:
    mode: str  # "general", "box" or "nominal"
    layout: _Layout
    hess: sp.csc_matrix
    lin_x0: np.ndarray  # linear term = lin_x0 @ x0
    const_x0: np.ndarray  # constant term = x0' const_x0 x0
    eq_mat: sp.csr_matrix
    eq_rhs: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    base: np.ndarray
    slot: np.ndarray
    slot_idx: np.ndarray
    n_ineq: int
    rhs_const: np.ndarray
    rhs_x0: np.ndarray  # rhs = rhs_const - rhs_x0 @ x0 - rhs_upper @ ub
    rhs_upper: np.ndarray


def _powers(A, n):
    P = [np.eye(A.shape[0])]
    for _ in range(n):
        P.append(A @ P[-1])
    return P


def _is_box_normals(H):
    n = H.shape[1]
    return H.shape[0] == 2 * n and np.array_equal(H, np.vstack([np.eye(n), -np.eye(n)]))


def _w_mode(w_box: HPolytope) -> str:
    box = as_box(w_box)
    if box is None:
        return "general"
    if np.all(box.lower == 0.0) and np.all(box.upper == 0.0):
        return "nominal"
    return "box"


_TEMPLATES: dict = {}
_TEMPLATE_CACHE_SIZE = 32


def _get_template(cfg: MpcConfig, plant: PlantModel, H: np.ndarray, mode: str) -> _Template:
    key = (mode, cfg.key(), plant.a_matrix.tobytes(), plant.b_matrix.tobytes(),
           plant.a_matrix.shape, plant.b_matrix.shape, H.tobytes(), H.shape)
    tpl = _TEMPLATES.get(key)
    if tpl is None:
        tpl = _build_template(cfg, plant, H, mode)
        if len(_TEMPLATES) >= _TEMPLATE_CACHE_SIZE:
            _TEMPLATES.pop(next(iter(_TEMPLATES)))
        _TEMPLATES[key] = tpl
    return tpl


class _Rows:
    """COO accumulator for rows whose entries may scale with the disturbance set."""

    def __init__(self, n_x):
        self.r, self.c, self.v, self.s, self.i = [], [], [], [], []
        self.rhs_const, self.rhs_x0, self.rhs_upper = [], [], []
        self.n_x = n_x
        self.n = 0

    def new_row(self, rhs=0.0, rhs_x0=None, rhs_upper=None):
        self.rhs_const.append(rhs)
        self.rhs_x0.append(np.zeros(self.n_x) if rhs_x0 is None else rhs_x0)
        self.rhs_upper.append(np.zeros(self.n_x) if rhs_upper is None else rhs_upper)
        self.n += 1
        return self.n - 1

    def add(self, row, col, val, slot=_CONST, idx=0):
        self.r.append(row)
        self.c.append(col)
        self.v.append(val)
        self.s.append(slot)
        self.i.append(idx)


def _build_template(cfg: MpcConfig, plant: PlantModel, H: np.ndarray, mode: str) -> _Template:
    A, B = plant.a_matrix, plant.b_matrix
    n_x, n_u, N = plant.n_x, plant.n_u, int(cfg.horizon)
    F, f = cfg.x_set.normals, cfg.x_set.offsets
    G, g = cfg.u_set.normals, cfg.u_set.offsets
    n_f, n_g, m_w = F.shape[0], G.shape[0], H.shape[0]
    Ap = _powers(A, N)

    i_v = 0
    off = N * n_u
    k_blocks = {}
    if mode != "nominal":
        for i in range(1, N):
            for j in range(i):
                k_blocks[(i, j)] = off
                off += n_u * n_x
    i_s = off
    i_d = i_s + N * n_f  # first dual variable
    per_block = {"general": m_w, "box": n_x, "nominal": 0}[mode]
    n_blocks = n_f * N * (N + 1) // 2 + n_g * N * (N - 1) // 2
    n_var = i_d + n_blocks * per_block
    lay = _Layout(N, n_x, n_u, n_f, i_v, i_s, n_var, k_blocks)

    # nominal predictions x_i = A^i x0 + sum_k A^{i-1-k} B v_k, i = 1..N
    Sx0 = np.zeros((N * n_x, n_x))
    Sv = np.zeros((N * n_x, N * n_u))
    for i in range(1, N + 1):
        Sx0[(i - 1) * n_x:i * n_x] = Ap[i]
        for k in range(i):
            Sv[(i - 1) * n_x:i * n_x, k * n_u:(k + 1) * n_u] = Ap[i - 1 - k] @ B

    # certainty-equivalent cost over x_0..x_{N-1}, u_0..u_{N-1}; x_0 is fixed
    Qb = np.kron(np.eye(N - 1), cfg.q_matrix)
    Rb = np.kron(np.eye(N), cfg.r_matrix)
    Gx = Sv[:(N - 1) * n_x]
    Px = Sx0[:(N - 1) * n_x]
    Hvv = 2.0 * (Gx.T @ Qb @ Gx + Rb)
    lin_x0 = np.zeros((n_var, n_x))
    lin_x0[:N * n_u] = 2.0 * Gx.T @ Qb @ Px
    const_x0 = cfg.q_matrix + Px.T @ Qb @ Px
    hess = sp.block_diag([sp.csc_matrix(Hvv),
                          sp.csc_matrix((i_s - N * n_u, i_s - N * n_u)),
                          2.0 * cfg.slack_weight * sp.identity(N * n_f),
                          sp.csc_matrix((n_var - i_d, n_var - i_d))], format="csc")

    rows = _Rows(n_x)
    eq_r, eq_c, eq_v, eq_rhs = [], [], [], []
    dptr = i_d

    def robustify(main, const, k_terms):
        """Add max over w of (const + sum g K) . w to row ``main`` through its dual."""
        nonlocal dptr
        if mode == "general":
            # z >= 0, z H = c(K), z.k on the main row
            cols = dptr + np.arange(m_w)
            for l in range(n_x):
                er = len(eq_rhs)
                for m in range(m_w):
                    if H[m, l] != 0.0:
                        eq_r.append(er)
                        eq_c.append(cols[m])
                        eq_v.append(H[m, l])
                for koff, gvec in k_terms:
                    for a in np.nonzero(gvec)[0]:
                        eq_r.append(er)
                        eq_c.append(koff + a * n_x + l)
                        eq_v.append(-gvec[a])
                eq_rhs.append(const[l])
            for m in range(m_w):
                rows.add(main, cols[m], 1.0, _OFFSET, m)
                rows.add(rows.new_row(), cols[m], -1.0)
            dptr += m_w
        elif mode == "box":
            # H = [I; -I]: z = (c + q, q) with q >= 0, q >= -c, so that
            # z.k = c.ub + q.(ub - lb)
            for l in range(n_x):
                q = dptr + l
                rows.add(main, q, 1.0, _WIDTH, l)
                for koff, gvec in k_terms:
                    for a in np.nonzero(gvec)[0]:
                        rows.add(main, koff + a * n_x + l, gvec[a], _UPPER, l)
                rows.add(rows.new_row(), q, -1.0)
                r2 = rows.new_row(rhs=const[l])
                rows.add(r2, q, -1.0)
                for koff, gvec in k_terms:
                    for a in np.nonzero(gvec)[0]:
                        rows.add(r2, koff + a * n_x + l, -gvec[a])
            upper_coef = rows.rhs_upper[main]
            upper_coef += const
            dptr += n_x

    # state rows on x_1..x_N:  F_r x_i^nom + worst-case terms - sigma <= f_r
    for i in range(1, N + 1):
        for r in range(n_f):
            row = rows.new_row(rhs=f[r], rhs_x0=F[r] @ Ap[i])
            fv = F[r] @ Sv[(i - 1) * n_x:i * n_x]
            for c in np.nonzero(fv)[0]:
                rows.add(row, i_v + c, fv[c])
            rows.add(row, i_s + (i - 1) * n_f + r, -1.0)
            if mode != "nominal":
                for j in range(i):
                    terms = [(k_blocks[(k, j)], F[r] @ Ap[i - 1 - k] @ B) for k in range(j + 1, i)]
                    robustify(row, F[r] @ Ap[i - 1 - j], terms)
    # hard input rows on u_0..u_{N-1}
    for i in range(N):
        for r in range(n_g):
            row = rows.new_row(rhs=g[r])
            for a in np.nonzero(G[r])[0]:
                rows.add(row, i_v + i * n_u + a, G[r, a])
            if mode != "nominal":
                for j in range(i):
                    robustify(row, np.zeros(n_x), [(k_blocks[(i, j)], G[r])])
    assert dptr == n_var
    for k in range(N * n_f):
        rows.add(rows.new_row(), i_s + k, -1.0)  # sigma >= 0

    return _Template(
        mode=mode, layout=lay, hess=hess, lin_x0=lin_x0, const_x0=const_x0,
        eq_mat=sp.csr_matrix((eq_v, (eq_r, eq_c)), shape=(len(eq_rhs), n_var)),
        eq_rhs=np.asarray(eq_rhs, dtype=float),
        rows=np.asarray(rows.r), cols=np.asarray(rows.c),
        base=np.asarray(rows.v, dtype=float), slot=np.asarray(rows.s),
        slot_idx=np.asarray(rows.i), n_ineq=rows.n,
        rhs_const=np.asarray(rows.rhs_const, dtype=float),
        rhs_x0=np.vstack(rows.rhs_x0), rhs_upper=np.vstack(rows.rhs_upper),
    )


def _check_w_box(w_box: HPolytope, n_x: int):
    if w_box.dim != n_x:
        raise ValueError("disturbance set dimension does not match the plant")
    if as_box(w_box) is None:
        bounding_box(w_box)  # raises for unbounded / empty sets


def _template_for(w_box, cfg, plant, dual):
    mode = _w_mode(w_box)
    if dual == "general":
        mode = "general"
    elif dual != "auto":
        raise ValueError("dual must be 'auto' or 'general'")
    return _get_template(cfg, plant, np.ascontiguousarray(w_box.normals), mode)


def build_problem(x_t, w_box: HPolytope, cfg: MpcConfig, plant: PlantModel,
                  fri: Optional[HPolytope] = None, *, dual: str = "auto",
                  template=None) -> QuadraticProgram:
    """Assemble the robustified MPC QP at state ``x_t``.

    With ``dual="auto"`` an axis-aligned ``w_box`` uses the closed-form
    elimination of the box dual, and the zero box drops the feedback gains
    altogether; ``dual="general"`` always uses the generic polytope dual.
    """
    x_t = np.asarray(x_t, dtype=float).reshape(-1)
    if x_t.size != plant.n_x or cfg.x_set.dim != plant.n_x or cfg.u_set.dim != plant.n_u:
        raise ValueError("dimension mismatch between state, plant and config")
    _check_w_box(w_box, plant.n_x)
    tpl = template or _template_for(w_box, cfg, plant, dual)
    lay = tpl.layout

    k = w_box.offsets
    if tpl.mode == "box":
        ub = k[:plant.n_x]
        scale = {_UPPER: ub, _WIDTH: ub + k[plant.n_x:]}
    else:
        ub = np.zeros(plant.n_x)
        scale = {_OFFSET: k}
    vals = tpl.base.copy()
    for s_kind, vec in scale.items():
        sel = tpl.slot == s_kind
        vals[sel] *= vec[tpl.slot_idx[sel]]
    rhs = tpl.rhs_const - tpl.rhs_x0 @ x_t - tpl.rhs_upper @ ub
    M = sp.csr_matrix((vals, (tpl.rows, tpl.cols)), shape=(tpl.n_ineq, lay.n_var))
    if fri is not None:
        if fri.dim != plant.n_u:
            raise ValueError("FRI polytope must live in input space")
        P = np.zeros((fri.n_rows, lay.n_var))
        P[:, lay.i_v:lay.i_v + lay.n_u] = fri.normals
        M = sp.vstack([M, sp.csr_matrix(P)], format="csr")
        rhs = np.concatenate([rhs, fri.offsets])
    eq = (tpl.eq_mat, tpl.eq_rhs) if tpl.eq_rhs.size else None
    return QuadraticProgram(tpl.hess, tpl.lin_x0 @ x_t, ineq=(M, rhs), eq=eq, check_psd=False)


def _unpack(z, lay: _Layout):
    N, n_x, n_u = lay.N, lay.n_x, lay.n_u
    v = z[lay.i_v:lay.i_v + N * n_u].reshape(N, n_u)
    blocks = {ij: z[off:off + n_u * n_x].reshape(n_u, n_x).copy()
              for ij, off in lay.k_blocks.items()}
    sig = z[lay.i_s:lay.i_s + N * lay.n_f].reshape(N, lay.n_f)
    return v, blocks, sig


def solve_policy(x_t, w_box: HPolytope, cfg: MpcConfig, plant: PlantModel,
                 fri: Optional[HPolytope] = None, tol: float = QP_TOL,
                 dual: str = "auto") -> MpcSolution:
    x_t = np.asarray(x_t, dtype=float).reshape(-1)
    _check_w_box(w_box, plant.n_x)
    tpl = _template_for(w_box, cfg, plant, dual)
    qp = build_problem(x_t, w_box, cfg, plant, fri, template=tpl)
    st = solve_qp(qp, tol=tol)
    if not st.optimal:
        return MpcSolution(None, None, None, st.objective, st.kind)
    v, blocks, sig = _unpack(st.solution, tpl.layout)
    objective = st.objective + float(x_t @ tpl.const_x0 @ x_t)
    return MpcSolution(v[0].copy(), AffinePolicy(blocks, v.copy()), sig.copy(), objective,
                       st.kind)


def nominal_states(x_t, policy: AffinePolicy, plant: PlantModel):
    """Zero-disturbance predictions x_1..x_N under ``policy``."""
    x = np.asarray(x_t, dtype=float).reshape(-1)
    out = []
    for u in policy.nominal:
        x = plant.a_matrix @ x + plant.b_matrix @ u
        out.append(x)
    return np.array(out)
