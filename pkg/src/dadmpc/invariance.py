"""Pre-sets, robust controlled invariant sets and the FRI input constraint."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import EmptyRci, NoConvergence
from .geometry import (HPolytope, intersect, is_empty, is_subset, pontryagin_diff,
                       project, remove_redundancy)
from .lqr import design_lqr

RCI_TOL = 1e-6
RCI_MAX_ITER = 200


@dataclass(frozen=True)
class PlantModel:
    """x+ = A x + B u + w."""

    a_matrix: np.ndarray
    b_matrix: np.ndarray
    check_stabilizable: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.a_matrix, dtype=float))
        B = np.asarray(self.b_matrix, dtype=float)
        if A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        B = B.reshape(A.shape[0], -1)
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise ValueError("plant matrices must be finite")
        A.setflags(write=False)
        B.setflags(write=False)
        object.__setattr__(self, "a_matrix", A)
        object.__setattr__(self, "b_matrix", B)
        if self.check_stabilizable:
            # raises NoConvergence when no stabilising gain exists
            design_lqr(A, B, np.eye(self.n_x), np.eye(self.n_u))

    @property
    def n_x(self) -> int:
        return self.a_matrix.shape[0]

    @property
    def n_u(self) -> int:
        return self.b_matrix.shape[1]

    def step(self, x, u, w):
        return self.a_matrix @ x + self.b_matrix @ np.atleast_1d(u) + w


@dataclass(frozen=True)
class FriParams:
    alpha_low: float
    n_s: int
    eta: float
    alpha: float

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if not 0 <= self.alpha < 1:
            raise ValueError("alpha must lie in [0, 1)")
        if int(self.n_s) != self.n_s or self.n_s < 1:
            raise ValueError("n_s must be a positive integer")

    @property
    def threshold(self) -> float:
        """Below this confidence value the successor must also land in X."""
        return self.alpha_low + self.eta * (1 - self.alpha)


def pre_set(M: HPolytope, plant: PlantModel, u_set: HPolytope, w_set: HPolytope) -> HPolytope:
    """{x | exists u in U with A x + B u + w in M for every w in W}."""
    n_x, n_u = plant.n_x, plant.n_u
    if M.dim != n_x or w_set.dim != n_x or u_set.dim != n_u:
        raise ValueError("pre_set dimension mismatch")
    target = pontryagin_diff(M, w_set)
    if is_empty(target):
        return HPolytope.empty(n_x)
    F, f = target.normals, target.offsets
    lifted = HPolytope(
        np.vstack([np.hstack([F @ plant.a_matrix, F @ plant.b_matrix]),
                   np.hstack([np.zeros((u_set.n_rows, n_x)), u_set.normals])]),
        np.concatenate([f, u_set.offsets]),
        dim=n_x + n_u,
    )
    return project(lifted, range(n_x))


def _mutually_contained(P, Q, tol):
    return is_subset(P, Q, tol) and is_subset(Q, P, tol)


def rci_iterate(seed: HPolytope, plant, u_set, w_set, max_iter=RCI_MAX_ITER, tol=RCI_TOL):
    """Omega <- Omega /\\ Pre(Omega) from ``seed``; returns (set, iterations)."""
    if is_empty(seed):
        raise EmptyRci("seed set is empty")
    omega = remove_redundancy(seed)
    for k in range(max_iter + 1):
        nxt = intersect(omega, pre_set(omega, plant, u_set, w_set))
        if is_empty(nxt):
            raise EmptyRci(f"RCI iteration became empty after {k + 1} steps")
        if _mutually_contained(omega, nxt, tol):
            return nxt, k
        omega = nxt
    raise NoConvergence(f"RCI iteration not converged after {max_iter} steps")


def max_rci(seed: HPolytope, plant, u_set, w_set, max_iter: int = RCI_MAX_ITER) -> HPolytope:
    return rci_iterate(seed, plant, u_set, w_set, max_iter=max_iter)[0]


@dataclass(frozen=True, eq=False)
class SetLadder:
    """X, X_r = Pre(X) and the nested rungs S_1 ... S_ns.

    The disturbance-tightened versions of X and of every rung are computed
    once here because the FRI constraint needs them at every control step.
    """

    x_set: HPolytope
    x_r: HPolytope
    rungs: tuple
    w_set: HPolytope
    rci_iterations: int = 0
    x_tight: HPolytope = field(init=False, repr=False)
    rungs_tight: tuple = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "rungs", tuple(self.rungs))
        if not self.rungs:
            raise ValueError("ladder needs at least one rung")
        object.__setattr__(self, "x_tight", pontryagin_diff(self.x_set, self.w_set))
        object.__setattr__(self, "rungs_tight",
                           tuple(pontryagin_diff(s, self.w_set) for s in self.rungs))

    @property
    def n_s(self) -> int:
        return len(self.rungs)

    def rung(self, k: int) -> HPolytope:
        """S_k with 1-based k."""
        return self.rungs[k - 1]

    def to_dict(self):
        return {
            "n_s": self.n_s,
            "rci_iterations": self.rci_iterations,
            "x_set": self.x_set.to_dict(),
            "x_r": self.x_r.to_dict(),
            "w_set": self.w_set.to_dict(),
            "rungs": [s.to_dict() for s in self.rungs],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            x_set=HPolytope.from_dict(data["x_set"]),
            x_r=HPolytope.from_dict(data["x_r"]),
            rungs=[HPolytope.from_dict(r) for r in data["rungs"]],
            w_set=HPolytope.from_dict(data["w_set"]),
            rci_iterations=int(data.get("rci_iterations", 0)),
        )


def build_ladder(plant, x_set, u_set, w_set, n_s: int, rci_seed=None) -> SetLadder:
    """X_r = Pre(X); S_1 = maximal RCI subset of seed /\\ X_r; S_{k+1} = Pre(S_k).

    ``rci_seed`` defaults to X, which keeps S_1 inside X so that the rung and
    X constraints stay jointly feasible when r drops to 1.  Pass the
    whole space to seed with X_r alone.
    """
    if n_s < 1:
        raise ValueError("n_s must be >= 1")
    x_r = pre_set(x_set, plant, u_set, w_set)
    seed = intersect(x_set if rci_seed is None else rci_seed, x_r)
    s1, iters = rci_iterate(seed, plant, u_set, w_set)
    rungs = [s1]
    for _ in range(n_s - 1):
        rungs.append(pre_set(rungs[-1], plant, u_set, w_set))
    return SetLadder(x_set, x_r, rungs, w_set, rci_iterations=iters)


def r_index(alpha_t: float, p: FriParams) -> int:
    """Rung index max(min(floor((alpha_t - alpha_low) / (eta (1 - alpha))), n_s), 1).

    Quotients within 1e-9 of an integer are snapped to it before the floor, so
    that round-off in the confidence recursion cannot skip a rung.
    """
    q = (alpha_t - p.alpha_low) / (p.eta * (1 - p.alpha))
    if not math.isfinite(q):
        return p.n_s if q > 0 else 1
    nearest = round(q)
    k = nearest if abs(q - nearest) <= 1e-9 else math.floor(q)
    return int(max(min(k, p.n_s), 1))


def fri_constraint(x_t, alpha_t, ladder: SetLadder, plant: PlantModel, u_set: HPolytope,
                   w_set: HPolytope, p: FriParams) -> HPolytope:
    """Admissible first inputs: u in U, A x + B u in S_r - W, and in X - W near alpha_low.

    ``w_set`` must be the set the ladder was built with; the tightened rungs
    are taken from the ladder.
    """
    x_t = np.asarray(x_t, dtype=float).reshape(-1)
    if w_set is not ladder.w_set and not (
            np.array_equal(w_set.normals, ladder.w_set.normals)
            and np.array_equal(w_set.offsets, ladder.w_set.offsets)):
        raise ValueError("w_set does not match the ladder's disturbance set")
    r = r_index(alpha_t, p)
    targets = [ladder.rungs_tight[r - 1]]
    if alpha_t < p.threshold:
        targets.append(ladder.x_tight)
    A, B = plant.a_matrix, plant.b_matrix
    rows, rhs = [u_set.normals], [u_set.offsets]
    for T in targets:
        rows.append(T.normals @ B)
        rhs.append(T.offsets - T.normals @ (A @ x_t))
    return HPolytope(np.vstack(rows), np.concatenate(rhs), dim=plant.n_u)
