"""The online DAD-MPC loop: violation feedback, confidence update, policy call."""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .conformal import CalibrationSet, w_bound
from .exceptions import FeasibilityFault, SolverFailure
from .geometry import BoxSet, contains, is_empty
from .invariance import FriParams, PlantModel, SetLadder, fri_constraint, r_index
from .mpc import MpcConfig, solve_policy
from .solver import SolveKind

VIOLATION_TOL = 1e-9


class VariantKind(enum.Enum):
    DAD_FRI_ASY = "dad-asy"
    DAD_FRI_ROB = "dad-rob"
    FRI_ONLY = "fri-only"
    ROBUST_MPC = "robust"
    LQR = "lqr"


class WBoundMode(enum.Enum):
    ADAPTIVE = "adaptive"
    FULL_SUPPORT = "full"
    ZERO = "zero"


@dataclass(frozen=True)
class ControllerVariant:
    kind: VariantKind
    fri_enabled: bool
    w_bound_mode: WBoundMode

    def __post_init__(self):
        k = self.kind
        ok = {
            VariantKind.DAD_FRI_ASY: self.fri_enabled and self.w_bound_mode is WBoundMode.ADAPTIVE,
            VariantKind.DAD_FRI_ROB: self.fri_enabled and self.w_bound_mode is WBoundMode.ADAPTIVE,
            VariantKind.ROBUST_MPC: (not self.fri_enabled
                                     and self.w_bound_mode is WBoundMode.FULL_SUPPORT),
            VariantKind.FRI_ONLY: self.fri_enabled and self.w_bound_mode is WBoundMode.ZERO,
            VariantKind.LQR: True,
        }[k]
        if not ok:
            raise ValueError(f"inconsistent settings for variant {k.value}")

    @classmethod
    def named(cls, name):
        kind = VariantKind(name)
        return cls(kind, *_DEFAULTS[kind])

    @property
    def name(self) -> str:
        return self.kind.value

    def initial_alpha(self, alpha: float, alpha_low: float) -> float:
        """alpha_0 = alpha for the asymptotic setup, alpha_low for the robust ones."""
        return alpha if self.kind is VariantKind.DAD_FRI_ASY else alpha_low


_DEFAULTS = {
    VariantKind.DAD_FRI_ASY: (True, WBoundMode.ADAPTIVE),
    VariantKind.DAD_FRI_ROB: (True, WBoundMode.ADAPTIVE),
    VariantKind.FRI_ONLY: (True, WBoundMode.ZERO),
    VariantKind.ROBUST_MPC: (False, WBoundMode.FULL_SUPPORT),
    VariantKind.LQR: (False, WBoundMode.FULL_SUPPORT),
}


@dataclass(frozen=True)
class ConfidenceState:
    """alpha_t together with the update parameters and running extremes."""

    alpha_t: float
    alpha_0: float
    eta: float
    alpha_target: float
    alpha_min: float
    alpha_max: float
    t: int = 0

    @classmethod
    def start(cls, alpha_0, eta, alpha_target):
        if not eta > 0:
            raise ValueError("eta must be positive")
        if not 0 <= alpha_target < 1:
            raise ValueError("alpha must lie in [0, 1)")
        a0 = float(alpha_0)
        return cls(a0, a0, float(eta), float(alpha_target), a0, a0, 0)


def violation_indicator(x_t, x_set, tol: float = VIOLATION_TOL) -> int:
    return 0 if contains(x_set, x_t, tol=tol) else 1


def update_confidence(cs: ConfidenceState, v_t: int) -> ConfidenceState:
    if v_t not in (0, 1):
        raise ValueError("violation indicator must be 0 or 1")
    a = cs.alpha_t + cs.eta * (cs.alpha_target - v_t)
    return replace(cs, alpha_t=a, t=cs.t + 1,
                   alpha_min=min(cs.alpha_min, a), alpha_max=max(cs.alpha_max, a))


@dataclass(frozen=True)
class StepDiagnostics:
    t: int
    v_t: Optional[int]
    alpha_t: float
    r_t: Optional[int]
    sigma_max: float
    qp_status: str
    solve_ms: float
    confidence: ConfidenceState


def disturbance_set(variant: ControllerVariant, cal: Optional[CalibrationSet], alpha_t: float,
                    w_set):
    mode = variant.w_bound_mode
    if mode is WBoundMode.FULL_SUPPORT:
        return w_set
    if mode is WBoundMode.ZERO:
        return BoxSet(np.zeros(w_set.dim), np.zeros(w_set.dim))
    if cal is None:
        raise ValueError("adaptive disturbance bound needs calibration data")
    return w_bound(cal, alpha_t, w_set)


def dad_step(cs: ConfidenceState, x_t, t: int, plant: PlantModel, cal: Optional[CalibrationSet],
             ladder: Optional[SetLadder], cfg: MpcConfig, variant: ControllerVariant,
             fri_params: Optional[FriParams], w_set):
    """One pass of the loop body at time ``t``.

    The confidence value is updated from the violation of ``x_t`` for t >= 1
    (there is no v_0).  Returns ``(u_t, diagnostics)``; the updated
    confidence state travels in ``diagnostics.confidence``.
    """
    x_t = np.asarray(x_t, dtype=float).reshape(-1)
    v_t = None
    if t >= 1:
        v_t = violation_indicator(x_t, cfg.x_set)
        cs = update_confidence(cs, v_t)

    w_box = disturbance_set(variant, cal, cs.alpha_t, w_set)
    fri = None
    r_t = None
    if variant.fri_enabled:
        r_t = r_index(cs.alpha_t, fri_params)
        fri = fri_constraint(x_t, cs.alpha_t, ladder, plant, cfg.u_set, w_set, fri_params)
        if is_empty(fri):
            raise FeasibilityFault(
                f"empty FRI input set at t={t}",
                {"t": t, "x_t": x_t.tolist(), "alpha_t": cs.alpha_t, "r_t": r_t})

    t0 = time.perf_counter()
    sol = solve_policy(x_t, w_box, cfg, plant, fri)
    solve_ms = (time.perf_counter() - t0) * 1e3
    if sol.status is SolveKind.INFEASIBLE:
        raise FeasibilityFault(
            f"MPC infeasible at t={t}",
            {"t": t, "x_t": x_t.tolist(), "alpha_t": cs.alpha_t, "r_t": r_t})
    if sol.status is not SolveKind.OPTIMAL:
        raise SolverFailure(f"MPC solve returned {sol.status.value} at t={t}")
    diag = StepDiagnostics(t=t, v_t=v_t, alpha_t=cs.alpha_t, r_t=r_t,
                           sigma_max=float(np.max(sol.slacks, initial=0.0)),
                           qp_status=sol.status.value, solve_ms=solve_ms, confidence=cs)
    return sol.first_input, diag
