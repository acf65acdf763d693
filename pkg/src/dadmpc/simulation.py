"""Closed-loop simulation, calibration, metrics and sweeps for the benchmark."""

from __future__ import annotations

import csv
import io
import statistics
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .conformal import CalibrationSet, collect_residuals
from .config import BenchmarkSpec
from .controller import (ConfidenceState, ControllerVariant, VariantKind, dad_step,
                         update_confidence, violation_indicator)
from .exceptions import FeasibilityFault, SolverFailure
from .geometry import as_box, contains
from .invariance import SetLadder, build_ladder, r_index
from .lqr import design_lqr

VARIANTS = ("dad-asy", "dad-rob", "fri-only", "robust", "lqr")
# outputs that do not depend on alpha; computed once per seed in a sweep
ALPHA_FREE = ("robust", "lqr")

TRACE_COLUMNS = ("t", "x1", "x2", "u", "w1", "w2", "v", "alpha_t", "r_t", "V_t",
                 "stage_cost", "sigma_max", "qp_status", "solve_ms")


def sample_disturbance(rng: np.random.Generator, bound: float, dim: int = 2) -> np.ndarray:
    """Standard normal components, each redrawn until |w_j| <= bound."""
    if not bound > 0:
        raise ValueError("bound must be positive")
    w = np.empty(dim)
    for j in range(dim):
        while True:
            s = rng.standard_normal()
            if abs(s) <= bound:
                w[j] = s
                break
    return w


def disturbance_sequence(seed: int, T: int, bound: float, dim: int = 2) -> np.ndarray:
    """The (T, dim) realization used by every variant under ``seed``."""
    rng = np.random.default_rng(seed)
    return np.array([sample_disturbance(rng, bound, dim) for _ in range(T)]).reshape(T, dim)


def lqr_gain(spec: BenchmarkSpec) -> np.ndarray:
    cfg = spec.mpc_config
    return design_lqr(spec.plant.a_matrix, spec.plant.b_matrix, cfg.q_matrix, cfg.r_matrix)


def saturate(u, u_set) -> np.ndarray:
    box = as_box(u_set)
    if box is None:
        raise ValueError("input saturation needs a box-shaped U")
    return np.clip(u, box.lower, box.upper)


def lqr_input(K, x, u_set):
    return saturate(-K @ x, u_set)


def calibrate(spec: BenchmarkSpec, seed: Optional[int] = None) -> CalibrationSet:
    """Run the saturated LQR for n_cal steps from x0 and keep the one-step residuals."""
    seed = spec.calibration_seed if seed is None else seed
    n = spec.n_cal
    plant = spec.plant
    K = lqr_gain(spec)
    W = disturbance_sequence(seed, n, spec.w_bound, plant.n_x)
    xs = np.empty((n + 1, plant.n_x))
    us = np.empty((n, plant.n_u))
    xs[0] = spec.x0
    for t in range(n):
        us[t] = lqr_input(K, xs[t], spec.u_set)
        xs[t + 1] = plant.step(xs[t], us[t], W[t])
    return collect_residuals(xs[:-1], us, xs[1:], plant)


def compute_sets(spec: BenchmarkSpec) -> SetLadder:
    return build_ladder(spec.plant, spec.x_set, spec.u_set, spec.w_set, spec.n_s)


@dataclass
class RunMetrics:
    variant: str
    seed: int
    alpha: float
    eta: float
    alpha_0: float
    v: np.ndarray              # v_1 .. v_T
    V: np.ndarray              # V_1 .. V_T
    alpha_traj: np.ndarray     # alpha_0 .. alpha_T
    r_traj: np.ndarray         # r_0 .. r_T (0 where no ladder is used)
    states: np.ndarray         # x_0 .. x_T
    inputs: np.ndarray         # u_0 .. u_{T-1}
    disturbances: np.ndarray   # w_0 .. w_{T-1}
    stage_costs: np.ndarray    # l(x_t, u_t), t < T
    sigma_max: np.ndarray
    solve_ms: np.ndarray
    J: float
    J_lqr: Optional[float] = None
    trace_csv: str = field(default="", repr=False)

    @property
    def T(self) -> int:
        return len(self.v)

    @property
    def V_T(self) -> float:
        return float(self.V[-1])

    @property
    def max_V(self) -> float:
        return float(np.max(self.V))

    @property
    def J_over_J_lqr(self) -> Optional[float]:
        if self.J_lqr is None:
            return None
        return self.J / self.J_lqr if self.J_lqr > 0 else float("inf")

    def summary(self):
        return {
            "variant": self.variant, "seed": self.seed, "alpha": self.alpha, "eta": self.eta,
            "alpha_0": self.alpha_0, "V_T": self.V_T, "max_V": self.max_V, "J": self.J,
            "J_over_J_lqr": self.J_over_J_lqr, "alpha_T": float(self.alpha_traj[-1]),
            "alpha_min": float(np.min(self.alpha_traj)),
            "alpha_max": float(np.max(self.alpha_traj)),
        }

    def trajectory(self):
        """Plot-ready series; lists so they serialise to JSON."""
        t = np.arange(1, self.T + 1)
        a_run_max = np.maximum.accumulate(self.alpha_traj)[1:]
        a_run_min = np.minimum.accumulate(self.alpha_traj)[1:]
        return {
            "t": list(range(self.T + 1)),
            "x1": self.states[:, 0].tolist(), "x2": self.states[:, 1].tolist(),
            "u": self.inputs[:, 0].tolist(),
            "V": self.V.tolist(),
            "V_lower": (self.alpha + (self.alpha_0 - a_run_max) / (t * self.eta)).tolist(),
            "V_upper": (self.alpha + (self.alpha_0 - a_run_min) / (t * self.eta)).tolist(),
            "alpha_t": self.alpha_traj.tolist(), "r_t": self.r_traj.tolist(),
        }


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _stage_cost(x, u, cfg):
    return float(x @ cfg.q_matrix @ x + u @ cfg.r_matrix @ u)


class SimulationContext:
    """Artifacts shared across runs: ladder, calibration, LQR gain."""

    def __init__(self, spec: BenchmarkSpec, ladder: Optional[SetLadder] = None,
                 cal: Optional[CalibrationSet] = None):
        self.spec = spec
        self._ladder = ladder
        self._cal = cal
        self.K = lqr_gain(spec)

    @property
    def ladder(self) -> SetLadder:
        if self._ladder is None:
            self._ladder = compute_sets(self.spec)
        return self._ladder

    @property
    def cal(self) -> CalibrationSet:
        if self._cal is None:
            self._cal = calibrate(self.spec)
        return self._cal


def run_closed_loop(ctx: SimulationContext, variant: str, seed: int, alpha: float,
                    eta: Optional[float] = None, T: Optional[int] = None,
                    record_timing: bool = False) -> RunMetrics:
    """Simulate one variant for T steps under the realization of ``seed``.

    Confidence bookkeeping runs for every variant so the same metrics exist
    for baselines; only the DAD/FRI variants act on it.  ``solve_ms`` is left
    blank in the trace unless ``record_timing`` is set, which keeps traces
    byte-identical across repeats.
    """
    spec = ctx.spec
    var = ControllerVariant.named(variant)
    eta = spec.eta_for(alpha) if eta is None else float(eta)
    T = spec.horizon_T if T is None else int(T)
    plant, cfg = spec.plant, spec.mpc_config
    fri_p = spec.fri_params(alpha, eta)
    W = disturbance_sequence(seed, T, spec.w_bound, plant.n_x)

    alpha_0 = var.initial_alpha(alpha, spec.alpha_low)
    cs = ConfidenceState.start(alpha_0, eta, alpha)
    ladder = ctx.ladder if var.fri_enabled else None
    cal = ctx.cal if var.w_bound_mode.value == "adaptive" else None

    x = np.array(spec.x0, dtype=float)
    if var.fri_enabled:
        r0 = r_index(alpha_0, fri_p)
        if not contains(ladder.rung(r0), x, tol=1e-9):
            raise FeasibilityFault(f"x0 not in S_{r0}", {"x0": x.tolist(), "r0": r0})

    n_x, n_u = plant.n_x, plant.n_u
    states = np.empty((T + 1, n_x))
    inputs = np.empty((T, n_u))
    v = np.zeros(T, dtype=int)
    alphas = np.empty(T + 1)
    rs = np.zeros(T + 1, dtype=int)
    costs = np.empty(T)
    sig = np.zeros(T)
    ms = np.zeros(T)
    qp_status = []

    for t in range(T + 1):
        states[t] = x
        if t == T:
            v_t = violation_indicator(x, spec.x_set)
            cs = update_confidence(cs, v_t)
            v[t - 1] = v_t
            alphas[t] = cs.alpha_t
            if var.fri_enabled:
                rs[t] = r_index(cs.alpha_t, fri_p)
            break
        if var.kind is VariantKind.LQR:
            if t >= 1:
                v_t = violation_indicator(x, spec.x_set)
                cs = update_confidence(cs, v_t)
                v[t - 1] = v_t
            t0 = time.perf_counter()
            u = lqr_input(ctx.K, x, spec.u_set)
            ms[t] = (time.perf_counter() - t0) * 1e3
            qp_status.append("")
        else:
            u, diag = dad_step(cs, x, t, plant, cal, ladder, cfg, var, fri_p, spec.w_set)
            cs = diag.confidence
            if t >= 1:
                v[t - 1] = diag.v_t
            rs[t] = diag.r_t or 0
            sig[t] = diag.sigma_max
            ms[t] = diag.solve_ms
            qp_status.append(diag.qp_status)
        u = np.asarray(u, dtype=float).reshape(n_u)
        alphas[t] = cs.alpha_t
        inputs[t] = u
        costs[t] = _stage_cost(x, u, cfg)
        x = plant.step(x, u, W[t])

    V = np.cumsum(v) / np.arange(1, T + 1)
    m = RunMetrics(variant=variant, seed=seed, alpha=alpha, eta=eta, alpha_0=alpha_0,
                   v=v, V=V, alpha_traj=alphas, r_traj=rs, states=states, inputs=inputs,
                   disturbances=W, stage_costs=costs, sigma_max=sig, solve_ms=ms,
                   J=float(np.sum(costs)))
    m.trace_csv = _trace_csv(m, qp_status, record_timing)
    return m


def _trace_csv(m: RunMetrics, qp_status, record_timing: bool) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for t in range(m.T + 1):
        last = t == m.T
        x = m.states[t]
        w.writerow([
            t, _fmt(x[0]), _fmt(x[1]),
            "" if last else _fmt(m.inputs[t, 0]),
            "" if last else _fmt(m.disturbances[t, 0]),
            "" if last else _fmt(m.disturbances[t, 1]),
            "" if t == 0 else int(m.v[t - 1]),
            _fmt(m.alpha_traj[t]),
            int(m.r_traj[t]),
            "" if t == 0 else _fmt(m.V[t - 1]),
            "" if last else _fmt(m.stage_costs[t]),
            "" if last else _fmt(m.sigma_max[t]),
            "" if last else qp_status[t],
            _fmt(m.solve_ms[t]) if record_timing and not last else "",
        ])
    return buf.getvalue()


@dataclass
class SweepResult:
    cells: list
    runs: dict          # (variant, alpha, seed) -> RunMetrics
    faults: list

    def table(self):
        """Medians per (alpha, variant) over seeds."""
        rows = []
        for alpha in sorted({c["alpha"] for c in self.cells}):
            for variant in VARIANTS:
                cs = [c for c in self.cells
                      if c["alpha"] == alpha and c["variant"] == variant and c["fault"] is None]
                if not cs:
                    continue
                rows.append({
                    "alpha": alpha, "variant": variant, "n": len(cs),
                    "J_over_J_lqr": statistics.median(c["J_over_J_lqr"] for c in cs),
                    "V_T": statistics.median(c["V_T"] for c in cs),
                    "max_V": statistics.median(c["max_V"] for c in cs),
                })
        return rows


def sweep(ctx: SimulationContext, variants, alphas, seeds, eta: Optional[float] = None,
          T: Optional[int] = None, progress=None) -> SweepResult:
    """Cross product of variants x alphas x seeds; faults are recorded, not raised."""
    variants = list(variants)
    for v in variants:
        ControllerVariant.named(v)
    cells, runs, faults = [], {}, []
    J_lqr = {}
    for seed in seeds:
        J_lqr[seed] = run_closed_loop(ctx, "lqr", seed, alphas[0], eta, T).J
    cache = {}
    for alpha in alphas:
        for seed in seeds:
            for variant in variants:
                key = (variant, alpha, seed)
                fault = None
                try:
                    if variant in ALPHA_FREE and (variant, seed) in cache:
                        m = _rebook(cache[(variant, seed)], alpha, eta, ctx.spec)
                    else:
                        m = run_closed_loop(ctx, variant, seed, alpha, eta, T)
                        if variant in ALPHA_FREE:
                            cache[(variant, seed)] = m
                    m.J_lqr = J_lqr[seed]
                    runs[key] = m
                    cell = m.summary()
                except (FeasibilityFault, SolverFailure) as exc:
                    fault = f"{type(exc).__name__}: {exc}"
                    faults.append({"variant": variant, "alpha": alpha, "seed": seed,
                                   "error": fault,
                                   "diagnostics": getattr(exc, "diagnostics", None)})
                    cell = {"variant": variant, "seed": seed, "alpha": alpha}
                cell["fault"] = fault
                cells.append(cell)
                if progress is not None:
                    progress(key, fault)
    return SweepResult(cells, runs, faults)


def _rebook(m: RunMetrics, alpha: float, eta: Optional[float], spec) -> RunMetrics:
    """Same trajectory, confidence bookkeeping redone for another alpha."""
    eta = spec.eta_for(alpha) if eta is None else float(eta)
    cs = ConfidenceState.start(alpha, eta, alpha)
    alphas = [cs.alpha_t]
    for v_t in m.v:
        cs = update_confidence(cs, int(v_t))
        alphas.append(cs.alpha_t)
    out = RunMetrics(**{**m.__dict__, "alpha": alpha, "eta": eta, "alpha_0": alpha,
                        "alpha_traj": np.array(alphas), "J_lqr": None, "trace_csv": ""})
    return out
