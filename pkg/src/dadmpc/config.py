"""Benchmark configuration: JSON file with plant/constraints/disturbance/cost/dad/fri/run sections."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, NoConvergence
from .geometry import BoxSet
from .invariance import FriParams, PlantModel
from .mpc import MpcConfig

PAPER_CONFIG = {
    "plant": {"A": [[1.0, 0.0], [1.0, 1.0]], "B": [[1.0], [0.7]]},
    "constraints": {
        "x_lower": [-7.0, 0.0], "x_upper": [7.0, 12.0],
        "u_lower": [-12.0], "u_upper": [12.0],
    },
    "disturbance": {"kind": "truncated_normal", "bound": 3.0},
    "cost": {"Q": [[0.0, 0.0], [0.0, 1.0]], "R": [[0.1]], "slack_weight": 1e4},
    "dad": {"alpha": 0.2, "eta": None, "n_cal": 1000, "calibration_seed": 12345},
    "fri": {"n_s": 6, "alpha_low": 0.0},
    "run": {"horizon": 8, "T": 1000, "x0": [0.0, 6.0], "seeds": list(range(1, 11))},
}

SECTIONS = tuple(PAPER_CONFIG)


def eta_rule(alpha: float) -> float:
    """Step size used for the sweeps: 1 at alpha = 0, alpha / 2 otherwise."""
    return 1.0 if alpha == 0 else 0.5 * alpha


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, val in override.items():
        if key not in out:
            raise ConfigError(f"unknown config key '{path}{key}'")
        if isinstance(out[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"'{path}{key}' must be a table")
            out[key] = _merge(out[key], val, f"{path}{key}.")
        else:
            out[key] = val
    return out


def _matrix(value, name, shape=None):
    try:
        M = np.atleast_2d(np.asarray(value, dtype=float))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} is not numeric: {exc}") from None
    if shape is not None and M.shape != shape:
        raise ConfigError(f"{name} has shape {M.shape}, expected {shape}")
    if not np.all(np.isfinite(M)):
        raise ConfigError(f"{name} must be finite")
    return M


def _vector(value, name, n):
    v = _matrix(value, name).reshape(-1)
    if v.size != n:
        raise ConfigError(f"{name} must have {n} entries")
    return v


@dataclass(frozen=True)
class BenchmarkSpec:
    """Validated benchmark description; ``raw`` keeps the merged JSON tree."""

    raw: dict

    def __post_init__(self):
        # touch every derived field once so errors surface at load time
        try:
            _ = (self.plant, self.x_set, self.u_set, self.w_set, self.mpc_config, self.x0)
        except (ValueError, NoConvergence) as exc:
            raise ConfigError(str(exc)) from None
        d, f, r = self.raw["dad"], self.raw["fri"], self.raw["run"]
        if not 0 <= float(d["alpha"]) < 1:
            raise ConfigError("dad.alpha must lie in [0, 1)")
        if d["eta"] is not None and not float(d["eta"]) > 0:
            raise ConfigError("dad.eta must be positive")
        if int(d["n_cal"]) < 1:
            raise ConfigError("dad.n_cal must be positive")
        if int(f["n_s"]) < 1:
            raise ConfigError("fri.n_s must be positive")
        if int(r["T"]) < 1:
            raise ConfigError("run.T must be positive")
        if self.raw["disturbance"]["kind"] != "truncated_normal":
            raise ConfigError("disturbance.kind must be 'truncated_normal'")
        if not float(self.raw["disturbance"]["bound"]) > 0:
            raise ConfigError("disturbance.bound must be positive")
        if int(d["calibration_seed"]) in {int(s) for s in r["seeds"]}:
            raise ConfigError("calibration seed must differ from the evaluation seeds")

    @classmethod
    def paper(cls):
        return cls(copy.deepcopy(PAPER_CONFIG))

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("config root must be an object")
        return cls(_merge(PAPER_CONFIG, data))

    @classmethod
    def load(cls, path):
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from None
        return cls.from_dict(data)

    def with_overrides(self, **sections):
        return BenchmarkSpec.from_dict(_merge(self.raw, sections))

    def to_dict(self):
        return copy.deepcopy(self.raw)

    @cached_property
    def plant(self) -> PlantModel:
        A = _matrix(self.raw["plant"]["A"], "plant.A")
        B = _matrix(self.raw["plant"]["B"], "plant.B")
        if B.shape[0] != A.shape[0]:
            B = B.T
        return PlantModel(A, B)

    def _box(self, sec, lo, hi, n):
        c = self.raw[sec]
        return BoxSet(_vector(c[lo], f"{sec}.{lo}", n), _vector(c[hi], f"{sec}.{hi}", n))

    @cached_property
    def x_set(self):
        return self._box("constraints", "x_lower", "x_upper", self.plant.n_x)

    @cached_property
    def u_set(self):
        return self._box("constraints", "u_lower", "u_upper", self.plant.n_u)

    @cached_property
    def w_set(self):
        return BoxSet.symmetric(float(self.raw["disturbance"]["bound"]), self.plant.n_x)

    @property
    def w_bound(self) -> float:
        return float(self.raw["disturbance"]["bound"])

    @cached_property
    def mpc_config(self) -> MpcConfig:
        n_x, n_u = self.plant.n_x, self.plant.n_u
        c = self.raw["cost"]
        return MpcConfig(
            horizon=int(self.raw["run"]["horizon"]),
            q_matrix=_matrix(c["Q"], "cost.Q", (n_x, n_x)),
            r_matrix=_matrix(c["R"], "cost.R", (n_u, n_u)),
            x_set=self.x_set, u_set=self.u_set,
            slack_weight=float(c["slack_weight"]),
        )

    @cached_property
    def x0(self):
        return _vector(self.raw["run"]["x0"], "run.x0", self.plant.n_x)

    @property
    def alpha(self) -> float:
        return float(self.raw["dad"]["alpha"])

    def eta_for(self, alpha: float) -> float:
        eta = self.raw["dad"]["eta"]
        return eta_rule(alpha) if eta is None else float(eta)

    @property
    def alpha_low(self) -> float:
        return float(self.raw["fri"]["alpha_low"])

    @property
    def n_s(self) -> int:
        return int(self.raw["fri"]["n_s"])

    @property
    def n_cal(self) -> int:
        return int(self.raw["dad"]["n_cal"])

    @property
    def calibration_seed(self) -> int:
        return int(self.raw["dad"]["calibration_seed"])

    @property
    def horizon_T(self) -> int:
        return int(self.raw["run"]["T"])

    @property
    def seeds(self):
        return [int(s) for s in self.raw["run"]["seeds"]]

    def fri_params(self, alpha: float, eta: float) -> FriParams:
        return FriParams(alpha_low=self.alpha_low, n_s=self.n_s, eta=eta, alpha=alpha)


def parse_seeds(text: str):
    """'1..10' or '1,2,5' or a mix like '1..3,7'."""
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if ".." in part:
                lo, hi = part.split("..")
                seeds.extend(range(int(lo), int(hi) + 1))
            else:
                seeds.append(int(part))
        except ValueError:
            raise ConfigError(f"bad seed list '{text}'") from None
    if not seeds:
        raise ConfigError("empty seed list")
    return seeds


def parse_floats(text: str):
    try:
        vals = [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise ConfigError(f"bad number list '{text}'") from None
    if not vals:
        raise ConfigError("empty number list")
    return vals
