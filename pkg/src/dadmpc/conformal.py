"""Split conformal quantification of the additive disturbance."""

from __future__ import annotations

import math

import numpy as np

from .geometry import BoxSet, HPolytope, as_box, bounding_box, intersect


class CalibrationSet:
    """Per-dimension absolute one-step prediction residuals.

    Residuals are sorted per dimension on construction so that quantile
    lookups are O(1).
    """

    def __init__(self, residuals, source_range=None):
        R = np.asarray(residuals, dtype=float)
        if R.ndim == 1:
            R = R[:, None]
        if R.ndim != 2 or R.shape[0] < 1:
            raise ValueError("residuals must be a nonempty (n_cal, n_x) array")
        if not np.all(np.isfinite(R)) or np.any(R < 0):
            raise ValueError("residuals must be finite and nonnegative")
        self._sorted = np.sort(R, axis=0)
        self._sorted.setflags(write=False)
        self.n_cal = R.shape[0]
        self.n_x = R.shape[1]
        if source_range is None:
            source_range = (0, self.n_cal - 1)
        self.source_range = tuple(int(t) for t in source_range)

    @property
    def sorted_residuals(self) -> np.ndarray:
        return self._sorted

    def to_dict(self):
        return {
            "n_cal": self.n_cal,
            "source_range": list(self.source_range),
            "residuals": {str(j): self._sorted[:, j].tolist() for j in range(self.n_x)},
        }

    @classmethod
    def from_dict(cls, data):
        res = data["residuals"]
        cols = [res[str(j)] for j in range(len(res))]
        if any(len(c) != data["n_cal"] for c in cols):
            raise ValueError("every dimension must hold exactly n_cal residuals")
        return cls(np.column_stack(cols), data.get("source_range"))


def collect_residuals(states, inputs, next_states, plant, t_start=0) -> CalibrationSet:
    """|x_{t+1}(j) - A(j,:) x_t - B(j,:) u_t| for each recorded transition."""
    X = np.atleast_2d(np.asarray(states, dtype=float))
    Xn = np.atleast_2d(np.asarray(next_states, dtype=float))
    Uin = np.asarray(inputs, dtype=float).reshape(X.shape[0], -1)
    if X.shape != Xn.shape or X.shape[1] != plant.n_x or Uin.shape[1] != plant.n_u:
        raise ValueError("trace dimensions do not match the plant")
    R = np.abs(Xn - X @ plant.a_matrix.T - Uin @ plant.b_matrix.T)
    return CalibrationSet(R, (t_start, t_start + X.shape[0] - 1))


def quantile_rank(n_cal: int, delta: float) -> int:
    """ceil((n_cal + 1)(1 - delta)); a product within 1e-12 of an integer counts as it."""
    x = (n_cal + 1) * (1.0 - delta)
    k = round(x)
    if abs(x - k) <= 1e-12 * max(1.0, abs(x)):
        return int(k)
    return math.ceil(x)


def quantile(cal: CalibrationSet, j: int, delta: float) -> float:
    """The rank-th smallest of {R_1, ..., R_n, +inf}; ``inf`` past the data."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    k = quantile_rank(cal.n_cal, delta)
    if k > cal.n_cal:
        return float("inf")
    return float(cal.sorted_residuals[max(k, 1) - 1, j])


def conformal_box(cal: CalibrationSet, delta: float):
    """Per-dimension half widths q(delta) (entries may be ``inf``)."""
    return np.array([quantile(cal, j, delta) for j in range(cal.n_x)])


def w_bound(cal: CalibrationSet, alpha_t: float, w_support: HPolytope) -> HPolytope:
    """Disturbance set handed to the MPC at confidence ``alpha_t``.

    Full support for alpha_t <= 0, the zero singleton for alpha_t >= 1 and the
    conformal box at delta = alpha_t, cut down to the support, in between.
    """
    if w_support.dim != cal.n_x:
        raise ValueError("support dimension does not match the calibration data")
    if alpha_t <= 0:
        return w_support
    if alpha_t >= 1:
        return BoxSet(np.zeros(cal.n_x), np.zeros(cal.n_x))
    q = conformal_box(cal, alpha_t)
    box = as_box(w_support)
    hull = box if box is not None else bounding_box(w_support)
    # an infinite half width leaves that coordinate to the support alone
    hi = np.minimum(q, np.maximum(np.abs(hull.lower), np.abs(hull.upper)))
    return intersect(BoxSet(-hi, hi), w_support)
