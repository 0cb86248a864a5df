"""Newell's simplified car-following model: x_f(t) = x_l(t - tau) - d."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import CalibrationError


@dataclass(frozen=True)
class NewellParams:
    tau: float
    d: float

    def to_dict(self) -> dict[str, float]:
        return {"tau": self.tau, "d": self.d}


@dataclass(frozen=True)
class NewellCalibration:
    params: NewellParams
    rmse: float
    lag_frames: int
    n_points: int

    def to_dict(self) -> dict:
        return {"model": "newell", "params": self.params.to_dict(), "rmse": self.rmse,
                "lag_frames": self.lag_frames, "n_points": self.n_points}


def calibrate_newell(leader_x, follower_x, dt: float, max_tau: float = 5.0) -> NewellCalibration:
    """Grid search over whole-frame lags; ``d`` is the mean shift at each lag.

    Ties in RMSE go to the smaller lag.
    """
    xl = np.asarray(leader_x, dtype=float)
    xf = np.asarray(follower_x, dtype=float)
    if xl.shape != xf.shape:
        raise CalibrationError("leader and follower must be sampled on the same frames")
    n = len(xl)
    max_lag = min(int(math.floor(max_tau / dt + 1e-9)), n - 2)
    if max_lag < 0:
        raise CalibrationError("too few samples for calibration")
    best = None
    for lag in range(max_lag + 1):
        shifted = xl[: n - lag]
        target = xf[lag:]
        disp = shifted - target
        d = float(disp.mean())
        rmse = float(math.sqrt(np.mean((disp - d) ** 2)))
        if best is None or rmse < best[0]:
            best = (rmse, lag, d, len(target))
    rmse, lag, d, m = best
    return NewellCalibration(NewellParams(lag * dt, d), rmse, lag, m)
