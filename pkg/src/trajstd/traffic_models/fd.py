"""Fundamental-diagram fits by least squares on the linearized models.

* Greenshields: v = vf (1 - k / kj)
* Greenberg:    v = vm ln(kj / k)
* Underwood:    v = vf exp(-k / k0)
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from ..errors import FitError

FD_MODELS = ("greenshields", "greenberg", "underwood")


@dataclass(frozen=True)
class FdFit:
    model: str
    params: dict[str, float]
    rmse: float
    r_squared: float
    n_points: int

    def predict(self, k) -> np.ndarray:
        return fd_speed(self.model, self.params, np.asarray(k, dtype=float))

    def to_dict(self) -> dict:
        return {"model": self.model, "params": dict(self.params), "rmse": self.rmse,
                "r_squared": self.r_squared, "n_points": self.n_points}


def fd_speed(model: str, params: dict[str, float], k: np.ndarray) -> np.ndarray:
    if model == "greenshields":
        return params["vf"] * (1.0 - k / params["kj"])
    if model == "greenberg":
        return params["vm"] * np.log(params["kj"] / k)
    if model == "underwood":
        return params["vf"] * np.exp(-k / params["k0"])
    raise FitError(f"unknown model {model!r}; expected one of {', '.join(FD_MODELS)}")


def _line_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    xm, ym = x.mean(), y.mean()
    sxx = float(((x - xm) ** 2).sum())
    if sxx <= 1e-12 * max(1.0, float((x * x).sum())):
        raise FitError("singular design: all densities are equal")
    slope = float(((x - xm) * (y - ym)).sum()) / sxx
    return float(ym - slope * xm), slope


def fit_fd(points: Iterable[tuple[float, float]], model: str) -> FdFit:
    """Fit ``model`` to (density, speed) points."""
    if model not in FD_MODELS:
        raise FitError(f"unknown model {model!r}; expected one of {', '.join(FD_MODELS)}")
    pts = np.asarray(list(points), dtype=float).reshape(-1, 2)
    if len(pts) < 3:
        raise FitError(f"need at least 3 points, got {len(pts)}")
    k, v = pts[:, 0], pts[:, 1]
    if not np.all(np.isfinite(pts)):
        raise FitError("points must be finite")
    if np.any(k <= 0):
        raise FitError("densities must be positive")
    if model == "underwood" and np.any(v <= 0):
        raise FitError("underwood needs positive speeds for the log transform")
    if model == "greenshields":
        a, b = _line_fit(k, v)
        params = {"vf": a, "kj": -a / b if b != 0 else math.inf}
    elif model == "greenberg":
        a, b = _line_fit(np.log(k), v)
        vm = -b
        params = {"vm": vm, "kj": math.exp(a / vm) if vm > 0 else math.nan}
    else:
        a, b = _line_fit(k, np.log(v))
        params = {"vf": math.exp(a), "k0": -1.0 / b if b != 0 else math.inf}
    bad = {n: p for n, p in params.items() if not (math.isfinite(p) and p > 0)}
    if bad:
        raise FitError(f"{model} fit gave nonpositive or non-finite parameters {bad} "
                       f"(intercept {a:.6g}, slope {b:.6g}, n={len(pts)})")
    resid = v - fd_speed(model, params, k)
    rmse = float(math.sqrt(np.mean(resid ** 2)))
    sst = float(((v - v.mean()) ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / sst if sst > 0 else (1.0 if rmse == 0 else 0.0)
    return FdFit(model, params, rmse, min(r2, 1.0), len(pts))


def fd_points(scene, regions) -> list[tuple[float, float]]:
    """(k, v) points from a set of space-time regions, skipping empty ones."""
    from .edie import edie_aggregate

    out = []
    for region in regions:
        st = edie_aggregate(scene, region)
        if not st.empty and st.k > 0 and st.v is not None and st.v > 0:
            out.append((st.k, st.v))
    return out
