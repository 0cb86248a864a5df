"""Intelligent Driver Model: acceleration, simulation and calibration."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from ..errors import CalibrationError, ConfigurationError, SimulationError

log = logging.getLogger(__name__)

IDM_BOUNDS = {
    "v0": (1.0, 50.0),
    "T": (0.1, 5.0),
    "s0_jam": (0.1, 10.0),
    "a_max": (0.1, 5.0),
    "b_comf": (0.1, 5.0),
}
IDM_DELTA = 4.0
# relative eigenvalue of J^T J below which a direction counts as unidentified
WEAK_EIG_RATIO = 1e-8


@dataclass(frozen=True)
class IdmParams:
    v0: float = 30.0
    T: float = 1.5
    s0_jam: float = 2.0
    a_max: float = 1.5
    b_comf: float = 2.0
    delta: float = IDM_DELTA

    def __post_init__(self):
        if self.delta != IDM_DELTA:
            raise ConfigurationError(f"IDM exponent is fixed at {IDM_DELTA}")
        out = [f"{n}={getattr(self, n)} not in [{lo}, {hi}]" for n, (lo, hi) in IDM_BOUNDS.items()
               if not lo <= getattr(self, n) <= hi]
        if out:
            raise ConfigurationError("IDM parameters out of bounds: " + "; ".join(out))

    def vector(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in IDM_BOUNDS])

    @classmethod
    def from_vector(cls, x) -> "IdmParams":
        return cls(**{n: float(v) for n, v in zip(IDM_BOUNDS, x)})

    def to_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def idm_acceleration(v: float, dv: float, s: float, p: IdmParams) -> float:
    """IDM acceleration for speed ``v``, approach rate ``dv = v - v_lead`` and
    bumper gap ``s``. ``s = inf`` means no leader."""
    free = 1.0 - (v / p.v0) ** 4
    if math.isinf(s):
        return p.a_max * free
    s_star = p.s0_jam + max(0.0, v * p.T + v * dv / (2.0 * math.sqrt(p.a_max * p.b_comf)))
    return p.a_max * (free - (s_star / s) ** 2)


@dataclass(frozen=True)
class IdmRun:
    x: np.ndarray
    v: np.ndarray
    a: np.ndarray
    collided: bool


def simulate_idm(leader_x, leader_v, x0: float, v0: float, params: IdmParams, dt: float,
                 leader_length: float = 4.5, follower_length: float = 4.5) -> IdmRun:
    """Simulate a follower behind a given leader trajectory.

    Positions are vehicle centres along the lane. Uses the ballistic update
    with the speed floored at zero. A gap that closes mid-run is held at a
    small positive value and reported through ``collided``.
    """
    xl = np.asarray(leader_x, dtype=float).tolist()
    vl = np.asarray(leader_v, dtype=float).tolist()
    n = len(xl)
    half = 0.5 * (leader_length + follower_length)
    if xl[0] - x0 - half <= 0:
        raise SimulationError(f"initial gap {xl[0] - x0 - half:.3f} m is not positive")
    p = params
    sqrt_ab = 2.0 * math.sqrt(p.a_max * p.b_comf)
    inv_v0 = 1.0 / p.v0
    xs = [0.0] * n
    vs = [0.0] * n
    acc = [0.0] * n
    x, v = float(x0), float(v0)
    collided = False
    for i in range(n):
        xs[i] = x
        vs[i] = v
        s = xl[i] - x - half
        if s <= 1e-3:
            collided = True
            s = 1e-3
        s_star = v * p.T + v * (v - vl[i]) / sqrt_ab
        s_star = p.s0_jam + (s_star if s_star > 0 else 0.0)
        r = v * inv_v0
        r2 = r * r
        a = p.a_max * (1.0 - r2 * r2 - (s_star / s) ** 2)
        acc[i] = a
        v_new = v + a * dt
        if v_new < 0:
            x -= v * v / (2.0 * a)
            v = 0.0
        else:
            x += 0.5 * (v + v_new) * dt
            v = v_new
    return IdmRun(np.array(xs), np.array(vs), np.array(acc), collided)


# ---------------------------------------------------------------------------
# calibration
# ---------------------------------------------------------------------------

_LO = np.array([b[0] for b in IDM_BOUNDS.values()])
_HI = np.array([b[1] for b in IDM_BOUNDS.values()])


def check_bounds(bounds: dict[str, tuple[float, float]] | None) -> tuple[np.ndarray, np.ndarray]:
    """Search bounds as arrays. Custom bounds may only narrow the declared ones."""
    bounds = {**IDM_BOUNDS, **(bounds or {})}
    unknown = set(bounds) - set(IDM_BOUNDS)
    if unknown:
        raise ConfigurationError(f"unknown IDM parameters {sorted(unknown)}")
    bad = []
    for name, (lo, hi) in bounds.items():
        dlo, dhi = IDM_BOUNDS[name]
        if not dlo <= lo < hi <= dhi:
            bad.append(f"{name}=[{lo}, {hi}] outside [{dlo}, {dhi}] or empty")
    if bad:
        raise ConfigurationError("invalid IDM bounds: " + "; ".join(bad))
    return (np.array([bounds[n][0] for n in IDM_BOUNDS]),
            np.array([bounds[n][1] for n in IDM_BOUNDS]))


def _to_params(z: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Unbounded search coordinates to bounded parameters (sine transform)."""
    return np.clip(lo + (hi - lo) * (np.sin(z) + 1.0) / 2.0, lo, hi)


def _to_search(x: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    u = np.clip(2.0 * (x - lo) / (hi - lo) - 1.0, -1.0, 1.0)
    return np.arcsin(u)


@dataclass(frozen=True)
class CfPair:
    """Aligned leader and follower along a lane (centres, m; speeds, m/s)."""

    leader_x: np.ndarray
    leader_v: np.ndarray
    follower_x: np.ndarray
    follower_v: np.ndarray
    dt: float
    leader_length: float = 4.5
    follower_length: float = 4.5

    def __post_init__(self):
        n = len(self.leader_x)
        for name in ("leader_v", "follower_x", "follower_v"):
            if len(getattr(self, name)) != n:
                raise ConfigurationError(f"{name} has {len(getattr(self, name))} samples, expected {n}")

    @property
    def duration(self) -> float:
        return (len(self.leader_x) - 1) * self.dt

    @property
    def spacing(self) -> np.ndarray:
        return np.asarray(self.leader_x) - np.asarray(self.follower_x)

    def simulate(self, params: IdmParams) -> IdmRun:
        return simulate_idm(self.leader_x, self.leader_v, float(self.follower_x[0]),
                            float(self.follower_v[0]), params, self.dt,
                            self.leader_length, self.follower_length)


def spacing_residuals(pair: CfPair, params: IdmParams) -> np.ndarray:
    run = pair.simulate(params)
    return (np.asarray(pair.leader_x) - run.x) - pair.spacing


def spacing_rmse(pair: CfPair, params: IdmParams) -> float:
    r = spacing_residuals(pair, params)
    return float(math.sqrt(np.mean(r * r)))


@dataclass(frozen=True)
class IdmCalibration:
    params: IdmParams
    rmse: float
    start_index: int
    starts: tuple[tuple[float, float], ...]   # (initial rmse, final rmse) per start
    weak_identifiability: bool
    weak_directions: tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {"model": "idm", "params": self.params.to_dict(), "rmse": self.rmse,
                "start_index": self.start_index, "starts": [list(s) for s in self.starts],
                "weak_identifiability": self.weak_identifiability,
                "weak_directions": list(self.weak_directions)}


def _objective(z: np.ndarray, pair: CfPair, lo: np.ndarray, hi: np.ndarray) -> float:
    p = IdmParams.from_vector(_to_params(z, lo, hi))
    run = pair.simulate(p)
    r = (np.asarray(pair.leader_x) - run.x) - pair.spacing
    return float(math.sqrt(np.mean(r * r)))


def _run_start(args) -> tuple[float, float, np.ndarray]:
    z0, pair, maxiter, lo, hi = args
    f0 = _objective(z0, pair, lo, hi)
    res = minimize(_objective, z0, args=(pair, lo, hi), method="Nelder-Mead",
                   options={"maxiter": maxiter, "maxfev": maxiter * 2, "xatol": 1e-10,
                            "fatol": 1e-12, "adaptive": True})
    # a restart from the first optimum escapes simplex collapse cheaply
    res2 = minimize(_objective, res.x, args=(pair, lo, hi), method="Nelder-Mead",
                    options={"maxiter": maxiter, "maxfev": maxiter * 2, "xatol": 1e-10,
                             "fatol": 1e-12, "adaptive": True})
    best = res2 if res2.fun <= res.fun else res
    return f0, float(best.fun), np.asarray(best.x)


def identifiability(pair: CfPair, params: IdmParams, rel_step: float = 1e-4) -> tuple[bool, tuple[str, ...]]:
    """Check the rank of J^T J of spacing residuals in log-parameter space.

    Returns the flag and the parameters that dominate the weak directions.
    """
    names = list(IDM_BOUNDS)
    x = params.vector()
    cols = []
    for i in range(len(x)):
        h = rel_step * x[i]
        up, dn = x.copy(), x.copy()
        up[i] = min(x[i] + h, _HI[i])
        dn[i] = max(x[i] - h, _LO[i])
        width = math.log(up[i] / dn[i])
        cols.append((spacing_residuals(pair, IdmParams.from_vector(up)) -
                     spacing_residuals(pair, IdmParams.from_vector(dn))) / width)
    jac = np.stack(cols, axis=1)
    jtj = jac.T @ jac
    w, vecs = np.linalg.eigh(jtj)
    top = w[-1]
    if not top > 0:
        return True, tuple(names)
    weak = w < WEAK_EIG_RATIO * top
    if not weak.any():
        return False, ()
    load = np.abs(vecs[:, weak]).max(axis=1)
    return True, tuple(n for n, l in zip(names, load) if l > 0.3)


def calibrate_idm(pair: CfPair, bounds: dict[str, tuple[float, float]] | None = None,
                  seed: int = 0, n_starts: int = 8, maxiter: int = 1500,
                  jobs: int = 1) -> IdmCalibration:
    """Minimise spacing RMSE with bounded Nelder-Mead from Sobol starts.

    The best start wins (lowest RMSE, then lowest index), so the result only
    depends on the inputs and ``seed``.
    """
    if pair.duration < 10.0:
        raise CalibrationError(f"need at least 10 s of interaction, got {pair.duration:.2f} s")
    lo, hi = check_bounds(bounds)
    sobol = qmc.Sobol(d=len(IDM_BOUNDS), scramble=True, seed=seed)
    unit = sobol.random(n_starts)
    # keep the starts off the bound edges where the sine transform is flat
    x0s = lo + (hi - lo) * (0.05 + 0.9 * unit)
    tasks = [(_to_search(x0, lo, hi), pair, maxiter, lo, hi) for x0 in x0s]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_run_start, tasks))
    else:
        results = [_run_start(t) for t in tasks]
    starts = tuple((f0, f1) for f0, f1, _ in results)
    if all(not f1 < f0 for f0, f1 in starts):
        trace = "; ".join(f"start {i}: {f0:.6g} -> {f1:.6g}" for i, (f0, f1) in enumerate(starts))
        raise CalibrationError(f"no start improved on its initial value ({trace})")
    best = min(range(len(results)), key=lambda i: (results[i][1], i))
    params = IdmParams.from_vector(_to_params(results[best][2], lo, hi))
    weak, dirs = identifiability(pair, params)
    if weak:
        log.warning("weak identifiability in IDM calibration (%s)", ", ".join(dirs))
    return IdmCalibration(params, results[best][1], best, starts, weak, dirs)
