"""Linear regulation-error dynamics of the secondary controller.

Both channels obey de/dt = -c (L + GZ) e with their own gain c. Runs use
fixed-step RK4; on a linear system one RK4 step is the degree-4 Taylor
polynomial of the propagator, so the step matrix is formed once per run.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .netgraph import CommNetwork, PinningConfig
from .spectral import closed_loop_matrix

DEFAULT_DT = 1e-4
DEFAULT_BAND = 0.01
REGRESSION_FLOOR = 1e-10


class SimulationError(RuntimeError):
    pass


class StabilityGuardError(SimulationError, ValueError):
    def __init__(self, message: str, suggested_dt: float):
        super().__init__(message)
        self.suggested_dt = suggested_dt


class UnstableSimulationError(SimulationError):
    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


class NotSettledError(SimulationError):
    pass


@dataclass(frozen=True)
class ControllerGains:
    c_v: float = 400.0
    c_omega: float = 400.0
    c_p: float = 400.0
    v_ref: float = 380.0
    omega_ref: float = 314.15

    def __post_init__(self):
        if not (self.c_v > 0 and self.c_omega > 0):
            raise ValueError("c_v and c_omega must be positive")
        if self.c_p < 0:
            raise ValueError("c_p must be nonnegative (0 disables power sharing)")
        if not (self.v_ref > 0 and self.omega_ref > 0):
            raise ValueError("references must be positive")


@dataclass
class ErrorTrajectory:
    times: np.ndarray
    e_v: np.ndarray
    e_omega: np.ndarray
    dt: float

    @property
    def n_nodes(self) -> int:
        return self.e_v.shape[1]

    def write_csv(self, path: str | Path) -> None:
        n = self.n_nodes
        header = ["t"] + [f"e_v_{i + 1}" for i in range(n)] + [f"e_w_{i + 1}" for i in range(n)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for t, ev, ew in zip(self.times, self.e_v, self.e_omega):
                w.writerow([_fmt(t)] + [_fmt(x) for x in ev] + [_fmt(x) for x in ew])


def _fmt(x: float) -> str:
    return format(float(x), ".12g")


def rk4_step_matrix(A: np.ndarray, dt: float) -> np.ndarray:
    """Propagator of one classical RK4 step for dx/dt = A x."""
    h = dt * A
    eye = np.eye(A.shape[0])
    h2 = h @ h
    return eye + h + h2 / 2 + h2 @ h / 6 + h2 @ h2 / 24


def _rk4_amplification(z: np.ndarray) -> np.ndarray:
    return np.abs(1 + z + z**2 / 2 + z**3 / 6 + z**4 / 24)


def check_step(M: np.ndarray, c: float, dt: float) -> None:
    """Reject ``dt`` if RK4 would amplify any mode of -c M."""
    lam = np.linalg.eigvals(M)
    if np.all(_rk4_amplification(-c * dt * lam) <= 1 + 1e-12):
        return
    suggested = dt
    while not np.all(_rk4_amplification(-c * suggested * lam) <= 1 + 1e-12):
        suggested /= 2
    raise StabilityGuardError(
        f"dt = {dt:g} is outside the RK4 stability region for c = {c:g} "
        f"(spectral radius {np.abs(lam).max():.4g}); try dt <= {suggested:g}",
        suggested,
    )


def simulate_errors(
    net: CommNetwork,
    pin: PinningConfig,
    gains: ControllerGains,
    e_v0,
    e_omega0,
    dt: float = DEFAULT_DT,
    t_end: float = 1.0,
    record_every: int = 1,
) -> ErrorTrajectory:
    if not dt > 0:
        raise ValueError("dt must be positive")
    if t_end < 0:
        raise ValueError("t_end must be nonnegative")
    n = net.n_nodes
    e_v = np.asarray(e_v0, dtype=float).reshape(n)
    e_w = np.asarray(e_omega0, dtype=float).reshape(n)
    M = closed_loop_matrix(net, pin)
    check_step(M, gains.c_v, dt)
    check_step(M, gains.c_omega, dt)
    S_v = rk4_step_matrix(-gains.c_v * M, dt)
    S_w = rk4_step_matrix(-gains.c_omega * M, dt)

    steps = int(round(t_end / dt))
    if steps == 0:
        return ErrorTrajectory(np.empty(0), np.empty((0, n)), np.empty((0, n)), dt)
    n_rec = steps // record_every + 1
    times = np.empty(n_rec)
    rec_v = np.empty((n_rec, n))
    rec_w = np.empty((n_rec, n))
    times[0], rec_v[0], rec_w[0] = 0.0, e_v, e_w
    r = 1
    for k in range(1, steps + 1):
        e_v = S_v @ e_v
        e_w = S_w @ e_w
        if k % record_every == 0:
            times[r], rec_v[r], rec_w[r] = k * dt, e_v, e_w
            r += 1
            if not (np.isfinite(e_v).all() and np.isfinite(e_w).all()):
                partial = ErrorTrajectory(times[:r], rec_v[:r], rec_w[:r], dt)
                raise UnstableSimulationError(f"non-finite error state at t = {k * dt:.6g} s", partial)
    return ErrorTrajectory(times[:r], rec_v[:r], rec_w[:r], dt)


def synthetic_initial_errors(n: int, gains: ControllerGains, m_P=9.4e-5, rated_load: float = 27.3e3):
    """Fallback islanding errors: 5 % voltage sag and droop frequency at rated load.

    The rated load is split evenly across the DGs.
    """
    m_P = np.broadcast_to(np.asarray(m_P, dtype=float), (n,))
    e_v0 = np.full(n, 0.05 * gains.v_ref)
    e_w0 = -m_P * rated_load / n
    return e_v0, e_w0


# -- metrics ---------------------------------------------------------------

class RateEstimate(NamedTuple):
    settling: float
    regression: float


def settling_time(times, errors, band: float = DEFAULT_BAND) -> float:
    """Earliest time after which the max-norm error stays within ``band``
    times its initial value. ``inf`` when it never settles within the record.
    """
    if not 0 < band < 1:
        raise ValueError("band must be in (0, 1)")
    times = np.asarray(times, dtype=float)
    if len(times) == 0:
        return 0.0
    norm = np.abs(np.asarray(errors, dtype=float).reshape(len(times), -1)).max(axis=1)
    if norm[0] == 0:
        return 0.0
    outside = np.flatnonzero(norm > band * norm[0])
    last = outside[-1]
    if last == len(times) - 1:
        return math.inf
    return float(times[last + 1])


def estimate_rate(times, errors, band: float = DEFAULT_BAND) -> RateEstimate:
    """Decay rate from the settling time, -ln(band) / t_s, plus the slope of
    a log-linear fit to the settled tail (the slowest mode)."""
    t_s = settling_time(times, errors, band)
    if math.isinf(t_s):
        raise NotSettledError(f"error does not settle into the {band:g} band within the record")
    times = np.asarray(times, dtype=float)
    norm = np.abs(np.asarray(errors, dtype=float).reshape(len(times), -1)).max(axis=1)
    if norm[0] == 0:
        return RateEstimate(math.inf, math.nan)
    rel = norm / norm[0]
    tail = (times >= t_s) & (rel <= band) & (rel >= REGRESSION_FLOOR)
    slope = math.nan
    if tail.sum() >= 3:
        slope = -float(np.polyfit(times[tail], np.log(rel[tail]), 1)[0])
    return RateEstimate(-math.log(band) / t_s if t_s > 0 else math.inf, slope)


def trajectory_metrics(traj: ErrorTrajectory, band: float = DEFAULT_BAND) -> dict:
    out = {}
    for name, err in (("v", traj.e_v), ("omega", traj.e_omega)):
        t_s = settling_time(traj.times, err, band)
        entry = {"settling_time": t_s if math.isfinite(t_s) else "NOT_SETTLED"}
        if math.isfinite(t_s):
            est = estimate_rate(traj.times, err, band)
            entry["rate_settling"] = est.settling
            entry["rate_regression"] = est.regression
        out[name] = entry
    return out
