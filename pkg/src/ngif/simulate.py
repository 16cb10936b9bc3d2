"""Sample-path integrators for learned or analytic velocity fields.

``integrate_ode`` advances particles with classic RK4 over a caller-supplied
time grid, optionally refining each interval with equal substeps.
``integrate_sde`` is Euler-Maruyama for dx = u dt + eps dW; at eps = 0 it
degenerates to the deterministic Euler scheme and draws no noise.  Periodic
domains wrap positions after every substep; stage evaluations stay unwrapped,
which is exact whenever the field itself is periodic.
"""

from __future__ import annotations

import numpy as np

__all__ = ["wrap_periodic", "integrate_ode", "integrate_sde"]


def wrap_periodic(x: np.ndarray, period, lo=0.0) -> np.ndarray:
    """Map coordinates into [lo, lo + period) per dimension.

    ``period`` and ``lo`` broadcast against the last axis, so per-coordinate
    windows (e.g. a phase-space box) need one call.
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.mod(x - lo, period)
    # np.mod(-tiny, p) rounds to p itself; fold that onto the lower edge
    w = np.where(w >= period, 0.0, w)
    return lo + w


def _check_times(times: np.ndarray) -> np.ndarray:
    times = np.asarray(times, dtype=np.float64)
    if times.ndim != 1 or len(times) < 1:
        raise ValueError("times must be a nonempty 1-d grid")
    if len(times) > 1 and np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    return times


def _prep(x0: np.ndarray, period, lo) -> np.ndarray:
    x = np.array(x0, dtype=np.float64, copy=True)
    if x.ndim != 2:
        raise ValueError(f"x0 must be (n, d), got shape {x.shape}")
    if period is not None:
        x = wrap_periodic(x, period, lo)
    return x


def integrate_ode(
    field,
    x0: np.ndarray,
    times: np.ndarray,
    substeps: int = 1,
    mu: float | None = None,
    period=None,
    lo=0.0,
) -> np.ndarray:
    """RK4 trajectories through ``times``; returns (len(times), n, d).

    The first slice is x0 (wrapped when periodic); each following slice is
    the state at the corresponding grid time.
    """
    times = _check_times(times)
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    x = _prep(x0, period, lo)
    out = np.empty((len(times),) + x.shape)
    out[0] = x
    for i in range(len(times) - 1):
        h = (times[i + 1] - times[i]) / substeps
        t = times[i]
        for _ in range(substeps):
            k1 = field.forward(x, t, mu)
            k2 = field.forward(x + 0.5 * h * k1, t + 0.5 * h, mu)
            k3 = field.forward(x + 0.5 * h * k2, t + 0.5 * h, mu)
            k4 = field.forward(x + h * k3, t + h, mu)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if period is not None:
                x = wrap_periodic(x, period, lo)
            t += h
        out[i + 1] = x
    return out


def integrate_sde(
    field,
    x0: np.ndarray,
    times: np.ndarray,
    eps: float,
    rng: np.random.Generator,
    substeps: int = 1,
    mu: float | None = None,
    period=None,
    lo=0.0,
) -> np.ndarray:
    """Euler-Maruyama trajectories for dx = u dt + eps dW, (len(times), n, d)."""
    times = _check_times(times)
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    x = _prep(x0, period, lo)
    out = np.empty((len(times),) + x.shape)
    out[0] = x
    for i in range(len(times) - 1):
        h = (times[i + 1] - times[i]) / substeps
        t = times[i]
        noise_scale = eps * np.sqrt(h)
        for _ in range(substeps):
            x = x + h * field.forward(x, t, mu)
            if eps > 0.0:
                x = x + noise_scale * rng.standard_normal(x.shape)
            if period is not None:
                x = wrap_periodic(x, period, lo)
            t += h
        out[i + 1] = x
    return out
