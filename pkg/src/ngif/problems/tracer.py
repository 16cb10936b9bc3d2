"""Unsteady divergence-free tracer flow on the 2-pi torus.

The velocity is the rotated gradient of a multiscale time-dependent stream
function, so it is exactly incompressible and periodic by construction.
Tracers start from a standard Gaussian centered in the box, advect under RK4,
and are recorded as unpaired snapshots (the trajectory identity is dropped
when the dataset is assembled).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dataset import DomainDescriptor, SnapshotDataset
from ..rng import stream
from ..simulate import integrate_ode, wrap_periodic
from ..velocity_model import AnalyticField

__all__ = ["TracerConfig", "tracer_stream", "tracer_field", "gen_tracer"]

PERIOD = 2.0 * np.pi


@dataclass(frozen=True)
class TracerConfig:
    n_samples: int = 10000
    t_final: float = 3.0
    k_count: int = 40
    substeps: int = 8  # RK4 substeps per snapshot interval

    def __post_init__(self):
        if self.n_samples < 1 or self.k_count < 1 or self.t_final <= 0:
            raise ValueError("need n_samples >= 1, k_count >= 1, t_final > 0")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_final, self.k_count + 1)


def tracer_stream(x: np.ndarray, t: float) -> np.ndarray:
    """Stream function psi(x, t), shape (n,)."""
    x = np.asarray(x, dtype=np.float64)
    x1, x2 = x[:, 0], x[:, 1]
    return (
        np.sin(x1) * np.cos(x2 + np.sin(0.7 * t))
        + 0.6 * np.cos(2.0 * x1 + 0.9 * t) * np.sin(x2)
        + 0.3 * np.sin(3.0 * x2 + 1.3 * t)
    )


def tracer_field(x: np.ndarray, t: float) -> np.ndarray:
    """v = (d psi / d x2, -d psi / d x1): exactly divergence free, (n, 2)."""
    x = np.asarray(x, dtype=np.float64)
    x1, x2 = x[:, 0], x[:, 1]
    phase = x2 + np.sin(0.7 * t)
    u1 = (
        -np.sin(x1) * np.sin(phase)
        + 0.6 * np.cos(2.0 * x1 + 0.9 * t) * np.cos(x2)
        + 0.9 * np.cos(3.0 * x2 + 1.3 * t)
    )
    u2 = -np.cos(x1) * np.cos(phase) + 1.2 * np.sin(2.0 * x1 + 0.9 * t) * np.sin(x2)
    return np.stack([u1, u2], axis=1)


def gen_tracer(config: TracerConfig, seed: int) -> SnapshotDataset:
    """Advect a Gaussian tracer cloud and record wrapped snapshots."""
    rng = stream(seed, "data")
    x0 = np.pi + rng.standard_normal((config.n_samples, 2))
    x0 = wrap_periodic(x0, PERIOD)
    traj = integrate_ode(
        AnalyticField(fn=tracer_field),
        x0,
        config.times,
        substeps=config.substeps,
        period=PERIOD,
    )
    return SnapshotDataset(
        times=config.times,
        samples=traj,
        domain=DomainDescriptor(kind="torus", dim=2, period=(PERIOD, PERIOD)),
        scenario_param=None,
        meta={"problem": "tracer", "seed": str(seed)},
    )
