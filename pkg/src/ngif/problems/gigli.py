"""Rotating Gaussian mixture with a known non-gradient velocity field.

N_comp isotropic Gaussians sit on the unit circle and rotate rigidly at
angular velocity omega; the generating field is the rotation v = omega*Omega*x,
which is divergence free and has nonzero curl everywhere.  An oscillatory
potential whose gradient matches the rotation exactly on the component means
(and only there) makes the gauge ambiguity concrete: gradient-constrained
models can transport the same marginals while pointing elsewhere off-support.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dataset import DomainDescriptor, SnapshotDataset
from ..rng import stream

__all__ = ["GigliConfig", "gigli_field", "gigli_potential", "gen_gigli"]


@dataclass(frozen=True)
class GigliConfig:
    n_components: int = 8
    omega_rot: float = 1.0
    sigma_g: float = 0.1
    n_samples: int = 4000
    t_final: float = 1.0
    k_count: int = 40

    def __post_init__(self):
        if self.n_components < 1:
            raise ValueError("n_components must be >= 1")
        if self.sigma_g <= 0:
            raise ValueError("sigma_g must be positive")
        if self.n_samples < 1 or self.k_count < 1 or self.t_final <= 0:
            raise ValueError("need n_samples >= 1, k_count >= 1, t_final > 0")

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_final, self.k_count + 1)


def gigli_field(x: np.ndarray, omega_rot: float = 1.0) -> np.ndarray:
    """Rigid rotation v = omega * (-x2, x1), shape (n, 2)."""
    x = np.asarray(x, dtype=np.float64)
    return omega_rot * np.stack([-x[:, 1], x[:, 0]], axis=1)


def gigli_potential(
    x: np.ndarray, t: float, n_components: int, omega_rot: float = 1.0
) -> np.ndarray:
    """Oscillatory potential (omega/N) r^N sin(N (theta - omega t)), shape (n,).

    Its spatial gradient coincides with the rotation field exactly at the
    rotating component means (r = 1, theta = 2 pi n / N + omega t) where the
    radial derivative vanishes; away from them it decays like r^(N-1).
    """
    x = np.asarray(x, dtype=np.float64)
    r = np.hypot(x[:, 0], x[:, 1])
    theta = np.arctan2(x[:, 1], x[:, 0])
    return (omega_rot / n_components) * r**n_components * np.sin(
        n_components * (theta - omega_rot * t)
    )


def gen_gigli(config: GigliConfig, seed: int) -> SnapshotDataset:
    """Fresh unpaired draws from the rotating mixture at each snapshot time.

    Component n at time t is an isotropic Gaussian with std sigma_g centered
    at angle 2 pi n / N_comp + omega t on the unit circle.
    """
    rng = stream(seed, "data")
    times = config.times
    base_angles = 2.0 * np.pi * np.arange(config.n_components) / config.n_components
    samples = np.empty((len(times), config.n_samples, 2))
    for k, t in enumerate(times):
        comp = rng.integers(config.n_components, size=config.n_samples)
        ang = base_angles[comp] + config.omega_rot * t
        means = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        samples[k] = means + config.sigma_g * rng.standard_normal((config.n_samples, 2))
    return SnapshotDataset(
        times=times,
        samples=samples,
        domain=DomainDescriptor(kind="euclidean", dim=2),
        scenario_param=None,
        meta={
            "problem": "gigli",
            "n_components": str(config.n_components),
            "omega_rot": repr(config.omega_rot),
            "sigma_g": repr(config.sigma_g),
            "seed": str(seed),
        },
    )
