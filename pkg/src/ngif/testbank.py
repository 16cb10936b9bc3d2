"""Random Fourier test-function banks.

Tests come in sin/cos pairs sharing a frequency: phi_{2j} = sin(w_j . x),
phi_{2j+1} = cos(w_j . x) (0-based interleaving).  Frequencies are Gaussian
with per-band standard deviation 1/sigma_b over a log-spaced bandwidth
ladder.  Banks always live in normalized coordinates; on the torus (period
2 after normalization) every frequency coordinate is rounded to an integer
multiple of pi so tests are exactly periodic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .dataset import SnapshotDataset
from .rng import stream

__all__ = [
    "TestBank",
    "log_spaced_bandwidths",
    "sample_bank",
    "eval_tests",
    "grad_tests",
    "laplacian_tests",
    "median_heuristic_bandwidth",
]


@dataclass(frozen=True)
class TestBank:
    """M/2 frequencies defining M interleaved sin/cos test functions."""

    frequencies: np.ndarray  # (M/2, d)
    bandwidths: np.ndarray  # (B,) ascending
    domain_kind: str  # "euclidean" | "torus"
    seed: int

    @property
    def m_tests(self) -> int:
        return 2 * self.frequencies.shape[0]

    @property
    def dim(self) -> int:
        return self.frequencies.shape[1]


def log_spaced_bandwidths(sigma_min: float, sigma_max: float, count: int) -> np.ndarray:
    """Ladder sigma_b = sigma_min * (sigma_max/sigma_min)^((b-1)/(B-1))."""
    if sigma_min <= 0 or sigma_max < sigma_min:
        raise ValueError(f"need 0 < sigma_min <= sigma_max, got {sigma_min}, {sigma_max}")
    if count < 1:
        raise ValueError(f"bandwidth count must be >= 1, got {count}")
    if count == 1:
        if sigma_min != sigma_max:
            raise ValueError("a single band requires sigma_min == sigma_max")
        return np.array([sigma_min], dtype=np.float64)
    return sigma_min * (sigma_max / sigma_min) ** (np.arange(count) / (count - 1))


def sample_bank(
    m_tests: int,
    bandwidths: np.ndarray,
    dim: int,
    domain_kind: str,
    seed: int,
) -> TestBank:
    """Draw the frequency matrix for an M-test bank.

    Each band contributes (M/2)//B frequencies ~ N(0, sigma_b^-2 I_d); the
    remainder is assigned round-robin starting from the smallest bandwidth.
    Torus frequencies are rounded per coordinate to multiples of pi
    (round-half-to-even); zero rows are kept, their tests contribute
    constant (cos) or identically zero (sin) moments.
    """
    if m_tests < 2 or m_tests % 2 != 0:
        raise ValueError(f"m_tests must be a positive even count, got {m_tests}")
    if domain_kind not in ("euclidean", "torus"):
        raise ValueError(f"unknown domain kind {domain_kind!r}")
    bandwidths = np.sort(np.asarray(bandwidths, dtype=np.float64))
    if np.any(bandwidths <= 0):
        raise ValueError("bandwidths must be positive")
    pairs = m_tests // 2
    n_bands = len(bandwidths)
    counts = np.full(n_bands, pairs // n_bands, dtype=int)
    counts[: pairs % n_bands] += 1

    rng = stream(seed, "bank")
    blocks = []
    for sigma, count in zip(bandwidths, counts):
        if count == 0:
            continue
        blocks.append(rng.standard_normal((count, dim)) / sigma)
    freq = np.vstack(blocks)
    if domain_kind == "torus":
        freq = np.pi * np.round(freq / np.pi)  # np.round is round-half-to-even
    return TestBank(frequencies=freq, bandwidths=bandwidths, domain_kind=domain_kind, seed=seed)


def eval_tests(bank: TestBank, x: np.ndarray) -> np.ndarray:
    """Evaluate all M tests at x; batch shape (..., d) -> (..., M)."""
    x = np.asarray(x, dtype=np.float64)
    phase = x @ bank.frequencies.T  # (..., M/2)
    out = np.empty(phase.shape[:-1] + (bank.m_tests,), dtype=np.float64)
    out[..., 0::2] = np.sin(phase)
    out[..., 1::2] = np.cos(phase)
    return out


def grad_tests(bank: TestBank, x: np.ndarray) -> np.ndarray:
    """Spatial gradients of all M tests at x: (..., d) -> (..., M, d)."""
    x = np.asarray(x, dtype=np.float64)
    phase = x @ bank.frequencies.T
    out = np.empty(phase.shape[:-1] + (bank.m_tests, bank.dim), dtype=np.float64)
    out[..., 0::2, :] = np.cos(phase)[..., :, None] * bank.frequencies
    out[..., 1::2, :] = -np.sin(phase)[..., :, None] * bank.frequencies
    return out


def laplacian_tests(bank: TestBank, x: np.ndarray) -> np.ndarray:
    """Laplacians of all M tests: -(|w|^2) times the test itself."""
    phi = eval_tests(bank, x)
    sq = np.sum(bank.frequencies**2, axis=1)
    phi[..., 0::2] *= -sq
    phi[..., 1::2] *= -sq
    return phi


def median_heuristic_bandwidth(
    ds: SnapshotDataset, max_points: int = 2000
) -> tuple[float, tuple[float, float, float]]:
    """Median pairwise distance of the pooled samples, with scale set.

    Subsampling is deterministic (even stride across the flattened
    snapshot-major sample array).  Returns (sigma_med, (sigma_med/10,
    sigma_med, 10*sigma_med)).
    """
    pooled = ds.samples.reshape(-1, ds.dim)
    if len(pooled) > max_points:
        idx = np.linspace(0, len(pooled) - 1, max_points).astype(int)
        pooled = pooled[idx]
    if len(pooled) < 2:
        raise ValueError("median heuristic needs at least two points")
    med = float(np.median(pdist(pooled)))
    if med == 0.0:
        raise ValueError("median pairwise distance is zero (degenerate samples)")
    return med, (med / 10.0, med, 10.0 * med)
