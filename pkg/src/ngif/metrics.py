"""Evaluation metrics for generated populations and learned fields.

TV distance compares normalized 2D histograms: equal bins over the torus, or
a 5%-padded union bounding box for unbounded domains.  The energy error is
the trapezoidal time average of the pointwise relative error between two
positive series.  Field error is a support-weighted relative L2 norm over
evaluation samples drawn from the data marginals.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import trapezoid

from .dataset import DomainDescriptor, SnapshotDataset

__all__ = ["tv_distance", "tv_curve", "energy_rel_error", "field_rel_l2"]


def _histogram_range(
    a: np.ndarray, b: np.ndarray, domain: DomainDescriptor
) -> list[tuple[float, float]]:
    if domain.periodic:
        return [(0.0, float(p)) for p in domain.period]
    lo = np.minimum(a.min(axis=0), b.min(axis=0))
    hi = np.maximum(a.max(axis=0), b.max(axis=0))
    pad = 0.05 * np.where(hi > lo, hi - lo, 1.0)
    return [(float(l - p), float(h + p)) for l, h, p in zip(lo, hi, pad)]


def tv_distance(
    samples_a: np.ndarray,
    samples_b: np.ndarray,
    domain: DomainDescriptor,
    bins: tuple[int, int] = (64, 64),
) -> float:
    """Half L1 distance between normalized 2D histograms, in [0, 1]."""
    a = np.asarray(samples_a, dtype=np.float64)
    b = np.asarray(samples_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != 2 or b.shape[1] != 2:
        raise ValueError("tv_distance expects (n, 2) sample arrays")
    if len(a) == 0 or len(b) == 0:
        raise ValueError("tv_distance requires nonempty sample sets")
    rng_box = _histogram_range(a, b, domain)
    ha, _, _ = np.histogram2d(a[:, 0], a[:, 1], bins=bins, range=rng_box)
    hb, _, _ = np.histogram2d(b[:, 0], b[:, 1], bins=bins, range=rng_box)
    return float(0.5 * np.sum(np.abs(ha / len(a) - hb / len(b))))


def tv_curve(
    generated: SnapshotDataset, truth: SnapshotDataset, bins: tuple[int, int] = (64, 64)
) -> np.ndarray:
    """TV distance at each common snapshot time."""
    if len(generated.times) != len(truth.times) or not np.allclose(
        generated.times, truth.times
    ):
        raise ValueError("datasets must share a time grid")
    return np.array(
        [
            tv_distance(generated.samples[k], truth.samples[k], truth.domain, bins)
            for k in range(len(truth.times))
        ]
    )


def energy_rel_error(
    e_pred: np.ndarray, e_true: np.ndarray, times: np.ndarray
) -> float:
    """Trapezoidal time average of |E_pred - E_true| / E_true."""
    e_pred = np.asarray(e_pred, dtype=np.float64)
    e_true = np.asarray(e_true, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    if e_pred.shape != e_true.shape or e_pred.shape != times.shape:
        raise ValueError("series and time grid must share a shape")
    if np.any(e_true <= 0):
        raise ValueError("E_true must be strictly positive at every node")
    rel = np.abs(e_pred - e_true) / e_true
    return float(trapezoid(rel, times) / (times[-1] - times[0]))


def field_rel_l2(field, reference, ds: SnapshotDataset, mu: float | None = None) -> float:
    """sqrt(sum ||u - v||^2 / sum ||v||^2) over all snapshots of ``ds``.

    Both fields are evaluated in the dataset's own coordinates; wrap a
    normalized-coordinates model first when ``ds`` holds raw data.
    """
    num = 0.0
    den = 0.0
    for k, t in enumerate(ds.times):
        x = ds.samples[k]
        u = field.forward(x, float(t), mu)
        v = reference.forward(x, float(t), mu)
        num += float(np.sum((u - v) ** 2))
        den += float(np.sum(v * v))
    if den == 0.0:
        raise ValueError("reference field vanishes on the evaluation set")
    return float(np.sqrt(num / den))
