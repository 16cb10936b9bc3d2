"""Empirical test-function moments and their smoothed time derivatives.

Moments are full-snapshot means (never minibatched): mu[k, r] is the mean
of test r over snapshot k.  Time derivatives come from a natural cubic
smoothing spline per test, fit in the classical Reinsch form: minimize
sum_k (y_k - f(t_k))^2 + lam * int f''(t)^2 dt over natural cubic splines
with knots at the snapshot times.  Laplacian moments are stored alongside
for the diffusive (Fokker-Planck) target term.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solveh_banded

from .dataset import SnapshotDataset
from .testbank import TestBank, eval_tests

__all__ = [
    "SmoothingSpline",
    "fit_smoothing_spline",
    "empirical_moments",
    "MomentTable",
    "precompute_moment_table",
]

_CHUNK = 4096  # samples per moment-accumulation block, keeps peak memory flat


@dataclass
class SmoothingSpline:
    """Natural cubic smoothing spline, vector-valued over shared knots.

    ``values`` are the fitted knot values g, ``second_derivs`` the knot
    second derivatives (zero at both ends).  With fewer than 4 knots the
    fit degrades to an exact least-squares line and ``linear_fallback``
    is set.
    """

    knots: np.ndarray  # (n,)
    values: np.ndarray  # (n, m)
    second_derivs: np.ndarray  # (n, m)
    lam: float
    linear_fallback: bool = False
    vector: bool = True  # False when fit from a 1-D series; outputs squeeze

    def _locate(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        t = np.asarray(t, dtype=np.float64)
        lo, hi = self.knots[0], self.knots[-1]
        if np.any(t < lo) or np.any(t > hi):
            raise ValueError(f"query outside knot range [{lo}, {hi}]")
        idx = np.clip(np.searchsorted(self.knots, t, side="right") - 1, 0, len(self.knots) - 2)
        h = self.knots[idx + 1] - self.knots[idx]
        a = (self.knots[idx + 1] - t) / h
        return idx, h, a

    def _finish(self, out: np.ndarray, scalar: bool) -> np.ndarray:
        if not self.vector:
            out = out[..., 0]
        return out[0] if scalar else out

    def evaluate(self, t) -> np.ndarray:
        scalar = np.isscalar(t)
        tq = np.atleast_1d(t)
        if len(self.knots) == 1:
            if np.any(tq != self.knots[0]):
                raise ValueError("query outside knot range")
            out = np.broadcast_to(self.values[0], (len(tq),) + self.values.shape[1:]).copy()
            return self._finish(out, scalar)
        idx, h, a = self._locate(tq)
        b = 1.0 - a
        g0, g1 = self.values[idx], self.values[idx + 1]
        c0, c1 = self.second_derivs[idx], self.second_derivs[idx + 1]
        coef = (h**2 / 6.0)[:, None]
        out = (
            a[:, None] * g0
            + b[:, None] * g1
            + coef * ((a**3 - a)[:, None] * c0 + (b**3 - b)[:, None] * c1)
        )
        return self._finish(out, scalar)

    def derivative(self, t) -> np.ndarray:
        scalar = np.isscalar(t)
        tq = np.atleast_1d(t)
        if len(self.knots) == 1:
            out = np.zeros((len(tq),) + self.values.shape[1:])
            return self._finish(out, scalar)
        idx, h, a = self._locate(tq)
        b = 1.0 - a
        g0, g1 = self.values[idx], self.values[idx + 1]
        c0, c1 = self.second_derivs[idx], self.second_derivs[idx + 1]
        out = (g1 - g0) / h[:, None] + (h / 6.0)[:, None] * (
            -(3.0 * a**2 - 1.0)[:, None] * c0 + (3.0 * b**2 - 1.0)[:, None] * c1
        )
        return self._finish(out, scalar)


def _second_difference_matrix(t: np.ndarray) -> np.ndarray:
    """Q of the Reinsch formulation: (n, n-2), Q^T y = second divided diffs."""
    n = len(t)
    h = np.diff(t)
    q = np.zeros((n, n - 2))
    for j in range(n - 2):
        q[j, j] = 1.0 / h[j]
        q[j + 1, j] = -1.0 / h[j] - 1.0 / h[j + 1]
        q[j + 2, j] = 1.0 / h[j + 1]
    return q


def _curvature_gram(t: np.ndarray) -> np.ndarray:
    """R with gamma^T R gamma = int f''^2 for natural splines: (n-2, n-2)."""
    h = np.diff(t)
    n = len(t)
    r = np.zeros((n - 2, n - 2))
    for j in range(n - 2):
        r[j, j] = (h[j] + h[j + 1]) / 3.0
        if j + 1 < n - 2:
            r[j, j + 1] = r[j + 1, j] = h[j + 1] / 6.0
    return r


def fit_smoothing_spline(times: np.ndarray, values: np.ndarray, lam: float) -> SmoothingSpline:
    """Fit the Reinsch smoothing spline; ``values`` is (n,) or (n, m).

    Solves (R + lam Q^T Q) gamma = Q^T y banded, then g = y - lam Q gamma.
    lam = 0 interpolates; lam -> inf tends to the least-squares line.
    """
    times = np.asarray(times, dtype=np.float64)
    y = np.asarray(values, dtype=np.float64)
    squeeze = y.ndim == 1
    if squeeze:
        y = y[:, None]
    n = len(times)
    if y.shape[0] != n:
        raise ValueError(f"values rows {y.shape[0]} != knot count {n}")
    if n >= 2 and not np.all(np.diff(times) > 0):
        raise ValueError("knots must be strictly increasing")
    if lam < 0:
        raise ValueError(f"lam must be >= 0, got {lam}")

    if n < 4:
        # Too few knots for a cubic fit: exact least-squares line.  Fitted
        # values are collinear, so the piecewise evaluator reproduces the
        # line and its slope exactly with zero curvature.
        if n == 1:
            fitted = y.copy()
        else:
            design = np.column_stack([np.ones(n), times])
            beta, *_ = np.linalg.lstsq(design, y, rcond=None)
            fitted = design @ beta
        return SmoothingSpline(
            knots=times,
            values=fitted,
            second_derivs=np.zeros_like(fitted),
            lam=lam,
            linear_fallback=True,
            vector=not squeeze,
        )

    q = _second_difference_matrix(times)
    r = _curvature_gram(times)
    a = r + lam * (q.T @ q)
    # upper banded storage, bandwidth 2 (pentadiagonal SPD)
    ab = np.zeros((3, n - 2))
    ab[2] = np.diag(a)
    ab[1, 1:] = np.diag(a, 1)
    ab[0, 2:] = np.diag(a, 2)
    gamma = solveh_banded(ab, q.T @ y)
    g = y - lam * (q @ gamma)
    second = np.zeros_like(g)
    second[1:-1] = gamma
    return SmoothingSpline(
        knots=times, values=g, second_derivs=second, lam=lam, vector=not squeeze
    )


def empirical_moments(ds: SnapshotDataset, bank: TestBank) -> np.ndarray:
    """Full-snapshot moment matrix mu[k, r], chunked over samples."""
    if ds.dim != bank.dim:
        raise ValueError(f"dataset dim {ds.dim} != bank dim {bank.dim}")
    k1, n = ds.samples.shape[0], ds.samples.shape[1]
    mu = np.zeros((k1, bank.m_tests))
    for k in range(k1):
        acc = np.zeros(bank.m_tests)
        for start in range(0, n, _CHUNK):
            block = ds.samples[k, start : start + _CHUNK]
            acc += eval_tests(bank, block).sum(axis=0)
        mu[k] = acc / n
    return mu


@dataclass
class MomentTable:
    """Precomputed per-snapshot targets for the weak-form loss.

    ``mu`` and ``lap`` are raw empirical means of the tests and of their
    Laplacians; ``mu_dot`` is the smoothing-spline time derivative at the
    snapshot times.
    """

    times: np.ndarray  # (K+1,)
    mu: np.ndarray  # (K+1, M)
    mu_dot: np.ndarray  # (K+1, M)
    lap: np.ndarray  # (K+1, M)
    spline_lambda: float
    linear_fallback: bool = False


def precompute_moment_table(
    ds: SnapshotDataset, bank: TestBank, spline_lambda: float = 1e-5
) -> MomentTable:
    """Moments, Laplacian moments, and spline-smoothed derivatives."""
    mu = empirical_moments(ds, bank)
    sq = np.sum(bank.frequencies**2, axis=1)
    lap = mu.copy()
    lap[:, 0::2] *= -sq  # Laplacian of a plane-wave test is -(|w|^2) itself
    lap[:, 1::2] *= -sq
    sp = fit_smoothing_spline(ds.times, mu, spline_lambda)
    mu_dot = sp.derivative(ds.times)
    return MomentTable(
        times=ds.times.copy(),
        mu=mu,
        mu_dot=mu_dot,
        lap=lap,
        spline_lambda=spline_lambda,
        linear_fallback=sp.linear_fallback,
    )
