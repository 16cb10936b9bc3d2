"""Weak-form training objective: moment-matching residuals plus gauge terms.

At snapshot k the residual compares the smoothed moment derivative (minus
the diffusive correction) against the batch transport term
T_r = mean_i grad phi_r(x_i) . u(x_i, t_k), test by test, under a
dual-relative squared loss.  Gauge regularizers select one field among the
many that transport the same marginals: kinetic energy, Jacobian asymmetry
(curl), or squared divergence, averaged over the batch.

Values are computed for any field-like object; gradients additionally need
the trainable model (its reverse and reverse-over-forward passes).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .moments import MomentTable
from .testbank import TestBank
from .velocity_model import VelocityField

__all__ = [
    "ObjectiveConfig",
    "dual_relative",
    "transport_term",
    "weak_loss_at_time",
    "gauge_kinetic",
    "gauge_curl",
    "gauge_divergence",
    "gauge_value",
    "total_loss",
    "total_loss_and_grad",
]

GAUGES = ("none", "kinetic", "curl", "divergence")


@dataclass(frozen=True)
class ObjectiveConfig:
    """Loss composition: total = mean_k weak + lam * gauge.

    ``eps_diffusion`` is the SDE noise scale (normalized coordinates); it
    folds into the target as mu_dot - eps^2/2 * laplacian moments.
    ``eps_loss`` regularizes the dual-relative denominator.
    """

    gauge: str = "none"
    lam: float = 0.0
    eps_diffusion: float = 0.0
    eps_loss: float = 1e-8

    def __post_init__(self):
        if self.gauge not in GAUGES:
            raise ValueError(f"gauge must be one of {GAUGES}, got {self.gauge!r}")
        if self.lam < 0 or self.eps_diffusion < 0 or self.eps_loss < 0:
            raise ValueError("lam, eps_diffusion, eps_loss must be nonnegative")


def dual_relative(a, b, eps_loss: float = 1e-8):
    """(a-b)^2 / (a^2 + b^2 + eps); symmetric, scale-tolerant, in [0, 2)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return (a - b) ** 2 / (a * a + b * b + eps_loss)


def _dual_relative_db(a: np.ndarray, b: np.ndarray, eps_loss: float) -> np.ndarray:
    """d/db of dual_relative at fixed target a."""
    denom = a * a + b * b + eps_loss
    return -2.0 * (a - b) * (denom + (a - b) * b) / denom**2


def _interleave(t_sin: np.ndarray, t_cos: np.ndarray) -> np.ndarray:
    out = np.empty(2 * len(t_sin))
    out[0::2] = t_sin
    out[1::2] = t_cos
    return out


def _transport_from_trig(
    sin_a: np.ndarray, cos_a: np.ndarray, proj: np.ndarray
) -> np.ndarray:
    """Transport vector from cached trig; proj[i, j] = w_j . u(x_i)."""
    t_sin = np.mean(cos_a * proj, axis=0)  # grad sin = cos(w.x) w
    t_cos = -np.mean(sin_a * proj, axis=0)  # grad cos = -sin(w.x) w
    return _interleave(t_sin, t_cos)


def transport_term(field, batch: np.ndarray, bank: TestBank, t: float, mu=None) -> np.ndarray:
    """T_r = batch mean of grad phi_r . u at time t, shape (M,)."""
    batch = np.asarray(batch, dtype=np.float64)
    u = field.forward(batch, t, mu)
    phase = batch @ bank.frequencies.T
    proj = u @ bank.frequencies.T
    return _transport_from_trig(np.sin(phase), np.cos(phase), proj)


def _targets(table: MomentTable, k: int, cfg: ObjectiveConfig) -> np.ndarray:
    return table.mu_dot[k] - 0.5 * cfg.eps_diffusion**2 * table.lap[k]


def weak_loss_at_time(
    field,
    k: int,
    batch: np.ndarray,
    table: MomentTable,
    bank: TestBank,
    cfg: ObjectiveConfig,
    mu: float | None = None,
) -> float:
    """L_k: mean over tests of the dual-relative residual at snapshot k."""
    t_hat = transport_term(field, batch, bank, float(table.times[k]), mu)
    g = _targets(table, k, cfg)
    return float(np.mean(dual_relative(g, t_hat, cfg.eps_loss)))


def gauge_kinetic(field, batch: np.ndarray, t: float, mu=None) -> float:
    u = field.forward(batch, t, mu)
    return float(0.5 * np.mean(np.sum(u * u, axis=1)))


def gauge_curl(field, batch: np.ndarray, t: float, mu=None) -> float:
    jac = field.spatial_jacobian(batch, t, mu)
    delta = jac - np.swapaxes(jac, 1, 2)
    return float(0.5 * np.mean(np.sum(delta * delta, axis=(1, 2))))


def gauge_divergence(field, batch: np.ndarray, t: float, mu=None) -> float:
    div = field.divergence(batch, t, mu)
    return float(np.mean(div * div))


def gauge_value(field, batch: np.ndarray, t: float, gauge: str, mu=None) -> float:
    if gauge == "none":
        return 0.0
    fn = {"kinetic": gauge_kinetic, "curl": gauge_curl, "divergence": gauge_divergence}[gauge]
    return fn(field, batch, t, mu)


def total_loss(
    field, k: int, batch: np.ndarray, table: MomentTable, bank: TestBank, cfg: ObjectiveConfig,
    mu: float | None = None,
) -> tuple[float, float, float]:
    """(total, weak, gauge) at snapshot k; works for any field-like object."""
    t = float(table.times[k])
    t_hat = transport_term(field, batch, bank, t, mu)
    g = _targets(table, k, cfg)
    weak = float(np.mean(dual_relative(g, t_hat, cfg.eps_loss)))
    gauge = gauge_value(field, batch, t, cfg.gauge, mu)
    return weak + cfg.lam * gauge, weak, gauge


def total_loss_and_grad(
    field: VelocityField,
    k: int,
    batch: np.ndarray,
    table: MomentTable,
    bank: TestBank,
    cfg: ObjectiveConfig,
    mu: float | None = None,
) -> tuple[float, float, float, np.ndarray]:
    """Loss decomposition and exact parameter gradient at snapshot k.

    One reverse pass handles the whole composition: output cotangents from
    the transport and kinetic terms, tangent-output cotangents from the
    Jacobian gauges (reverse-over-forward).  The potential kind assembles
    its field values from one tangent pass per spatial direction and is
    incompatible with the curl and divergence gauges during training.
    """
    if not isinstance(field, VelocityField):
        raise TypeError("gradients require a trainable VelocityField")
    if field.kind == "potential" and cfg.gauge in ("curl", "divergence"):
        raise ValueError(f"{cfg.gauge} gauge cannot train a potential field")

    net = field.net
    arch = field.arch
    d = arch.dim
    n = batch.shape[0]
    t = float(table.times[k])
    batch = np.asarray(batch, dtype=np.float64)

    out, cache = net.forward(batch, t, mu)
    direct = field.kind == "direct"
    tcaches: list[dict] = []
    if direct:
        u = out
        if cfg.gauge in ("curl", "divergence"):
            tcaches = [net.jvp(cache, np.eye(d)[j])[1] for j in range(d)]
    else:
        tcaches = [net.jvp(cache, np.eye(d)[j])[1] for j in range(d)]
        u = np.column_stack([tc["out"][:, 0] for tc in tcaches])

    # weak residual and its cotangent on u
    phase = batch @ bank.frequencies.T
    sin_a, cos_a = np.sin(phase), np.cos(phase)
    proj = u @ bank.frequencies.T
    t_hat = _transport_from_trig(sin_a, cos_a, proj)
    g = _targets(table, k, cfg)
    weak = float(np.mean(dual_relative(g, t_hat, cfg.eps_loss)))
    d_t = _dual_relative_db(g, t_hat, cfg.eps_loss) / len(t_hat)
    d_proj = (cos_a * d_t[0::2] - sin_a * d_t[1::2]) / n
    du = d_proj @ bank.frequencies

    # gauge value and cotangents
    gauge = 0.0
    tangent_cotangents: list[np.ndarray] | None = None
    if cfg.gauge == "kinetic":
        gauge = float(0.5 * np.mean(np.sum(u * u, axis=1)))
        du = du + cfg.lam * u / n
    elif cfg.gauge == "curl":
        jac = np.stack([tc["out"] for tc in tcaches], axis=2)  # (n, d, d)
        delta = jac - np.swapaxes(jac, 1, 2)
        gauge = float(0.5 * np.mean(np.sum(delta * delta, axis=(1, 2))))
        d_jac = (2.0 * cfg.lam / n) * delta
        tangent_cotangents = [d_jac[:, :, j] for j in range(d)]
    elif cfg.gauge == "divergence":
        div = np.zeros(n)
        for j, tc in enumerate(tcaches):
            div += tc["out"][:, j]
        gauge = float(np.mean(div * div))
        d_div = 2.0 * cfg.lam * div / n
        tangent_cotangents = []
        for j in range(d):
            cot = np.zeros((n, d))
            cot[:, j] = d_div
            tangent_cotangents.append(cot)

    grads, gv = net.grad_views()
    if direct:
        tangents = None
        if tangent_cotangents is not None:
            tangents = list(zip(tcaches, tangent_cotangents))
        net.backward(cache, du, gv, tangents=tangents)
    else:
        tangents = [(tc, np.ascontiguousarray(du[:, j : j + 1])) for j, tc in enumerate(tcaches)]
        net.backward(cache, None, gv, tangents=tangents)

    return weak + cfg.lam * gauge, weak, gauge, grads
