"""Velocity-field wrappers over the conditioned MLP.

Two parameterizations share one network core: ``direct`` reads the vector
field off the readout layer; ``potential`` learns a scalar s(x, t) and
defines the field as its exact spatial gradient.  Jacobians come from
forward-mode tangent passes (one per spatial direction); the potential
kind needs one extra forward order, so its Jacobian is the Hessian of s.

Analytic reference fields satisfy the same evaluation interface, which lets
losses and metrics consume either a trained model or a closed-form field.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dataset import NormalizationStats
from .network import MlpArchitecture, Network
from .rng import stream

__all__ = ["VelocityField", "AnalyticField", "wrap_normalized", "wrap_raw"]


@dataclass
class VelocityField:
    """Trainable time-dependent velocity field u_theta(x, t[, mu])."""

    net: Network

    @property
    def arch(self) -> MlpArchitecture:
        return self.net.arch

    @property
    def kind(self) -> str:
        return self.net.arch.kind

    @classmethod
    def create(cls, arch: MlpArchitecture, seed: int) -> "VelocityField":
        net = Network(arch)
        net.init_params(stream(seed, "params"))
        return cls(net=net)

    def forward(self, x: np.ndarray, t: float, mu: float | None = None) -> np.ndarray:
        """Field values on a batch, (n, d).

        The potential kind returns the reverse-mode spatial gradient of the
        scalar output.
        """
        out, cache = self.net.forward(x, t, mu)
        if self.kind == "direct":
            return out
        dx = self.net.backward(cache, np.ones_like(out), need_dx=True)
        return dx

    def potential(self, x: np.ndarray, t: float, mu: float | None = None) -> np.ndarray:
        """Scalar potential values (potential kind only), shape (n,)."""
        if self.kind != "potential":
            raise ValueError("potential() requires a potential-kind field")
        out, _ = self.net.forward(x, t, mu)
        return out[:, 0]

    def _unit_directions(self) -> np.ndarray:
        return np.eye(self.arch.dim)

    def spatial_jacobian(self, x: np.ndarray, t: float, mu: float | None = None) -> np.ndarray:
        """J[i, a, b] = d u_a / d x_b at each batch point, (n, d, d).

        Direct kind: d tangent passes.  Potential kind: full Hessian of s
        via second-order tangent passes (d^2 of them), flagged costlier.
        """
        d = self.arch.dim
        _, cache = self.net.forward(x, t, mu)
        n = x.shape[0]
        jac = np.empty((n, d, d))
        if self.kind == "direct":
            for b in range(d):
                outdot, _ = self.net.jvp(cache, np.eye(d)[b])
                jac[:, :, b] = outdot
            return jac
        tcaches = [self.net.jvp(cache, np.eye(d)[a])[1] for a in range(d)]
        for a in range(d):
            for b in range(d):
                jac[:, a, b] = self.net.jvp2(cache, tcaches[a], tcaches[b])[:, 0]
        return jac

    def divergence(self, x: np.ndarray, t: float, mu: float | None = None) -> np.ndarray:
        """Exact divergence of the field on a batch, (n,)."""
        d = self.arch.dim
        _, cache = self.net.forward(x, t, mu)
        out = np.zeros(x.shape[0])
        if self.kind == "direct":
            for b in range(d):
                outdot, _ = self.net.jvp(cache, np.eye(d)[b])
                out += outdot[:, b]
            return out
        tcaches = [self.net.jvp(cache, np.eye(d)[a])[1] for a in range(d)]
        for a in range(d):
            out += self.net.jvp2(cache, tcaches[a], tcaches[a])[:, 0]
        return out

    def param_gradient(
        self, x: np.ndarray, t: float, dout: np.ndarray, mu: float | None = None
    ) -> np.ndarray:
        """Gradient of sum(dout * u(x, t)) with respect to the flat parameters.

        Covers any loss linear in the field outputs; composite losses build
        their output cotangent first and reuse the same reverse pass.
        """
        grads, gv = self.net.grad_views()
        out, cache = self.net.forward(x, t, mu)
        if self.kind == "direct":
            self.net.backward(cache, dout, gv)
            return grads
        d = self.arch.dim
        tangents = []
        for j in range(d):
            _, tc = self.net.jvp(cache, np.eye(d)[j])
            tangents.append((tc, np.ascontiguousarray(dout[:, j : j + 1])))
        self.net.backward(cache, None, gv, tangents=tangents)
        return grads


@dataclass
class AnalyticField:
    """Closed-form field with the same evaluation surface as a model.

    ``fn(x, t) -> (n, d)``; ``jacobian_fn(x, t) -> (n, d, d)`` optional.
    The mu argument is accepted and ignored so call sites stay uniform.
    """

    fn: Callable[[np.ndarray, float], np.ndarray]
    jacobian_fn: Callable[[np.ndarray, float], np.ndarray] | None = None

    def forward(self, x: np.ndarray, t: float, mu: float | None = None) -> np.ndarray:
        return self.fn(np.asarray(x, dtype=np.float64), float(t))

    def spatial_jacobian(self, x: np.ndarray, t: float, mu: float | None = None) -> np.ndarray:
        if self.jacobian_fn is None:
            raise ValueError("this analytic field has no Jacobian closure")
        return self.jacobian_fn(np.asarray(x, dtype=np.float64), float(t))

    def divergence(self, x: np.ndarray, t: float, mu: float | None = None) -> np.ndarray:
        jac = self.spatial_jacobian(x, t, mu)
        return np.trace(jac, axis1=1, axis2=2)


def wrap_normalized(
    raw_fn: Callable[[np.ndarray, float], np.ndarray], stats: NormalizationStats
) -> AnalyticField:
    """Lift a raw-coordinate field into normalized coordinates.

    u_norm(x_n, t) = u_raw(denorm(x_n), t) / scale, matching how a model
    trained on normalized data relates to the original dynamics.
    """

    def fn(x_n: np.ndarray, t: float) -> np.ndarray:
        return stats.normalize_velocity(raw_fn(stats.denormalize_points(x_n), t))

    return AnalyticField(fn=fn)


def wrap_raw(field, stats: NormalizationStats, mu: float | None = None) -> AnalyticField:
    """Expose a normalized-coordinates model in the raw data coordinates.

    Inverse of ``wrap_normalized``: u_raw(x, t) = scale * u_norm(norm(x), t).
    An optional conditioning value is baked in so the result keeps the plain
    (x, t) evaluation surface.
    """

    def fn(x: np.ndarray, t: float) -> np.ndarray:
        return stats.denormalize_velocity(field.forward(stats.normalize_points(x), t, mu))

    return AnalyticField(fn=fn)
