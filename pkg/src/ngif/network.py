"""Conditioned MLP with hand-rolled exact differentiation, float64 only.

The network maps a spatial point x (optionally lifted to harmonic features
on a torus) to a vector or scalar output.  Scalar conditioning inputs (time
t, optional scenario parameter mu) pass through two-layer embedding MLPs;
every backbone layer adds a conditioning bias produced from the embedding
by its own two-layer MLP, injected before the activation.

Differentiation is explicit:

* reverse mode over parameters (and optionally the spatial input),
* forward mode for spatial directional derivatives (tangent passes),
* reverse-over-forward for parameter gradients of losses built on tangent
  outputs (needed for Jacobian penalties and gradient-potential training),
* a second forward-order pass for Hessian entries of scalar outputs.

All passes share one cached primal evaluation.  Activations are exact
Gaussian-CDF GELU; the second derivative (2 - z^2) * pdf(z) enters the
reverse-over-forward pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

__all__ = ["MlpArchitecture", "Network", "gelu_parts"]

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu_parts(z: np.ndarray):
    """Return (gelu(z), Phi(z), pdf(z)) for the exact Gaussian-CDF GELU."""
    phi = 0.5 * (1.0 + erf(z * _INV_SQRT2))
    pdf = np.exp(-0.5 * z * z) * _INV_SQRT_2PI
    return z * phi, phi, pdf


@dataclass(frozen=True)
class MlpArchitecture:
    """Shape and conditioning layout of the velocity network.

    ``depth`` counts hidden layers; a linear readout follows.  Periodic
    architectures replace raw coordinates with sin/cos harmonics (orders
    1..harmonics, base frequency 2*pi/period per coordinate).
    """

    dim: int
    width: int = 196
    depth: int = 7
    kind: str = "direct"  # "direct" (vector) | "potential" (scalar, field = grad)
    periodic: bool = False
    period: tuple[float, ...] | None = None
    harmonics: int = 4
    conditioned_on_mu: bool = False
    # time enters the conditioning embed as t * time_scale; pick ~1/t_max so
    # the embedding GELUs stay in their nonlinear range on long horizons
    time_scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("direct", "potential"):
            raise ValueError(f"kind must be direct or potential, got {self.kind!r}")
        if self.dim < 1 or self.width < 1 or self.depth < 1:
            raise ValueError("dim, width, depth must be positive")
        if not self.time_scale > 0.0:
            raise ValueError("time_scale must be positive")
        if self.periodic:
            if self.period is None or len(self.period) != self.dim:
                raise ValueError("periodic architecture needs one period per coordinate")
            if self.harmonics < 1:
                raise ValueError("harmonics must be >= 1")

    @property
    def in_features(self) -> int:
        return 2 * self.harmonics * self.dim if self.periodic else self.dim

    @property
    def out_features(self) -> int:
        return self.dim if self.kind == "direct" else 1

    @property
    def cond_features(self) -> int:
        return self.width * (2 if self.conditioned_on_mu else 1)


def _layout(arch: MlpArchitecture) -> list[tuple[str, tuple[int, ...]]]:
    w, c = arch.width, arch.cond_features
    spec: list[tuple[str, tuple[int, ...]]] = [
        ("t_embed.W1", (w, 1)),
        ("t_embed.b1", (w,)),
        ("t_embed.W2", (w, w)),
        ("t_embed.b2", (w,)),
    ]
    if arch.conditioned_on_mu:
        spec += [
            ("mu_embed.W1", (w, 1)),
            ("mu_embed.b1", (w,)),
            ("mu_embed.W2", (w, w)),
            ("mu_embed.b2", (w,)),
        ]
    fan = arch.in_features
    for l in range(arch.depth):
        spec += [
            (f"layer{l}.W", (w, fan)),
            (f"layer{l}.b", (w,)),
            (f"cond{l}.W1", (w, c)),
            (f"cond{l}.b1", (w,)),
            (f"cond{l}.W2", (w, w)),
            (f"cond{l}.b2", (w,)),
        ]
        fan = w
    spec += [("out.W", (arch.out_features, w)), ("out.b", (arch.out_features,))]
    return spec


class Network:
    """Parameter container plus all forward/backward passes.

    Parameters live in one flat float64 vector ``theta``; named views are
    reshaped slices, so optimizer updates on ``theta`` are visible
    immediately.
    """

    def __init__(self, arch: MlpArchitecture, theta: np.ndarray | None = None):
        self.arch = arch
        self.spec = _layout(arch)
        self.size = sum(int(np.prod(shape)) for _, shape in self.spec)
        if theta is None:
            theta = np.zeros(self.size)
        theta = np.ascontiguousarray(theta, dtype=np.float64)
        if theta.shape != (self.size,):
            raise ValueError(f"theta must have shape ({self.size},), got {theta.shape}")
        self.theta = theta
        self.views = self._make_views(theta)
        if arch.periodic:
            w0 = 2.0 * np.pi / np.asarray(arch.period, dtype=np.float64)
            self._wm = w0[:, None] * np.arange(1, arch.harmonics + 1)  # (d, H)

    def _make_views(self, flat: np.ndarray) -> dict[str, np.ndarray]:
        views = {}
        offset = 0
        for name, shape in self.spec:
            count = int(np.prod(shape))
            views[name] = flat[offset : offset + count].reshape(shape)
            offset += count
        return views

    def init_params(self, rng: np.random.Generator) -> None:
        """Weights N(0, 2/fan_in) (std sqrt(2/fan_in)), biases zero."""
        for name, shape in self.spec:
            v = self.views[name]
            if name.rsplit(".", 1)[1].startswith("b"):
                v[...] = 0.0
            else:
                fan_in = shape[1]
                v[...] = rng.standard_normal(shape) * math.sqrt(2.0 / fan_in)

    def grad_views(self) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        flat = np.zeros(self.size)
        return flat, self._make_views(flat)

    # -- embedding ---------------------------------------------------------

    def _embed(self, x: np.ndarray, cache: dict) -> np.ndarray:
        if not self.arch.periodic:
            return x
        ang = x[:, :, None] * self._wm  # (n, d, H)
        esin, ecos = np.sin(ang), np.cos(ang)
        cache["esin"], cache["ecos"] = esin, ecos
        n = x.shape[0]
        return np.concatenate([esin, ecos], axis=2).reshape(n, -1)

    def _embed_jvp(self, cache: dict, xdot: np.ndarray) -> np.ndarray:
        """Directional derivative of the embedding; xdot is (n, d) or (d,)."""
        if not self.arch.periodic:
            n = cache["x"].shape[0]
            return np.broadcast_to(np.asarray(xdot, dtype=np.float64), (n, self.arch.dim))
        xd = np.atleast_2d(xdot)[..., :, None]  # (n|1, d, 1)
        dsin = cache["ecos"] * self._wm * xd
        dcos = -cache["esin"] * self._wm * xd
        n = cache["x"].shape[0]
        out = np.concatenate([np.broadcast_to(dsin, cache["esin"].shape),
                              np.broadcast_to(dcos, cache["esin"].shape)], axis=2)
        return out.reshape(n, -1)

    def _embed_jvp2(self, cache: dict, va: np.ndarray, vb: np.ndarray) -> np.ndarray:
        """Second directional derivative of the embedding (zero when raw)."""
        n = cache["x"].shape[0]
        if not self.arch.periodic:
            return np.zeros((n, self.arch.dim))
        pab = (np.atleast_2d(va) * np.atleast_2d(vb))[..., :, None]  # (n|1, d, 1)
        wm2 = self._wm**2
        ddsin = -cache["esin"] * wm2 * pab
        ddcos = -cache["ecos"] * wm2 * pab
        out = np.concatenate([np.broadcast_to(ddsin, cache["esin"].shape),
                              np.broadcast_to(ddcos, cache["esin"].shape)], axis=2)
        return out.reshape(n, -1)

    def _embed_backward(self, cache: dict, de: np.ndarray) -> np.ndarray:
        """Pull a cotangent on the embedding back to the spatial input."""
        if not self.arch.periodic:
            return de.copy()
        n, d, h = cache["esin"].shape
        de = de.reshape(n, d, 2 * h)
        return np.sum(
            de[:, :, :h] * cache["ecos"] * self._wm
            - de[:, :, h:] * cache["esin"] * self._wm,
            axis=2,
        )

    # -- conditioning path -------------------------------------------------

    def _cond_forward(self, t: float, mu: float | None, cache: dict) -> np.ndarray:
        v = self.views
        parts = []
        for prefix, value in (("t_embed", t * self.arch.time_scale), ("mu_embed", mu)):
            if prefix == "mu_embed" and not self.arch.conditioned_on_mu:
                break
            if prefix == "mu_embed" and value is None:
                raise ValueError("architecture is conditioned on mu but mu is None")
            a = v[f"{prefix}.W1"][:, 0] * value + v[f"{prefix}.b1"]
            g, phi, _ = gelu_parts(a)
            e = v[f"{prefix}.W2"] @ g + v[f"{prefix}.b2"]
            cache[f"{prefix}.a"], cache[f"{prefix}.g"], cache[f"{prefix}.phi"] = a, g, phi
            cache[f"{prefix}.in"] = value
            parts.append(e)
        cond = np.concatenate(parts) if len(parts) > 1 else parts[0]
        cache["cond"] = cond
        return cond

    def _cond_backward(self, dcond: np.ndarray, cache: dict, gv: dict[str, np.ndarray]) -> None:
        w = self.arch.width
        v = self.views
        prefixes = ["t_embed"] + (["mu_embed"] if self.arch.conditioned_on_mu else [])
        for i, prefix in enumerate(prefixes):
            de = dcond[i * w : (i + 1) * w]
            g = cache[f"{prefix}.g"]
            gv[f"{prefix}.W2"] += np.outer(de, g)
            gv[f"{prefix}.b2"] += de
            dg = v[f"{prefix}.W2"].T @ de
            a, phi = cache[f"{prefix}.a"], cache[f"{prefix}.phi"]
            pdf = np.exp(-0.5 * a * a) * _INV_SQRT_2PI
            da = dg * (phi + a * pdf)
            gv[f"{prefix}.W1"][:, 0] += da * cache[f"{prefix}.in"]
            gv[f"{prefix}.b1"] += da

    # -- primal forward ----------------------------------------------------

    def forward(self, x: np.ndarray, t: float, mu: float | None = None) -> tuple[np.ndarray, dict]:
        """Evaluate the network on a batch; returns (output, cache).

        x is (n, dim); t and mu are scalars shared by the batch (one
        snapshot time per call).
        """
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.arch.dim:
            raise ValueError(f"x must be (n, {self.arch.dim}), got {x.shape}")
        v = self.views
        cache: dict = {"x": x, "t": float(t), "mu": mu}
        e = self._embed(x, cache)
        cache["e"] = e
        cond = self._cond_forward(float(t), mu, cache)

        h = e
        for l in range(self.arch.depth):
            cs = v[f"cond{l}.W1"] @ cond + v[f"cond{l}.b1"]
            cg, cphi, _ = gelu_parts(cs)
            cbias = v[f"cond{l}.W2"] @ cg + v[f"cond{l}.b2"]
            z = h @ v[f"layer{l}.W"].T + v[f"layer{l}.b"] + cbias
            hz, phi, pdf = gelu_parts(z)
            cache[f"cs{l}"], cache[f"cg{l}"], cache[f"cphi{l}"] = cs, cg, cphi
            cache[f"z{l}"], cache[f"gp{l}"] = z, phi + z * pdf
            cache[f"pdf{l}"] = pdf
            cache[f"h{l}"] = hz
            h = hz
        out = h @ v["out.W"].T + v["out.b"]
        return out, cache

    def _gpp(self, cache: dict, l: int) -> np.ndarray:
        key = f"gpp{l}"
        if key not in cache:
            z = cache[f"z{l}"]
            cache[key] = (2.0 - z * z) * cache[f"pdf{l}"]
        return cache[key]

    # -- forward-mode spatial tangents --------------------------------------

    def jvp(self, cache: dict, xdot: np.ndarray) -> tuple[np.ndarray, dict]:
        """Directional derivative of the output along spatial direction xdot.

        Conditioning inputs do not depend on x, so the tangent skips them.
        Returns (output tangent, tangent cache for reverse-over-forward).
        """
        v = self.views
        hd = self._embed_jvp(cache, xdot)
        tcache: dict = {"edot": hd, "xdot": xdot}
        for l in range(self.arch.depth):
            zd = hd @ v[f"layer{l}.W"].T
            hd = cache[f"gp{l}"] * zd
            tcache[f"zd{l}"], tcache[f"hd{l}"] = zd, hd
        outdot = hd @ v["out.W"].T
        tcache["out"] = outdot
        return outdot, tcache

    def jvp2(self, cache: dict, ta: dict, tb: dict) -> np.ndarray:
        """Mixed second directional derivative along the two cached tangents."""
        v = self.views
        hdd = self._embed_jvp2(cache, ta["xdot"], tb["xdot"])
        for l in range(self.arch.depth):
            zdd = hdd @ v[f"layer{l}.W"].T
            hdd = self._gpp(cache, l) * ta[f"zd{l}"] * tb[f"zd{l}"] + cache[f"gp{l}"] * zdd
        return hdd @ v["out.W"].T

    # -- reverse mode (optionally over forward tangents) --------------------

    def backward(
        self,
        cache: dict,
        dout: np.ndarray | None,
        gv: dict[str, np.ndarray] | None = None,
        tangents: list[tuple[dict, np.ndarray]] | None = None,
        need_dx: bool = False,
    ) -> np.ndarray | None:
        """Accumulate parameter gradients; exact reverse mode.

        ``dout`` is the cotangent on the primal output (may be None).
        ``tangents`` pairs each tangent cache from :meth:`jvp` with the
        cotangent on its tangent output; their parameter dependence (both
        through the tangent weights and through g'(z) on the primal path)
        is differentiated exactly.  When ``need_dx`` is set, the cotangent
        on x through the primal path is returned (tangent paths contribute
        no x-cotangent terms we need: x-gradients are only requested for
        pure primal evaluations).
        """
        v = self.views
        arch = self.arch
        tangents = tangents or []
        if gv is None:
            _, gv = self.grad_views()

        h_top = cache[f"h{arch.depth - 1}"]
        dh = None
        if dout is not None:
            gv["out.W"] += dout.T @ h_top
            gv["out.b"] += dout.sum(axis=0)
            dh = dout @ v["out.W"]
        dhd = []
        for tc, dod in tangents:
            gv["out.W"] += dod.T @ tc[f"hd{arch.depth - 1}"]
            dhd.append(dod @ v["out.W"])

        dcond = np.zeros(arch.cond_features)
        for l in range(arch.depth - 1, -1, -1):
            gp = cache[f"gp{l}"]
            h_prev = cache[f"h{l - 1}"] if l > 0 else cache["e"]
            dz = dh * gp if dh is not None else None
            dzd = []
            for j, (tc, _) in enumerate(tangents):
                dzd_j = dhd[j] * gp
                term = dhd[j] * tc[f"zd{l}"] * self._gpp(cache, l)
                dz = term if dz is None else dz + term
                dzd.append(dzd_j)

            if dz is not None:
                gv[f"layer{l}.W"] += dz.T @ h_prev
                db = dz.sum(axis=0)
                gv[f"layer{l}.b"] += db
                # conditioning bias MLP backward (bias is shared over batch)
                cg, cs, cphi = cache[f"cg{l}"], cache[f"cs{l}"], cache[f"cphi{l}"]
                gv[f"cond{l}.W2"] += np.outer(db, cg)
                gv[f"cond{l}.b2"] += db
                dcg = v[f"cond{l}.W2"].T @ db
                pdf = np.exp(-0.5 * cs * cs) * _INV_SQRT_2PI
                dcs = dcg * (cphi + cs * pdf)
                gv[f"cond{l}.W1"] += np.outer(dcs, cache["cond"])
                gv[f"cond{l}.b1"] += dcs
                dcond += v[f"cond{l}.W1"].T @ dcs
                dh = dz @ v[f"layer{l}.W"]
            else:
                dh = None
            for j, (tc, _) in enumerate(tangents):
                hd_prev = tc[f"hd{l - 1}"] if l > 0 else tc["edot"]
                gv[f"layer{l}.W"] += dzd[j].T @ hd_prev
                dhd[j] = dzd[j] @ v[f"layer{l}.W"]

        if np.any(dcond != 0.0):
            self._cond_backward(dcond, cache, gv)
        if need_dx:
            if dh is None:
                return np.zeros_like(cache["x"])
            return self._embed_backward(cache, dh)
        return None
