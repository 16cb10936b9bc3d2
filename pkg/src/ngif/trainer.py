"""Minibatch training loop and checkpoint files.

Each iteration draws one snapshot index k uniformly, a without-replacement
minibatch from that snapshot, evaluates the weak-form loss and its parameter
gradient, and applies a bias-corrected Adam update on a cosine-decayed
learning rate.  Checkpoints ("NGIF-CKPT v1") are self-contained: sampling
and evaluation need nothing besides a checkpoint and a dataset.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import (
    DataFormatError,
    NormalizationStats,
    SnapshotDataset,
    _fmt_floats,
    _parse_floats,
    _read_header,
    atomic_write,
)
from .moments import MomentTable
from .network import MlpArchitecture, Network
from .objective import ObjectiveConfig, total_loss_and_grad
from .rng import philox_state, stream
from .testbank import TestBank
from .velocity_model import VelocityField

__all__ = [
    "TrainConfig",
    "AdamState",
    "TrainingDivergedError",
    "Checkpoint",
    "adam_step",
    "cosine_lr",
    "train",
    "save_checkpoint",
    "load_checkpoint",
]

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = "NGIF-CKPT v1"


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings; ``objective`` carries the loss composition."""

    iterations: int = 50_000
    lr: float = 5e-4
    batch_size: int = 256
    seed: int = 0
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    telemetry_every: int = 100
    checkpoint_every: int = 0  # 0: write only the final checkpoint

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError(f"iterations must be >= 0, got {self.iterations}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.telemetry_every < 1:
            raise ValueError(f"telemetry_every must be >= 1, got {self.telemetry_every}")
        if self.checkpoint_every < 0:
            raise ValueError(f"checkpoint_every must be >= 0, got {self.checkpoint_every}")


class TrainingDivergedError(RuntimeError):
    """Loss or gradient went non-finite; carries the iteration diagnostics."""

    def __init__(self, iteration: int, k: int, total: float, weak: float, gauge: float):
        super().__init__(
            f"non-finite loss at iteration {iteration} (snapshot k={k}): "
            f"total={total!r} weak={weak!r} gauge={gauge!r}"
        )
        self.iteration = iteration
        self.k = k
        self.total = total
        self.weak = weak
        self.gauge = gauge


@dataclass
class AdamState:
    """First/second moment accumulators; ``step`` counts completed updates."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(m=np.zeros(size), v=np.zeros(size), step=0)


def adam_step(
    state: AdamState,
    theta: np.ndarray,
    grad: np.ndarray,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[AdamState, np.ndarray]:
    """One bias-corrected Adam update; returns new state and parameters.

    Inputs are never mutated; a non-finite gradient raises before any
    state change.
    """
    if theta.shape != grad.shape:
        raise ValueError(f"theta shape {theta.shape} != grad shape {grad.shape}")
    if not np.all(np.isfinite(grad)):
        raise ValueError("non-finite gradient; no update applied")
    t = state.step + 1
    m = beta1 * state.m + (1.0 - beta1) * grad
    v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    return AdamState(m=m, v=v, step=t), theta - lr * m_hat / (np.sqrt(v_hat) + eps)


def cosine_lr(step: int, total: int, lr0: float) -> float:
    """Half-cosine decay: lr0 at step 0, lr0/2 at total/2, 0 at total."""
    if total < 1:
        raise ValueError(f"total must be >= 1, got {total}")
    if not 0 <= step <= total:
        raise ValueError(f"step must lie in [0, {total}], got {step}")
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * step / total))


@dataclass
class Checkpoint:
    """Self-contained training artifact.

    Holds the architecture and parameters, the test bank that defined the
    loss, the normalization map, a config echo, the final iteration count,
    and the minibatch RNG state at the end of training.  ``extra`` carries
    free-form caller metadata (e.g. the CLI config echo).
    """

    arch: MlpArchitecture
    theta: np.ndarray
    bank: TestBank
    stats: NormalizationStats
    config: TrainConfig
    iteration: int
    batch_state: dict
    extra: dict[str, str] = field(default_factory=dict)

    def build_field(self) -> VelocityField:
        """Instantiate the trained field (parameters are copied)."""
        return VelocityField(net=Network(self.arch, self.theta.copy()))


def train(
    dataset: SnapshotDataset,
    bank: TestBank,
    table: MomentTable,
    arch: MlpArchitecture,
    config: TrainConfig,
    stats: NormalizationStats | None = None,
    telemetry_path: str | None = None,
    checkpoint_path: str | None = None,
    extra: dict[str, str] | None = None,
) -> Checkpoint:
    """Run the minibatch loop and return the final checkpoint.

    ``dataset`` is expected in normalized coordinates with ``stats`` holding
    the map back to raw ones (identity when omitted); ``table`` must have
    been precomputed from exactly (dataset, bank).  Runs are bit-reproducible
    per ``config.seed``: parameter init draws from the "params" stream and
    snapshot indices plus minibatches from "batch", in a fixed order.

    Telemetry rows (iteration, lr, weak, gauge) go to ``telemetry_path``
    every ``config.telemetry_every`` iterations plus the final one.  With
    ``checkpoint_path`` set, the final checkpoint is written there, and
    intermediate ones at the ``checkpoint_every`` cadence.
    """
    if dataset.dim != arch.dim:
        raise ValueError(f"dataset dim {dataset.dim} != architecture dim {arch.dim}")
    if bank.dim != arch.dim:
        raise ValueError(f"bank dim {bank.dim} != architecture dim {arch.dim}")
    if table.mu.shape != (dataset.k_count + 1, bank.m_tests):
        raise ValueError("moment table shape does not match dataset times and bank size")
    if stats is None:
        stats = NormalizationStats(shift=np.zeros(arch.dim), scale=np.ones(arch.dim))
    mu_cond: float | None = None
    if arch.conditioned_on_mu:
        if dataset.scenario_param is None:
            raise ValueError("architecture conditions on mu but dataset has no scenario_param")
        mu_cond = float(dataset.scenario_param)

    model = VelocityField.create(arch, config.seed)
    state = AdamState.zeros(model.net.size)
    rng = stream(config.seed, "batch")
    n = dataset.n_samples
    bsz = min(config.batch_size, n)
    log.info(
        "training %s field (%d params): %d iters, batch %d of %d, M=%d, gauge=%s lam=%g",
        arch.kind, model.net.size, config.iterations, bsz, n,
        bank.m_tests, config.objective.gauge, config.objective.lam,
    )

    def snapshot(iteration: int) -> Checkpoint:
        return Checkpoint(
            arch=arch,
            theta=model.net.theta.copy(),
            bank=bank,
            stats=stats,
            config=config,
            iteration=iteration,
            batch_state=philox_state(rng),
            extra=dict(extra or {}),
        )

    tel_fh = open(telemetry_path, "w", newline="") if telemetry_path else None
    writer = csv.writer(tel_fh) if tel_fh is not None else None
    if writer is not None:
        writer.writerow(["iteration", "lr", "weak", "gauge"])
    weak = gauge = math.nan
    try:
        for it in range(config.iterations):
            lr_t = cosine_lr(it, config.iterations, config.lr)
            k = int(rng.integers(0, dataset.k_count + 1))
            if bsz < n:
                idx = rng.choice(n, size=bsz, replace=False, shuffle=False)
                batch = dataset.samples[k, idx]
            else:
                batch = dataset.samples[k]
            total, weak, gauge, grad = total_loss_and_grad(
                model, k, batch, table, bank, config.objective, mu=mu_cond
            )
            if not (np.isfinite(total) and np.all(np.isfinite(grad))):
                raise TrainingDivergedError(it, k, total, weak, gauge)
            state, theta = adam_step(state, model.net.theta, grad, lr_t)
            model.net.theta[...] = theta  # in place: the network views alias theta
            last = it + 1 == config.iterations
            if it % config.telemetry_every == 0 or last:
                if writer is not None:
                    writer.writerow([it, repr(lr_t), repr(weak), repr(gauge)])
                    tel_fh.flush()
                log.debug("iter %d: lr=%.3e weak=%.6f gauge=%.6f", it, lr_t, weak, gauge)
            if (
                checkpoint_path is not None
                and config.checkpoint_every > 0
                and (it + 1) % config.checkpoint_every == 0
                and not last
            ):
                save_checkpoint(snapshot(it + 1), checkpoint_path)
    finally:
        if tel_fh is not None:
            tel_fh.close()

    if config.iterations > 0:
        log.info("finished %d iterations: weak=%.6f gauge=%.6f", config.iterations, weak, gauge)
    ckpt = snapshot(config.iterations)
    if checkpoint_path is not None:
        save_checkpoint(ckpt, checkpoint_path)
    return ckpt


def _fmt_ints(values) -> str:
    return " ".join(str(int(v)) for v in values)


def _parse_ints(text: str) -> list[int]:
    return [int(tok) for tok in text.split()]


def save_checkpoint(ckpt: Checkpoint, path: str) -> None:
    """Write a checkpoint in NGIF-CKPT v1 format (atomic).

    Text header (``key = value`` lines, floats via shortest round-trip
    ``repr``), then two row-major float64 little-endian blobs: theta and the
    bank frequencies.
    """
    a, c, o = ckpt.arch, ckpt.config, ckpt.config.objective
    theta = np.asarray(ckpt.theta, dtype=np.float64)
    size = Network(a).size
    if theta.shape != (size,):
        raise ValueError(f"theta shape {theta.shape} does not match architecture ({size},)")
    if ckpt.bank.dim != a.dim:
        raise ValueError(f"bank dim {ckpt.bank.dim} != architecture dim {a.dim}")
    buf = io.StringIO()
    buf.write(CHECKPOINT_MAGIC + "\n")
    buf.write(f"dim = {a.dim}\n")
    buf.write(f"width = {a.width}\n")
    buf.write(f"depth = {a.depth}\n")
    buf.write(f"kind = {a.kind}\n")
    buf.write(f"periodic = {int(a.periodic)}\n")
    if a.periodic:
        buf.write(f"period = {_fmt_floats(a.period)}\n")
    buf.write(f"harmonics = {a.harmonics}\n")
    buf.write(f"conditioned_on_mu = {int(a.conditioned_on_mu)}\n")
    buf.write(f"time_scale = {a.time_scale!r}\n")
    buf.write(f"theta_size = {size}\n")
    buf.write(f"m_tests = {ckpt.bank.m_tests}\n")
    buf.write(f"bank_bandwidths = {_fmt_floats(ckpt.bank.bandwidths)}\n")
    buf.write(f"bank_domain = {ckpt.bank.domain_kind}\n")
    buf.write(f"bank_seed = {ckpt.bank.seed}\n")
    buf.write(f"shift = {_fmt_floats(ckpt.stats.shift)}\n")
    buf.write(f"scale = {_fmt_floats(ckpt.stats.scale)}\n")
    buf.write(f"iterations = {c.iterations}\n")
    buf.write(f"lr = {c.lr!r}\n")
    buf.write(f"batch_size = {c.batch_size}\n")
    buf.write(f"seed = {c.seed}\n")
    buf.write(f"telemetry_every = {c.telemetry_every}\n")
    buf.write(f"checkpoint_every = {c.checkpoint_every}\n")
    buf.write(f"gauge = {o.gauge}\n")
    buf.write(f"lam = {o.lam!r}\n")
    buf.write(f"eps_diffusion = {o.eps_diffusion!r}\n")
    buf.write(f"eps_loss = {o.eps_loss!r}\n")
    buf.write(f"iteration = {ckpt.iteration}\n")
    buf.write(f"rng_counter = {_fmt_ints(ckpt.batch_state['counter'])}\n")
    buf.write(f"rng_key = {_fmt_ints(ckpt.batch_state['key'])}\n")
    buf.write(f"rng_buffer = {_fmt_ints(ckpt.batch_state['buffer'])}\n")
    buf.write(f"rng_buffer_pos = {ckpt.batch_state['buffer_pos']}\n")
    buf.write(f"rng_has_uint32 = {ckpt.batch_state['has_uint32']}\n")
    buf.write(f"rng_uinteger = {ckpt.batch_state['uinteger']}\n")
    for key in sorted(ckpt.extra):
        buf.write(f"meta.{key} = {ckpt.extra[key]}\n")
    buf.write("end_header\n")
    blob = (
        np.ascontiguousarray(theta, dtype="<f8").tobytes()
        + np.ascontiguousarray(ckpt.bank.frequencies, dtype="<f8").tobytes()
    )
    atomic_write(path, buf.getvalue().encode("utf-8") + blob)


def load_checkpoint(path: str) -> Checkpoint:
    """Read an NGIF-CKPT v1 file; inverse of :func:`save_checkpoint`."""
    with open(path, "rb") as fh:
        raw = fh.read()
    fields, meta, offset = _read_header(raw, CHECKPOINT_MAGIC, "checkpoint")
    try:
        periodic = fields["periodic"] == "1"
        period = None
        if periodic:
            period = tuple(float(p) for p in _parse_floats(fields["period"]))
        arch = MlpArchitecture(
            dim=int(fields["dim"]),
            width=int(fields["width"]),
            depth=int(fields["depth"]),
            kind=fields["kind"],
            periodic=periodic,
            period=period,
            harmonics=int(fields["harmonics"]),
            conditioned_on_mu=fields["conditioned_on_mu"] == "1",
            time_scale=float(fields.get("time_scale", "1")),
        )
        config = TrainConfig(
            iterations=int(fields["iterations"]),
            lr=float(fields["lr"]),
            batch_size=int(fields["batch_size"]),
            seed=int(fields["seed"]),
            objective=ObjectiveConfig(
                gauge=fields["gauge"],
                lam=float(fields["lam"]),
                eps_diffusion=float(fields["eps_diffusion"]),
                eps_loss=float(fields["eps_loss"]),
            ),
            telemetry_every=int(fields["telemetry_every"]),
            checkpoint_every=int(fields["checkpoint_every"]),
        )
        theta_size = int(fields["theta_size"])
        m_tests = int(fields["m_tests"])
        bandwidths = _parse_floats(fields["bank_bandwidths"])
        bank_domain = fields["bank_domain"]
        bank_seed = int(fields["bank_seed"])
        stats = NormalizationStats(
            shift=_parse_floats(fields["shift"]), scale=_parse_floats(fields["scale"])
        )
        iteration = int(fields["iteration"])
        batch_state = {
            "counter": _parse_ints(fields["rng_counter"]),
            "key": _parse_ints(fields["rng_key"]),
            "buffer": _parse_ints(fields["rng_buffer"]),
            "buffer_pos": int(fields["rng_buffer_pos"]),
            "has_uint32": int(fields["rng_has_uint32"]),
            "uinteger": int(fields["rng_uinteger"]),
        }
    except (KeyError, ValueError) as exc:
        raise DataFormatError("bad_header", f"missing or malformed field: {exc}") from exc
    if m_tests < 2 or m_tests % 2 != 0:
        raise DataFormatError("bad_header", f"m_tests must be a positive even count, got {m_tests}")
    if bank_domain not in ("euclidean", "torus"):
        raise DataFormatError("bad_header", f"unknown bank domain {bank_domain!r}")
    if Network(arch).size != theta_size:
        raise DataFormatError(
            "bad_header", f"theta_size {theta_size} does not match the architecture"
        )
    expected = (theta_size + (m_tests // 2) * arch.dim) * 8
    got = len(raw) - offset
    if got < expected:
        raise DataFormatError(
            "truncated_payload", f"payload holds {got} bytes, header implies {expected}"
        )
    if got > expected:
        raise DataFormatError(
            "bad_header", f"payload holds {got} bytes, header implies {expected}"
        )
    theta = np.frombuffer(raw, dtype="<f8", count=theta_size, offset=offset).astype(np.float64)
    freq = np.frombuffer(
        raw, dtype="<f8", count=(m_tests // 2) * arch.dim, offset=offset + theta_size * 8
    ).astype(np.float64)
    bank = TestBank(
        frequencies=freq.reshape(m_tests // 2, arch.dim),
        bandwidths=bandwidths,
        domain_kind=bank_domain,
        seed=bank_seed,
    )
    return Checkpoint(
        arch=arch,
        theta=theta,
        bank=bank,
        stats=stats,
        config=config,
        iteration=iteration,
        batch_state=batch_state,
        extra=meta,
    )
