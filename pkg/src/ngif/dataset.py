"""Snapshot datasets: in-memory container, normalization, and file format.

A dataset is K+1 unpaired particle snapshots of equal size on a shared
domain.  The on-disk format ("NGIF-DS v1") is a UTF-8 text header followed
by one row-major float64 little-endian payload; numeric metadata is written
with shortest round-trip ``repr`` so save/load is bit-exact.
"""

from __future__ import annotations

import io
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DomainDescriptor",
    "SnapshotDataset",
    "NormalizationStats",
    "DataFormatError",
    "normalize_dataset",
    "save_dataset",
    "load_dataset",
]

DATASET_MAGIC = "NGIF-DS v1"


class DataFormatError(ValueError):
    """Raised on malformed dataset or checkpoint files.

    :param code: one of ``bad_magic``, ``bad_header``, ``truncated_payload``.
    """

    def __init__(self, code: str, message: str):
        super().__init__(f"[{code}] {message}")
        self.code = code


@dataclass(frozen=True)
class DomainDescriptor:
    """Sample space: all of R^d, or a d-torus with per-coordinate periods."""

    kind: str  # "euclidean" | "torus"
    dim: int
    period: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("euclidean", "torus"):
            raise ValueError(f"domain kind must be euclidean or torus, got {self.kind!r}")
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.kind == "torus":
            if self.period is None or len(self.period) != self.dim:
                raise ValueError("torus domain needs one period per coordinate")
            if any(p <= 0 for p in self.period):
                raise ValueError(f"periods must be positive, got {self.period}")
        elif self.period is not None:
            raise ValueError("euclidean domain takes no period")

    @property
    def periodic(self) -> bool:
        return self.kind == "torus"


def _torus(dim: int, period) -> DomainDescriptor:
    period = np.broadcast_to(np.asarray(period, dtype=float), (dim,))
    return DomainDescriptor("torus", dim, tuple(float(p) for p in period))


@dataclass
class SnapshotDataset:
    """K+1 snapshots of N samples each in d dimensions.

    ``samples[k]`` holds the particles observed at ``times[k]``; pairings
    across snapshots are not represented even when the generator had them.
    """

    times: np.ndarray  # (K+1,)
    samples: np.ndarray  # (K+1, N, d) float64
    domain: DomainDescriptor
    scenario_param: float | None = None
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 3:
            raise ValueError(f"samples must be (K+1, N, d), got shape {self.samples.shape}")
        if self.times.ndim != 1 or len(self.times) != self.samples.shape[0]:
            raise ValueError(
                f"times length {self.times.shape} inconsistent with "
                f"{self.samples.shape[0]} snapshots"
            )
        if len(self.times) >= 2 and not np.all(np.diff(self.times) > 0):
            raise ValueError("times must be strictly increasing")
        if self.domain.dim != self.samples.shape[2]:
            raise ValueError(
                f"domain dim {self.domain.dim} != sample dim {self.samples.shape[2]}"
            )

    @property
    def k_count(self) -> int:
        """K, the index of the last snapshot (snapshot count is K+1)."""
        return self.samples.shape[0] - 1

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def dim(self) -> int:
        return self.samples.shape[2]

    def validate(self) -> None:
        """Check content invariants (finite values, torus sample range)."""
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("dataset contains non-finite samples")
        if self.domain.periodic:
            p = np.asarray(self.domain.period)
            if np.any(self.samples < 0) or np.any(self.samples >= p):
                raise ValueError("torus samples must lie in [0, period) per coordinate")


@dataclass(frozen=True)
class NormalizationStats:
    """Affine map per coordinate: x_norm = (x - shift) / scale.

    Torus coordinates use the exact domain map [0, p) -> [-1, 1) (shift and
    scale both p/2) so the normalized period is exactly 2; Euclidean
    coordinates use the min/max of the training samples.  Velocities scale
    by 1/scale with no shift.
    """

    shift: np.ndarray  # (d,)
    scale: np.ndarray  # (d,)

    @classmethod
    def from_dataset(cls, ds: SnapshotDataset) -> "NormalizationStats":
        d = ds.dim
        if ds.domain.periodic:
            p = np.asarray(ds.domain.period, dtype=np.float64)
            return cls(shift=p / 2.0, scale=p / 2.0)
        lo = ds.samples.reshape(-1, d).min(axis=0)
        hi = ds.samples.reshape(-1, d).max(axis=0)
        scale = (hi - lo) / 2.0
        scale[scale == 0.0] = 1.0  # degenerate coordinate: leave it unscaled
        return cls(shift=(lo + hi) / 2.0, scale=scale)

    def normalize_points(self, x: np.ndarray) -> np.ndarray:
        return (x - self.shift) / self.scale

    def denormalize_points(self, x: np.ndarray) -> np.ndarray:
        return x * self.scale + self.shift

    def normalize_velocity(self, u: np.ndarray) -> np.ndarray:
        return u / self.scale

    def denormalize_velocity(self, u: np.ndarray) -> np.ndarray:
        return u * self.scale


def normalize_dataset(
    ds: SnapshotDataset, stats: NormalizationStats | None = None
) -> tuple[SnapshotDataset, NormalizationStats]:
    """Map a dataset into normalized coordinates ([-1, 1) box scale).

    Stats default to :meth:`NormalizationStats.from_dataset` on ``ds`` (the
    training set defines the map; held-out data reuses the training stats).
    Times are never rescaled, so learned velocities stay in original time
    units.
    """
    if stats is None:
        stats = NormalizationStats.from_dataset(ds)
    domain = ds.domain
    if domain.periodic:
        domain = _torus(ds.dim, 2.0)
    out = SnapshotDataset(
        times=ds.times.copy(),
        samples=stats.normalize_points(ds.samples),
        domain=domain,
        scenario_param=ds.scenario_param,
        meta=dict(ds.meta),
    )
    return out, stats


def _fmt_floats(values) -> str:
    return " ".join(repr(float(v)) for v in np.asarray(values).ravel())


def _parse_floats(text: str) -> np.ndarray:
    return np.array([float(tok) for tok in text.split()], dtype=np.float64)


def atomic_write(path: str, payload: bytes) -> None:
    """Write a file via temp-and-rename so readers never see partial output."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_dataset(ds: SnapshotDataset, path: str) -> None:
    """Write a dataset in NGIF-DS v1 format (atomic)."""
    ds.validate()
    buf = io.StringIO()
    buf.write(DATASET_MAGIC + "\n")
    buf.write(f"k_count = {ds.k_count}\n")
    buf.write(f"n_samples = {ds.n_samples}\n")
    buf.write(f"dim = {ds.dim}\n")
    buf.write(f"domain = {ds.domain.kind}\n")
    if ds.domain.periodic:
        buf.write(f"period = {_fmt_floats(ds.domain.period)}\n")
    sp = "none" if ds.scenario_param is None else repr(float(ds.scenario_param))
    buf.write(f"scenario_param = {sp}\n")
    buf.write(f"times = {_fmt_floats(ds.times)}\n")
    for key in sorted(ds.meta):
        buf.write(f"meta.{key} = {ds.meta[key]}\n")
    buf.write("end_header\n")
    blob = np.ascontiguousarray(ds.samples, dtype="<f8").tobytes()
    atomic_write(path, buf.getvalue().encode("utf-8") + blob)


def _read_header(raw: bytes, magic: str, what: str) -> tuple[dict[str, str], dict[str, str], int]:
    """Split magic + ``key = value`` lines up to end_header; return offset."""
    nl = raw.find(b"\n")
    if nl < 0 or raw[:nl].decode("utf-8", errors="replace") != magic:
        raise DataFormatError("bad_magic", f"not a {magic} file")
    fields: dict[str, str] = {}
    meta: dict[str, str] = {}
    pos = nl + 1
    while True:
        nl = raw.find(b"\n", pos)
        if nl < 0:
            raise DataFormatError("bad_header", f"{what} header has no end_header line")
        line = raw[pos:nl].decode("utf-8")
        pos = nl + 1
        if line == "end_header":
            return fields, meta, pos
        if " = " not in line:
            raise DataFormatError("bad_header", f"malformed header line: {line!r}")
        key, value = line.split(" = ", 1)
        if key.startswith("meta."):
            meta[key[len("meta."):]] = value
        else:
            fields[key] = value


def load_dataset(path: str) -> SnapshotDataset:
    """Read an NGIF-DS v1 file; inverse of :func:`save_dataset` bit-for-bit."""
    with open(path, "rb") as fh:
        raw = fh.read()
    fields, meta, offset = _read_header(raw, DATASET_MAGIC, "dataset")
    try:
        k_count = int(fields["k_count"])
        n = int(fields["n_samples"])
        d = int(fields["dim"])
        kind = fields["domain"]
        times = _parse_floats(fields["times"])
        sp_text = fields["scenario_param"]
    except (KeyError, ValueError) as exc:
        raise DataFormatError("bad_header", f"missing or malformed field: {exc}") from exc
    if k_count < 0 or n < 1 or d < 1:
        raise DataFormatError("bad_header", f"invalid shape fields K={k_count} N={n} d={d}")
    if len(times) != k_count + 1:
        raise DataFormatError(
            "bad_header", f"header claims K={k_count} but lists {len(times)} times"
        )
    period = None
    if kind == "torus":
        if "period" not in fields:
            raise DataFormatError("bad_header", "torus dataset missing period")
        period = tuple(float(p) for p in _parse_floats(fields["period"]))
    scenario_param = None if sp_text == "none" else float(sp_text)

    expected = (k_count + 1) * n * d * 8
    got = len(raw) - offset
    if got < expected:
        raise DataFormatError(
            "truncated_payload", f"payload holds {got} bytes, header implies {expected}"
        )
    if got > expected:
        raise DataFormatError(
            "bad_header", f"payload holds {got} bytes, header implies {expected}"
        )
    samples = np.frombuffer(raw, dtype="<f8", offset=offset).reshape(k_count + 1, n, d)
    try:
        domain = DomainDescriptor(kind, d, period)
        return SnapshotDataset(
            times=times,
            samples=samples.astype(np.float64),
            domain=domain,
            scenario_param=scenario_param,
            meta=meta,
        )
    except ValueError as exc:
        raise DataFormatError("bad_header", str(exc)) from exc
