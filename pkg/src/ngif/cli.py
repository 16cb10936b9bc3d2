"""Command-line pipeline: generate, train, sample, evaluate, report, sweep.

Configs are INI files with ``key = value`` lines per section; every value
has a baked-in default and every output file header embeds the resolved
configuration, so runs are reproducible byte for byte from config + seed
(timestamps appear only in log lines).  Exit codes: 0 ok, 2 config error,
3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import configparser
import csv
import io
import logging
import os
import sys
import typing
from dataclasses import dataclass

import numpy as np

from .dataset import (
    DataFormatError,
    SnapshotDataset,
    atomic_write,
    load_dataset,
    normalize_dataset,
    save_dataset,
)
from .metrics import energy_rel_error, field_rel_l2, tv_curve
from .moments import precompute_moment_table
from .network import MlpArchitecture
from .objective import GAUGES, ObjectiveConfig
from .problems import (
    GigliConfig,
    TracerConfig,
    VlasovConfig,
    energy_series,
    gen_gigli,
    gen_tracer,
    gen_vlasov,
    gigli_field,
    tracer_field,
)
from .rng import stream
from .simulate import integrate_sde
from .testbank import log_spaced_bandwidths, median_heuristic_bandwidth, sample_bank
from .trainer import (
    Checkpoint,
    TrainConfig,
    TrainingDivergedError,
    load_checkpoint,
    train,
)
from .velocity_model import AnalyticField, wrap_raw

__all__ = ["main", "ConfigError", "DataError", "NumericError"]

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class ConfigError(Exception):
    """Missing or malformed configuration (exit code 2)."""


class DataError(Exception):
    """Unreadable or incompatible data files (exit code 3)."""


class NumericError(Exception):
    """Non-finite values produced by a numeric stage (exit code 4)."""


# ------------------------------------------------------------------ config


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _fmt_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


class RunConfig:
    """Typed access to a parsed INI file, recording every resolved value.

    ``overrides`` (section, key) -> raw string take precedence over the
    file; defaults fill in the rest.  The ``echo`` dict accumulates the
    resolved configuration for embedding in output headers.
    """

    _REQUIRED = object()

    def __init__(
        self,
        parser: configparser.ConfigParser,
        overrides: dict[tuple[str, str], str] | None = None,
    ):
        self._parser = parser
        self._overrides = dict(overrides or {})
        self.echo: dict[str, str] = {}

    def raw(self, section: str, key: str) -> str | None:
        if (section, key) in self._overrides:
            return self._overrides[(section, key)]
        if self._parser.has_option(section, key):
            return self._parser.get(section, key)
        return None

    def get(self, section: str, key: str, default=_REQUIRED, cast=str):
        text = self.raw(section, key)
        if text is None:
            if default is RunConfig._REQUIRED:
                raise ConfigError(f"missing config key {section}.{key}")
            value = default
        else:
            try:
                value = cast(text)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"bad value for {section}.{key}: {text!r} ({exc})") from exc
        self.echo[f"{section}.{key}"] = _fmt_value(value)
        return value

    def check_known(self, section: str, known: set[str]) -> None:
        if not self._parser.has_section(section):
            return
        for key in self._parser.options(section):
            if key not in known:
                raise ConfigError(f"unknown config key {section}.{key}")


def _load_config(path: str) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from exc
    return parser


def _echo_lines(echo: dict[str, str]) -> str:
    return "".join(f"# {key} = {echo[key]}\n" for key in sorted(echo))


def _write_csv(path: str, echo: dict[str, str], header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    buf.write(_echo_lines(echo))
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    atomic_write(path, buf.getvalue().encode("utf-8"))


def _stem(path: str) -> str:
    base, _ = os.path.splitext(path)
    return base


# ------------------------------------------------------------------ generate

_GENERATORS = {
    "gigli": (GigliConfig, gen_gigli),
    "tracer": (TracerConfig, gen_tracer),
    "vlasov": (VlasovConfig, gen_vlasov),
}


def _coerce_field(text: str, typ) -> object:
    origin = typing.get_origin(typ)
    if origin is not None:  # float | None style optionals
        args = [a for a in typing.get_args(typ) if a is not type(None)]
        if text.strip().lower() == "none":
            return None
        typ = args[0]
    if typ is bool:
        return _parse_bool(text)
    return typ(text)


def _problem_config(cfg: RunConfig):
    name = cfg.get("problem", "name")
    if name not in _GENERATORS:
        raise ConfigError(f"unknown problem {name!r}; known: {sorted(_GENERATORS)}")
    cls, gen = _GENERATORS[name]
    hints = typing.get_type_hints(cls)
    known = {"name", "seed"} | set(hints)
    cfg.check_known("problem", known)
    kwargs = {}
    for field_name, typ in hints.items():
        text = cfg.raw("problem", field_name)
        if text is None:
            continue
        try:
            kwargs[field_name] = _coerce_field(text, typ)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad value for problem.{field_name}: {text!r}") from exc
    seed = cfg.get("problem", "seed", 0, int)
    try:
        pcfg = cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"invalid {name} parameters: {exc}") from exc
    for field_name in hints:
        cfg.echo[f"problem.{field_name}"] = _fmt_value(getattr(pcfg, field_name))
    return name, pcfg, gen, seed


def cmd_generate(args) -> int:
    cfg = RunConfig(_load_config(args.config))
    name, pcfg, gen, seed = _problem_config(cfg)
    ds = gen(pcfg, seed)
    ds.meta.update(cfg.echo)
    out = args.output or f"{name}.ds"
    save_dataset(ds, out)
    print(
        f"wrote {out}: K={ds.k_count} N={ds.n_samples} d={ds.dim} "
        f"domain={ds.domain.kind}"
    )
    if name == "vlasov":
        energy = energy_series(ds)
        energy_path = _stem(out) + "_energy.csv"
        _write_csv(
            energy_path, cfg.echo, ["series", "t", "value"],
            [["energy_true", repr(float(t)), repr(float(e))] for t, e in zip(ds.times, energy)],
        )
        print(f"wrote {energy_path}: electric energy at {len(ds.times)} times")
    return EXIT_OK


# ------------------------------------------------------------------ train

_BANK_KEYS = {"m_tests", "bands", "sigma_min", "sigma_max"}
_ARCH_KEYS = {"width", "depth", "kind", "harmonics", "conditioned_on_mu", "time_scale"}
_TRAIN_KEYS = {
    "iterations", "lr", "batch_size", "seed", "gauge", "lam",
    "eps_diffusion", "eps_loss", "spline_lambda", "telemetry_every",
    "checkpoint_every",
}

# Per-problem defaults when the config leaves gauge / lam / eps unset.
_GAUGE_DEFAULTS = {
    "gigli": ("curl", 1e-3, 0.0),
    "tracer": ("divergence", 1e-2, 1e-2),
    "vlasov": ("curl", 1e-3, 1e-2),
}


def _load_dataset_checked(path: str) -> SnapshotDataset:
    try:
        ds = load_dataset(path)
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from exc
    try:
        ds.validate()
    except ValueError as exc:
        raise DataError(f"invalid dataset {path}: {exc}") from exc
    return ds


def _train_run(
    cfg: RunConfig, dataset_path: str, ckpt_path: str, telemetry_path: str
) -> Checkpoint:
    cfg.check_known("bank", _BANK_KEYS)
    cfg.check_known("arch", _ARCH_KEYS)
    cfg.check_known("train", _TRAIN_KEYS)
    raw_ds = _load_dataset_checked(dataset_path)
    norm_ds, stats = normalize_dataset(raw_ds)
    problem = raw_ds.meta.get("problem", "")

    seed = cfg.get("train", "seed", 0, int)
    m_tests = cfg.get("bank", "m_tests", 1000, int)
    bands = cfg.get("bank", "bands", 3, int)
    sigma_min = cfg.get("bank", "sigma_min", None, float)
    sigma_max = cfg.get("bank", "sigma_max", None, float)
    if (sigma_min is None) != (sigma_max is None):
        raise ConfigError("bank.sigma_min and bank.sigma_max must be given together")
    try:
        if sigma_min is None:
            _, (lo, _, hi) = median_heuristic_bandwidth(norm_ds)
            cfg.echo["bank.sigma_min"] = _fmt_value(lo)
            cfg.echo["bank.sigma_max"] = _fmt_value(hi)
        else:
            lo, hi = sigma_min, sigma_max
        bandwidths = log_spaced_bandwidths(lo, hi, bands)
        bank = sample_bank(m_tests, bandwidths, norm_ds.dim, norm_ds.domain.kind, seed)
    except ValueError as exc:
        raise ConfigError(f"invalid bank settings: {exc}") from exc

    kind = cfg.get("arch", "kind", "direct")
    gauge_default, lam_default, eps_default = _GAUGE_DEFAULTS.get(problem, ("none", 0.0, 0.0))
    if kind == "potential":
        gauge_default, lam_default = "none", 0.0
    gauge = cfg.get("train", "gauge", gauge_default)
    lam = cfg.get("train", "lam", lam_default if gauge != "none" else 0.0, float)
    if gauge not in GAUGES:
        raise ConfigError(f"train.gauge must be one of {GAUGES}, got {gauge!r}")
    if gauge == "none" and lam != 0.0:
        log.warning("gauge 'none' forces lam = 0 (config gave %g)", lam)
        lam = 0.0
        cfg.echo["train.lam"] = _fmt_value(lam)
    if kind == "potential" and gauge in ("curl", "divergence"):
        raise ConfigError(f"gauge {gauge!r} is vacuous for a potential field")

    try:
        arch = MlpArchitecture(
            dim=norm_ds.dim,
            width=cfg.get("arch", "width", 64, int),
            depth=cfg.get("arch", "depth", 4, int),
            kind=kind,
            periodic=norm_ds.domain.periodic,
            period=norm_ds.domain.period,
            harmonics=cfg.get("arch", "harmonics", 4, int),
            conditioned_on_mu=cfg.get("arch", "conditioned_on_mu", False, _parse_bool),
            time_scale=cfg.get(
                "arch", "time_scale", 1.0 / max(float(norm_ds.times[-1]), 1.0), float
            ),
        )
        objective = ObjectiveConfig(
            gauge=gauge,
            lam=lam,
            eps_diffusion=cfg.get("train", "eps_diffusion", eps_default, float),
            eps_loss=cfg.get("train", "eps_loss", 1e-8, float),
        )
        tcfg = TrainConfig(
            iterations=cfg.get("train", "iterations", 50_000, int),
            lr=cfg.get("train", "lr", 5e-4, float),
            batch_size=cfg.get("train", "batch_size", 256, int),
            seed=seed,
            objective=objective,
            telemetry_every=cfg.get("train", "telemetry_every", 100, int),
            checkpoint_every=cfg.get("train", "checkpoint_every", 0, int),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    table = precompute_moment_table(
        norm_ds, bank, cfg.get("train", "spline_lambda", 1e-5, float)
    )
    try:
        ckpt = train(
            norm_ds, bank, table, arch, tcfg,
            stats=stats,
            telemetry_path=telemetry_path,
            checkpoint_path=ckpt_path,
            extra=dict(cfg.echo),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    # prepend the config echo so the telemetry file is self-describing
    with open(telemetry_path) as fh:
        body = fh.read()
    atomic_write(telemetry_path, (_echo_lines(cfg.echo) + body).encode("utf-8"))
    return ckpt


def cmd_train(args) -> int:
    cfg = RunConfig(_load_config(args.config))
    out = args.output or _stem(args.dataset) + ".ckpt"
    telemetry = args.telemetry or _stem(out) + "_telemetry.csv"
    ckpt = _train_run(cfg, args.dataset, out, telemetry)
    print(
        f"wrote {out}: {ckpt.iteration} iterations, gauge={ckpt.config.objective.gauge} "
        f"lam={ckpt.config.objective.lam:g}"
    )
    print(f"wrote {telemetry}")
    return EXIT_OK


# ------------------------------------------------------------------ sample


def _sample_run(
    ckpt: Checkpoint,
    ds: SnapshotDataset,
    eps: float | None,
    substeps: int,
    n_out: int | None,
    seed: int,
) -> tuple[SnapshotDataset, dict[str, str]]:
    if ds.dim != ckpt.arch.dim:
        raise DataError(f"dataset dim {ds.dim} != checkpoint dim {ckpt.arch.dim}")
    if eps is None:
        eps = ckpt.config.objective.eps_diffusion
    if eps < 0 or substeps < 1:
        raise ConfigError("eps must be >= 0 and substeps >= 1")
    n_out = ds.n_samples if n_out is None else n_out
    if n_out < 1:
        raise ConfigError(f"n_out must be >= 1, got {n_out}")
    mu = None
    if ckpt.arch.conditioned_on_mu:
        if ds.scenario_param is None:
            raise DataError("checkpoint conditions on mu but dataset has no scenario_param")
        mu = float(ds.scenario_param)

    norm_ds, _ = normalize_dataset(ds, ckpt.stats)
    x0 = norm_ds.samples[0]
    idx = stream(seed, "subsample").choice(
        ds.n_samples, size=n_out, replace=n_out > ds.n_samples
    )
    model = ckpt.build_field()
    # normalized torus coordinates live in [-1, 1) with period exactly 2
    period = 2.0 if norm_ds.domain.periodic else None
    traj = integrate_sde(
        model, x0[idx], norm_ds.times, eps, stream(seed, "sde"),
        substeps=substeps, mu=mu, period=period, lo=-1.0,
    )
    if not np.all(np.isfinite(traj)):
        raise NumericError("integration produced non-finite samples")
    echo = {
        "sample.eps": _fmt_value(float(eps)),
        "sample.substeps": _fmt_value(substeps),
        "sample.n_out": _fmt_value(n_out),
        "sample.seed": _fmt_value(seed),
    }
    out_ds = SnapshotDataset(
        times=ds.times.copy(),
        samples=ckpt.stats.denormalize_points(traj),
        domain=ds.domain,
        scenario_param=ds.scenario_param,
        meta={**ds.meta, **echo},
    )
    return out_ds, echo


def cmd_sample(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    ds = _load_dataset_checked(args.dataset)
    out_ds, _ = _sample_run(ckpt, ds, args.eps, args.substeps, args.n_out, args.seed)
    out = args.output or _stem(args.checkpoint) + "_samples.ds"
    save_dataset(out_ds, out)
    print(f"wrote {out}: K={out_ds.k_count} N={out_ds.n_samples} d={out_ds.dim}")
    return EXIT_OK


# ------------------------------------------------------------------ evaluate

_METRICS = ("tv", "energy", "field")


def _reference_field(truth: SnapshotDataset) -> AnalyticField:
    problem = truth.meta.get("problem", "")
    if problem == "gigli":
        omega = float(truth.meta.get("omega_rot", "1.0"))
        return AnalyticField(fn=lambda x, t: gigli_field(x, omega_rot=omega))
    if problem == "tracer":
        return AnalyticField(fn=tracer_field)
    raise DataError(f"no analytic reference field for problem {problem!r}")


def _evaluate_run(
    gen: SnapshotDataset,
    truth: SnapshotDataset,
    metrics: list[str],
    bins: int,
    checkpoint_path: str | None,
) -> tuple[list[list], dict[str, float]]:
    if len(gen.times) != len(truth.times) or not np.array_equal(gen.times, truth.times):
        raise DataError("generated and truth datasets have different time grids")
    rows: list[list] = []
    summary: dict[str, float] = {}
    t_final = float(truth.times[-1])
    for metric in metrics:
        if metric == "tv":
            curve = tv_curve(gen, truth, bins=(bins, bins))
            rows += [["tv", repr(float(t)), repr(float(v))] for t, v in zip(truth.times, curve)]
            summary["tv_mean"] = float(np.mean(curve))
            summary["tv_final"] = float(curve[-1])
        elif metric == "energy":
            try:
                e_pred = energy_series(gen)
                e_true = energy_series(truth)
                e_rel = energy_rel_error(e_pred, e_true, truth.times)
            except ValueError as exc:
                raise DataError(f"energy metric unavailable: {exc}") from exc
            rows += [
                ["energy_pred", repr(float(t)), repr(float(e))]
                for t, e in zip(truth.times, e_pred)
            ]
            rows += [
                ["energy_true", repr(float(t)), repr(float(e))]
                for t, e in zip(truth.times, e_true)
            ]
            rows.append(["e_rel", repr(t_final), repr(float(e_rel))])
            summary["e_rel"] = float(e_rel)
        elif metric == "field":
            if checkpoint_path is None:
                raise ConfigError("the field metric needs --checkpoint")
            ckpt = load_checkpoint(checkpoint_path)
            mu = None
            if ckpt.arch.conditioned_on_mu:
                if truth.scenario_param is None:
                    raise DataError("checkpoint conditions on mu but truth has no scenario_param")
                mu = float(truth.scenario_param)
            learned = wrap_raw(ckpt.build_field(), ckpt.stats, mu=mu)
            value = field_rel_l2(learned, _reference_field(truth), truth)
            rows.append(["field_rel_l2", repr(t_final), repr(float(value))])
            summary["field_rel_l2"] = float(value)
        else:
            raise ConfigError(f"unknown metric {metric!r}; known: {_METRICS}")
    if not all(np.isfinite(v) for v in summary.values()):
        raise NumericError(f"non-finite metric values: {summary}")
    return rows, summary


def cmd_evaluate(args) -> int:
    gen = _load_dataset_checked(args.generated)
    truth = _load_dataset_checked(args.truth)
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    if not metrics:
        raise ConfigError("no metrics requested")
    rows, summary = _evaluate_run(gen, truth, metrics, args.bins, args.checkpoint)
    echo = {
        "evaluate.generated": args.generated,
        "evaluate.truth": args.truth,
        "evaluate.metrics": ",".join(metrics),
        "evaluate.bins": str(args.bins),
        "evaluate.checkpoint": args.checkpoint or "none",
    }
    _write_csv(args.output, echo, ["series", "t", "value"], rows)
    for key in sorted(summary):
        print(f"{key} = {summary[key]:.6f}")
    print(f"wrote {args.output}")
    return EXIT_OK


# ------------------------------------------------------------------ report


def _read_long_csv(path: str) -> list[tuple[str, float, float]]:
    try:
        with open(path, newline="") as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    reader = csv.reader(lines)
    header = next(reader, None)
    if header != ["series", "t", "value"]:
        raise DataError(f"{path} is not a long-format metrics CSV")
    out = []
    for row in reader:
        try:
            out.append((row[0], float(row[1]), float(row[2])))
        except (IndexError, ValueError) as exc:
            raise DataError(f"malformed row in {path}: {row!r}") from exc
    return out


def cmd_report(args) -> int:
    rows = []
    for path in args.inputs:
        per_series: dict[str, list[float]] = {}
        for series, _, value in _read_long_csv(path):
            per_series.setdefault(series, []).append(value)
        for series, values in per_series.items():
            rows.append(
                [path, series, repr(float(np.mean(values))), repr(float(values[-1]))]
            )
    _write_csv(args.output, {"report.inputs": " ".join(args.inputs)},
               ["source", "series", "mean", "final"], rows)
    for source, series, mean, final in rows:
        print(f"{source}: {series} mean={float(mean):.6f} final={float(final):.6f}")
    print(f"wrote {args.output}")
    return EXIT_OK


# ------------------------------------------------------------------ sweep

_SWEEP_KEYS = {"gauges", "lambdas", "metric", "bins"}
_SAMPLE_KEYS = {"eps", "substeps", "n_out", "seed"}


def _sweep_cell(
    config_path: str,
    dataset_path: str,
    workdir: str,
    gauge: str,
    lam: float,
    metric: str,
    bins: int,
    sample_cfg: tuple[float | None, int, int | None, int],
) -> float:
    """One sweep configuration end to end; safe to run as its own process."""
    tag = f"{gauge}_lam{lam:g}"
    rundir = os.path.join(workdir, tag)
    os.makedirs(rundir, exist_ok=True)
    overrides = {("train", "gauge"): gauge, ("train", "lam"): repr(lam)}
    cfg = RunConfig(_load_config(config_path), overrides)
    ckpt_path = os.path.join(rundir, "model.ckpt")
    telemetry_path = os.path.join(rundir, "telemetry.csv")
    ckpt = _train_run(cfg, dataset_path, ckpt_path, telemetry_path)
    ds = _load_dataset_checked(dataset_path)
    eps, substeps, n_out, seed = sample_cfg
    out_ds, _ = _sample_run(ckpt, ds, eps, substeps, n_out, seed)
    save_dataset(out_ds, os.path.join(rundir, "samples.ds"))
    family = "energy" if metric == "e_rel" else "tv"
    rows, summary = _evaluate_run(out_ds, ds, [family], bins, None)
    _write_csv(
        os.path.join(rundir, "evaluation.csv"), dict(cfg.echo),
        ["series", "t", "value"], rows,
    )
    return summary[metric]


def cmd_sweep(args) -> int:
    cfg = RunConfig(_load_config(args.config))
    cfg.check_known("sweep", _SWEEP_KEYS)
    cfg.check_known("sample", _SAMPLE_KEYS)
    gauges = cfg.get("sweep", "gauges", "kinetic curl divergence").split()
    for gauge in gauges:
        if gauge not in GAUGES or gauge == "none":
            raise ConfigError(f"sweep gauge must be a non-trivial gauge, got {gauge!r}")
    try:
        lambdas = [float(tok) for tok in cfg.get("sweep", "lambdas", "1e-4 1e-3 1e-2").split()]
    except ValueError as exc:
        raise ConfigError(f"bad sweep.lambdas: {exc}") from exc
    truth = _load_dataset_checked(args.dataset)
    default_metric = "e_rel" if truth.meta.get("problem") == "vlasov" else "tv_mean"
    metric = cfg.get("sweep", "metric", default_metric)
    if metric not in ("e_rel", "tv_mean", "tv_final"):
        raise ConfigError(f"unknown sweep metric {metric!r}")
    bins = cfg.get("sweep", "bins", 64, int)
    sample_cfg = (
        cfg.get("sample", "eps", None, float),
        cfg.get("sample", "substeps", 8, int),
        cfg.get("sample", "n_out", None, int),
        cfg.get("sample", "seed", 0, int),
    )
    os.makedirs(args.workdir, exist_ok=True)

    cells = [(gauge, lam) for gauge in gauges for lam in lambdas]
    try:
        threads = int(os.environ.get("NGIF_THREADS", "1"))
    except ValueError as exc:
        raise ConfigError(f"bad NGIF_THREADS: {exc}") from exc
    results: dict[tuple[str, float], float] = {}
    if threads > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as pool:
            futures = {
                pool.submit(
                    _sweep_cell, args.config, args.dataset, args.workdir,
                    gauge, lam, metric, bins, sample_cfg,
                ): (gauge, lam)
                for gauge, lam in cells
            }
            for fut, cell in futures.items():
                results[cell] = fut.result()
    else:
        for gauge, lam in cells:
            log.info("sweep cell: gauge=%s lam=%g", gauge, lam)
            results[(gauge, lam)] = _sweep_cell(
                args.config, args.dataset, args.workdir, gauge, lam, metric, bins, sample_cfg
            )

    out = args.output or os.path.join(args.workdir, "table.csv")
    header = ["gauge"] + [f"lam={lam:g}" for lam in lambdas]
    rows = [
        [gauge] + [repr(results[(gauge, lam)]) for lam in lambdas] for gauge in gauges
    ]
    _write_csv(out, {**cfg.echo, "sweep.metric": metric}, header, rows)
    for row in rows:
        print(" ".join(str(cell) for cell in row))
    print(f"wrote {out}")
    return EXIT_OK


# ------------------------------------------------------------------ entry


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ngif",
        description="Velocity-field inference from snapshot data: "
        "generate, train, sample, evaluate, report, sweep.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a problem dataset from a config")
    p.add_argument("config")
    p.add_argument("--output", help="dataset path (default <problem>.ds)")

    p = sub.add_parser("train", help="train a velocity field on a dataset")
    p.add_argument("config")
    p.add_argument("dataset")
    p.add_argument("--output", help="checkpoint path (default <dataset>.ckpt)")
    p.add_argument("--telemetry", help="loss telemetry CSV path")

    p = sub.add_parser("sample", help="integrate the learned field from t_0 samples")
    p.add_argument("checkpoint")
    p.add_argument("dataset")
    p.add_argument("--eps", type=float, help="SDE noise scale (default: from checkpoint)")
    p.add_argument("--substeps", type=int, default=8)
    p.add_argument("--n-out", type=int, help="output sample count (default: dataset N)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", help="generated dataset path")

    p = sub.add_parser("evaluate", help="score generated samples against truth")
    p.add_argument("generated")
    p.add_argument("truth")
    p.add_argument("--metrics", default="tv", help="comma list from tv,energy,field")
    p.add_argument("--bins", type=int, default=64)
    p.add_argument("--checkpoint", help="needed for the field metric")
    p.add_argument("--output", default="evaluation.csv")

    p = sub.add_parser("report", help="aggregate metric CSVs into a summary table")
    p.add_argument("output")
    p.add_argument("inputs", nargs="+")

    p = sub.add_parser("sweep", help="train/sample/evaluate over gauges and lambdas")
    p.add_argument("config")
    p.add_argument("dataset")
    p.add_argument("--workdir", default="sweep")
    p.add_argument("--output", help="table CSV (default <workdir>/table.csv)")
    return parser


_DISPATCH = {
    "generate": cmd_generate,
    "train": cmd_train,
    "sample": cmd_sample,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
    "sweep": cmd_sweep,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return _DISPATCH[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, DataFormatError, FileNotFoundError) as exc:
        print(f"data error [{type(exc).__module__}.{type(exc).__name__}]: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, TrainingDivergedError) as exc:
        print(
            f"numeric error [{type(exc).__module__}.{type(exc).__name__}]: {exc}",
            file=sys.stderr,
        )
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
