"""End-to-end command-line tests on tiny configurations.

Each verb is exercised through ``main(argv)`` so exit codes and printed
output are covered without subprocess overhead.  Training runs here are a
few dozen iterations: enough to produce well-formed artifacts, not to
learn anything.
"""

import csv
import os

import numpy as np
import pytest

from ngif import load_checkpoint, load_dataset
from ngif.cli import main

GIGLI_INI = """\
[problem]
name = gigli
n_components = 4
n_samples = 200
k_count = 8
seed = 1

[bank]
m_tests = 32

[arch]
width = 8
depth = 1

[train]
iterations = 40
batch_size = 64
telemetry_every = 10
"""

VLASOV_INI = """\
[problem]
name = vlasov
n_particles = 400
k_count = 6
t_final = 3.0
grid_size = 16
seed = 2

[bank]
m_tests = 24

[arch]
width = 8
depth = 1
conditioned_on_mu = true

[train]
iterations = 25
batch_size = 128

[sweep]
gauges = kinetic divergence
lambdas = 1e-3 1e-2
metric = e_rel

[sample]
substeps = 2
"""


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """One gigli dataset + checkpoint shared by the read-only tests."""
    root = tmp_path_factory.mktemp("cli")
    ini = root / "gigli.ini"
    ini.write_text(GIGLI_INI)
    assert main(["generate", str(ini), "--output", str(root / "gigli.ds")]) == 0
    assert main(["train", str(ini), str(root / "gigli.ds")]) == 0
    return root


def _read_table(path):
    with open(path, newline="") as fh:
        echo = []
        rows = []
        for line in fh:
            if line.startswith("#"):
                echo.append(line)
            else:
                rows.append(line)
    return echo, list(csv.reader(rows))


# ---------------------------------------------------------------- generate


def test_generate_writes_dataset_with_config_echo(workdir):
    ds = load_dataset(str(workdir / "gigli.ds"))
    assert ds.k_count == 8
    assert ds.n_samples == 200
    assert ds.meta["problem"] == "gigli"
    # resolved config, including defaulted fields, lands in the meta block
    assert ds.meta["problem.n_components"] == "4"
    assert ds.meta["problem.omega_rot"] == "1.0"
    assert ds.meta["problem.seed"] == "1"


def test_generate_default_output_name(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    ini = tmp_path / "p.ini"
    ini.write_text("[problem]\nname = gigli\nn_samples = 50\nk_count = 2\n")
    assert main(["generate", str(ini)]) == 0
    assert (tmp_path / "gigli.ds").exists()


def test_generate_vlasov_writes_energy_csv(tmp_path):
    ini = tmp_path / "vp.ini"
    ini.write_text(VLASOV_INI)
    out = tmp_path / "vp.ds"
    assert main(["generate", str(ini), "--output", str(out)]) == 0
    echo, rows = _read_table(tmp_path / "vp_energy.csv")
    assert rows[0] == ["series", "t", "value"]
    assert len(rows) == 1 + 7  # header + k_count+1 times
    assert all(r[0] == "energy_true" for r in rows[1:])
    assert any(line.startswith("# problem.mu = ") for line in echo)
    values = np.array([float(r[2]) for r in rows[1:]])
    assert np.all(np.isfinite(values)) and np.all(values > 0)


def test_generate_unknown_problem_exits_2(tmp_path, capsys):
    ini = tmp_path / "p.ini"
    ini.write_text("[problem]\nname = nosuch\n")
    assert main(["generate", str(ini)]) == 2
    assert "nosuch" in capsys.readouterr().err


def test_generate_missing_name_exits_2(tmp_path, capsys):
    ini = tmp_path / "p.ini"
    ini.write_text("[problem]\nn_samples = 10\n")
    assert main(["generate", str(ini)]) == 2
    assert "problem.name" in capsys.readouterr().err


def test_generate_bad_field_value_exits_2(tmp_path, capsys):
    ini = tmp_path / "p.ini"
    ini.write_text("[problem]\nname = gigli\nn_samples = lots\n")
    assert main(["generate", str(ini)]) == 2
    assert "problem.n_samples" in capsys.readouterr().err


def test_generate_unknown_key_exits_2(tmp_path, capsys):
    ini = tmp_path / "p.ini"
    ini.write_text("[problem]\nname = gigli\nn_smaples = 10\n")
    assert main(["generate", str(ini)]) == 2
    assert "n_smaples" in capsys.readouterr().err


def test_generate_invalid_parameters_exit_2(tmp_path):
    ini = tmp_path / "p.ini"
    ini.write_text("[problem]\nname = gigli\nsigma_g = -1.0\n")
    assert main(["generate", str(ini)]) == 2


def test_missing_config_file_exits_2(tmp_path):
    assert main(["generate", str(tmp_path / "absent.ini")]) == 2


# ---------------------------------------------------------------- train


def test_train_writes_checkpoint_and_telemetry(workdir):
    ckpt = load_checkpoint(str(workdir / "gigli.ckpt"))
    assert ckpt.iteration == 40
    # gigli defaults: direct field, curl gauge at 1e-3, no diffusion
    assert ckpt.arch.kind == "direct"
    assert ckpt.config.objective.gauge == "curl"
    assert ckpt.config.objective.lam == pytest.approx(1e-3)
    assert ckpt.config.objective.eps_diffusion == 0.0
    # resolved config echo rides along in the extra block
    assert ckpt.extra["train.iterations"] == "40"
    assert ckpt.extra["arch.width"] == "8"
    assert "bank.sigma_min" in ckpt.extra  # median heuristic filled these in

    echo, rows = _read_table(workdir / "gigli_telemetry.csv")
    assert any(line.startswith("# train.lr = ") for line in echo)
    assert rows[0] == ["iteration", "lr", "weak", "gauge"]
    assert [r[0] for r in rows[1:]] == ["0", "10", "20", "30", "39"]


def test_train_missing_dataset_exits_3(workdir, capsys):
    ini = workdir / "gigli.ini"
    assert main(["train", str(ini), str(workdir / "absent.ds")]) == 3
    assert "data error" in capsys.readouterr().err


def test_train_corrupt_dataset_exits_3(tmp_path, workdir):
    bad = tmp_path / "bad.ds"
    bad.write_bytes(b"not a dataset at all")
    assert main(["train", str(workdir / "gigli.ini"), str(bad)]) == 3


def test_train_gauge_none_forces_lam_zero(tmp_path, workdir):
    ini = tmp_path / "none.ini"
    ini.write_text(
        "[problem]\nname = gigli\n"
        "[bank]\nm_tests = 16\n"
        "[arch]\nwidth = 8\ndepth = 1\n"
        "[train]\niterations = 3\ngauge = none\nlam = 0.5\n"
    )
    out = tmp_path / "m.ckpt"
    assert main(["train", str(ini), str(workdir / "gigli.ds"), "--output", str(out)]) == 0
    ckpt = load_checkpoint(str(out))
    assert ckpt.config.objective.gauge == "none"
    assert ckpt.config.objective.lam == 0.0
    assert ckpt.extra["train.lam"] == "0.0"


def test_train_potential_with_curl_gauge_exits_2(tmp_path, workdir, capsys):
    ini = tmp_path / "pot.ini"
    ini.write_text(
        "[problem]\nname = gigli\n"
        "[arch]\nwidth = 8\ndepth = 1\nkind = potential\n"
        "[train]\niterations = 3\ngauge = curl\n"
    )
    assert main(["train", str(ini), str(workdir / "gigli.ds")]) == 2
    assert "vacuous" in capsys.readouterr().err


def test_train_potential_defaults_to_no_gauge(tmp_path, workdir):
    ini = tmp_path / "pot.ini"
    ini.write_text(
        "[problem]\nname = gigli\n"
        "[bank]\nm_tests = 16\n"
        "[arch]\nwidth = 8\ndepth = 1\nkind = potential\n"
        "[train]\niterations = 3\n"
    )
    out = tmp_path / "m.ckpt"
    assert main(["train", str(ini), str(workdir / "gigli.ds"), "--output", str(out)]) == 0
    ckpt = load_checkpoint(str(out))
    assert ckpt.arch.kind == "potential"
    assert ckpt.config.objective.gauge == "none"


def test_train_half_bank_window_exits_2(tmp_path, workdir, capsys):
    ini = tmp_path / "w.ini"
    ini.write_text(
        "[problem]\nname = gigli\n"
        "[bank]\nsigma_min = 0.1\n"
        "[train]\niterations = 3\n"
    )
    assert main(["train", str(ini), str(workdir / "gigli.ds")]) == 2
    assert "sigma" in capsys.readouterr().err


def test_train_bad_gauge_name_exits_2(tmp_path, workdir):
    ini = tmp_path / "g.ini"
    ini.write_text(
        "[problem]\nname = gigli\n[train]\niterations = 3\ngauge = swirl\n"
    )
    assert main(["train", str(ini), str(workdir / "gigli.ds")]) == 2


def test_train_reruns_are_byte_identical(tmp_path, workdir):
    ini = workdir / "gigli.ini"
    paths = []
    for tag in ("a", "b"):
        out = tmp_path / f"{tag}.ckpt"
        tel = tmp_path / f"{tag}.csv"
        args = ["train", str(ini), str(workdir / "gigli.ds"),
                "--output", str(out), "--telemetry", str(tel)]
        assert main(args) == 0
        paths.append((out, tel))
    assert paths[0][0].read_bytes() == paths[1][0].read_bytes()
    assert paths[0][1].read_bytes() == paths[1][1].read_bytes()


# ---------------------------------------------------------------- sample


def test_sample_matches_dataset_grid_and_domain(workdir):
    out = workdir / "gen.ds"
    args = ["sample", str(workdir / "gigli.ckpt"), str(workdir / "gigli.ds"),
            "--output", str(out)]
    assert main(args) == 0
    truth = load_dataset(str(workdir / "gigli.ds"))
    gen = load_dataset(str(out))
    assert np.array_equal(gen.times, truth.times)
    assert gen.samples.shape == truth.samples.shape
    assert gen.domain == truth.domain
    assert np.all(np.isfinite(gen.samples))
    assert gen.meta["problem"] == "gigli"
    assert gen.meta["sample.eps"] == "0.0"  # inherited from the checkpoint
    # start from the (resampled) t_0 snapshot: same point cloud at t_0
    assert np.allclose(np.sort(gen.samples[0], axis=0),
                       np.sort(truth.samples[0], axis=0))


def test_sample_n_out_resamples(workdir, tmp_path):
    out = tmp_path / "wide.ds"
    args = ["sample", str(workdir / "gigli.ckpt"), str(workdir / "gigli.ds"),
            "--n-out", "350", "--output", str(out)]
    assert main(args) == 0
    gen = load_dataset(str(out))
    assert gen.n_samples == 350
    truth = load_dataset(str(workdir / "gigli.ds"))
    # every start point is one of the truth t_0 samples
    d = np.abs(gen.samples[0][:, None, :] - truth.samples[0][None, :, :]).sum(axis=2)
    assert np.all(d.min(axis=1) < 1e-12)


def test_sample_eps_override_changes_output(workdir, tmp_path):
    base = tmp_path / "ode.ds"
    noisy = tmp_path / "sde.ds"
    common = ["sample", str(workdir / "gigli.ckpt"), str(workdir / "gigli.ds")]
    assert main(common + ["--output", str(base)]) == 0
    assert main(common + ["--eps", "0.3", "--output", str(noisy)]) == 0
    a = load_dataset(str(base)).samples
    b = load_dataset(str(noisy)).samples
    assert np.array_equal(a[0], b[0])
    assert not np.allclose(a[1:], b[1:])


def test_sample_negative_eps_exits_2(workdir):
    args = ["sample", str(workdir / "gigli.ckpt"), str(workdir / "gigli.ds"),
            "--eps", "-0.1", "--output", "/tmp/never.ds"]
    assert main(args) == 2


def test_sample_missing_checkpoint_exits_3(workdir):
    args = ["sample", str(workdir / "absent.ckpt"), str(workdir / "gigli.ds")]
    assert main(args) == 3


def test_sample_reruns_are_byte_identical(workdir, tmp_path):
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / f"{tag}.ds"
        args = ["sample", str(workdir / "gigli.ckpt"), str(workdir / "gigli.ds"),
                "--eps", "0.2", "--output", str(out)]
        assert main(args) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_sample_torus_output_stays_in_box(tmp_path):
    ini = tmp_path / "tr.ini"
    ini.write_text(
        "[problem]\nname = tracer\nn_samples = 150\nk_count = 4\nt_final = 0.5\n"
        "[bank]\nm_tests = 16\n"
        "[arch]\nwidth = 8\ndepth = 1\n"
        "[train]\niterations = 5\n"
    )
    ds_path = tmp_path / "tr.ds"
    ck_path = tmp_path / "tr.ckpt"
    assert main(["generate", str(ini), "--output", str(ds_path)]) == 0
    assert main(["train", str(ini), str(ds_path), "--output", str(ck_path)]) == 0
    out = tmp_path / "gen.ds"
    args = ["sample", str(ck_path), str(ds_path), "--eps", "0.5",
            "--substeps", "2", "--output", str(out)]
    assert main(args) == 0
    gen = load_dataset(str(out))
    assert gen.domain.kind == "torus"
    period = np.asarray(gen.domain.period)
    assert np.all(gen.samples >= 0.0)
    assert np.all(gen.samples < period)


# ---------------------------------------------------------------- evaluate


def test_evaluate_tv_and_field_csv(workdir, tmp_path, capsys):
    out = tmp_path / "eval.csv"
    args = ["evaluate", str(workdir / "gen.ds"), str(workdir / "gigli.ds"),
            "--metrics", "tv,field", "--checkpoint", str(workdir / "gigli.ckpt"),
            "--output", str(out)]
    assert main(args) == 0
    printed = capsys.readouterr().out
    assert "tv_mean = " in printed and "field_rel_l2 = " in printed
    echo, rows = _read_table(out)
    assert rows[0] == ["series", "t", "value"]
    tv_rows = [r for r in rows[1:] if r[0] == "tv"]
    assert len(tv_rows) == 9  # one per snapshot time
    assert [r[0] for r in rows[1:]].count("field_rel_l2") == 1
    assert any(line.startswith("# evaluate.metrics = tv,field") for line in echo)
    values = [float(r[2]) for r in rows[1:]]
    assert all(np.isfinite(values))


def test_evaluate_energy_metric_on_vlasov(tmp_path):
    ini = tmp_path / "vp.ini"
    ini.write_text(VLASOV_INI)
    ds_path = tmp_path / "vp.ds"
    ck_path = tmp_path / "vp.ckpt"
    assert main(["generate", str(ini), "--output", str(ds_path)]) == 0
    assert main(["train", str(ini), str(ds_path), "--output", str(ck_path)]) == 0
    gen_path = tmp_path / "gen.ds"
    assert main(["sample", str(ck_path), str(ds_path), "--substeps", "2",
                 "--output", str(gen_path)]) == 0
    out = tmp_path / "eval.csv"
    assert main(["evaluate", str(gen_path), str(ds_path), "--metrics", "energy",
                 "--output", str(out)]) == 0
    _, rows = _read_table(out)
    series = {r[0] for r in rows[1:]}
    assert series == {"energy_pred", "energy_true", "e_rel"}
    e_rel = [float(r[2]) for r in rows[1:] if r[0] == "e_rel"]
    assert len(e_rel) == 1 and np.isfinite(e_rel[0])


def test_evaluate_grid_mismatch_exits_3(workdir, tmp_path, capsys):
    ini = tmp_path / "short.ini"
    ini.write_text("[problem]\nname = gigli\nn_samples = 100\nk_count = 3\n")
    short = tmp_path / "short.ds"
    assert main(["generate", str(ini), "--output", str(short)]) == 0
    args = ["evaluate", str(short), str(workdir / "gigli.ds"),
            "--output", str(tmp_path / "e.csv")]
    assert main(args) == 3
    assert "time grid" in capsys.readouterr().err


def test_evaluate_field_without_checkpoint_exits_2(workdir, tmp_path):
    args = ["evaluate", str(workdir / "gen.ds"), str(workdir / "gigli.ds"),
            "--metrics", "field", "--output", str(tmp_path / "e.csv")]
    assert main(args) == 2


def test_evaluate_unknown_metric_exits_2(workdir, tmp_path):
    args = ["evaluate", str(workdir / "gen.ds"), str(workdir / "gigli.ds"),
            "--metrics", "wasserstein", "--output", str(tmp_path / "e.csv")]
    assert main(args) == 2


# ---------------------------------------------------------------- report


def test_report_aggregates_mean_and_final(workdir, tmp_path):
    eval_csv = tmp_path / "eval.csv"
    args = ["evaluate", str(workdir / "gen.ds"), str(workdir / "gigli.ds"),
            "--output", str(eval_csv)]
    assert main(args) == 0
    out = tmp_path / "summary.csv"
    assert main(["report", str(out), str(eval_csv)]) == 0
    _, rows = _read_table(out)
    assert rows[0] == ["source", "series", "mean", "final"]
    tv = [r for r in rows[1:] if r[1] == "tv"]
    assert len(tv) == 1
    _, raw = _read_table(eval_csv)
    values = [float(r[2]) for r in raw[1:] if r[0] == "tv"]
    assert float(tv[0][2]) == pytest.approx(np.mean(values))
    assert float(tv[0][3]) == pytest.approx(values[-1])


def test_report_rejects_foreign_csv(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    assert main(["report", str(tmp_path / "out.csv"), str(bad)]) == 3


# ---------------------------------------------------------------- sweep


def test_sweep_writes_table_and_run_dirs(tmp_path):
    ini = tmp_path / "vp.ini"
    ini.write_text(VLASOV_INI)
    ds_path = tmp_path / "vp.ds"
    assert main(["generate", str(ini), "--output", str(ds_path)]) == 0
    work = tmp_path / "sweep"
    assert main(["sweep", str(ini), str(ds_path), "--workdir", str(work)]) == 0
    echo, rows = _read_table(work / "table.csv")
    assert rows[0] == ["gauge", "lam=0.001", "lam=0.01"]
    assert [r[0] for r in rows[1:]] == ["kinetic", "divergence"]
    for row in rows[1:]:
        for cell in row[1:]:
            assert np.isfinite(float(cell))
    assert any(line.startswith("# sweep.metric = e_rel") for line in echo)
    for gauge in ("kinetic", "divergence"):
        for lam in ("0.001", "0.01"):
            rundir = work / f"{gauge}_lam{lam}"
            for name in ("model.ckpt", "samples.ds", "evaluation.csv", "telemetry.csv"):
                assert (rundir / name).exists(), f"{rundir}/{name}"


def test_sweep_rejects_gauge_none(tmp_path, workdir):
    ini = tmp_path / "s.ini"
    ini.write_text("[problem]\nname = gigli\n[sweep]\ngauges = none\n")
    args = ["sweep", str(ini), str(workdir / "gigli.ds"),
            "--workdir", str(tmp_path / "w")]
    assert main(args) == 2


def test_sweep_rejects_unknown_metric(tmp_path, workdir):
    ini = tmp_path / "s.ini"
    ini.write_text("[problem]\nname = gigli\n[sweep]\nmetric = mmd\n")
    args = ["sweep", str(ini), str(workdir / "gigli.ds"),
            "--workdir", str(tmp_path / "w")]
    assert main(args) == 2


def test_sweep_bad_threads_env_exits_2(tmp_path, workdir, monkeypatch):
    monkeypatch.setenv("NGIF_THREADS", "many")
    ini = tmp_path / "s.ini"
    ini.write_text(
        "[problem]\nname = gigli\n[sweep]\ngauges = kinetic\nlambdas = 1e-3\n"
    )
    args = ["sweep", str(ini), str(workdir / "gigli.ds"),
            "--workdir", str(tmp_path / "w")]
    assert main(args) == 2


# ---------------------------------------------------------------- misc


def test_console_entry_point_installed():
    # the pyproject script target must stay importable
    from ngif.cli import main as entry
    assert callable(entry)
