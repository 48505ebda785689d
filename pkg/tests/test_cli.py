import pytest

from astn.cli import DEFAULT_CONFIG, load_config, main, render_report, save_config
from astn.metrics import MetricsReport, MetricsRow

SMALL_CONFIG = {
    "seed": 77,
    "dataset": {
        "count": 2,
        "size": 32,
        "dose_fractions": [0.25],
        "n_ellipses": 5,
        "photons_full_dose": 4096,
    },
    "run": {
        "samplers": ["ddim"],
        "regimes": ["full", "ast"],
        "origins": [5, 10],
        "eta": 0.0,
    },
}

GOLDEN_REPORT = (
    "Full schedule\n"
    "model                            psnr_db                  rmse            ssim          time_s\n"
    "DDPM@1000                  38.721/38.788 1.1700e-02/1.1600e-02     0.973/0.973   45.144/16.382\n"
    "\n"
    "AST-n\n"
    "model                            psnr_db                  rmse            ssim          time_s\n"
    "DDIM (AST-150)                    39.272            1.0800e-02           0.974           2.397\n"
)


@pytest.fixture()
def workspace(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    save_config(SMALL_CONFIG, cfg_path)
    return tmp_path, cfg_path


def test_config_round_trip(tmp_path):
    path = tmp_path / "cfg.json"
    save_config(SMALL_CONFIG, path)
    once = load_config(path)
    save_config(once, path)
    assert load_config(path) == once == SMALL_CONFIG


def test_generate_run_report_pipeline(workspace, capsys):
    tmp, cfg = workspace
    out = tmp / "work"
    assert main(["generate", "--config", str(cfg), "--out", str(out)]) == 0
    assert (out / "dataset" / "manifest.csv").exists()
    # refuses to clobber without --force
    assert main(["generate", "--config", str(cfg), "--out", str(out)]) == 2
    assert main(["generate", "--config", str(cfg), "--out", str(out), "--force"]) == 0

    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    metrics = out / "metrics.csv"
    assert metrics.exists()
    report = MetricsReport.read_csv(metrics)  # pipeline closure: rows parse back
    assert len(report.rows) == 4
    curves = sorted(p.name for p in (out / "curves").glob("*.csv"))
    assert curves == ["ddim_ast.csv", "ddim_full.csv"]
    for curve in (out / "curves").glob("*.csv"):
        lines = curve.read_text().splitlines()
        assert lines[0] == "steps,psnr_db,rmse,ssim,time_s"
        assert len(lines) == 3

    capsys.readouterr()
    assert main(["report", str(metrics)]) == 0
    text = capsys.readouterr().out
    assert "AST-n" in text and "DDIM@10" in text and "DDIM (AST-10)" in text


def test_run_is_seed_deterministic(workspace):
    tmp, cfg = workspace
    out = tmp / "work"
    main(["generate", "--config", str(cfg), "--out", str(out)])
    main(["run", "--config", str(cfg), "--out", str(out), "--seed", "5"])
    first = (out / "metrics.csv").read_text()
    main(["run", "--config", str(cfg), "--out", str(out), "--seed", "5"])
    # timing column varies run to run; quality columns must not
    strip = lambda text: [
        ",".join(line.split(",")[:6]) for line in text.splitlines() if not line.startswith("#")
    ]
    assert strip(first) == strip((out / "metrics.csv").read_text())


def test_generate_count_zero(tmp_path):
    cfg = dict(SMALL_CONFIG, dataset=dict(SMALL_CONFIG["dataset"], count=0))
    cfg_path = tmp_path / "cfg.json"
    save_config(cfg, cfg_path)
    assert main(["generate", "--config", str(cfg_path), "--out", str(tmp_path / "w")]) == 0
    manifest = (tmp_path / "w" / "dataset" / "manifest.csv").read_text().splitlines()
    assert manifest == ["pair_id,full_path,low_path,dose_fraction,seed"]


def test_unknown_sampler_fails_fast(workspace):
    tmp, cfg = workspace
    bad = dict(SMALL_CONFIG, run=dict(SMALL_CONFIG["run"], samplers=["ddim", "euler"]))
    bad_path = tmp / "bad.json"
    save_config(bad, bad_path)
    out = tmp / "work"
    main(["generate", "--config", str(cfg), "--out", str(out)])
    assert main(["run", "--config", str(bad_path), "--out", str(out)]) == 2


def test_unknown_regime_fails_fast(workspace):
    tmp, cfg = workspace
    bad = dict(SMALL_CONFIG, run=dict(SMALL_CONFIG["run"], regimes=["warmstart"]))
    bad_path = tmp / "bad.json"
    save_config(bad, bad_path)
    out = tmp / "work"
    main(["generate", "--config", str(cfg), "--out", str(out)])
    assert main(["run", "--config", str(bad_path), "--out", str(out)]) == 2


def test_run_without_dataset_is_config_error(workspace):
    tmp, cfg = workspace
    assert main(["run", "--config", str(cfg), "--out", str(tmp / "nowhere")]) == 2


def test_missing_config_is_config_error(tmp_path):
    assert main(["generate", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == 2


def test_runtime_failure_exit_code(workspace):
    tmp, cfg = workspace
    out = tmp / "work"
    main(["generate", "--config", str(cfg), "--out", str(out)])
    broken = dict(SMALL_CONFIG, predictor={"kind": "affine", "path": str(tmp / "missing_model.txt")})
    broken_path = tmp / "broken.json"
    save_config(broken, broken_path)
    assert main(["run", "--config", str(broken_path), "--out", str(out)]) == 3


def test_report_empty_csv(tmp_path, capsys):
    path = tmp_path / "empty.csv"
    MetricsReport().write_csv(path)
    assert main(["report", str(path)]) == 0


def test_report_malformed_csv(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("regime,sampler,steps,psnr_db,rmse,ssim,time_s,seed\nfull,ddim,NaNsteps,1,2,0.5,1,0\n")
    assert main(["report", str(path)]) == 2
    assert ":2" in capsys.readouterr().err


def test_render_report_golden():
    rows = [
        MetricsRow("full", "ddpm", 1000, 38.788, 0.0116, 0.973, 16.382, 42),
        MetricsRow("inverted", "ddpm", 1000, 38.721, 0.0117, 0.973, 45.144, 42),
        MetricsRow("ast", "ddim", 150, 39.272, 0.0108, 0.974, 2.397, 42),
    ]
    assert render_report(MetricsReport(rows=rows)) == GOLDEN_REPORT


def test_default_config_is_complete():
    for key in ("seed", "schedule", "dataset", "predictor", "run"):
        assert key in DEFAULT_CONFIG
    # default experiment uses the standard origin set and dose fractions
    assert DEFAULT_CONFIG["run"]["origins"] == [10, 25, 50, 100, 150, 500]
    assert DEFAULT_CONFIG["dataset"]["dose_fractions"] == [0.25, 0.10]
