"""Experiment driver: dataset generation, sweep execution, report rendering.

Subcommands:
    generate   write a synthetic DosePair dataset + manifest under --out
    run        execute the (regime x sampler x origin) sweep, write metrics
               CSV and per-(sampler, regime) quality-vs-steps curve CSVs
    report     render a grouped text table from a metrics CSV (inverted and
               standard initializations paired side by side where both exist)

Configuration is a single JSON file (see README for the schema). Exit codes:
0 success, 2 configuration errors, 3 runtime failures.
"""

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from astn import data as dat
from astn.denoiser import AffinePredictor, GaussianDataModel, GaussianOracle, ZeroPredictor, conditioned_oracle
from astn.metrics import MetricsReport
from astn.regimes import REGIMES, regime_sweep
from astn.samplers import SAMPLER_KINDS
from astn.schedule import make_linear_schedule

__all__ = ["main", "load_config", "save_config", "render_report", "ConfigError"]

SAMPLER_ALIASES = {"dpmpp": "dpmpp2m", "unipc": "unipc2"}

DEFAULT_CONFIG = {
    "seed": 2024,
    "schedule": {"T": 1000, "beta_start": 1e-4, "beta_end": 0.02},
    "dataset": {
        "count": 16,
        "size": 64,
        "dose_fractions": [0.25, 0.10],
        "n_ellipses": 6,
        "photons_full_dose": 4096,
    },
    "predictor": {
        "kind": "conditioned_oracle",
        "prior_mean": 0.5,
        "prior_var": 0.0625,
        "condition_noise": "auto",
    },
    "run": {
        "samplers": ["ddpm", "ddim", "dpm1", "dpm2", "dpmpp", "unipc"],
        "regimes": ["full", "ast"],
        "origins": [10, 25, 50, 100, 150, 500],
        "eta": 0.0,
    },
}


class ConfigError(Exception):
    pass


def load_config(path):
    try:
        with open(path) as f:
            cfg = json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    return cfg


def save_config(cfg, path):
    with open(path, "w") as f:
        json.dump(cfg, f, indent=2)
        f.write("\n")


def _section(cfg, name):
    merged = dict(DEFAULT_CONFIG[name])
    merged.update(cfg.get(name, {}))
    return merged


def _resolve_samplers(tokens):
    kinds = []
    for tok in tokens:
        kind = SAMPLER_ALIASES.get(tok, tok)
        if kind not in SAMPLER_KINDS:
            raise ConfigError(f"unknown sampler {tok!r}")
        kinds.append(kind)
    return kinds


def _resolve_regimes(tokens):
    for tok in tokens:
        if tok not in REGIMES:
            raise ConfigError(f"unknown regime {tok!r}")
    return list(tokens)


def _build_schedule(cfg):
    sc = _section(cfg, "schedule")
    try:
        return make_linear_schedule(int(sc["T"]), float(sc["beta_start"]), float(sc["beta_end"]))
    except ValueError as exc:
        raise ConfigError(f"bad schedule: {exc}") from exc


def _build_predictor_factory(cfg, sched, shape, photons):
    pc = _section(cfg, "predictor")
    kind = pc.get("kind", "conditioned_oracle")
    if kind == "conditioned_oracle":
        model = GaussianDataModel(
            mean=np.full(shape, float(pc["prior_mean"])), var=float(pc["prior_var"])
        )
        cn = pc.get("condition_noise", "auto")
        if cn == "auto":
            # Poisson surrogate noise scale at mid intensity: var ~ 0.5/(frac*photons)
            def factory(pair):
                level = math.sqrt(0.5 / (pair.dose_fraction * photons))
                return conditioned_oracle(model, level, sched)

            return factory
        level = float(cn)
        return lambda pair: conditioned_oracle(model, level, sched)
    if kind == "gaussian_oracle":
        model = GaussianDataModel(
            mean=np.full(shape, float(pc["prior_mean"])), var=float(pc["prior_var"])
        )
        oracle = GaussianOracle(model, sched)
        return lambda pair: oracle
    if kind == "affine":
        pred = AffinePredictor.load(pc["path"])
        return lambda pair: pred
    if kind == "zero":
        zero = ZeroPredictor()
        return lambda pair: zero
    raise ConfigError(f"unknown predictor kind {kind!r}")


def cmd_generate(args):
    cfg = load_config(args.config)
    ds = _section(cfg, "dataset")
    seed = args.seed if args.seed is not None else int(cfg.get("seed", DEFAULT_CONFIG["seed"]))
    out = Path(args.out) / "dataset"
    manifest = out / "manifest.csv"
    if manifest.exists() and not args.force:
        raise ConfigError(f"{manifest} exists; pass --force to overwrite")
    records = dat.generate_dataset(
        out,
        count=int(ds["count"]),
        size=int(ds["size"]),
        dose_fractions=[float(f) for f in ds["dose_fractions"]],
        master_seed=seed,
        n_ellipses=int(ds["n_ellipses"]),
        photons_full_dose=int(ds["photons_full_dose"]),
    )
    print(f"wrote {len(records)} dose pairs under {out}")
    return 0


def cmd_run(args):
    cfg = load_config(args.config)
    rc = _section(cfg, "run")
    ds = _section(cfg, "dataset")
    samplers = _resolve_samplers(rc["samplers"])
    regimes = _resolve_regimes(rc["regimes"])
    origins = [int(n) for n in rc["origins"]]
    seed = args.seed if args.seed is not None else int(cfg.get("seed", DEFAULT_CONFIG["seed"]))
    sched = _build_schedule(cfg)
    for n in origins:
        if not 1 <= n <= sched.T:
            raise ConfigError(f"origin/budget {n} outside [1, T={sched.T}]")

    manifest = Path(args.out) / "dataset" / "manifest.csv"
    if not manifest.exists():
        raise ConfigError(f"no dataset manifest at {manifest}; run `astn generate` first")
    dataset = dat.read_manifest(manifest)
    if not dataset:
        raise ConfigError(f"{manifest} lists no pairs")
    shape = dataset[0].full_dose.shape
    factory = _build_predictor_factory(cfg, sched, shape, int(ds["photons_full_dose"]))

    report = regime_sweep(
        origins,
        samplers,
        dataset,
        factory,
        sched,
        master_seed=seed,
        regimes=regimes,
        eta=float(rc.get("eta", 0.0)),
        threads=args.threads,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    metrics_path = out / "metrics.csv"
    report.write_csv(metrics_path)
    _write_curves(report, out / "curves")
    print(f"wrote {len(report.rows)} rows to {metrics_path}")
    if report.failures:
        print(f"{len(report.failures)} sweep cells failed", file=sys.stderr)
        return 3
    return 0


def _write_curves(report, curve_dir):
    curve_dir = Path(curve_dir)
    curve_dir.mkdir(parents=True, exist_ok=True)
    groups = {}
    for r in report.rows:
        groups.setdefault((r.sampler, r.regime), []).append(r)
    for (sampler, regime), rows in groups.items():
        rows.sort(key=lambda r: r.steps)
        with open(curve_dir / f"{sampler}_{regime}.csv", "w") as f:
            f.write("steps,psnr_db,rmse,ssim,time_s\n")
            for r in rows:
                f.write(f"{r.steps},{r.psnr_db:.6f},{r.rmse:.8e},{r.ssim:.8f},{r.time_s:.6f}\n")


def render_report(report, T=1000):
    """Grouped text table in the quality-table layout: full schedule block,
    reduced-step block, AST block; inverted/standard paired left/right."""
    inverted = {(r.sampler, r.steps): r for r in report.rows if r.regime == "inverted"}
    used_inverted = set()

    def cell(row, attr, fmt):
        # inverted runs share the full-noise grids, so they pair only with
        # "full" rows; AST rows stay single-valued
        inv = inverted.get((row.sampler, row.steps)) if row.regime == "full" else None
        base = format(getattr(row, attr), fmt)
        if inv is not None:
            used_inverted.add((row.sampler, row.steps))
            return f"{format(getattr(inv, attr), fmt)}/{base}"
        return base

    def label(row):
        if row.regime == "ast":
            return f"{row.sampler.upper()} (AST-{row.steps})"
        return f"{row.sampler.upper()}@{row.steps}"

    blocks = [
        ("Full schedule", [r for r in report.rows if r.regime == "full" and r.steps >= T]),
        ("Reduced steps", [r for r in report.rows if r.regime == "full" and r.steps < T]),
        ("AST-n", [r for r in report.rows if r.regime == "ast"]),
    ]
    # inverted rows without a standard partner still need to be shown
    leftover = [
        r for r in report.rows
        if r.regime == "inverted" and not any(
            b.sampler == r.sampler and b.steps == r.steps and b.regime == "full"
            for _, rows in blocks[:2] for b in rows
        )
    ]
    if leftover:
        blocks.append(("Inverted only", leftover))

    lines = []
    header = f"{'model':<22} {'psnr_db':>17} {'rmse':>21} {'ssim':>15} {'time_s':>15}"
    for title, rows in blocks:
        if not rows:
            continue
        lines.append(title)
        lines.append(header)
        for r in sorted(rows, key=lambda r: (-r.steps, r.sampler)):
            lines.append(
                f"{label(r):<22} {cell(r, 'psnr_db', '.3f'):>17} "
                f"{cell(r, 'rmse', '.4e'):>21} {cell(r, 'ssim', '.3f'):>15} "
                f"{cell(r, 'time_s', '.3f'):>15}"
            )
        lines.append("")
    return "\n".join(lines)


def cmd_report(args):
    try:
        report = MetricsReport.read_csv(args.metrics_csv)
    except OSError as exc:
        raise ConfigError(f"cannot read {args.metrics_csv}: {exc}") from exc
    print(render_report(report))
    if args.out:
        _write_curves(report, Path(args.out) / "curves")
    return 0


def _parser():
    p = argparse.ArgumentParser(prog="astn", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic dose-pair dataset")
    g.add_argument("--config", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--force", action="store_true")
    g.set_defaults(fn=cmd_generate)

    r = sub.add_parser("run", help="execute the sweep and write metrics/curves")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--threads", type=int, default=1)
    r.set_defaults(fn=cmd_run)

    t = sub.add_parser("report", help="render a metrics CSV as a grouped table")
    t.add_argument("metrics_csv")
    t.add_argument("--out", default=None)
    t.set_defaults(fn=cmd_report)
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
