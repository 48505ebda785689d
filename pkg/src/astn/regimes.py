"""Sampling regimes: full-noise baseline, AST-n, and DDIM-inverted starts.

AST-n initiates reverse diffusion from an analytically noised intermediate
latent of the conditioning image: x_n = q_sample(low_dose, n, eps). At
inference no clean image exists, so the low-dose input both seeds the latent
and conditions every denoising step. The reverse process then runs the dense
grid {n, n-1, ..., 1}, so an AST-n run costs n sampler steps. The full-noise
baseline starts from x_T ~ N(0, I) on a reduced uniform grid, and the
inverted regime first maps the low-dose image to a latent with deterministic
DDIM inversion along the same grid it then samples back on.
"""

import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from astn.forward import q_sample
from astn.inversion import ddim_invert
from astn.metrics import MetricsReport, MetricsRow, psnr, rmse, ssim, timed
from astn.samplers import SamplerSpec, run_sampler
from astn.schedule import make_timestep_grid

__all__ = ["REGIMES", "RegimeSpec", "ast_n_latent", "reconstruct", "regime_sweep", "make_regime_spec"]

REGIMES = ("full", "ast", "inverted")


@dataclass(frozen=True)
class RegimeSpec:
    """Initialization regime plus the sampler that runs under it.

    ``n_or_N`` is the AST origin n (grid = dense from n) or the step budget N
    (grid = uniform from T) depending on the regime.
    """

    regime: str
    n_or_N: int
    sampler: SamplerSpec

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        grid = self.sampler.grid
        if self.regime == "ast":
            if grid.origin != self.n_or_N or len(grid) != self.n_or_N:
                raise ValueError(
                    f"AST-{self.n_or_N} needs the dense grid from {self.n_or_N}, "
                    f"got origin {grid.origin} with {len(grid)} steps"
                )
        elif len(grid) != self.n_or_N:
            raise ValueError(f"{self.regime} regime budget {self.n_or_N} != grid length {len(grid)}")


def make_regime_spec(regime, n_or_N, kind, sched, eta=0.0):
    """Build the RegimeSpec with the conventional grid for ``regime``."""
    if regime == "ast":
        grid = make_timestep_grid(n_or_N, n_or_N, sched.T)
    else:
        grid = make_timestep_grid(sched.T, n_or_N, sched.T)
    return RegimeSpec(regime=regime, n_or_N=n_or_N, sampler=SamplerSpec(kind=kind, grid=grid, eta=eta))


def ast_n_latent(input_image, n, sched, rng, eps=None):
    """Noised latent of the input at level n via the closed-form forward marginal.

    ``eps`` overrides the fresh standard-normal draw (testing hook).
    """
    if not 1 <= n <= sched.T:
        raise ValueError(f"AST origin {n} outside [1, {sched.T}]")
    if eps is None:
        eps = rng.standard_normal(input_image.shape)
    return q_sample(input_image, n, eps, sched)


def reconstruct(regime, low_dose, pred, sched, rng, record=False):
    """Run one reconstruction of ``low_dose`` under ``regime``.

    The low-dose image conditions every step (ignored by unconditional
    predictors). Returns (reconstruction, TrajectoryRecord).
    """
    spec = regime.sampler
    if regime.regime == "full":
        x_init = rng.standard_normal(low_dose.shape)
    elif regime.regime == "ast":
        x_init = ast_n_latent(low_dose, regime.n_or_N, sched, rng)
    else:
        x_init = ddim_invert(low_dose, pred, low_dose, sched, spec.grid, mode="predicted_x0")
    return run_sampler(spec, x_init, pred, low_dose, sched, rng=rng, record=record)


def _cell_seed(master_seed, cell_index, image_index):
    return np.random.SeedSequence((master_seed, cell_index, image_index))


def _warm_kernels():
    # first-call JIT compilation must not land in the first cell's timing
    from astn import _kernels as k
    from astn.metrics import _gaussian_window

    small = np.zeros((12, 12))
    k.lincomb2(1.0, small, 0.0, small)
    k.lincomb3(1.0, small, 0.0, small, 0.0, small)
    k.ssim_map(small, small, _gaussian_window(11, 1.5), 1e-4, 9e-4)


def regime_sweep(origins, samplers, dataset, pred, sched, master_seed,
                 regimes=("full", "ast"), eta=0.0, threads=1):
    """Cross product of (regime, sampler, origin/budget) over the dataset.

    ``pred`` is an EpsilonPredictor used for every pair, or a callable
    ``pair -> EpsilonPredictor`` for per-pair predictors. Each cell x image
    gets an independent PRNG stream derived from ``master_seed``; one
    MetricsRow per cell holds metrics and wall time averaged over images.
    Per-cell failures are recorded and the sweep continues.
    """
    cells = [
        (regime, kind, n)
        for regime in regimes
        for kind in samplers
        for n in origins
    ]
    factory = pred if callable(pred) else (lambda _pair: pred)
    report = MetricsReport()
    _warm_kernels()

    def run_cell(ci_cell):
        ci, (regime_name, kind, n) = ci_cell
        spec = make_regime_spec(regime_name, n, kind, sched, eta=eta)
        acc = {"psnr": 0.0, "rmse": 0.0, "ssim": 0.0, "time": 0.0}
        for ii, pair in enumerate(dataset):
            rng = np.random.default_rng(_cell_seed(master_seed, ci, ii))
            cell_pred = factory(pair)
            out, elapsed = timed(lambda: reconstruct(spec, pair.low_dose, cell_pred, sched, rng)[0])
            acc["psnr"] += psnr(pair.full_dose, out)
            acc["rmse"] += rmse(pair.full_dose, out)
            acc["ssim"] += ssim(pair.full_dose, out)
            acc["time"] += elapsed
        m = len(dataset)
        return MetricsRow(
            regime=regime_name,
            sampler=kind,
            steps=n,
            psnr_db=acc["psnr"] / m,
            rmse=acc["rmse"] / m,
            ssim=acc["ssim"] / m,
            time_s=acc["time"] / m,
            seed=master_seed,
        )

    def guarded(ci_cell):
        try:
            return ci_cell[1], run_cell(ci_cell), None
        except Exception as exc:  # cell failures must not kill the sweep
            return ci_cell[1], None, f"{type(exc).__name__}: {exc}"

    if not dataset:
        raise ValueError("empty dataset")
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(guarded, enumerate(cells)))
    else:
        results = [guarded(c) for c in enumerate(cells)]

    for cell, row, err in results:
        if err is None:
            report.rows.append(row)
        else:
            report.failures.append((cell, err))
            print(f"sweep cell {cell} failed: {err}", file=sys.stderr)
    return report
