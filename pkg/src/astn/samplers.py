"""Reverse-process solvers sharing one step interface.

All solvers convert between noise prediction eps_hat and data prediction
x0_hat through the same identity, and the exponential-integrator steps are
parameterised by the half log-SNR lambda_t = 0.5*log(ab_t/(1-ab_t)). Writing
a_t = sqrt(ab_t), s_t = sqrt(1-ab_t) and h = lambda_u - lambda_t for a hop
t -> u, the update rules are:

  DDIM (eta):    x_u = a_u x0_hat + sqrt(1-ab_u-sig^2) eps_hat + sig z,
                 sig = eta sqrt((1-ab_u)/(1-ab_t)) sqrt(1-ab_t/ab_u)
  DDPM:          posterior mean of the generalised ancestral transition with
                 effective one-step beta 1-ab_t/ab_u, plus sqrt(btilde) z
  DPM-1:         x_u = (a_u/a_t) x_t - s_u (e^h - 1) eps_hat
  DPM-2:         midpoint rule: half-step in lambda, re-evaluate, apply the
                 first-order formula with the midpoint estimate
  DPM++(2M):     data-prediction multistep,
                 x_u = (s_u/s_t) x_t + a_u (1 - e^{-h}) D, with D linearly
                 extrapolated from the current and previous x0_hat
  UniPC-2:       the multistep predictor above plus a corrector that re-solves
                 the step including a fresh evaluation at the landing point
                 (B(h) = h variant)

The terminal hop to t = 0 always returns x0_hat, for every sampler.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from astn import _kernels as k
from astn.image import require_same_shape

__all__ = [
    "SAMPLER_KINDS",
    "SamplerSpec",
    "TrajectoryRecord",
    "MultistepState",
    "predict_x0",
    "ddpm_step",
    "ddim_step",
    "dpm_solver_1_step",
    "dpm_solver_2_step",
    "dpm_solver_pp_2m_step",
    "unipc_step",
    "run_sampler",
    "evaluations_per_run",
]

SAMPLER_KINDS = ("ddpm", "ddim", "dpm1", "dpm2", "dpmpp2m", "unipc2")

# predictor evaluations per internal hop; the terminal hop always costs one
_EVALS_PER_HOP = {"ddpm": 1, "ddim": 1, "dpm1": 1, "dpm2": 2, "dpmpp2m": 1, "unipc2": 2}


@dataclass(frozen=True)
class SamplerSpec:
    """Sampler kind, timestep grid, and DDIM stochasticity."""

    kind: str
    grid: object
    eta: float = 0.0

    def __post_init__(self):
        if self.kind not in SAMPLER_KINDS:
            raise ValueError(f"unknown sampler kind {self.kind!r}")
        if self.eta < 0.0:
            raise ValueError("eta must be >= 0")
        if self.eta > 0.0 and self.kind not in ("ddim", "ddpm"):
            raise ValueError(f"eta applies only to ddim/ddpm, not {self.kind!r}")
        if len(self.grid) == 0:
            raise ValueError("sampler grid is empty")


@dataclass
class TrajectoryRecord:
    """Optional (t, latent snapshot) pairs and per-step wall times."""

    snapshots: list = field(default_factory=list)
    step_times: list = field(default_factory=list)


@dataclass
class MultistepState:
    """One-slot history of (log-SNR, data prediction) for multistep solvers."""

    prev_log_snr: float = None
    prev_x0: np.ndarray = None


def predict_x0(x_t, t, eps_hat, sched):
    """Data prediction implied by a noise estimate: (x_t - s_t eps_hat)/a_t."""
    ab = sched.alpha_bar_at(t)
    a_t = math.sqrt(ab)
    return k.lincomb2(1.0 / a_t, x_t, -math.sqrt(1.0 - ab) / a_t, eps_hat)


def _check_hop(t, t_prev):
    if not t > t_prev >= 0:
        raise ValueError(f"reverse hop needs t > t_prev >= 0, got {t} -> {t_prev}")


def ddpm_step(x_t, t, t_prev, pred, cond, sched, rng):
    """Generalised ancestral transition from t to t_prev (noisy)."""
    _check_hop(t, t_prev)
    eps_hat = pred.predict(x_t, t, cond)
    x0_hat = predict_x0(x_t, t, eps_hat, sched)
    if t_prev == 0:
        return x0_hat
    ab_t, ab_u = sched.alpha_bar(t), sched.alpha_bar(t_prev)
    alpha_ratio = ab_t / ab_u
    beta_eff = 1.0 - alpha_ratio
    btilde = (1.0 - ab_u) / (1.0 - ab_t) * beta_eff
    c0 = math.sqrt(ab_u) * beta_eff / (1.0 - ab_t)
    ct = math.sqrt(alpha_ratio) * (1.0 - ab_u) / (1.0 - ab_t)
    mean = k.lincomb2(c0, x0_hat, ct, x_t)
    z = rng.standard_normal(x_t.shape)
    return k.lincomb2(1.0, mean, math.sqrt(btilde), z)


def ddim_step(x_t, t, t_prev, pred, cond, sched, eta=0.0, rng=None):
    """Non-Markovian DDIM transition; eta = 0 is the deterministic trajectory."""
    _check_hop(t, t_prev)
    eps_hat = pred.predict(x_t, t, cond)
    x0_hat = predict_x0(x_t, t, eps_hat, sched)
    if t_prev == 0:
        return x0_hat
    ab_t, ab_u = sched.alpha_bar(t), sched.alpha_bar(t_prev)
    sigma = eta * math.sqrt((1.0 - ab_u) / (1.0 - ab_t)) * math.sqrt(1.0 - ab_t / ab_u)
    resid = 1.0 - ab_u - sigma * sigma
    if resid < 0.0:
        raise ValueError(f"eta={eta} makes sigma^2 exceed 1 - alpha_bar at t_prev={t_prev}")
    out = k.lincomb2(math.sqrt(ab_u), x0_hat, math.sqrt(resid), eps_hat)
    if sigma > 0.0:
        if rng is None:
            raise ValueError("stochastic ddim step (eta > 0) needs an rng")
        out = k.lincomb2(1.0, out, sigma, rng.standard_normal(x_t.shape))
    return out


def dpm_solver_1_step(x_t, t, t_prev, pred, cond, sched):
    """First-order exponential-integrator step (identical to deterministic DDIM)."""
    _check_hop(t, t_prev)
    eps_hat = pred.predict(x_t, t, cond)
    if t_prev == 0:
        return predict_x0(x_t, t, eps_hat, sched)
    ab_t, ab_u = sched.alpha_bar(t), sched.alpha_bar(t_prev)
    h = sched.log_snr(t_prev) - sched.log_snr(t)
    return k.lincomb2(
        math.sqrt(ab_u / ab_t), x_t, -math.sqrt(1.0 - ab_u) * math.expm1(h), eps_hat
    )


def dpm_solver_2_step(x_t, t, t_prev, pred, cond, sched):
    """Single-step midpoint rule; two predictor evaluations, order 2 in h."""
    _check_hop(t, t_prev)
    eps_hat = pred.predict(x_t, t, cond)
    if t_prev == 0:
        return predict_x0(x_t, t, eps_hat, sched)
    lam_t, lam_u = sched.log_snr(t), sched.log_snr(t_prev)
    h = lam_u - lam_t
    # midpoint in log-SNR; the matching fractional timestep locates the
    # predictor evaluation between the two integer steps
    lam_mid = lam_t + 0.5 * h
    t_mid = _timestep_at_log_snr(lam_mid, t_prev, t, sched)
    ab_t = sched.alpha_bar(t)
    ab_mid = 1.0 / (1.0 + math.exp(-2.0 * lam_mid))
    x_mid = k.lincomb2(
        math.sqrt(ab_mid / ab_t), x_t, -math.sqrt(1.0 - ab_mid) * math.expm1(0.5 * h), eps_hat
    )
    eps_mid = pred.predict(x_mid, t_mid, cond)
    ab_u = sched.alpha_bar(t_prev)
    return k.lincomb2(
        math.sqrt(ab_u / ab_t), x_t, -math.sqrt(1.0 - ab_u) * math.expm1(h), eps_mid
    )


def _timestep_at_log_snr(lam, t_lo, t_hi, sched):
    """Fractional timestep in [t_lo, t_hi] whose interpolated log-SNR is lam."""
    lo, hi = float(t_lo), float(t_hi)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if sched.log_snr(mid) > lam:  # log-SNR decreases with t
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def dpm_solver_pp_2m_step(state, x_t, t, t_prev, pred, cond, sched):
    """Multistep second-order data-prediction step; first hop falls back to order 1."""
    _check_hop(t, t_prev)
    eps_hat = pred.predict(x_t, t, cond)
    x0_hat = predict_x0(x_t, t, eps_hat, sched)
    if t_prev == 0:
        return x0_hat
    lam_t, lam_u = sched.log_snr(t), sched.log_snr(t_prev)
    h = lam_u - lam_t
    if state.prev_x0 is None:
        d = x0_hat
    else:
        r0 = (state.prev_log_snr - lam_t) / h
        # linear extrapolation of the data prediction to the half step
        d = k.lincomb2(1.0 - 0.5 / r0, x0_hat, 0.5 / r0, state.prev_x0)
    ab_t, ab_u = sched.alpha_bar(t), sched.alpha_bar(t_prev)
    out = k.lincomb2(
        math.sqrt((1.0 - ab_u) / (1.0 - ab_t)), x_t, -math.sqrt(ab_u) * math.expm1(-h), d
    )
    state.prev_log_snr = lam_t
    state.prev_x0 = x0_hat
    return out


def unipc_step(state, x_t, t, t_prev, pred, cond, sched):
    """Order-2 predictor-corrector step (B(h) = h variant).

    The predictor is the multistep data-prediction update; the corrector
    re-solves the hop with the fresh evaluation at the predicted landing
    point folded in. Costs two predictor evaluations per internal hop.
    """
    _check_hop(t, t_prev)
    eps_hat = pred.predict(x_t, t, cond)
    m0 = predict_x0(x_t, t, eps_hat, sched)
    if t_prev == 0:
        return m0
    lam_t, lam_u = sched.log_snr(t), sched.log_snr(t_prev)
    h = lam_u - lam_t
    hh = -h
    h_phi_1 = math.expm1(hh)
    b_h = hh
    ab_t, ab_u = sched.alpha_bar(t), sched.alpha_bar(t_prev)
    sig_ratio = math.sqrt((1.0 - ab_u) / (1.0 - ab_t))
    a_u = math.sqrt(ab_u)

    have_hist = state.prev_x0 is not None
    if have_hist:
        r0 = (state.prev_log_snr - lam_t) / h
        d1_0 = (state.prev_x0 - m0) / r0
        x_pred = k.lincomb3(sig_ratio, x_t, -a_u * h_phi_1, m0, -a_u * b_h * 0.5, d1_0)
    else:
        x_pred = k.lincomb2(sig_ratio, x_t, -a_u * h_phi_1, m0)

    eps_land = pred.predict(x_pred, t_prev, cond)
    m_land = predict_x0(x_pred, t_prev, eps_land, sched)
    d1_t = m_land - m0

    if have_hist:
        # weights solve [[1, 1], [r0, 1]] rho = [b1, b2] for the bh1 quadrature
        phi_k = h_phi_1 / hh - 1.0
        b1 = phi_k * 1.0 / b_h
        phi_k = phi_k / hh - 0.5
        b2 = phi_k * 2.0 / b_h
        det = 1.0 - r0
        rho0 = (b1 - b2) / det
        rho1 = (b2 - r0 * b1) / det
        corr = k.lincomb2(rho0, d1_0, rho1, d1_t)
        out = k.lincomb3(sig_ratio, x_t, -a_u * h_phi_1, m0, -a_u * b_h, corr)
    else:
        out = k.lincomb3(sig_ratio, x_t, -a_u * h_phi_1, m0, -a_u * b_h * 0.5, d1_t)

    state.prev_log_snr = lam_t
    state.prev_x0 = m0
    return out


def run_sampler(spec, x_init, pred, cond, sched, rng=None, record=False):
    """Fold the step function for ``spec.kind`` over the grid plus a final hop to 0.

    Deterministic kinds never touch ``rng``; stochastic ones require it.
    Aborts with the offending timestep if a step produces non-finite values.

    Returns (final image, TrajectoryRecord); the record is empty unless
    ``record`` is set.
    """
    grid = spec.grid.steps
    if cond is not None:
        require_same_shape(x_init, cond, "latent and condition")
    x = np.asarray(x_init, dtype=np.float64)
    traj = TrajectoryRecord()
    state = MultistepState()
    hops = list(zip(grid[:-1], grid[1:])) + [(grid[-1], 0)]
    for t, u in hops:
        t0 = time.perf_counter()
        if spec.kind == "ddpm":
            if rng is None:
                raise ValueError("ddpm sampling needs an rng")
            x = ddpm_step(x, t, u, pred, cond, sched, rng)
        elif spec.kind == "ddim":
            x = ddim_step(x, t, u, pred, cond, sched, spec.eta, rng)
        elif spec.kind == "dpm1":
            x = dpm_solver_1_step(x, t, u, pred, cond, sched)
        elif spec.kind == "dpm2":
            x = dpm_solver_2_step(x, t, u, pred, cond, sched)
        elif spec.kind == "dpmpp2m":
            x = dpm_solver_pp_2m_step(state, x, t, u, pred, cond, sched)
        else:
            x = unipc_step(state, x, t, u, pred, cond, sched)
        if not np.isfinite(x).all():
            raise RuntimeError(f"{spec.kind} produced non-finite values stepping {t} -> {u}")
        if record:
            traj.step_times.append(time.perf_counter() - t0)
            traj.snapshots.append((u, x.copy()))
    return x, traj


def evaluations_per_run(kind, n_steps):
    """Exact predictor evaluation count for a grid of ``n_steps`` entries.

    Single-evaluation kinds cost one per hop (n_steps hops including the
    terminal one); two-evaluation kinds pay double on internal hops but the
    terminal hop is always a single evaluation: 2*n_steps - 1.
    """
    per_hop = _EVALS_PER_HOP[kind]
    if per_hop == 1:
        return n_steps
    return 2 * n_steps - 1
