"""Discrete noise schedule and reduced timestep grids.

The schedule stores beta_t, alpha_t = 1 - beta_t and the cumulative signal
retention alpha_bar_t = prod_{s<=t} alpha_s for t = 1..T, with the sentinel
alpha_bar_0 = 1 so that t = 0 uniformly means "clean data". Time grids for
few-step reverse sampling are strictly decreasing integer subsets of [1, T].
"""

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["NoiseSchedule", "TimestepGrid", "make_linear_schedule", "make_timestep_grid"]


@dataclass(frozen=True)
class NoiseSchedule:
    """Immutable beta/alpha/alpha_bar tables for ``T`` diffusion steps.

    ``alpha_bars`` has length T+1 with ``alpha_bars[0] = 1``; entry t is the
    product of the first t noise decay factors, strictly decreasing in t.
    """

    T: int
    betas: np.ndarray
    alphas: np.ndarray = field(repr=False)
    alpha_bars: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("schedule needs at least one step")
        if self.betas.shape != (self.T,):
            raise ValueError("betas must have length T")
        if not ((self.betas > 0.0) & (self.betas < 1.0)).all():
            raise ValueError("every beta must lie in (0, 1)")
        if self.alpha_bars.shape != (self.T + 1,):
            raise ValueError("alpha_bars must have length T+1")
        if self.alpha_bars[0] != 1.0 or self.alpha_bars[-1] <= 0.0:
            raise ValueError("alpha_bars must start at 1 and stay positive")
        if not (np.diff(self.alpha_bars) < 0.0).all():
            raise ValueError("alpha_bars must be strictly decreasing")

    def alpha_bar(self, t):
        """Cumulative signal retention at integer step t in [0, T]."""
        if not 0 <= t <= self.T:
            raise ValueError(f"timestep {t} outside [0, {self.T}]")
        return float(self.alpha_bars[int(t)])

    def log_snr(self, t):
        """Half log-SNR lambda_t = 0.5 * log(alpha_bar / (1 - alpha_bar)).

        Defined for t in [1, T] at integers and for fractional t by linear
        interpolation between the neighbouring integer steps (used by the
        midpoint solver; t = 0 has infinite SNR and is rejected).
        """
        if not 1 <= t <= self.T:
            raise ValueError(f"log-SNR needs t in [1, {self.T}], got {t}")
        lo = math.floor(t)
        ab_lo = float(self.alpha_bars[lo])
        lam_lo = 0.5 * math.log(ab_lo / (1.0 - ab_lo))
        if t == lo:
            return lam_lo
        ab_hi = float(self.alpha_bars[lo + 1])
        lam_hi = 0.5 * math.log(ab_hi / (1.0 - ab_hi))
        return lam_lo + (t - lo) * (lam_hi - lam_lo)

    def alpha_bar_at(self, t):
        """alpha_bar at a possibly fractional t in [1, T] (via log-SNR)."""
        if t == int(t):
            return self.alpha_bar(int(t))
        lam = self.log_snr(t)
        return 1.0 / (1.0 + math.exp(-2.0 * lam))


@dataclass(frozen=True)
class TimestepGrid:
    """Strictly decreasing reverse-process timesteps starting at ``origin``.

    The grid covers the visited steps in [1, origin]; the final hop to t = 0
    is implicit in the samplers.
    """

    steps: tuple
    origin: int

    def __post_init__(self):
        if len(self.steps) == 0:
            raise ValueError("empty timestep grid")
        if self.steps[0] != self.origin:
            raise ValueError("grid must start at its origin")
        arr = np.asarray(self.steps)
        if not (np.diff(arr) < 0).all():
            raise ValueError("grid steps must be strictly decreasing")
        if self.steps[-1] < 1:
            raise ValueError("grid steps must stay >= 1")

    def __len__(self):
        return len(self.steps)


def make_linear_schedule(T, beta_start=1e-4, beta_end=0.02):
    """Linearly interpolated betas from ``beta_start`` to ``beta_end``.

    The default 1e-4 .. 0.02 over T = 1000 is the conventional linear
    schedule for discrete-time diffusion.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError("need 0 < beta_start <= beta_end < 1")
    if T == 1:
        betas = np.array([beta_start], dtype=np.float64)
    else:
        betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alphas = 1.0 - betas
    alpha_bars = np.concatenate([[1.0], np.cumprod(alphas)])
    return NoiseSchedule(T=T, betas=betas, alphas=alphas, alpha_bars=alpha_bars)


def make_timestep_grid(origin, N, T, strategy="uniform"):
    """N timesteps evenly spaced from ``origin`` down to 1.

    Rounding collisions in sparse grids are repaired by shifting duplicates
    so the grid keeps exactly N strictly decreasing entries. ``origin = N``
    yields the dense grid {N, N-1, ..., 1} used by AST-n.
    """
    if strategy != "uniform":
        raise ValueError(f"unknown grid strategy {strategy!r}")
    if not 1 <= N <= origin <= T:
        raise ValueError(f"need 1 <= N <= origin <= T, got N={N} origin={origin} T={T}")
    raw = np.linspace(float(origin), 1.0, N)
    steps = np.floor(raw + 0.5).astype(np.int64)
    for i in range(1, N):
        if steps[i] >= steps[i - 1]:
            steps[i] = steps[i - 1] - 1
    for i in range(N - 2, -1, -1):
        if steps[i] <= steps[i + 1]:
            steps[i] = steps[i + 1] + 1
    if steps[0] != origin or steps[-1] < 1:
        raise AssertionError("grid repair failed; this is a bug")
    return TimestepGrid(steps=tuple(int(s) for s in steps), origin=origin)
