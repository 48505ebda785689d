"""Closed-form forward diffusion and the noise-prediction training objective.

The forward marginal is q(x_t | x_0) = N(sqrt(ab_t) x_0, (1 - ab_t) I) with
ab_t the cumulative signal retention, so latents are sampled in one shot as

    x_t = sqrt(ab_t) * x_0 + sqrt(1 - ab_t) * eps,   eps ~ N(0, I).

Gaussian draws come from numpy's PCG64 generator (ziggurat normal transform);
every experiment records its seed.
"""

import math

from astn import _kernels as k
from astn.image import require_same_shape

__all__ = ["q_sample", "marginal_moments", "training_loss"]


def q_sample(x0, t, eps, sched):
    """Noised latent at step t from clean image ``x0`` and noise ``eps``."""
    require_same_shape(x0, eps, "x0 and eps")
    ab = sched.alpha_bar(t)
    return k.lincomb2(math.sqrt(ab), x0, math.sqrt(1.0 - ab), eps)


def marginal_moments(x0, t, sched):
    """Mean image and isotropic variance of q(x_t | x0)."""
    ab = sched.alpha_bar(t)
    return math.sqrt(ab) * x0, 1.0 - ab


def training_loss(pred, x0_batch, cond_batch, sched, rng):
    """Monte Carlo estimate of the expected squared noise-prediction error.

    For each batch item a timestep is drawn uniformly from [1, T] and a fresh
    standard-normal noise image is injected via ``q_sample``; the returned
    value is the squared error between predicted and injected noise, averaged
    over pixels and batch. Draw order per item is fixed: timestep, then noise.
    """
    if len(x0_batch) == 0:
        raise ValueError("empty training batch")
    if cond_batch is not None and len(cond_batch) != len(x0_batch):
        raise ValueError("condition batch length does not match image batch")
    total = 0.0
    for i, x0 in enumerate(x0_batch):
        t = int(rng.integers(1, sched.T + 1))
        eps = rng.standard_normal(x0.shape)
        x_t = q_sample(x0, t, eps, sched)
        cond = cond_batch[i] if cond_batch is not None else None
        eps_hat = pred.predict(x_t, t, cond)
        r = eps_hat - eps
        total += float((r * r).mean())
    return total / len(x0_batch)
