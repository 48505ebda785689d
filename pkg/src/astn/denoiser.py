"""Conditioned noise predictors: analytic Gaussian oracles, a trainable
per-timestep affine model, and trivial stubs.

With toy data x_0 ~ N(m, s^2 I) the marginal of the noised latent is
x_t ~ N(sqrt(ab_t) m, (ab_t s^2 + 1 - ab_t) I) and the Bayes-optimal noise
estimate has the closed form

    E[eps | x_t] = sqrt(1 - ab_t) * (x_t - sqrt(ab_t) m) / (ab_t s^2 + 1 - ab_t),

which makes every downstream sampler claim checkable without a neural
network. Conditioning is modelled as a noisy observation c = x_0 + eta with
eta ~ N(0, noise_level^2 I); the conditional oracle simply swaps (m, s^2)
for the Gaussian posterior of x_0 given c.
"""

import math
import zlib
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from astn import _kernels as k
from astn.image import require_same_shape

__all__ = [
    "EpsilonPredictor",
    "GaussianDataModel",
    "GaussianOracle",
    "ConditionedGaussianOracle",
    "ZeroPredictor",
    "IdentityPredictor",
    "AffinePredictor",
    "analytic_gaussian_epsilon",
    "exact_noise_oracle",
    "conditioned_oracle",
    "train_affine_predictor",
]


class EpsilonPredictor(ABC):
    """Noise estimator eps_hat(x_t, t, c) with the same shape as x_t.

    ``t`` is an integer step in [1, T]; fractional t is accepted only for the
    midpoint evaluations of the second-order solver. Predictors declaring
    ``requires_condition`` must be called with a condition image.
    """

    requires_condition = False

    @abstractmethod
    def predict(self, x_t, t, cond=None):
        ...

    def _check_condition(self, x_t, cond):
        if self.requires_condition and cond is None:
            raise ValueError(f"{type(self).__name__} requires a condition image")
        if cond is not None:
            require_same_shape(x_t, cond, "latent and condition")


@dataclass(frozen=True)
class GaussianDataModel:
    """Isotropic Gaussian toy data x_0 ~ N(mean, var I)."""

    mean: np.ndarray
    var: float

    def __post_init__(self):
        if self.var < 0.0:
            raise ValueError("data variance must be >= 0")

    def sample(self, rng, n=1):
        if self.var == 0.0:
            return np.broadcast_to(self.mean, (n,) + self.mean.shape).copy()
        return self.mean + math.sqrt(self.var) * rng.standard_normal((n,) + self.mean.shape)


def analytic_gaussian_epsilon(model, x_t, t, sched):
    """Bayes-optimal noise estimate for Gaussian data (closed form above)."""
    ab = sched.alpha_bar_at(t)
    denom = ab * model.var + (1.0 - ab)
    coef = math.sqrt(1.0 - ab) / denom
    return k.lincomb2(coef, x_t, -coef * math.sqrt(ab), model.mean)


class GaussianOracle(EpsilonPredictor):
    """Predictor wrapper around :func:`analytic_gaussian_epsilon`."""

    def __init__(self, model, sched):
        self.model = model
        self.sched = sched

    def predict(self, x_t, t, cond=None):
        self._check_condition(x_t, cond)
        return analytic_gaussian_epsilon(self.model, x_t, t, self.sched)


def exact_noise_oracle(x0, sched):
    """Oracle that recovers exactly the noise that produced any q_sample(x0, t, eps).

    The var = 0 special case of the Gaussian oracle: eps_hat =
    (x_t - sqrt(ab_t) x0) / sqrt(1 - ab_t), the algebraic inverse of the
    forward closed form.
    """
    return GaussianOracle(GaussianDataModel(mean=np.asarray(x0, dtype=np.float64), var=0.0), sched)


class ConditionedGaussianOracle(EpsilonPredictor):
    """Exact conditional-mean predictor given the noisy observation c.

    The posterior of x_0 given c is Gaussian with precision-weighted moments

        post_var  = 1 / (1/s^2 + 1/noise_level^2)
        post_mean = post_var * (m/s^2 + c/noise_level^2)

    which are substituted into the unconditional closed form. noise_level = 0
    pins x_0 = c; noise_level = inf discards the condition.
    """

    requires_condition = True

    def __init__(self, model, noise_level, sched):
        if noise_level < 0.0:
            raise ValueError("condition noise level must be >= 0")
        self.model = model
        self.noise_level = noise_level
        self.sched = sched

    def _posterior(self, cond):
        m, s2 = self.model.mean, self.model.var
        nl2 = self.noise_level * self.noise_level
        if nl2 == 0.0:
            return cond, 0.0
        if not math.isfinite(nl2) or s2 == 0.0:
            return m, s2
        prec = 1.0 / s2 + 1.0 / nl2
        post_var = 1.0 / prec
        post_mean = k.lincomb2(post_var / s2, m, post_var / nl2, cond)
        return post_mean, post_var

    def predict(self, x_t, t, cond=None):
        self._check_condition(x_t, cond)
        post_mean, post_var = self._posterior(cond)
        ab = self.sched.alpha_bar_at(t)
        denom = ab * post_var + (1.0 - ab)
        coef = math.sqrt(1.0 - ab) / denom
        return k.lincomb2(coef, x_t, -coef * math.sqrt(ab), post_mean)


def conditioned_oracle(model, noise_level, sched):
    """Factory for :class:`ConditionedGaussianOracle`."""
    return ConditionedGaussianOracle(model, noise_level, sched)


class ZeroPredictor(EpsilonPredictor):
    """Always predicts zero noise."""

    def predict(self, x_t, t, cond=None):
        return np.zeros_like(x_t)


class IdentityPredictor(EpsilonPredictor):
    """Predicts the latent itself as the noise (debugging stub)."""

    def predict(self, x_t, t, cond=None):
        return x_t.copy()


class AffinePredictor(EpsilonPredictor):
    """Per-timestep affine noise model eps_hat = a_t * x_t + g_t * c + b_t.

    Scalars ``a_t`` and condition gains ``g_t`` plus per-pixel offset images
    ``b_t`` for t = 1..T (index 0 unused). Fractional evaluation timesteps
    round to the nearest table entry.
    """

    def __init__(self, a, g, b, conditional=False):
        a = np.asarray(a, dtype=np.float64)
        g = np.asarray(g, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if a.ndim != 1 or a.shape != g.shape or b.shape[0] != a.shape[0] or b.ndim != 3:
            raise ValueError("coefficient tables must be a,g: (T+1,), b: (T+1, h, w)")
        self.a = a
        self.g = g
        self.b = b
        self.conditional = conditional

    @property
    def requires_condition(self):
        return self.conditional

    @property
    def T(self):
        return self.a.shape[0] - 1

    @classmethod
    def initial(cls, T, shape, conditional=False):
        """Fresh predictor at the initialisation a_t = 1, g_t = 0, b_t = 0."""
        return cls(
            a=np.ones(T + 1),
            g=np.zeros(T + 1),
            b=np.zeros((T + 1,) + tuple(shape)),
            conditional=conditional,
        )

    def predict(self, x_t, t, cond=None):
        self._check_condition(x_t, cond)
        ti = int(math.floor(t + 0.5))
        if not 1 <= ti <= self.T:
            raise ValueError(f"timestep {t} outside trained range [1, {self.T}]")
        if self.conditional:
            return k.lincomb3(self.a[ti], x_t, self.g[ti], cond, 1.0, self.b[ti])
        return k.lincomb2(self.a[ti], x_t, 1.0, self.b[ti])

    # -- flat text serialization: one line per t: "t a_t g_t b-values... crc" --

    def save(self, path):
        h, w = self.b.shape[1], self.b.shape[2]
        with open(path, "w") as f:
            f.write(f"astn-affine 1 {self.T} {h} {w} {int(self.conditional)}\n")
            for t in range(1, self.T + 1):
                bvals = " ".join(repr(float(v)) for v in self.b[t].ravel())
                crc = zlib.crc32(self.b[t].tobytes()) & 0xFFFFFFFF
                f.write(f"{t} {float(self.a[t])!r} {float(self.g[t])!r} {bvals} {crc:08x}\n")

    @classmethod
    def load(cls, path):
        with open(path) as f:
            header = f.readline().split()
            if len(header) != 6 or header[0] != "astn-affine" or header[1] != "1":
                raise ValueError(f"{path}: not an affine predictor file")
            T, h, w, conditional = int(header[2]), int(header[3]), int(header[4]), bool(int(header[5]))
            a = np.ones(T + 1)
            g = np.zeros(T + 1)
            b = np.zeros((T + 1, h, w))
            for t in range(1, T + 1):
                parts = f.readline().split()
                if len(parts) != 4 + h * w or int(parts[0]) != t:
                    raise ValueError(f"{path}: malformed coefficient line for t={t}")
                a[t] = float(parts[1])
                g[t] = float(parts[2])
                b[t] = np.array([float(v) for v in parts[3:-1]]).reshape(h, w)
                crc = zlib.crc32(b[t].tobytes()) & 0xFFFFFFFF
                if f"{crc:08x}" != parts[-1]:
                    raise ValueError(f"{path}: offset checksum mismatch at t={t}")
        return cls(a=a, g=g, b=b, conditional=conditional)


def train_affine_predictor(
    data,
    cond_mode,
    sched,
    lr=0.3,
    iterations=30000,
    batch=16,
    rng=None,
    cond_noise=0.05,
    lr_final=None,
    timesteps=None,
):
    """Fit the affine family to the squared noise-prediction error by SGD.

    ``data`` is a :class:`GaussianDataModel` or a sequence of clean images to
    draw from. Each update targets one timestep with a minibatch of fresh
    (x_0, eps) draws; timesteps are visited in shuffled cycles so coverage is
    uniform, and the step size decays geometrically from ``lr`` to
    ``lr_final`` (default lr/30). Offset gradients are applied per pixel (no
    pixel averaging) so scalar and per-pixel parameters converge at matched
    rates. ``cond_mode='concat'`` trains the condition gain on c = x_0 +
    cond_noise * eta. ``timesteps`` restricts training to a subset of steps
    (experiments only exercise their grid). Raises RuntimeError if a cycle's
    mean loss exceeds 10x the first cycle's (or stops being finite).

    Returns the fitted :class:`AffinePredictor`; per-cycle mean losses are
    attached as ``predictor.loss_history``.
    """
    if cond_mode not in ("none", "concat"):
        raise ValueError(f"unknown cond_mode {cond_mode!r}")
    if iterations < 1 or lr < 0.0:
        raise ValueError("need iterations >= 1 and lr >= 0")
    rng = np.random.default_rng() if rng is None else rng
    if isinstance(data, GaussianDataModel):
        shape = data.mean.shape
        draw = lambda n: data.sample(rng, n)
    else:
        samples = np.asarray(data, dtype=np.float64)
        if samples.ndim != 3:
            raise ValueError("sample-set data must be a stack of images")
        shape = samples.shape[1:]
        draw = lambda n: samples[rng.integers(0, samples.shape[0], size=n)]

    conditional = cond_mode == "concat"
    pred = AffinePredictor.initial(sched.T, shape, conditional=conditional)
    if timesteps is None:
        t_pool = np.arange(1, sched.T + 1)
    else:
        t_pool = np.array(sorted(set(int(t) for t in timesteps)))
        if t_pool.size == 0 or t_pool[0] < 1 or t_pool[-1] > sched.T:
            raise ValueError("timesteps must be a non-empty subset of [1, T]")

    lr_final = lr / 30.0 if lr_final is None else lr_final
    sqrt_ab = np.sqrt(sched.alpha_bars)
    sqrt_1mab = np.sqrt(1.0 - sched.alpha_bars)

    loss_history = []
    it = 0
    cycle_sum, cycle_n = 0.0, 0
    while it < iterations:
        for t in rng.permutation(t_pool):
            if it >= iterations:
                break
            frac = it / max(iterations - 1, 1)
            step = lr * (lr_final / lr) ** frac if lr > 0.0 else 0.0
            x0 = draw(batch)
            eps = rng.standard_normal((batch,) + shape)
            x_t = sqrt_ab[t] * x0 + sqrt_1mab[t] * eps
            if conditional:
                cond = x0 + cond_noise * rng.standard_normal((batch,) + shape)
                r = pred.a[t] * x_t + pred.g[t] * cond + pred.b[t] - eps
            else:
                r = pred.a[t] * x_t + pred.b[t] - eps
            cycle_sum += float((r * r).mean())
            cycle_n += 1
            pred.a[t] -= step * 2.0 * float((r * x_t).mean())
            if conditional:
                pred.g[t] -= step * 2.0 * float((r * cond).mean())
            pred.b[t] -= step * 2.0 * r.mean(axis=0)
            it += 1
        cycle_mean = cycle_sum / max(cycle_n, 1)
        loss_history.append(cycle_mean)
        cycle_sum, cycle_n = 0.0, 0
        baseline = loss_history[0]
        if not math.isfinite(cycle_mean) or cycle_mean > 10.0 * max(baseline, 1e-12):
            raise RuntimeError(
                f"affine training diverged after {it} updates: cycle loss "
                f"{cycle_mean:.3g} exceeds 10x initial {baseline:.3g}"
            )

    pred.loss_history = loss_history
    return pred
