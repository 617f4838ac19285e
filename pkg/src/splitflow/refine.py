"""Stage-2 detail refinement: score-distillation gradient against a trainable
regularizer, hinge adversarial losses with a small discriminator, and the
weighted total objective with alternating updates."""

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, backward_multi, stop_gradient
from .distill import isc_loss, boundary_loss, sample_interval
from .nn import AdamW, Mlp

# Frozen feature network seed; published so the perceptual distance is
# reproducible everywhere.
FEATURE_NET_SEED = 7151


@dataclass
class LossWeights:
    lambda1: float = 1.0    # interval-splitting consistency
    lambda2: float = 1.0    # reconstruction
    lambda3: float = 1.0    # score distillation
    lambda4: float = 0.5    # adversarial (generator side)

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3", "lambda4"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


class WeightSchedule:
    """Time weighting for the score-distillation gradient.

    "constant-1" is the neutral default; "custom table" interpolates a
    user-supplied (t, value) table linearly over [0, 1].
    """

    def __init__(self, name="constant-1", table=None):
        if name not in ("constant-1", "custom-table"):
            raise ValueError(f"unknown weight schedule {name!r}")
        self.name = name
        if name == "custom-table":
            if not table:
                raise ValueError("custom-table schedule needs a (t, value) table")
            ts, vs = zip(*sorted(table))
            if min(vs) < 0:
                raise ValueError("schedule values must be nonnegative")
            self.ts = np.asarray(ts, dtype=np.float64)
            self.vs = np.asarray(vs, dtype=np.float64)

    def __call__(self, t):
        if self.name == "constant-1":
            return 1.0
        return float(np.interp(t, self.ts, self.vs))


class FeatureNet:
    """Frozen randomly-initialized 2-layer feature map (perceptual-distance
    stand-in). Deterministic for a given input dimension."""

    def __init__(self, in_dim, feature_dim=32, seed=FEATURE_NET_SEED):
        rng = np.random.Generator(np.random.Philox(key=seed))
        self.net = Mlp([in_dim, 64, feature_dim], rng=rng)

    def __call__(self, x):
        return self.net.forward(x, detach_params=True)

    def features(self, x):
        """Plain-array evaluation for metric code."""
        return self(np.asarray(x, dtype=np.float32)).values


class Discriminator:
    """Small realness scorer: an MLP on raw 2D samples, or on block-averaged
    patch features for image tasks (`pool_from` is the flattened patch side)."""

    kind = "discriminator"

    def __init__(self, in_dim, hidden=64, rng=None, pool_from=None, pool_to=4):
        self.pool_from = pool_from
        self.pool_to = pool_to
        if pool_from is not None:
            if pool_from % pool_to != 0:
                raise ValueError("pooled side must divide the patch side")
            in_dim = pool_to * pool_to
        self.in_dim = in_dim
        self.net = Mlp([in_dim, hidden, hidden, 1], rng=rng)

    def score(self, x, detach_params=False):
        if not isinstance(x, Tensor):
            x = Tensor(x)
        if self.pool_from is not None:
            side, out = self.pool_from, self.pool_to
            f = side // out
            n = x.values.shape[0]
            x = x.reshape(n, out, f, out, f).mean(axis=(2, 4))
            x = x.reshape(n, out * out)
        return self.net.forward(x, detach_params=detach_params)

    __call__ = score

    def parameters(self):
        return self.net.parameters()

    def named_parameters(self):
        return self.net.named_parameters()


def gan_generator_loss(disc, fake_batch):
    """Negative mean discriminator score on generated samples.

    Discriminator parameters are treated as constants so the generator update
    never writes into their gradient accumulators.
    """
    scores = disc.score(fake_batch, detach_params=True)
    return -scores.mean()


def gan_discriminator_loss(disc, real_batch, fake_batch):
    """Hinge loss: E[max(0, 1-D(real))] + E[max(0, 1+D(fake))].

    The fake batch is detached; only discriminator parameters receive gradient.
    """
    real_scores = disc.score(stop_gradient(real_batch))
    fake_scores = disc.score(stop_gradient(fake_batch))
    real_term = (1.0 - real_scores).relu().mean()
    fake_term = (1.0 + fake_scores).relu().mean()
    return real_term + fake_term


def reconstruction_loss(x_hat, x, feature_net=None):
    """Pixel MSE plus feature-space MSE under a frozen feature map."""
    if not isinstance(x_hat, Tensor):
        x_hat = Tensor(x_hat)
    x = np.asarray(x.values if isinstance(x, Tensor) else x)
    if x_hat.values.shape != x.shape:
        raise ValueError(f"shape mismatch: {x_hat.values.shape} vs {x.shape}")
    target = Tensor(x.astype(x_hat.values.dtype))
    loss = (x_hat - target).square().mean()
    if feature_net is not None:
        f_hat = feature_net(x_hat)
        f_ref = stop_gradient(feature_net(target))
        loss = loss + (f_hat - f_ref).square().mean()
    return loss


def vsd_gradient(z_hat, teacher, regularizer, cond, schedule, rng,
                 t_bounds=(0.02, 0.98), guidance_scale=None, t=None, eps=None):
    """Score-distillation gradient with respect to the generated latent.

    Noises z_hat to a random time, evaluates the frozen teacher and the
    trainable regularizer there, and returns w(t) * (v_teacher - v_reg)
    carried back through the latent's (1-t) dependence. Returns (grad, t).
    """
    z_hat = np.asarray(z_hat.values if isinstance(z_hat, Tensor) else z_hat)
    if t is None:
        lo, hi = t_bounds
        t = lo + (hi - lo) * rng.random()
    if eps is None:
        eps = rng.standard_normal(z_hat.shape).astype(np.float32)
    z_t = (1.0 - t) * z_hat + t * np.asarray(eps)
    if guidance_scale is None:
        v_teacher = teacher.velocity(z_t, t, cond).values
    else:
        from .flow import cfg_velocity
        v_teacher = cfg_velocity(teacher, z_t, t, cond, guidance_scale).values
    v_reg = regularizer.velocity(z_t, t, cond).values
    weight = schedule(t) if schedule is not None else 1.0
    return ((1.0 - t) * weight * (v_teacher - v_reg)).astype(np.float32), t


def regularizer_loss(regularizer, z_hat_detached, cond, rng, t=None, eps=None):
    """Diffusion objective on detached student samples, updating only the
    regularizer: || v_reg(z_t, t) - (eps - z_hat) ||^2."""
    z_hat = np.asarray(
        z_hat_detached.values if isinstance(z_hat_detached, Tensor) else z_hat_detached)
    if t is None:
        t = rng.random()
    if eps is None:
        eps = rng.standard_normal(z_hat.shape).astype(np.float32)
    z_t = (1.0 - t) * z_hat + t * np.asarray(eps)
    pred = regularizer.velocity(z_t, t, cond)
    target = (np.asarray(eps) - z_hat).astype(pred.values.dtype)
    return (pred - Tensor(target)).square().mean()


@dataclass
class Stage2Config:
    weights: LossWeights = None
    iterations: int = 1000
    batch_size: int = 64
    learning_rate: float = 2e-4
    regularizer_lr: float = 2e-4
    discriminator_lr: float = 2e-4
    branch_probability: float = 0.6
    full_interval_probability: float = 0.25
    vsd_t_min: float = 0.02
    vsd_t_max: float = 0.98
    vsd_guidance_scale: float | None = None
    schedule: str = "constant-1"
    seed: int = 0
    log_every: int = 50

    def __post_init__(self):
        if self.weights is None:
            self.weights = LossWeights()


class Stage2Trainer:
    """Owns the three optimizer states and runs the fixed alternating update:
    student, then regularizer, then discriminator."""

    def __init__(self, student, teacher, regularizer, disc, config,
                 feature_net=None):
        self.student = student
        self.teacher = teacher
        self.regularizer = regularizer
        self.disc = disc
        self.config = config
        self.feature_net = feature_net
        self.schedule = WeightSchedule(config.schedule)
        self.opt_student = AdamW(student.named_parameters(),
                                 learning_rate=config.learning_rate)
        self.opt_reg = AdamW(regularizer.named_parameters(),
                             learning_rate=config.regularizer_lr)
        self.opt_disc = AdamW(disc.named_parameters(),
                              learning_rate=config.discriminator_lr)

    def step(self, x_batch, cond_batch, rng):
        return stage2_train_step(
            self.student, self.teacher, self.regularizer, self.disc,
            x_batch, cond_batch, self.config, rng,
            self.opt_student, self.opt_reg, self.opt_disc,
            feature_net=self.feature_net, schedule=self.schedule)


def stage2_train_step(student, teacher, regularizer, disc, x_batch, cond_batch,
                      config, rng, opt_student, opt_reg, opt_disc,
                      feature_net=None, schedule=None):
    """One alternating refinement step; returns the component-loss breakdown.

    (a) student: weighted splitting/boundary + reconstruction + generator
        hinge as a scalar loss, with the score-distillation gradient injected
        directly into the generated latent's backward seed;
    (b) regularizer: diffusion objective on detached student samples;
    (c) discriminator: hinge loss on real vs detached fake batches.
    """
    if schedule is None:
        schedule = WeightSchedule(config.schedule)
    weights = config.weights
    x = np.asarray(x_batch, dtype=np.float32)
    cond = np.asarray(cond_batch, dtype=np.float32)
    n = x.shape[0]

    # --- student sub-step -------------------------------------------------
    eps_gen = rng.standard_normal(x.shape).astype(np.float32)
    u_full = student.average_velocity(eps_gen, 0.0, 1.0, cond)
    z_hat = Tensor(eps_gen) - u_full

    interval = sample_interval(rng, config.full_interval_probability)
    q = rng.random()
    eps_isc = rng.standard_normal(x.shape).astype(np.float32)
    if q < config.branch_probability:
        t_isc = interval.t
        z_t = (1.0 - t_isc) * x + t_isc * eps_isc
        l_isc = isc_loss(student, z_t, interval, cond)
    else:
        t_b = rng.random()
        z_t = (1.0 - t_b) * x + t_b * eps_isc
        l_isc = boundary_loss(student, teacher, z_t, t_b, cond)

    l_rec = reconstruction_loss(z_hat, x, feature_net)
    l_gen = gan_generator_loss(disc, z_hat)
    vsd_grad, t_vsd = vsd_gradient(z_hat, teacher, regularizer, cond, schedule,
                                   rng, t_bounds=(config.vsd_t_min, config.vsd_t_max),
                                   guidance_scale=config.vsd_guidance_scale)

    breakdown = {
        "isc": float(l_isc.values),
        "rec": float(l_rec.values),
        "adv_g": float(l_gen.values),
        "vsd_grad_norm": float(np.linalg.norm(vsd_grad) / np.sqrt(n)),
    }
    for name in ("isc", "rec", "adv_g", "vsd_grad_norm"):
        if not np.isfinite(breakdown[name]):
            raise FloatingPointError(f"non-finite loss component {name!r}")

    scalar = l_isc * weights.lambda1 + l_rec * weights.lambda2 + l_gen * weights.lambda4
    opt_student.zero_grad()
    seeds = [(scalar, np.ones_like(scalar.values))]
    if weights.lambda3 != 0.0:
        seeds.append((z_hat, (weights.lambda3 / n) * vsd_grad))
    backward_multi(seeds)
    opt_student.step()
    opt_student.zero_grad()

    # --- regularizer sub-step ----------------------------------------------
    l_reg = regularizer_loss(regularizer, z_hat.values, cond, rng)
    breakdown["reg_diff"] = float(l_reg.values)
    if not np.isfinite(breakdown["reg_diff"]):
        raise FloatingPointError("non-finite loss component 'reg_diff'")
    opt_reg.zero_grad()
    l_reg.backward()
    opt_reg.step()
    opt_reg.zero_grad()

    # --- discriminator sub-step ----------------------------------------------
    l_disc = gan_discriminator_loss(disc, x, z_hat.values)
    breakdown["adv_d"] = float(l_disc.values)
    if not np.isfinite(breakdown["adv_d"]):
        raise FloatingPointError("non-finite loss component 'adv_d'")
    opt_disc.zero_grad()
    l_disc.backward()
    opt_disc.step()
    opt_disc.zero_grad()

    return breakdown
