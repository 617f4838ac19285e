"""Stage-1 distillation: the dual-timestep average-velocity student, the
interval-splitting and boundary consistency losses, branch-sampled training,
and one-step noise-started sampling."""

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, concat, stop_gradient
from .flow import TeacherModel, _condition_array, cfg_velocity, time_embedding
from .nn import AdamW, Mlp


@dataclass
class Interval:
    """Triple r <= s <= t with mixing coefficient lambda = (t-s)/(t-r)."""
    r: float
    s: float
    t: float
    lam: float

    def __post_init__(self):
        if not (0.0 <= self.r <= self.s <= self.t <= 1.0):
            raise ValueError(f"interval ordering violated: r={self.r}, s={self.s}, t={self.t}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        expected_s = (1.0 - self.lam) * self.t + self.lam * self.r
        if abs(self.s - expected_s) > 1e-9:
            raise ValueError(f"s={self.s} inconsistent with lambda={self.lam}")


def sample_interval(rng, full_interval_probability=0.25):
    """Draw r <= t (two sorted uniforms, or the full [0,1] interval with the
    given probability) and a uniform lambda fixing the split point s."""
    if rng.random() < full_interval_probability:
        r, t = 0.0, 1.0
    else:
        a, b = rng.random(), rng.random()
        r, t = min(a, b), max(a, b)
    lam = rng.random()
    s = (1.0 - lam) * t + lam * r
    s = min(max(s, r), t)
    return Interval(r=r, s=s, t=t, lam=lam)


@dataclass
class Stage1Config:
    branch_probability: float = 0.6     # probability of the splitting-consistency branch
    guidance_scale: float | None = None
    iterations: int = 4000
    batch_size: int = 256
    learning_rate: float = 1e-3
    weight_decay: float = 0.0
    full_interval_probability: float = 0.25
    condition_dropout: float = 0.0
    seed: int = 0
    log_every: int = 100

    def __post_init__(self):
        if not 0.0 <= self.branch_probability <= 1.0:
            raise ValueError("branch_probability must lie in [0, 1]")


class StudentModel:
    """Average-velocity network conditioned on an interval (r, t).

    The two timestep embeddings pass through separate learned linear
    projections and are summed into one fused embedding before entering the
    trunk. When initialized from a teacher, the t-projection starts at the
    identity and the r-projection at zero, so the student reproduces the
    teacher's velocity for every (r, t) at initialization.
    """

    kind = "student"

    def __init__(self, state_dim, cond_dim, hidden_sizes=(128, 128),
                 time_embed_dim=16, rng=None):
        self.state_dim = state_dim
        self.cond_dim = cond_dim
        self.time_embed_dim = time_embed_dim
        in_dim = state_dim + time_embed_dim + cond_dim
        self.net = Mlp([in_dim, *hidden_sizes, state_dim], rng=rng)
        d = time_embed_dim
        self.proj_r = Tensor(np.zeros((d, d), dtype=np.float32))
        self.proj_t = Tensor(np.eye(d, dtype=np.float32))

    @classmethod
    def from_teacher(cls, teacher):
        student = cls.__new__(cls)
        student.state_dim = teacher.state_dim
        student.cond_dim = teacher.cond_dim
        student.time_embed_dim = teacher.time_embed_dim
        student.net = teacher.net.copy()
        d = teacher.time_embed_dim
        student.proj_r = Tensor(np.zeros((d, d), dtype=np.float32))
        student.proj_t = Tensor(np.eye(d, dtype=np.float32))
        return student

    def average_velocity(self, z, r, t, cond, detach_params=False):
        if not isinstance(z, Tensor):
            z = Tensor(z)
        batch = z.values.shape[0]
        dtype = z.values.dtype
        emb_r = Tensor(time_embedding(np.broadcast_to(np.asarray(r, dtype=np.float64), (batch,)),
                                      self.time_embed_dim, dtype=dtype))
        emb_t = Tensor(time_embedding(np.broadcast_to(np.asarray(t, dtype=np.float64), (batch,)),
                                      self.time_embed_dim, dtype=dtype))
        pr = stop_gradient(self.proj_r) if detach_params else self.proj_r
        pt = stop_gradient(self.proj_t) if detach_params else self.proj_t
        fused = emb_r @ pr + emb_t @ pt
        cond = _condition_array(cond, batch, self.cond_dim, dtype)
        inp = concat([z, fused, Tensor(cond)], axis=-1)
        return self.net.forward(inp, detach_params=detach_params)

    __call__ = average_velocity

    def parameters(self):
        return [self.proj_r, self.proj_t] + self.net.parameters()

    def named_parameters(self):
        return [("proj_r", self.proj_r), ("proj_t", self.proj_t)] + self.net.named_parameters()


def backward_integrate(z_t, s, t, u_field, cond=None):
    """One-jump backward state z_s = z_t - (t-s) * u(z_t, s, t).

    `u_field` is either a StudentModel or a plain callable (z, r, t) -> u.
    Operates on raw arrays; gradient never flows through this path because
    the splitting target sits wholly under stop-gradient.
    """
    if s > t:
        raise ValueError(f"backward integration requires s <= t, got s={s}, t={t}")
    z_t = np.asarray(z_t.values if isinstance(z_t, Tensor) else z_t)
    u = _eval_field(u_field, z_t, s, t, cond)
    return z_t - (t - s) * u


def _eval_field(u_field, z, r, t, cond):
    if isinstance(u_field, StudentModel):
        out = u_field.average_velocity(z, r, t, cond)
        return out.values
    out = u_field(z, r, t)
    return out.values if isinstance(out, Tensor) else np.asarray(out)


def isc_loss(student, z_t, interval, cond):
    """Interval-splitting consistency loss.

    The target -- the length-weighted combination of the two sub-interval
    predictions, with z_s obtained by backward integration -- is entirely
    detached; gradient flows only through the long-interval prediction.
    """
    r, s, t, lam = interval.r, interval.s, interval.t, interval.lam
    z_t_values = np.asarray(z_t.values if isinstance(z_t, Tensor) else z_t)
    u2 = _eval_field(student, z_t_values, s, t, cond)
    z_s = z_t_values - (t - s) * u2
    u1 = _eval_field(student, z_s, r, s, cond)
    target = (1.0 - lam) * u1 + lam * u2
    pred = student.average_velocity(Tensor(z_t_values), r, t, cond)
    diff = pred - Tensor(target.astype(pred.values.dtype))
    return diff.square().mean()


def boundary_loss(student, teacher, z_t, t, cond, w=None):
    """Degenerate-interval anchor: the student at (t, t) must match the
    teacher's instantaneous velocity (guided when `w` is set)."""
    z_t_values = np.asarray(z_t.values if isinstance(z_t, Tensor) else z_t)
    if w is None:
        target = teacher.velocity(z_t_values, t, cond).values
    else:
        target = cfg_velocity(teacher, z_t_values, t, cond, w).values
    pred = student.average_velocity(Tensor(z_t_values), t, t, cond)
    diff = pred - Tensor(target.astype(pred.values.dtype))
    return diff.square().mean()


def stage1_train_step(student, teacher, x_batch, cond_batch, config, rng, opt):
    """One branch-sampled training step.

    Samples an interval and q ~ U(0,1); q below the branch probability picks
    the splitting-consistency branch, otherwise the boundary branch at a
    sampled t with r=t. Returns (loss value, branch tag).
    """
    x = np.asarray(x_batch, dtype=np.float32)
    interval = sample_interval(rng, config.full_interval_probability)
    q = rng.random()
    eps = rng.standard_normal(x.shape).astype(np.float32)
    if q < config.branch_probability:
        branch = "splitting"
        t = interval.t
        z_t = (1.0 - t) * x + t * eps
        loss = isc_loss(student, z_t, interval, cond_batch)
    else:
        branch = "boundary"
        t = rng.random()
        z_t = (1.0 - t) * x + t * eps
        loss = boundary_loss(student, teacher, z_t, t, cond_batch,
                             w=config.guidance_scale)
    value = float(loss.values)
    if not np.isfinite(value):
        raise FloatingPointError(f"non-finite loss in {branch} branch")
    opt.zero_grad()
    loss.backward()
    opt.step()
    return value, branch


def train_student(teacher, x_data, cond_data, config, student=None):
    """Full stage-1 loop over a dataset; returns (student, records).

    Each record carries the iteration, loss, and branch tag; the branch
    fractions are the Algorithm-level accounting surfaced by diagnostics.
    """
    x_data = np.asarray(x_data, dtype=np.float32)
    cond_data = np.asarray(cond_data, dtype=np.float32)
    rng = np.random.Generator(np.random.Philox(key=config.seed))
    if student is None:
        student = StudentModel.from_teacher(teacher)
    opt = AdamW(student.named_parameters(), learning_rate=config.learning_rate,
                weight_decay=config.weight_decay)
    records = []
    for it in range(config.iterations):
        idx = rng.integers(0, x_data.shape[0], size=config.batch_size)
        cond = cond_data[idx].copy()
        if config.condition_dropout > 0.0:
            drop = rng.random(config.batch_size) < config.condition_dropout
            cond[drop] = 0.0
        value, branch = stage1_train_step(student, teacher, x_data[idx], cond,
                                          config, rng, opt)
        if it % config.log_every == 0 or it == config.iterations - 1:
            records.append({"iteration": it, "loss": value, "branch": branch})
    return student, records


def one_step_sample(student, eps, cond):
    """Single-evaluation generation: eps - u(eps, 0, 1, cond)."""
    eps = np.asarray(eps.values if isinstance(eps, Tensor) else eps)
    u = _eval_field(student, eps, 0.0, 1.0, cond)
    return eps - u


def multi_step_sample(student, eps, cond, k):
    """Chain the student's interval jumps over k equal sub-intervals of [0,1]."""
    if k < 1:
        raise ValueError("step count must be >= 1")
    z = np.asarray(eps.values if isinstance(eps, Tensor) else eps).copy()
    for i in range(k):
        t = 1.0 - i / k
        s = t - 1.0 / k
        s = 0.0 if i == k - 1 else s
        z = z - (t - s) * _eval_field(student, z, s, t, cond)
    return z


def isc_residual(field, z_t, interval, cond=None):
    """Absolute residual of the splitting identity for one interval:

    (t-r) u(z_t,r,t) - (s-r) u(z_s,r,s) - (t-s) u(z_t,s,t),
    with z_s obtained by backward integration from z_t (exact for fields that
    are true path averages). Returns the max over components.
    """
    r, s, t = interval.r, interval.s, interval.t
    z_t = np.asarray(z_t.values if isinstance(z_t, Tensor) else z_t)
    u_long = _eval_field(field, z_t, r, t, cond)
    u2 = _eval_field(field, z_t, s, t, cond)
    z_s = z_t - (t - s) * u2
    u1 = _eval_field(field, z_s, r, s, cond)
    residual = (t - r) * u_long - (s - r) * u1 - (t - s) * u2
    return float(np.max(np.abs(residual)))


def isc_residual_scan(field, n_trials, rng, state_dim=1, cond=None, state_scale=1.0):
    """Max absolute residual of the splitting identity over random intervals."""
    worst = 0.0
    for _ in range(n_trials):
        interval = sample_interval(rng, full_interval_probability=0.0)
        z_t = rng.standard_normal((1, state_dim)) * state_scale
        worst = max(worst, isc_residual(field, z_t, interval, cond))
    return worst
