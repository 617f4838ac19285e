"""Flow-matching primitives: linear interpolation paths, velocity targets,
the teacher objective, ODE samplers, and guidance mixing.

Time convention throughout: t=1 is pure noise, t=0 is data. Samplers
integrate from t=1 down to t=0.
"""

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, concat
from .nn import AdamW, Mlp


def time_embedding(t, dim, dtype=np.float32):
    """Sinusoidal features of a time scalar or batch of times.

    Frequencies are geometrically spaced in [1, 64] so that both slow and
    fast variation over [0, 1] is resolvable.
    """
    if dim % 2 != 0:
        raise ValueError("time embedding dimension must be even")
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = 64.0 ** (np.arange(half) / max(half - 1, 1))
    angles = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=-1).astype(dtype)


def interpolate(x, eps, t):
    """Point on the linear noise-data path: (1-t)*x + t*eps."""
    tv = np.asarray(t.values if isinstance(t, Tensor) else t)
    if np.any(tv < 0.0) or np.any(tv > 1.0):
        raise ValueError(f"interpolation time must lie in [0, 1], got {tv}")
    if not isinstance(x, Tensor):
        x = Tensor(x)
    if not isinstance(eps, Tensor):
        eps = Tensor(eps)
    if tv.ndim == 1:
        tv = tv[:, None]
    tv = tv.astype(x.values.dtype)
    return x * (1.0 - tv) + eps * tv


def instantaneous_velocity(x, eps):
    """Time derivative of the linear path; constant in t."""
    if isinstance(x, Tensor) or isinstance(eps, Tensor):
        x = x if isinstance(x, Tensor) else Tensor(x)
        eps = eps if isinstance(eps, Tensor) else Tensor(eps)
        return eps - x
    return np.asarray(eps) - np.asarray(x)


@dataclass
class SamplerConfig:
    num_steps: int = 100
    scheme: str = "euler"
    guidance_scale: float | None = None

    def __post_init__(self):
        if self.num_steps < 1:
            raise ValueError("num_steps must be >= 1")
        if self.scheme not in ("euler", "midpoint"):
            raise ValueError(f"unknown scheme {self.scheme!r}")


class TeacherModel:
    """Velocity network over concatenated (state, time embedding, condition)."""

    kind = "teacher"

    def __init__(self, state_dim, cond_dim, hidden_sizes=(128, 128),
                 time_embed_dim=16, rng=None):
        self.state_dim = state_dim
        self.cond_dim = cond_dim
        self.time_embed_dim = time_embed_dim
        in_dim = state_dim + time_embed_dim + cond_dim
        self.net = Mlp([in_dim, *hidden_sizes, state_dim], rng=rng)

    def velocity(self, z, t, cond, detach_params=False):
        if not isinstance(z, Tensor):
            z = Tensor(z)
        batch = z.values.shape[0]
        emb = time_embedding(np.broadcast_to(np.asarray(t, dtype=np.float64), (batch,)),
                             self.time_embed_dim, dtype=z.values.dtype)
        cond = _condition_array(cond, batch, self.cond_dim, z.values.dtype)
        inp = concat([z, Tensor(emb), Tensor(cond)], axis=-1)
        return self.net.forward(inp, detach_params=detach_params)

    __call__ = velocity

    def parameters(self):
        return self.net.parameters()

    def named_parameters(self):
        return self.net.named_parameters()

    def copy(self):
        clone = TeacherModel.__new__(type(self))
        clone.state_dim = self.state_dim
        clone.cond_dim = self.cond_dim
        clone.time_embed_dim = self.time_embed_dim
        clone.net = self.net.copy()
        return clone


def _condition_array(cond, batch, cond_dim, dtype):
    """Accepts None (null condition), a ConditionVector, or an array."""
    if cond is None:
        return np.zeros((batch, cond_dim), dtype=dtype)
    values = getattr(cond, "values", cond)
    if isinstance(values, Tensor):
        values = values.values
    values = np.asarray(values, dtype=dtype)
    if values.ndim == 1:
        values = np.broadcast_to(values[None, :], (batch, cond_dim))
    return values


def fm_loss(model, x, eps, t, cond):
    """Mean over the batch of the squared velocity-prediction error."""
    x = np.asarray(x)
    if x.shape[0] == 0:
        raise ValueError("fm_loss requires a nonempty batch")
    z_t = interpolate(x, eps, t)
    pred = model.velocity(z_t, t, cond)
    target = np.asarray(eps) - x
    diff = pred - Tensor(target.astype(pred.values.dtype))
    return diff.square().mean()


def cfg_velocity(model, z, t, cond, w):
    """Classifier-free-guided velocity: w*v_cond + (1-w)*v_uncond."""
    v_cond = model.velocity(z, t, cond)
    v_uncond = model.velocity(z, t, None)
    return v_cond * w + v_uncond * (1.0 - w)


def ode_sample(field, z_start, config):
    """Integrate dz/dt = field(z, t) from t=1 down to t=0 with uniform steps.

    `field` maps (z: array, t: float) -> velocity array. Returns the final
    state and the list of visited states (including both endpoints).
    """
    z = np.array(z_start, dtype=np.float64 if np.asarray(z_start).dtype == np.float64
                 else np.float32, copy=True)
    n = config.num_steps
    dt = -1.0 / n
    trajectory = [z.copy()]
    for i in range(n):
        t = 1.0 + i * dt
        if config.scheme == "euler":
            z = z + dt * np.asarray(field(z, t))
        else:
            z_mid = z + 0.5 * dt * np.asarray(field(z, t))
            z = z + dt * np.asarray(field(z_mid, t + 0.5 * dt))
        if not np.all(np.isfinite(z)):
            raise FloatingPointError(f"non-finite state at integration step {i}")
        trajectory.append(z.copy())
    return z, trajectory


def model_field(model, cond, guidance_scale=None):
    """Wrap a velocity model as a plain (z, t) -> v field for the sampler."""

    def field(z, t):
        if guidance_scale is None:
            v = model.velocity(z, t, cond)
        else:
            v = cfg_velocity(model, z, t, cond, guidance_scale)
        return v.values

    return field


@dataclass
class TeacherTrainConfig:
    iterations: int = 4000
    batch_size: int = 256
    learning_rate: float = 1e-3
    weight_decay: float = 0.0
    condition_dropout: float = 0.2
    hidden_sizes: tuple = (128, 128)
    time_embed_dim: int = 16
    seed: int = 0
    log_every: int = 100


def train_teacher(x_data, cond_data, config, model=None):
    """Standard flow-matching training of the teacher.

    `x_data` is the clean sample array, `cond_data` the per-sample encoded
    condition array. The condition is dropped (zeroed) with probability
    `condition_dropout` to support classifier-free guidance downstream.
    Returns (model, loss_records) where each record is a dict.
    """
    x_data = np.asarray(x_data, dtype=np.float32)
    cond_data = np.asarray(cond_data, dtype=np.float32)
    if x_data.shape[0] == 0:
        raise ValueError("training dataset is empty")
    rng = np.random.Generator(np.random.Philox(key=config.seed))
    if model is None:
        model = TeacherModel(x_data.shape[1], cond_data.shape[1],
                             hidden_sizes=tuple(config.hidden_sizes),
                             time_embed_dim=config.time_embed_dim,
                             rng=np.random.Generator(np.random.Philox(key=config.seed + 1)))
    opt = AdamW(model.named_parameters(), learning_rate=config.learning_rate,
                weight_decay=config.weight_decay)
    records = []
    for it in range(config.iterations):
        idx = rng.integers(0, x_data.shape[0], size=config.batch_size)
        x = x_data[idx]
        cond = cond_data[idx].copy()
        drop = rng.random(config.batch_size) < config.condition_dropout
        cond[drop] = 0.0
        eps = rng.standard_normal(x.shape).astype(np.float32)
        t = rng.random(config.batch_size)
        loss = fm_loss(model, x, eps, t, cond)
        value = float(loss.values)
        if not np.isfinite(value):
            raise FloatingPointError(f"teacher training diverged at iteration {it}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        if it % config.log_every == 0 or it == config.iterations - 1:
            records.append({"iteration": it, "loss": value})
    return model, records
