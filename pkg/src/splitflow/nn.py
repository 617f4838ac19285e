"""Feed-forward networks and a decoupled-weight-decay adaptive optimizer."""

import numpy as np

from .autodiff import Tensor, stop_gradient

ACTIVATIONS = {
    "silu": lambda x: x.silu(),
    "sigmoid": lambda x: x.sigmoid(),
    "relu": lambda x: x.relu(),
}


class Mlp:
    """Dense network: linear layers with a smooth nonlinearity between them.

    `layer_sizes` lists [in, hidden..., out]; the final layer is linear.
    Weights use fan-in-scaled uniform initialization from the given seeded rng,
    biases start at zero.
    """

    def __init__(self, layer_sizes, activation="silu", rng=None, dtype=np.float32):
        if len(layer_sizes) < 2:
            raise ValueError("layer_sizes needs at least an input and an output size")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.layer_sizes = list(layer_sizes)
        self.activation = activation
        if rng is None:
            rng = np.random.default_rng(0)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype)
            self.weights.append(Tensor(w))
            self.biases.append(Tensor(np.zeros(fan_out, dtype=dtype)))

    def forward(self, x, detach_params=False):
        if not isinstance(x, Tensor):
            x = Tensor(x)
        if x.values.shape[-1] != self.layer_sizes[0]:
            raise ValueError(
                f"layer 0 expects input size {self.layer_sizes[0]}, "
                f"got {x.values.shape[-1]}"
            )
        act = ACTIVATIONS[self.activation]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if detach_params:
                w, b = stop_gradient(w), stop_gradient(b)
            h = h @ w + b
            if i != last:
                h = act(h)
        return h

    __call__ = forward

    def parameters(self):
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend([w, b])
        return params

    def named_parameters(self):
        named = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            named.append((f"layer{i}.weight", w))
            named.append((f"layer{i}.bias", b))
        return named

    def param_count(self):
        return sum(p.values.size for p in self.parameters())

    def copy(self):
        clone = Mlp.__new__(Mlp)
        clone.layer_sizes = list(self.layer_sizes)
        clone.activation = self.activation
        clone.weights = [Tensor(w.values.copy()) for w in self.weights]
        clone.biases = [Tensor(b.values.copy()) for b in self.biases]
        return clone


class AdamW:
    """Adam with decoupled weight decay: decay is applied to the parameter
    directly, never through the moment estimates."""

    def __init__(self, named_params, learning_rate=5e-5, betas=(0.9, 0.999),
                 epsilon=1e-8, weight_decay=0.0):
        if isinstance(named_params, dict):
            named_params = list(named_params.items())
        named_params = [
            p if isinstance(p, tuple) else (f"param{i}", p)
            for i, p in enumerate(named_params)
        ]
        self.names = [n for n, _ in named_params]
        self.params = [p for _, p in named_params]
        self.learning_rate = learning_rate
        self.betas = betas
        self.epsilon = epsilon
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = [np.zeros_like(p.values) for p in self.params]
        self.v = [np.zeros_like(p.values) for p in self.params]

    def step(self):
        self.step_count += 1
        b1, b2 = self.betas
        bias1 = 1.0 - b1 ** self.step_count
        bias2 = 1.0 - b2 ** self.step_count
        for name, p, m, v in zip(self.names, self.params, self.m, self.v):
            g = p.grad if p.grad is not None else np.zeros_like(p.values)
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient in parameter {name!r}")
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * np.square(g)
            if self.weight_decay:
                p.values -= (self.learning_rate * self.weight_decay) * p.values
            m_hat = m / bias1
            v_hat = v / bias2
            p.values -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)

    def zero_grad(self):
        for p in self.params:
            p.grad = None
