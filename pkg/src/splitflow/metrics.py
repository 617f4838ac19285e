"""Distributional and fidelity metrics plus the seed stability/diversity
protocols, at desk scale."""

from dataclasses import dataclass, field

import numpy as np

from .data import make_rng
from .distill import one_step_sample

DEFAULT_N_PROJECTIONS = 256
PROJECTION_SEED = 314159


def sliced_wasserstein(a, b, n_projections=DEFAULT_N_PROJECTIONS, rng=None):
    """Mean over random unit projections of the 1D 2-Wasserstein distance
    between the projected empirical distributions (sorted matching)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("point sets must be nonempty")
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if rng is None:
        rng = make_rng(PROJECTION_SEED)
    dim = a.shape[1]
    dirs = rng.standard_normal((dim, n_projections))
    dirs /= np.linalg.norm(dirs, axis=0, keepdims=True)
    pa = a @ dirs
    pb = b @ dirs
    pa.sort(axis=0)
    pb.sort(axis=0)
    if pa.shape[0] != pb.shape[0]:
        # different sample counts: compare matched quantiles on a common grid
        m = max(pa.shape[0], pb.shape[0])
        grid = (np.arange(m) + 0.5) / m
        pa = np.quantile(pa, grid, axis=0)
        pb = np.quantile(pb, grid, axis=0)
    w2 = np.sqrt(np.mean((pa - pb) ** 2, axis=0))
    return float(w2.mean())


def psnr(a, b, peak=1.0):
    """10*log10(peak^2 / MSE) in dB; identical inputs report +inf."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(peak * peak / mse)


def feature_distance(feature_net, a, b):
    """Mean squared distance in the frozen feature space (perceptual term)."""
    fa = feature_net.features(np.asarray(a, dtype=np.float32))
    fb = feature_net.features(np.asarray(b, dtype=np.float32))
    return float(np.mean((fa - fb) ** 2))


def seed_diversity(student, cond, seeds, sample_shape, feature_net=None):
    """Per-seed one-step samples under a fixed condition; distances taken to
    the first seed's output as reference.

    Returns (mean distance to reference over the remaining seeds, full
    pairwise distance matrix). Distance is the frozen-feature MSE when a
    feature net is given, plain MSE otherwise.
    """
    if len(seeds) < 2:
        raise ValueError("seed diversity needs at least 2 seeds")
    outputs = []
    for seed in seeds:
        eps = make_rng(seed).standard_normal(sample_shape).astype(np.float32)
        outputs.append(one_step_sample(student, eps, cond))

    def dist(u, v):
        if feature_net is not None:
            return feature_distance(feature_net, u, v)
        return float(np.mean((u - v) ** 2))

    k = len(outputs)
    matrix = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            matrix[i, j] = matrix[j, i] = dist(outputs[i], outputs[j])
    mean_to_ref = float(matrix[0, 1:].mean())
    return mean_to_ref, matrix


@dataclass
class MetricReport:
    """Per-metric mean and std across seeds."""
    metrics: dict = field(default_factory=dict)   # name -> (mean, std)
    values: dict = field(default_factory=dict)    # name -> [per-seed values]
    seeds: list = field(default_factory=list)
    sample_count: int = 0
    config_fingerprint: str = ""

    def rows(self):
        out = []
        for name in sorted(self.values):
            for seed, value in zip(self.seeds, self.values[name]):
                out.append({"metric": name, "seed": seed, "value": value})
        return out

    def summary_rows(self):
        return [{"metric": name, "mean": m, "std": s}
                for name, (m, s) in sorted(self.metrics.items())]


def metric_stability(sample_fn, reference, metric_fns, n_seeds=20, seeds=None,
                     config_fingerprint=""):
    """Evaluate metrics per seed and report mean and std.

    `sample_fn(seed)` generates one batch of samples; each entry of
    `metric_fns` maps (samples, reference) -> float.
    """
    if seeds is None:
        seeds = list(range(1, n_seeds + 1))
    if len(seeds) < 2:
        raise ValueError("stability protocol needs at least 2 seeds")
    values = {name: [] for name in metric_fns}
    count = 0
    for seed in seeds:
        samples = sample_fn(seed)
        count = len(samples)
        for name, fn in metric_fns.items():
            values[name].append(float(fn(samples, reference)))
    metrics = {name: (float(np.mean(v)), float(np.std(v)))
               for name, v in values.items()}
    return MetricReport(metrics=metrics, values=values, seeds=list(seeds),
                        sample_count=count, config_fingerprint=config_fingerprint)


def gradient_magnitudes(patches, side=16):
    """Pooled distribution of finite-difference gradient magnitudes over a
    patch batch; the high-frequency statistic compared via sliced_wasserstein."""
    p = np.asarray(patches, dtype=np.float64).reshape(-1, side, side)
    gx = np.diff(p, axis=2)
    gy = np.diff(p, axis=1)
    mags = np.concatenate([np.abs(gx).reshape(-1), np.abs(gy).reshape(-1)])
    return mags[:, None]
