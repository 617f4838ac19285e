"""Experiment configuration: a flat `key = value` file with a closed key set.

Unknown keys are hard errors; silent hyperparameter typos are the dominant
failure mode in reproduction work, so the parser refuses them outright.
"""

import hashlib
from dataclasses import dataclass, fields


def _opt_float(text):
    return None if text == "none" else float(text)


def _bool(text):
    if text in ("true", "false"):
        return text == "true"
    raise ValueError(f"expected true/false, got {text!r}")


@dataclass
class ExperimentConfig:
    # dataset
    dataset_name: str = "two-moons-conditional"
    dataset_size: int = 8192
    dataset_seed_offset: int = 0
    degrade_factor: int = 2
    degrade_noise_std: float = 0.02
    # model
    model_hidden: int = 128
    model_layers: int = 2
    model_time_embed_dim: int = 16
    # teacher stage
    teacher_iterations: int = 4000
    teacher_batch_size: int = 256
    teacher_lr: float = 1e-3
    teacher_weight_decay: float = 0.0
    teacher_condition_dropout: float = 0.2
    # stage 1 (distillation)
    stage1_iterations: int = 4000
    stage1_batch_size: int = 256
    stage1_lr: float = 1e-3
    stage1_branch_probability: float = 0.6
    stage1_guidance_scale: float | None = None
    stage1_full_interval_probability: float = 0.25
    stage1_condition_dropout: float = 0.0
    # stage 2 (refinement)
    stage2_iterations: int = 1000
    stage2_batch_size: int = 64
    stage2_lr: float = 2e-4
    stage2_regularizer_lr: float = 2e-4
    stage2_discriminator_lr: float = 2e-4
    stage2_lambda1: float = 1.0
    stage2_lambda2: float = 1.0
    stage2_lambda3: float = 1.0
    stage2_lambda4: float = 0.5
    stage2_vsd_t_min: float = 0.02
    stage2_vsd_t_max: float = 0.98
    stage2_schedule: str = "constant-1"
    # sampler
    sampler_steps: int = 100
    sampler_scheme: str = "euler"
    sampler_guidance_scale: float | None = None
    # evaluation
    eval_n_seeds: int = 20
    eval_sample_count: int = 2048
    eval_n_projections: int = 256
    # orchestration
    seed: int = 0
    output_dir: str = "runs/default"
    emit_svg: bool = False

    def fingerprint(self):
        """Stable hash of the canonical serialization."""
        text = "\n".join(f"{k} = {v}" for k, v in sorted(self.as_dict().items()))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]

    def as_dict(self):
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                v = "none"
            elif isinstance(v, bool):
                v = "true" if v else "false"
            out[f.name] = v
        return out


_PARSERS = {
    "dataset_name": str, "dataset_size": int, "dataset_seed_offset": int,
    "degrade_factor": int, "degrade_noise_std": float,
    "model_hidden": int, "model_layers": int, "model_time_embed_dim": int,
    "teacher_iterations": int, "teacher_batch_size": int, "teacher_lr": float,
    "teacher_weight_decay": float, "teacher_condition_dropout": float,
    "stage1_iterations": int, "stage1_batch_size": int, "stage1_lr": float,
    "stage1_branch_probability": float, "stage1_guidance_scale": _opt_float,
    "stage1_full_interval_probability": float, "stage1_condition_dropout": float,
    "stage2_iterations": int, "stage2_batch_size": int, "stage2_lr": float,
    "stage2_regularizer_lr": float, "stage2_discriminator_lr": float,
    "stage2_lambda1": float, "stage2_lambda2": float, "stage2_lambda3": float,
    "stage2_lambda4": float, "stage2_vsd_t_min": float, "stage2_vsd_t_max": float,
    "stage2_schedule": str,
    "sampler_steps": int, "sampler_scheme": str, "sampler_guidance_scale": _opt_float,
    "eval_n_seeds": int, "eval_sample_count": int, "eval_n_projections": int,
    "seed": int, "output_dir": str, "emit_svg": _bool,
}


class ConfigError(ValueError):
    pass


def parse_config(text, path="<string>"):
    """Parse `key = value` lines ('#' comments, blank lines allowed)."""
    config = ExperimentConfig()
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        seen.add(key)
        try:
            setattr(config, key, _PARSERS[key](value))
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from exc
    return config


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read(), path=str(path))


def dump_config(config):
    return "\n".join(f"{k} = {v}" for k, v in sorted(config.as_dict().items())) + "\n"


def stage_seed(master_seed, stage_name):
    """Derive a stable per-stage 64-bit seed from the master seed."""
    digest = hashlib.sha256(f"{master_seed}:{stage_name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")
