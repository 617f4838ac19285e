"""Pipeline orchestration: train-teacher -> distill -> refine -> eval, with
checkpoint persistence, CSV reports, and optional SVG loss plots."""

import os

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import stage_seed
from .data import generate_dataset, DegradationParams, make_rng
from .distill import Stage1Config, StudentModel, one_step_sample, train_student
from .flow import TeacherTrainConfig, train_teacher
from .metrics import (feature_distance, metric_stability, psnr,
                      sliced_wasserstein)
from .refine import (Discriminator, FeatureNet, LossWeights, Stage2Config,
                     Stage2Trainer)

STAGES = ("teacher", "distill", "refine", "eval")

ARTIFACTS = {
    "teacher": ("teacher.ckpt", "losses_teacher.csv"),
    "distill": ("student_stage1.ckpt", "losses_stage1.csv"),
    "refine": ("student_stage2.ckpt", "regularizer.ckpt", "discriminator.ckpt",
               "losses_stage2.csv"),
    "eval": ("metrics.csv", "metrics_summary.csv"),
}


class PipelineError(RuntimeError):
    pass


def _format_value(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def emit_report(records, path, columns=None):
    """CSV with a header row, 6-significant-digit floats, stable column order."""
    if columns is None:
        columns = list(records[0].keys()) if records else []
    lines = [",".join(columns)]
    for rec in records:
        lines.append(",".join(_format_value(rec.get(c, "")) for c in columns))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def emit_svg_plot(records, x_key, y_key, path, width=640, height=320):
    """Pure-emission SVG polyline of a loss curve."""
    xs = [float(r[x_key]) for r in records]
    ys = [float(r[y_key]) for r in records]
    if not xs:
        xs, ys = [0.0], [0.0]
    x0, x1 = min(xs), max(xs) or 1.0
    y0, y1 = min(ys), max(ys)
    span_x = (x1 - x0) or 1.0
    span_y = (y1 - y0) or 1.0
    pts = " ".join(
        f"{40 + (x - x0) / span_x * (width - 60):.1f},"
        f"{height - 30 - (y - y0) / span_y * (height - 60):.1f}"
        for x, y in zip(xs, ys))
    svg = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">'
        f'<rect width="100%" height="100%" fill="white"/>'
        f'<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{pts}"/>'
        f'<text x="{width // 2}" y="{height - 8}" font-size="12" '
        f'text-anchor="middle">{x_key} vs {y_key}</text></svg>'
    )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(svg)


def _dataset_for(config, seed, size):
    degradation = None
    if config.dataset_name == "tiny-patches":
        degradation = DegradationParams(downsample_factor=config.degrade_factor,
                                        noise_std=config.degrade_noise_std)
    return generate_dataset(config.dataset_name, size, seed, degradation=degradation)


def _train_data(config):
    seed = stage_seed(config.seed, "dataset") + config.dataset_seed_offset
    ds = _dataset_for(config, seed, config.dataset_size)
    return ds.flat_x(), ds.cond_array()


def _eval_data(config):
    seed = stage_seed(config.seed, "eval-dataset") + config.dataset_seed_offset
    ds = _dataset_for(config, seed, config.eval_sample_count)
    return ds.flat_x(), ds.cond_array()


def _hidden_sizes(config):
    return tuple([config.model_hidden] * config.model_layers)


def run_pipeline(config, stages, force=False):
    """Execute the requested stages in canonical order; returns artifact paths.

    Each stage is skipped when its outputs already exist (unless `force`);
    a stage whose input checkpoint is missing raises a PipelineError naming
    the prior stage that would produce it.
    """
    unknown = set(stages) - set(STAGES)
    if unknown:
        raise PipelineError(f"unknown stages {sorted(unknown)}")
    os.makedirs(config.output_dir, exist_ok=True)
    produced = []

    def path(name):
        return os.path.join(config.output_dir, name)

    def done(stage):
        return all(os.path.exists(path(a)) for a in ARTIFACTS[stage])

    def require(ckpt, prior):
        if not os.path.exists(path(ckpt)):
            raise PipelineError(
                f"missing input checkpoint {ckpt!r}; run the {prior!r} stage first")

    fingerprint = config.fingerprint()

    for stage in STAGES:
        if stage not in stages:
            continue
        if done(stage) and not force:
            produced.extend(path(a) for a in ARTIFACTS[stage])
            continue
        if stage == "teacher":
            x, cond = _train_data(config)
            tc = TeacherTrainConfig(
                iterations=config.teacher_iterations,
                batch_size=config.teacher_batch_size,
                learning_rate=config.teacher_lr,
                weight_decay=config.teacher_weight_decay,
                condition_dropout=config.teacher_condition_dropout,
                hidden_sizes=_hidden_sizes(config),
                time_embed_dim=config.model_time_embed_dim,
                seed=stage_seed(config.seed, "teacher"))
            teacher, records = train_teacher(x, cond, tc)
            save_checkpoint(teacher, {"iteration": config.teacher_iterations,
                                      "config_fingerprint": fingerprint},
                            path("teacher.ckpt"))
            emit_report(records, path("losses_teacher.csv"),
                        columns=["iteration", "loss"])
            if config.emit_svg:
                emit_svg_plot(records, "iteration", "loss", path("losses_teacher.svg"))
        elif stage == "distill":
            require("teacher.ckpt", "teacher")
            teacher, _ = load_checkpoint(path("teacher.ckpt"))
            x, cond = _train_data(config)
            sc = Stage1Config(
                branch_probability=config.stage1_branch_probability,
                guidance_scale=config.stage1_guidance_scale,
                iterations=config.stage1_iterations,
                batch_size=config.stage1_batch_size,
                learning_rate=config.stage1_lr,
                full_interval_probability=config.stage1_full_interval_probability,
                condition_dropout=config.stage1_condition_dropout,
                seed=stage_seed(config.seed, "distill"))
            student, records = train_student(teacher, x, cond, sc)
            save_checkpoint(student, {"iteration": config.stage1_iterations,
                                      "config_fingerprint": fingerprint},
                            path("student_stage1.ckpt"))
            emit_report(records, path("losses_stage1.csv"),
                        columns=["iteration", "loss", "branch"])
            if config.emit_svg:
                emit_svg_plot(records, "iteration", "loss", path("losses_stage1.svg"))
        elif stage == "refine":
            require("teacher.ckpt", "teacher")
            require("student_stage1.ckpt", "distill")
            teacher, _ = load_checkpoint(path("teacher.ckpt"))
            student, _ = load_checkpoint(path("student_stage1.ckpt"))
            x, cond = _train_data(config)
            state_dim = x.shape[1]
            is_patches = config.dataset_name == "tiny-patches"
            rng = np.random.Generator(
                np.random.Philox(key=stage_seed(config.seed, "refine")))
            disc = Discriminator(
                state_dim,
                rng=np.random.Generator(
                    np.random.Philox(key=stage_seed(config.seed, "discriminator"))),
                pool_from=16 if is_patches else None)
            feature_net = FeatureNet(state_dim)
            regularizer = teacher.copy()
            s2 = Stage2Config(
                weights=LossWeights(config.stage2_lambda1, config.stage2_lambda2,
                                    config.stage2_lambda3, config.stage2_lambda4),
                iterations=config.stage2_iterations,
                batch_size=config.stage2_batch_size,
                learning_rate=config.stage2_lr,
                regularizer_lr=config.stage2_regularizer_lr,
                discriminator_lr=config.stage2_discriminator_lr,
                branch_probability=config.stage1_branch_probability,
                full_interval_probability=config.stage1_full_interval_probability,
                vsd_t_min=config.stage2_vsd_t_min,
                vsd_t_max=config.stage2_vsd_t_max,
                schedule=config.stage2_schedule,
                seed=stage_seed(config.seed, "refine"))
            trainer = Stage2Trainer(student, teacher, regularizer, disc, s2,
                                    feature_net=feature_net)
            records = []
            for it in range(s2.iterations):
                idx = rng.integers(0, x.shape[0], size=s2.batch_size)
                breakdown = trainer.step(x[idx], cond[idx], rng)
                if it % s2.log_every == 0 or it == s2.iterations - 1:
                    records.append({"iteration": it, **breakdown})
            save_checkpoint(student, {"iteration": s2.iterations,
                                      "config_fingerprint": fingerprint},
                            path("student_stage2.ckpt"))
            save_checkpoint(regularizer, {"role": "regularizer",
                                          "config_fingerprint": fingerprint},
                            path("regularizer.ckpt"))
            save_checkpoint(disc, {"config_fingerprint": fingerprint},
                            path("discriminator.ckpt"))
            emit_report(records, path("losses_stage2.csv"),
                        columns=["iteration", "isc", "rec", "adv_g",
                                 "vsd_grad_norm", "reg_diff", "adv_d"])
            if config.emit_svg:
                emit_svg_plot(records, "iteration", "rec", path("losses_stage2.svg"))
        elif stage == "eval":
            ckpt = "student_stage2.ckpt"
            if not os.path.exists(path(ckpt)):
                ckpt = "student_stage1.ckpt"
            require(ckpt, "distill")
            student, _ = load_checkpoint(path(ckpt))
            report = evaluate_student(student, config)
            emit_report(report.rows(), path("metrics.csv"),
                        columns=["metric", "seed", "value"])
            emit_report(report.summary_rows(), path("metrics_summary.csv"),
                        columns=["metric", "mean", "std"])
        produced.extend(path(a) for a in ARTIFACTS[stage])
    return produced


def evaluate_student(student, config):
    """Seed-stability report for a trained student on the configured task."""
    x_ref, cond_ref = _eval_data(config)
    is_patches = config.dataset_name == "tiny-patches"
    eval_seed_base = stage_seed(config.seed, "eval")

    def sample_fn(seed):
        eps = make_rng(eval_seed_base + seed).standard_normal(x_ref.shape)
        return one_step_sample(student, eps.astype(np.float32), cond_ref)

    if is_patches:
        feature_net = FeatureNet(x_ref.shape[1])
        metric_fns = {
            "psnr": lambda s, ref: psnr(s, ref),
            "feature_distance": lambda s, ref: feature_distance(feature_net, s, ref),
        }
    else:
        metric_fns = {
            "sliced_wasserstein": lambda s, ref: sliced_wasserstein(
                s, ref, n_projections=config.eval_n_projections,
                rng=make_rng(stage_seed(config.seed, "projections"))),
        }
    return metric_stability(sample_fn, x_ref, metric_fns,
                            n_seeds=config.eval_n_seeds,
                            config_fingerprint=config.fingerprint())
