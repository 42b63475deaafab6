"""End-to-end desk-scale experiments.

Builds the full pipeline on the synthetic corpus (mask estimator,
appearance codec, generator), produces controlled positives, and
measures how augmenting a tiny person classifier with them changes the
miss rate. The ablation harness swaps out one control axis at a time:
pose variety, learned mask, appearance source, or background input.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import synthetic
from .appearance import AppearanceEncoder, encode, freeze
from .compositing import composite
from .errors import DegenerateHull
from .evaluation import ScoredSample, miss_rate_at_fpr, score_images, train_classifier
from .generator import ConditionalGenerator, build_conditioning, generate
from .losses import LossWeights
from .mask_estimator import (
    MaskEstimatorState,
    convex_hull_mask,
    estimate_mask,
    train_mask_estimator,
)
from .pose_model import PoseModel, fit_pose_model
from .rng import rng_for, torch_seed_for
from .skeleton import NormalizedSkeleton, place_skeleton, render_heatmaps
from .training import GanTrainingConfig, train_gan

ABLATION_MODES = (
    "default",
    "fixed-pose",
    "hull-mask",
    "gaussian-appearance",
    "fixed-appearance",
    "fixed-background",
)


@dataclass
class PipelineArtifacts:
    pose_model: PoseModel
    mask_state: MaskEstimatorState
    encoder: AppearanceEncoder
    generator: ConditionalGenerator
    size: int
    heatmap_sigma: float


def build_mask_training_set(rng: np.random.Generator, n: int, size: int, sigma: float):
    """(heatmaps, analytic mask) pairs from the synthetic world."""
    pairs = []
    for _ in range(n):
        sample = synthetic.make_person_sample(rng, size)
        heat = render_heatmaps(sample["skeleton"], sigma)
        pairs.append((heat, sample["mask"]))
    return pairs


def build_vae_training_set(rng: np.random.Generator, n: int, size: int) -> np.ndarray:
    """Masked person crops: the person pixels on black."""
    crops = []
    for _ in range(n):
        sample = synthetic.make_person_sample(rng, size)
        crops.append(sample["mask"][..., None] * sample["image"])
    return np.stack(crops)


def build_pipeline(
    seed: int = 0,
    size: int = 64,
    pose_corpus: int = 600,
    mask_pairs: int = 220,
    vae_crops: int = 260,
    gan_samples: int = 240,
    mask_epochs: int = 25,
    vae_epochs: int = 30,
    gan_config: GanTrainingConfig | None = None,
    heatmap_sigma: float = 2.0,
    viewpoint_clusters: int = 6,
    mask_state: MaskEstimatorState | None = None,
    log_path=None,
) -> PipelineArtifacts:
    """Train every stage on synthetic corpora and return the artifacts."""
    pose_rng = rng_for(seed, "pose-corpus")
    skeletons = [
        synthetic.make_person_sample(pose_rng, size)["skeleton"] for _ in range(pose_corpus)
    ]
    pose_model = fit_pose_model(skeletons, viewpoint_clusters=viewpoint_clusters)

    if mask_state is None:
        mask_rng = rng_for(seed, "mask-data")
        mask_state = train_mask_estimator(
            build_mask_training_set(mask_rng, mask_pairs, size, heatmap_sigma),
            epochs=mask_epochs,
            seed=torch_seed_for(seed, "mask-train"),
        )

    vae_rng = rng_for(seed, "vae-data")
    encoder, _ = train_vae_stage(vae_rng, vae_crops, size, vae_epochs, torch_seed_for(seed, "vae-train"))

    gan_rng = rng_for(seed, "gan-data")
    samples = [synthetic.make_person_sample(gan_rng, size) for _ in range(gan_samples)]
    cfg = gan_config or GanTrainingConfig(seed=torch_seed_for(seed, "gan-train"))
    generator, _ = train_gan(samples, mask_state, encoder, cfg, log_path=log_path)

    return PipelineArtifacts(
        pose_model=pose_model,
        mask_state=mask_state,
        encoder=freeze(encoder),
        generator=generator,
        size=size,
        heatmap_sigma=heatmap_sigma,
    )


def train_vae_stage(rng, n_crops, size, epochs, seed):
    from .appearance import train_vae

    crops = build_vae_training_set(rng, n_crops, size)
    return train_vae(crops, epochs=epochs, seed=seed)


def _appearance_source(rng: np.random.Generator, size: int) -> np.ndarray:
    """Masked crop of a fresh synthetic person, the encoder's input."""
    sample = synthetic.make_person_sample(rng, size)
    return sample["mask"][..., None] * sample["image"]


def _mean_pose_skeleton(artifacts: PipelineArtifacts, cluster_index: int) -> NormalizedSkeleton:
    """The cluster's mean pose, the single pose of fixed-pose mode."""
    model = artifacts.pose_model.clusters[cluster_index]
    coords = model.mean.copy()
    vis = model.visibility_pattern
    coords[:17][~vis] = 0.0
    coords[17:][~vis] = 0.0
    return NormalizedSkeleton(coords=coords, source_visibility=vis.copy())


def generate_positive(
    artifacts: PipelineArtifacts,
    rng: np.random.Generator,
    mode: str = "default",
    fixed_z: np.ndarray | None = None,
    fixed_background: np.ndarray | None = None,
) -> np.ndarray:
    """One generated positive image under the chosen ablation mode."""
    size = artifacts.size
    if mode == "fixed-pose":
        pose = _mean_pose_skeleton(artifacts, 0)
    else:
        pose, _ = artifacts.pose_model.sample(rng)
    height_frac = rng.uniform(0.45, 0.85)
    anchor = (rng.uniform(0.3, 0.7) * size, rng.uniform(0.88, 0.97) * size)
    skeleton = place_skeleton(pose, (size, size), height_frac=height_frac, anchor=anchor)
    heat = render_heatmaps(skeleton, artifacts.heatmap_sigma)

    if mode == "hull-mask":
        try:
            mask = convex_hull_mask(skeleton, (size, size))
        except DegenerateHull:
            mask = estimate_mask(heat, artifacts.mask_state)
    else:
        mask = estimate_mask(heat, artifacts.mask_state)

    if mode == "gaussian-appearance":
        z = rng.standard_normal(16)
    elif mode == "fixed-appearance":
        z = fixed_z
    else:
        source = _appearance_source(rng, size)
        z = encode(source, artifacts.encoder, seed=int(rng.integers(2**31))).z

    target_bg = synthetic.random_background(rng, (size, size))
    if mode == "fixed-background":
        cond = build_conditioning(fixed_background, mask, heat)
        person = generate(z, cond, artifacts.generator)
        on_fixed = composite(mask, person, fixed_background)
        return composite(mask, on_fixed, target_bg)
    cond = build_conditioning(target_bg, mask, heat)
    person = generate(z, cond, artifacts.generator)
    return composite(mask, person, target_bg)


def generate_positives(
    artifacts: PipelineArtifacts,
    n: int,
    seed: int,
    mode: str = "default",
) -> np.ndarray:
    """A stack of generated positives for augmentation."""
    if mode not in ABLATION_MODES:
        raise ValueError(f"unknown mode {mode!r}; choose from {ABLATION_MODES}")
    rng = rng_for(seed, "generate", mode)
    fixed_z = None
    fixed_background = None
    if mode == "fixed-appearance":
        fixed_z = encode(_appearance_source(rng, artifacts.size), artifacts.encoder, seed=0).z
    if mode == "fixed-background":
        fixed_background = synthetic.random_background(rng, (artifacts.size, artifacts.size))
    out = [
        generate_positive(artifacts, rng, mode, fixed_z=fixed_z, fixed_background=fixed_background)
        for _ in range(n)
    ]
    return np.stack(out)


@dataclass
class ExperimentData:
    """Shared real data of the classifier task."""

    train_pos: np.ndarray
    train_neg: np.ndarray
    test_pos: np.ndarray
    test_neg: np.ndarray


def make_experiment_data(
    seed: int,
    size: int = 64,
    n_real_pos: int = 100,
    n_train_neg: int = 400,
    n_test_pos: int = 300,
    n_test_neg: int = 1200,
) -> ExperimentData:
    rng = rng_for(seed, "experiment-data")
    train_pos, train_neg = synthetic.toy_classification_data(rng, n_real_pos, n_train_neg, size)
    test_pos, test_neg = synthetic.toy_classification_data(rng, n_test_pos, n_test_neg, size)
    return ExperimentData(train_pos, train_neg, test_pos, test_neg)


def evaluate_classifier(model, data: ExperimentData, input_size: int) -> dict[str, float]:
    pos_scores = score_images(model, data.test_pos, input_size)
    neg_scores = score_images(model, data.test_neg, input_size)
    samples = [ScoredSample(float(s), True) for s in pos_scores] + [
        ScoredSample(float(s), False) for s in neg_scores
    ]
    return {
        "mr_at_1fpr": miss_rate_at_fpr(samples, 0.01),
        "mr_at_10fpr": miss_rate_at_fpr(samples, 0.10),
    }


def run_classifier_trial(
    data: ExperimentData,
    generated: np.ndarray | None,
    seed: int,
    epochs: int = 60,
    input_size: int = 64,
) -> dict[str, float]:
    """Train once (with optional augmentation) and report test miss rates."""
    if generated is not None and len(generated):
        pos = np.concatenate([data.train_pos, generated])
    else:
        pos = data.train_pos
    model = train_classifier(
        pos, data.train_neg, seed=seed, epochs=epochs, input_size=input_size
    )
    return evaluate_classifier(model, data, input_size)


def augmentation_experiment(
    artifacts: PipelineArtifacts,
    data: ExperimentData,
    n_generated: int = 200,
    runs: int = 5,
    seed: int = 0,
    epochs: int = 60,
    mode: str = "default",
) -> dict:
    """Mean baseline vs augmented miss rates over several classifier seeds."""
    generated = generate_positives(artifacts, n_generated, seed, mode)
    base, aug = [], []
    for run in range(runs):
        run_seed = torch_seed_for(seed, "classifier", mode, run)
        base.append(run_classifier_trial(data, None, run_seed, epochs))
        aug.append(run_classifier_trial(data, generated, run_seed, epochs))

    def mean(key, rows):
        return float(np.mean([r[key] for r in rows]))

    return {
        "mode": mode,
        "runs": runs,
        "n_generated": int(n_generated),
        "baseline": {k: mean(k, base) for k in ("mr_at_1fpr", "mr_at_10fpr")},
        "augmented": {k: mean(k, aug) for k in ("mr_at_1fpr", "mr_at_10fpr")},
    }


def ablation_report(
    artifacts: PipelineArtifacts,
    data: ExperimentData,
    modes: tuple[str, ...] = ABLATION_MODES,
    n_generated: int = 200,
    runs: int = 5,
    seed: int = 0,
    epochs: int = 60,
) -> dict:
    """Miss-rate table across ablation modes, sharing one baseline."""
    rows = {}
    baseline_rows = []
    for run in range(runs):
        run_seed = torch_seed_for(seed, "classifier", "baseline", run)
        baseline_rows.append(run_classifier_trial(data, None, run_seed, epochs))
    for mode in modes:
        generated = generate_positives(artifacts, n_generated, seed, mode)
        mode_rows = []
        for run in range(runs):
            run_seed = torch_seed_for(seed, "classifier", mode, run)
            mode_rows.append(run_classifier_trial(data, generated, run_seed, epochs))
        rows[mode] = {
            "mr_at_1fpr": float(np.mean([r["mr_at_1fpr"] for r in mode_rows])),
            "mr_at_10fpr": float(np.mean([r["mr_at_10fpr"] for r in mode_rows])),
        }
    return {
        "baseline": {
            "mr_at_1fpr": float(np.mean([r["mr_at_1fpr"] for r in baseline_rows])),
            "mr_at_10fpr": float(np.mean([r["mr_at_10fpr"] for r in baseline_rows])),
        },
        "modes": rows,
        "runs": runs,
        "n_generated": int(n_generated),
    }
