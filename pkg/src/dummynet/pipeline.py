"""Pipeline stages behind the CLI: train, sample, augment, evaluate.

Each stage writes its artifacts plus a manifest recording the config
hash, the seed, and content hashes of its input artifacts. Rerunning a
stage whose manifest matches is a no-op, which makes the pipeline
restartable after interruption.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from . import appearance, critic as critic_mod, generator as generator_mod, mask_estimator, synthetic
from .config import config_hash, file_hash
from .errors import MissingArtifact
from .evaluation import ScoredSample, metrics_report, roc_sweep, score_images, train_classifier
from .experiment import (
    ABLATION_MODES,
    PipelineArtifacts,
    ablation_report,
    augmentation_experiment,
    build_mask_training_set,
    build_vae_training_set,
    generate_positives,
    make_experiment_data,
)
from .losses import LossWeights
from .mask_estimator import save_mask_png
from .placement import fit_height_model, insert_person, propose_placement
from .pose_model import PoseModel, fit_pose_model
from .rng import rng_for, torch_seed_for
from .skeleton import place_skeleton, render_heatmaps
from .training import GanTrainingConfig, train_gan

STAGES = ("fit-poses", "train-mask", "train-vae", "train-gan", "sample", "augment", "eval", "ablate")


class StageRunner:
    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.out_dir = Path(cfg["run"]["out_dir"])
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.seed = int(cfg["run"]["seed"])
        if cfg["run"]["single_thread"]:
            torch.set_num_threads(1)

    # -- manifest helpers -------------------------------------------------
    def _manifest_path(self, stage: str) -> Path:
        return self.out_dir / f"{stage}.manifest.json"

    def _inputs_fingerprint(self, inputs: list[Path]) -> dict[str, str]:
        return {str(p): file_hash(p) for p in inputs}

    def is_up_to_date(self, stage: str, inputs: list[Path]) -> bool:
        path = self._manifest_path(stage)
        if not path.exists():
            return False
        manifest = json.loads(path.read_text())
        if manifest.get("config_hash") != config_hash(self.cfg):
            return False
        if manifest.get("seed") != self.seed:
            return False
        if manifest.get("input_hashes") != self._inputs_fingerprint(inputs):
            return False
        return all(Path(p).exists() for p in manifest.get("outputs", []))

    def write_manifest(self, stage: str, inputs: list[Path], outputs: list[Path]) -> None:
        manifest = {
            "stage": stage,
            "config_hash": config_hash(self.cfg),
            "seed": self.seed,
            "input_hashes": self._inputs_fingerprint(inputs),
            "outputs": [str(p) for p in outputs],
        }
        self._manifest_path(stage).write_text(json.dumps(manifest, indent=2, sort_keys=True))

    def require(self, *names: str) -> list[Path]:
        paths = []
        for name in names:
            p = self.out_dir / name
            if not p.exists():
                raise MissingArtifact(f"missing artifact {p}; run the producing stage first")
            paths.append(p)
        return paths

    # -- stages ------------------------------------------------------------
    def fit_poses(self) -> Path:
        out = self.out_dir / "pose_model.npz"
        if self.is_up_to_date("fit-poses", []):
            return out
        cfg = self.cfg
        rng = rng_for(self.seed, "pose-corpus")
        size = int(cfg["data"]["size"])
        skeletons = [
            synthetic.make_person_sample(rng, size)["skeleton"]
            for _ in range(int(cfg["data"]["pose_corpus"]))
        ]
        model = fit_pose_model(
            skeletons,
            viewpoint_clusters=int(cfg["pose"]["viewpoint_clusters"]),
            pose_clusters_per_viewpoint=int(cfg["pose"]["pose_clusters"]) or None,
            threshold=float(cfg["pose"]["birch_threshold"]),
            branching_factor=int(cfg["pose"]["birch_branching"]),
        )
        model.save(out)
        self.write_manifest("fit-poses", [], [out])
        return out

    def train_mask(self) -> Path:
        out = self.out_dir / "mask.pt"
        if self.is_up_to_date("train-mask", []):
            return out
        cfg = self.cfg
        rng = rng_for(self.seed, "mask-data")
        pairs = build_mask_training_set(
            rng, int(cfg["data"]["mask_pairs"]), int(cfg["data"]["size"]), float(cfg["pose"]["heatmap_sigma"])
        )
        state = mask_estimator.train_mask_estimator(
            pairs,
            epochs=int(cfg["mask"]["epochs"]),
            lr=float(cfg["mask"]["lr"]),
            batch_size=int(cfg["mask"]["batch_size"]),
            base_width=int(cfg["mask"]["base_width"]),
            seed=torch_seed_for(self.seed, "mask-train"),
        )
        mask_estimator.save_checkpoint(state, out, base_width=int(cfg["mask"]["base_width"]))
        self.write_manifest("train-mask", [], [out])
        return out

    def train_vae(self) -> Path:
        out = self.out_dir / "vae.pt"
        if self.is_up_to_date("train-vae", []):
            return out
        cfg = self.cfg
        rng = rng_for(self.seed, "vae-data")
        brightness = float(cfg["data"]["max_brightness"])
        crops = build_vae_training_set(rng, int(cfg["data"]["vae_crops"]), int(cfg["data"]["size"]))
        if brightness < 1.0:
            keep = np.array([c.mean() <= brightness for c in crops])
            if keep.any():
                crops = crops[keep]
        encoder, decoder = appearance.train_vae(
            crops,
            epochs=int(cfg["vae"]["epochs"]),
            lr=float(cfg["vae"]["lr"]),
            batch_size=int(cfg["vae"]["batch_size"]),
            beta=float(cfg["vae"]["beta"]),
            seed=torch_seed_for(self.seed, "vae-train"),
        )
        appearance.save_checkpoint(encoder, decoder, out)
        self.write_manifest("train-vae", [], [out])
        return out

    def _gan_config(self) -> GanTrainingConfig:
        g = self.cfg["gan"]
        return GanTrainingConfig(
            n_blocks=int(g["n_blocks"]),
            base_width=int(g["base_width"]),
            critic_width=int(g["critic_width"]),
            stage_steps=tuple(g["stage_steps"]),
            fade_steps=int(g["fade_steps"]),
            batch_size=int(g["batch_size"]),
            critic_iters=int(g["critic_iters"]),
            lr=float(g["lr"]),
            heatmap_sigma=float(self.cfg["pose"]["heatmap_sigma"]),
            weights=LossWeights(
                lambda1=float(g["lambda1"]),
                lambda2=float(g["lambda2"]),
                lambda3=float(g["lambda3"]),
                lambda4=float(g["lambda4"]),
                gp_weight=float(g["gp_weight"]),
            ),
            seed=torch_seed_for(self.seed, "gan-train"),
        )

    def train_gan(self) -> Path:
        inputs = self.require("mask.pt", "vae.pt")
        out = self.out_dir / "gan.pt"
        critic_out = self.out_dir / "critic.pt"
        if self.is_up_to_date("train-gan", inputs):
            return out
        mask_state = mask_estimator.load_checkpoint(inputs[0])
        encoder, _ = appearance.load_checkpoint(inputs[1])
        rng = rng_for(self.seed, "gan-data")
        size = int(self.cfg["data"]["size"])
        samples = [
            synthetic.make_person_sample(rng, size)
            for _ in range(int(self.cfg["data"]["gan_samples"]))
        ]
        gen, critic = train_gan(
            samples, mask_state, encoder, self._gan_config(), log_path=self.out_dir / "gan_log.csv"
        )
        generator_mod.save_checkpoint(gen, out)
        critic_mod.save_checkpoint(critic, critic_out, base_width=int(self.cfg["gan"]["critic_width"]))
        self.write_manifest("train-gan", inputs, [out, critic_out, self.out_dir / "gan_log.csv"])
        return out

    def load_artifacts(self) -> PipelineArtifacts:
        pose_p, mask_p, vae_p, gan_p = self.require("pose_model.npz", "mask.pt", "vae.pt", "gan.pt")
        encoder, _ = appearance.load_checkpoint(vae_p)
        return PipelineArtifacts(
            pose_model=PoseModel.load(pose_p),
            mask_state=mask_estimator.load_checkpoint(mask_p),
            encoder=appearance.freeze(encoder),
            generator=generator_mod.load_checkpoint(gan_p),
            size=int(self.cfg["data"]["size"]),
            heatmap_sigma=float(self.cfg["pose"]["heatmap_sigma"]),
        )

    def sample(self, n: int = 8) -> Path:
        inputs = self.require("pose_model.npz", "mask.pt")
        out = self.out_dir / "samples"
        if self.is_up_to_date("sample", inputs):
            return out
        out.mkdir(exist_ok=True)
        model = PoseModel.load(inputs[0])
        mask_state = mask_estimator.load_checkpoint(inputs[1])
        rng = rng_for(self.seed, "sample")
        size = int(self.cfg["data"]["size"])
        sigma = float(self.cfg["pose"]["heatmap_sigma"])
        outputs = []
        records = []
        for i in range(n):
            pose, cluster = model.sample(rng)
            skeleton = place_skeleton(pose, (size, size))
            heat = render_heatmaps(skeleton, sigma)
            mask = mask_estimator.estimate_mask(heat, mask_state)
            path = out / f"mask_{i:03d}.png"
            save_mask_png(mask, path)
            outputs.append(path)
            records.append(
                {
                    "index": i,
                    "pose_cluster": int(cluster),
                    "keypoints": skeleton.keypoints.round(2).tolist(),
                    "visibility": skeleton.visibility.tolist(),
                }
            )
        meta = out / "samples.json"
        meta.write_text(json.dumps(records, indent=2))
        outputs.append(meta)
        self.write_manifest("sample", inputs, outputs)
        return out

    def augment(self) -> Path:
        inputs = self.require("pose_model.npz", "mask.pt", "vae.pt", "gan.pt")
        out = self.out_dir / "augmented"
        manifest_path = out / "manifest.jsonl"
        if self.is_up_to_date("augment", inputs):
            return manifest_path
        out.mkdir(exist_ok=True)
        artifacts = self.load_artifacts()
        cfg = self.cfg["augment"]
        rng = rng_for(self.seed, "augment")
        scene_rng = rng_for(self.seed, "augment-scenes")
        n_scenes = int(cfg["scenes"])
        outputs = []
        from PIL import Image

        with open(manifest_path, "w", encoding="utf-8") as fh:
            produced = 0
            for scene_idx in range(n_scenes):
                if produced >= int(cfg["n_samples"]):
                    break
                scene = synthetic.make_scene(scene_rng)
                height_model = fit_height_model(
                    synthetic.height_samples_for_scene(scene, scene_rng)
                )
                try:
                    placement = propose_placement(
                        scene,
                        height_model,
                        rng,
                        attempts=int(cfg["attempts"]),
                        neighborhood_scale=float(cfg["neighborhood_scale"]),
                    )
                except Exception:
                    continue
                patch = generate_positives(artifacts, 1, int(rng.integers(2**31)))[0]
                pose, cluster = artifacts.pose_model.sample(rng)
                skeleton = place_skeleton(pose, (artifacts.size, artifacts.size))
                heat = render_heatmaps(skeleton, artifacts.heatmap_sigma)
                patch_mask = mask_estimator.estimate_mask(heat, artifacts.mask_state)
                try:
                    augmented, box = insert_person(scene, patch, patch_mask, placement)
                except Exception:
                    continue
                out_path = out / f"scene_{scene_idx:04d}.png"
                Image.fromarray((np.clip(augmented, 0, 1) * 255).astype(np.uint8)).save(out_path)
                record = {
                    "scene_path": f"synthetic://scene/{scene_idx}",
                    "placement": [placement.x, placement.y_bottom, placement.height],
                    "pose_cluster_id": int(cluster),
                    "appearance_source": "encoded",
                    "seed": self.seed,
                    "out_path": str(out_path),
                    "box": list(box),
                }
                fh.write(json.dumps(record) + "\n")
                outputs.append(out_path)
                produced += 1
        outputs.append(manifest_path)
        self.write_manifest("augment", inputs, outputs)
        return manifest_path

    def evaluate(self) -> Path:
        inputs = self.require("pose_model.npz", "mask.pt", "vae.pt", "gan.pt")
        out = self.out_dir / "metrics.json"
        if self.is_up_to_date("eval", inputs):
            return out
        artifacts = self.load_artifacts()
        e = self.cfg["eval"]
        data = make_experiment_data(
            self.seed,
            size=int(self.cfg["data"]["size"]),
            n_real_pos=int(e["real_pos"]),
            n_train_neg=int(e["train_neg"]),
            n_test_pos=int(e["test_pos"]),
            n_test_neg=int(e["test_neg"]),
        )
        result = augmentation_experiment(
            artifacts,
            data,
            n_generated=int(e["generated_pos"]),
            runs=int(e["runs"]),
            seed=self.seed,
            epochs=int(e["epochs"]),
        )
        out.write_text(json.dumps(result, indent=2, sort_keys=True))
        roc_path = self.out_dir / "roc.csv"
        self._write_roc(data, artifacts, roc_path, int(e["epochs"]))
        self.write_manifest("eval", inputs, [out, roc_path])
        return out

    def _write_roc(self, data, artifacts, path: Path, epochs: int) -> None:
        model = train_classifier(
            data.train_pos, data.train_neg, seed=torch_seed_for(self.seed, "roc"), epochs=epochs
        )
        pos = score_images(model, data.test_pos)
        neg = score_images(model, data.test_neg)
        samples = [ScoredSample(float(s), True) for s in pos] + [
            ScoredSample(float(s), False) for s in neg
        ]
        rows = roc_sweep(samples)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("threshold,fpr,miss_rate\n")
            for t, fpr, mr in rows:
                fh.write(f"{t},{fpr},{mr}\n")

    def ablate(self, mode: str | None = None) -> Path:
        inputs = self.require("pose_model.npz", "mask.pt", "vae.pt", "gan.pt")
        out = self.out_dir / "ablation_report.json"
        artifacts = self.load_artifacts()
        e = self.cfg["eval"]
        data = make_experiment_data(
            self.seed,
            size=int(self.cfg["data"]["size"]),
            n_real_pos=int(e["real_pos"]),
            n_train_neg=int(e["train_neg"]),
            n_test_pos=int(e["test_pos"]),
            n_test_neg=int(e["test_neg"]),
        )
        modes = ABLATION_MODES if mode is None else (mode,)
        report = ablation_report(
            artifacts,
            data,
            modes=modes,
            n_generated=int(e["generated_pos"]),
            runs=int(e["runs"]),
            seed=self.seed,
            epochs=int(e["epochs"]),
        )
        out.write_text(json.dumps(report, indent=2, sort_keys=True))
        self.write_manifest("ablate", inputs, [out])
        return out
