"""Adversarial training of the conditional generator.

Each training sample is a real person image with its keypoints. The
frozen mask estimator supplies the foreground mask, the frozen
appearance encoder supplies the latent, and the generator learns to
paint the person back into its own masked background. The composited
output competes against the real image under the patch critic, with
mask-modulated feature reconstruction and appearance consistency terms.
Resolution grows progressively: each stage doubles the output size and
fades the new head in linearly.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch.nn import functional as F

from .appearance import AppearanceEncoder, freeze
from .critic import PatchCritic
from .generator import (
    BASE_RESOLUTION,
    ConditionalGenerator,
    GeneratorConfig,
)
from .losses import (
    LossWeights,
    RandomFeaturePyramid,
    TrainingLogger,
    appearance_loss,
    masked_feature_loss,
    total_loss,
    wgan_gp_loss,
)
from .mask_estimator import MaskEstimatorState, estimate_mask_batch
from .skeleton import Skeleton, render_heatmaps


@dataclass
class GanTrainingConfig:
    n_blocks: int = 2
    base_width: int = 32
    critic_width: int = 24
    stage_steps: tuple[int, ...] = (100, 140, 220)
    fade_steps: int = 50
    batch_size: int = 8
    critic_iters: int = 1
    lr: float = 2e-4
    heatmap_sigma: float = 2.0
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0

    @property
    def output_size(self) -> int:
        return BASE_RESOLUTION * 2**self.n_blocks


def _to_batch(images: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(images)).float().permute(0, 3, 1, 2)


def _area(x: torch.Tensor, res: int) -> torch.Tensor:
    if x.shape[-1] == res and x.shape[-2] == res:
        return x
    return F.interpolate(x, size=(res, res), mode="area")


def prepare_training_tensors(
    samples: list[dict],
    mask_state: MaskEstimatorState,
    sigma: float,
) -> dict[str, torch.Tensor]:
    """Full-resolution tensors shared by all stages.

    ``samples`` hold 'image' (s, s, 3) in [0, 1] and 'skeleton'. Masks
    come from the frozen mask estimator applied to the rendered heatmaps.
    """
    images = _to_batch(np.stack([s["image"] for s in samples]))
    heat = torch.from_numpy(
        np.stack([render_heatmaps(s["skeleton"], sigma).tensor for s in samples])
    ).float()
    masks = estimate_mask_batch(heat, mask_state)
    cond = torch.cat([images * (1.0 - masks), heat], dim=1)
    return {"images": images, "heatmaps": heat, "masks": masks, "cond": cond}


def train_gan(
    samples: list[dict],
    mask_state: MaskEstimatorState,
    encoder: AppearanceEncoder,
    config: GanTrainingConfig | None = None,
    log_path=None,
) -> tuple[ConditionalGenerator, PatchCritic]:
    """Train generator and critic on person samples; returns both frozen."""
    config = config or GanTrainingConfig()
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    freeze(encoder)

    data = prepare_training_tensors(samples, mask_state, config.heatmap_sigma)
    n = data["images"].shape[0]

    generator = ConditionalGenerator(GeneratorConfig(config.n_blocks, config.base_width))
    critic = PatchCritic(base_width=config.critic_width)
    pyramid = RandomFeaturePyramid(seed=config.seed)
    opt_g = torch.optim.Adam(generator.parameters(), lr=config.lr, betas=(0.5, 0.9))
    opt_d = torch.optim.Adam(critic.parameters(), lr=config.lr, betas=(0.5, 0.9))

    logger = TrainingLogger(log_path) if log_path else None
    w = config.weights
    step = 0

    def encode_latent(idx: np.ndarray) -> torch.Tensor:
        full = data["images"][idx]
        mask = data["masks"][idx]
        crop = mask * full
        if crop.shape[-1] != 64:
            crop = F.interpolate(crop, size=(64, 64), mode="bilinear", align_corners=False)
        mu, log_var = encoder(crop)
        return mu + torch.exp(0.5 * log_var) * torch.randn_like(mu)

    full_res = config.output_size
    stages = list(range(config.n_blocks + 1))
    for stage in stages:
        res = BASE_RESOLUTION * 2**stage
        steps = config.stage_steps[stage] if stage < len(config.stage_steps) else config.stage_steps[-1]
        block_res = [BASE_RESOLUTION * 2**i for i in range(stage)]
        for local_step in range(steps):
            alpha = 1.0 if stage == 0 else min(1.0, (local_step + 1) / max(1, config.fade_steps))
            idx = rng.choice(n, size=min(config.batch_size, n), replace=n < config.batch_size)

            real = data["images"][idx]
            mask_full = data["masks"][idx]
            cond_full = data["cond"][idx]
            cond_list = [_area(cond_full, r) for r in block_res] + [cond_full]
            with torch.no_grad():
                z = encode_latent(idx)

            def critic_fn(img: torch.Tensor) -> torch.Tensor:
                return critic(img, cond_full).patch_scores

            gen_out = generator(z, cond_list, stage=stage, alpha=alpha)
            if gen_out.shape[-1] != full_res:
                # staged output upsampled so the critic always works at
                # full resolution (its patch field assumes 4 halvings)
                gen_out = F.interpolate(
                    gen_out, size=(full_res, full_res), mode="bilinear", align_corners=False
                )
            fake = mask_full * gen_out + (1.0 - mask_full) * real

            for _ in range(config.critic_iters):
                opt_d.zero_grad()
                critic_loss, _, gp = wgan_gp_loss(critic_fn, real, fake.detach(), w.gp_weight)
                critic_loss.backward()
                opt_d.step()

            opt_g.zero_grad()
            adv = -critic_fn(fake).mean()
            rec_dis = masked_feature_loss(lambda im: critic(im, cond_full).features, mask_full, real, fake)
            rec_vgg = masked_feature_loss(pyramid, mask_full, real, fake)
            if full_res != 64:
                app_mask = F.interpolate(mask_full, size=(64, 64), mode="area")
                app_real = F.interpolate(real, size=(64, 64), mode="bilinear", align_corners=False)
                app_fake = F.interpolate(fake, size=(64, 64), mode="bilinear", align_corners=False)
            else:
                app_mask, app_real, app_fake = mask_full, real, fake
            app = appearance_loss(encoder, app_mask, app_real, app_fake)
            gen_loss = total_loss(
                w, {"adversarial": adv, "rec_dis": rec_dis, "rec_vgg": rec_vgg, "app": app}
            )
            gen_loss.backward()
            opt_g.step()

            if logger:
                logger.log(
                    step,
                    critic_loss=float(critic_loss),
                    gen_loss=float(gen_loss),
                    gp=float(gp),
                    rec_dis=float(rec_dis),
                    rec_vgg=float(rec_vgg),
                    app=float(app),
                    total=float(gen_loss),
                )
            step += 1

    if logger:
        logger.close()
    generator.eval()
    critic.eval()
    return generator, critic
