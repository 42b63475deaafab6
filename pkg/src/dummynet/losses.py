"""Training losses: adversarial, reconstruction, and appearance terms.

All reconstruction-style terms are modulated by the estimated foreground
mask on the input side: images are multiplied by the mask before any
feature extraction, so the losses concentrate on the person pixels.
The total objective is the weighted sum

    lambda1 * adversarial + lambda2 * critic-feature reconstruction
    + lambda3 * perceptual-feature reconstruction + lambda4 * appearance.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import torch
from torch import nn

from .errors import NonFiniteGradient, NonFiniteLoss, ShapeMismatch

DEFAULT_GP_WEIGHT = 10.0


@dataclass
class LossWeights:
    """Nonnegative weights of the four loss terms plus the gradient penalty."""

    lambda1: float = 1.0   # adversarial (Wasserstein with gradient penalty)
    lambda2: float = 10.0  # critic feature reconstruction
    lambda3: float = 10.0  # perceptual feature reconstruction
    lambda4: float = 1.0   # appearance consistency
    gp_weight: float = DEFAULT_GP_WEIGHT

    def __post_init__(self):
        vals = (self.lambda1, self.lambda2, self.lambda3, self.lambda4, self.gp_weight)
        if any(v < 0 for v in vals):
            raise ValueError("loss weights must be nonnegative")
        if self.lambda1 <= 0:
            raise ValueError("the adversarial weight lambda1 must be positive")


def gradient_penalty(
    critic_fn: Callable[[torch.Tensor], torch.Tensor],
    real: torch.Tensor,
    fake: torch.Tensor,
    gp_weight: float = DEFAULT_GP_WEIGHT,
    eps: torch.Tensor | None = None,
) -> torch.Tensor:
    """gp_weight * E[(||grad critic(x_hat)||_2 - 1)^2] on interpolates.

    ``eps`` fixes the per-sample interpolation weights (shape (B, 1, 1, 1))
    for reproducible evaluation; fresh uniforms are drawn otherwise. The
    result stays differentiable w.r.t. the critic parameters.
    """
    if real.shape != fake.shape:
        raise ShapeMismatch(f"real {tuple(real.shape)} vs fake {tuple(fake.shape)}")
    if eps is None:
        eps = torch.rand(real.shape[0], *([1] * (real.dim() - 1)), dtype=real.dtype, device=real.device)
    x_hat = (eps * real + (1.0 - eps) * fake).detach().requires_grad_(True)
    scores = critic_fn(x_hat)
    if scores.requires_grad:
        grads = torch.autograd.grad(
            outputs=scores,
            inputs=x_hat,
            grad_outputs=torch.ones_like(scores),
            create_graph=True,
            retain_graph=True,
            allow_unused=True,
        )[0]
    else:
        grads = None  # critic constant in its input
    if grads is None:
        grads = torch.zeros_like(x_hat)
    if not torch.isfinite(grads).all():
        raise NonFiniteGradient("gradient penalty produced non-finite gradients")
    norms = grads.flatten(1).norm(2, dim=1)
    return gp_weight * ((norms - 1.0) ** 2).mean()


def wgan_gp_loss(
    critic_fn: Callable[[torch.Tensor], torch.Tensor],
    real: torch.Tensor,
    fake: torch.Tensor,
    gp_weight: float = DEFAULT_GP_WEIGHT,
    eps: torch.Tensor | None = None,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """(critic loss, generator loss, penalty) of the Wasserstein objective.

    critic loss = mean critic(fake) - mean critic(real) + penalty;
    generator loss = -mean critic(fake).
    """
    penalty = gradient_penalty(critic_fn, real, fake, gp_weight, eps)
    fake_score = critic_fn(fake).mean()
    real_score = critic_fn(real).mean()
    critic_loss = fake_score - real_score + penalty
    generator_loss = -fake_score
    return critic_loss, generator_loss, penalty


def appearance_loss(
    encoder: nn.Module,
    mask: torch.Tensor,
    image_in: torch.Tensor,
    image_gen: torch.Tensor,
) -> torch.Tensor:
    """L1 distance between the encoder means of the masked images.

    The encoder is the frozen pretrained appearance encoder; only its mu
    head participates, so the loss is deterministic. Batched inputs are
    averaged over the batch.
    """
    if image_in.shape != image_gen.shape:
        raise ShapeMismatch(f"input {tuple(image_in.shape)} vs generated {tuple(image_gen.shape)}")
    mu_in, _ = encoder(mask * image_in)
    mu_gen, _ = encoder(mask * image_gen)
    return (mu_in - mu_gen).abs().sum(dim=-1).mean()


def masked_feature_loss(
    feature_fn: Callable[[torch.Tensor], Sequence[torch.Tensor]],
    mask: torch.Tensor,
    real: torch.Tensor,
    gen: torch.Tensor,
) -> torch.Tensor:
    """Sum over feature levels of mean absolute feature difference.

    Both images are multiplied by the mask before extraction, so regions
    outside the mask cannot contribute through a local feature extractor.
    """
    if real.shape != gen.shape:
        raise ShapeMismatch(f"real {tuple(real.shape)} vs generated {tuple(gen.shape)}")
    feats_real = feature_fn(mask * real)
    feats_gen = feature_fn(mask * gen)
    total = None
    for fr, fg in zip(feats_real, feats_gen):
        level = (fr - fg).abs().mean()
        total = level if total is None else total + level
    return total


def total_loss(weights: LossWeights, components: dict[str, torch.Tensor | float]) -> torch.Tensor | float:
    """Weighted sum of the four loss components.

    ``components`` must carry 'adversarial', 'rec_dis', 'rec_vgg', 'app'.
    """
    out = (
        weights.lambda1 * components["adversarial"]
        + weights.lambda2 * components["rec_dis"]
        + weights.lambda3 * components["rec_vgg"]
        + weights.lambda4 * components["app"]
    )
    check = out if torch.is_tensor(out) else torch.tensor(float(out))
    if not torch.isfinite(check).all():
        raise NonFiniteLoss("total loss is not finite")
    return out


class RandomFeaturePyramid(nn.Module):
    """Frozen random-weight conv pyramid standing in for a pretrained net.

    A fixed seed makes the features reproducible, so perceptual-style
    reconstruction losses work offline. Full-scale runs can substitute a
    pretrained classification network through the same callable interface.
    """

    def __init__(self, widths: tuple[int, ...] = (8, 16, 32), seed: int = 0):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        layers = []
        prev = 3
        for w in widths:
            conv = nn.Conv2d(prev, w, 3, stride=2, padding=1)
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen) * 0.2)
                conv.bias.zero_()
            layers.append(conv)
            prev = w
        self.convs = nn.ModuleList(layers)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        feats = []
        for conv in self.convs:
            x = torch.relu(conv(x))
            feats.append(x)
        return feats


def identity_features(x: torch.Tensor) -> list[torch.Tensor]:
    """Trivial single-level feature function, useful for exact checks."""
    return [x]


LOG_COLUMNS = ("step", "critic_loss", "gen_loss", "gp", "rec_dis", "rec_vgg", "app", "total")


class TrainingLogger:
    """Per-step CSV log of all loss components."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._fh = open(self.path, "w", newline="", encoding="utf-8")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(LOG_COLUMNS)

    def log(self, step: int, **values) -> None:
        row = [step] + [float(values.get(c, float("nan"))) for c in LOG_COLUMNS[1:]]
        self._writer.writerow(row)
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
