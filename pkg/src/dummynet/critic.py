"""Patch critic scoring real vs composited images.

Four stride-2 convolution blocks with instance norm (skipped on the
first) and leaky-ReLU reduce an s x s input to an (s/16) x (s/16) map of
unbounded patch scores; there is no output nonlinearity, as the
Wasserstein objective requires. Intermediate feature maps are exposed
for the feature-matching reconstruction loss. The critic sees the same
conditioning tensor as the generator, channel-concatenated to the image.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import torch
from torch import nn

from .errors import ShapeMismatch
from .generator import COND_CHANNELS

CHECKPOINT_FORMAT = "dis_v1"
N_BLOCKS = 4


@dataclass
class CriticOutput:
    patch_scores: torch.Tensor
    features: list[torch.Tensor]


class PatchCritic(nn.Module):
    def __init__(self, base_width: int = 32, conditional: bool = True):
        super().__init__()
        in_ch = 3 + (COND_CHANNELS if conditional else 0)
        self.conditional = conditional
        widths = [base_width * 2**i for i in range(N_BLOCKS)]
        blocks = []
        prev = in_ch
        for i, w in enumerate(widths):
            layers = [nn.Conv2d(prev, w, 4, stride=2, padding=1)]
            if i > 0:
                layers.append(nn.InstanceNorm2d(w, affine=True))
            layers.append(nn.LeakyReLU(0.2, inplace=True))
            blocks.append(nn.Sequential(*layers))
            prev = w
        self.blocks = nn.ModuleList(blocks)
        self.head = nn.Conv2d(prev, 1, 3, padding=1)

    def forward(self, image: torch.Tensor, cond: torch.Tensor | None = None) -> CriticOutput:
        if self.conditional:
            if cond is None:
                raise ShapeMismatch("conditional critic requires a conditioning tensor")
            if cond.shape[-2:] != image.shape[-2:]:
                raise ShapeMismatch(f"conditioning {tuple(cond.shape[-2:])} vs image {tuple(image.shape[-2:])}")
            x = torch.cat([image, cond], dim=1)
        else:
            x = image
        features = []
        for block in self.blocks:
            x = block(x)
            features.append(x)
        return CriticOutput(patch_scores=self.head(x), features=features)


def criticize(image: torch.Tensor, cond: torch.Tensor, critic: PatchCritic) -> CriticOutput:
    """Score an image batch under its conditioning."""
    return critic(image, cond)


def save_checkpoint(critic: PatchCritic, path: str | Path, base_width: int = 32) -> None:
    torch.save(
        {
            "format": CHECKPOINT_FORMAT,
            "base_width": base_width,
            "conditional": critic.conditional,
            "state_dict": critic.state_dict(),
        },
        path,
    )


def load_checkpoint(path: str | Path) -> PatchCritic:
    blob = torch.load(path, map_location="cpu", weights_only=True)
    if blob.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported critic checkpoint format {blob.get('format')!r}")
    critic = PatchCritic(base_width=int(blob["base_width"]), conditional=bool(blob["conditional"]))
    critic.load_state_dict(blob["state_dict"])
    return critic
