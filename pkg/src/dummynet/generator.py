"""Conditional person generator.

The appearance latent is projected by one fully-connected layer to a
4x4 seed tensor, upsampled to the 16x16 base resolution, and refined by
n residual blocks. Each block applies spatially-adaptive normalization
driven by the conditioning tensor (masked background + keypoint
heatmaps) at that block's resolution and is followed by x2 bilinear
upsampling, so the output size is 16 * 2^n. Training grows the output
progressively, blending each new resolution in with a fade weight.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .errors import ShapeMismatch
from .skeleton import NUM_KEYPOINTS, KeypointHeatmaps

COND_CHANNELS = 3 + NUM_KEYPOINTS  # masked background RGB + heatmaps
BASE_RESOLUTION = 16
LATENT_DIM = 16
CHECKPOINT_FORMAT = "gen_v1"


@dataclass
class GeneratorConfig:
    """Shape schedule of the generator: output size is 16 * 2^n_blocks."""

    n_blocks: int = 2
    base_width: int = 32

    def __post_init__(self):
        if self.n_blocks < 1:
            raise ValueError("n_blocks must be >= 1")

    @property
    def output_size(self) -> int:
        return BASE_RESOLUTION * 2**self.n_blocks

    def block_resolutions(self) -> list[int]:
        """Input resolution of each residual block."""
        return [BASE_RESOLUTION * 2**i for i in range(self.n_blocks)]


@dataclass
class ConditioningTensor:
    """Masked background + heatmaps, with area-averaged copies per level.

    ``full`` is (20, H, W); ``pyramid`` maps resolution -> (20, r, r).
    """

    full: torch.Tensor
    pyramid: dict[int, torch.Tensor] = field(default_factory=dict)

    def at(self, resolution: int) -> torch.Tensor:
        if resolution in self.pyramid:
            return self.pyramid[resolution]
        if self.full.shape[-1] == resolution and self.full.shape[-2] == resolution:
            return self.full
        raise ShapeMismatch(f"no conditioning at resolution {resolution}")


def build_conditioning(
    background: np.ndarray,
    mask: np.ndarray,
    heatmaps: KeypointHeatmaps,
    resolutions: list[int] | None = None,
) -> ConditioningTensor:
    """Concatenate the foreground-zeroed background with the heatmaps.

    Background pixels under the mask are zeroed before concatenation;
    downsampled copies for each requested resolution use area averaging.
    """
    background = np.asarray(background, dtype=np.float32)
    mask = np.asarray(mask, dtype=np.float32)
    if background.shape[:2] != mask.shape or background.shape[:2] != heatmaps.shape:
        raise ShapeMismatch(
            f"background {background.shape[:2]}, mask {mask.shape}, heatmaps {heatmaps.shape}"
        )
    bg = torch.from_numpy(background).permute(2, 0, 1)
    m = torch.from_numpy(mask).unsqueeze(0)
    hm = torch.from_numpy(heatmaps.tensor)
    full = torch.cat([bg * (1.0 - m), hm], dim=0)
    pyramid = {}
    for res in resolutions or []:
        if res == full.shape[-1] and res == full.shape[-2]:
            pyramid[res] = full
        else:
            pyramid[res] = F.interpolate(full.unsqueeze(0), size=(res, res), mode="area")[0]
    return ConditioningTensor(full=full, pyramid=pyramid)


class SpatialModulation(nn.Module):
    """Parameter-free instance norm modulated from the conditioning tensor.

    Two small convolutions predict a per-pixel scale and bias from the
    conditioning resampled to the feature resolution.
    """

    def __init__(self, channels: int, hidden: int = 32):
        super().__init__()
        self.norm = nn.InstanceNorm2d(channels, affine=False)
        self.shared = nn.Sequential(nn.Conv2d(COND_CHANNELS, hidden, 3, padding=1), nn.ReLU(inplace=True))
        self.to_scale = nn.Conv2d(hidden, channels, 3, padding=1)
        self.to_bias = nn.Conv2d(hidden, channels, 3, padding=1)

    def forward(self, x: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        if cond.shape[-2:] != x.shape[-2:]:
            cond = F.interpolate(cond, size=x.shape[-2:], mode="area")
        h = self.shared(cond)
        return self.norm(x) * (1.0 + self.to_scale(h)) + self.to_bias(h)


class ModulatedResBlock(nn.Module):
    """Residual block with two modulated conv stages and a plain skip."""

    def __init__(self, channels: int, hidden: int = 32):
        super().__init__()
        self.mod1 = SpatialModulation(channels, hidden)
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.mod2 = SpatialModulation(channels, hidden)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, x: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        h = self.conv1(F.relu(self.mod1(x, cond)))
        h = self.conv2(F.relu(self.mod2(h, cond)))
        return x + h


class ConditionalGenerator(nn.Module):
    """Residual generator with per-resolution image heads for fade-in."""

    def __init__(self, config: GeneratorConfig):
        super().__init__()
        self.config = config
        n = config.base_width
        self.fc = nn.Linear(LATENT_DIM, n * 4 * 4)
        self.blocks = nn.ModuleList(
            [ModulatedResBlock(n, hidden=max(16, n)) for _ in range(config.n_blocks)]
        )
        # one RGB head per stage so progressive training can blend outputs
        self.to_rgb = nn.ModuleList(
            [nn.Conv2d(n, 3, 3, padding=1) for _ in range(config.n_blocks + 1)]
        )

    def forward(
        self,
        z: torch.Tensor,
        cond: ConditioningTensor | list[torch.Tensor],
        stage: int | None = None,
        alpha: float = 1.0,
    ) -> torch.Tensor:
        """Image logits in [0, 1] at the resolution of ``stage``.

        ``stage`` counts active blocks (defaults to all); ``alpha`` in
        [0, 1] fades the newest block's head against the upsampled
        previous head during progressive growing.
        """
        n_active = self.config.n_blocks if stage is None else stage
        if not 0 <= n_active <= self.config.n_blocks:
            raise ValueError(f"stage must be 0..{self.config.n_blocks}")

        def cond_at(res: int, batch: int) -> torch.Tensor:
            if isinstance(cond, ConditioningTensor):
                try:
                    c = cond.at(res)
                except ShapeMismatch:
                    c = cond.full  # modulation layers resample as needed
                return c.unsqueeze(0).expand(batch, -1, -1, -1)
            for c in cond:
                if c.shape[-1] == res:
                    return c
            raise ShapeMismatch(f"no conditioning at resolution {res}")

        x = self.fc(z).view(-1, self.config.base_width, 4, 4)
        x = F.interpolate(x, size=(BASE_RESOLUTION, BASE_RESOLUTION), mode="bilinear", align_corners=False)
        prev_rgb = None
        for i in range(n_active):
            res = BASE_RESOLUTION * 2**i
            if i == n_active - 1 and alpha < 1.0:
                prev_rgb = self.to_rgb[i](x)
            x = self.blocks[i](x, cond_at(res, x.shape[0]))
            x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
        logits = self.to_rgb[n_active](x)
        if prev_rgb is not None:
            prev = F.interpolate(prev_rgb, scale_factor=2, mode="bilinear", align_corners=False)
            logits = alpha * logits + (1.0 - alpha) * prev
        return torch.sigmoid(logits)


def generate(z: np.ndarray, conditioning: ConditioningTensor, generator: ConditionalGenerator) -> np.ndarray:
    """Full-resolution generation: (s, s, 3) float image in [0, 1]."""
    s = generator.config.output_size
    if conditioning.full.shape[-2:] != (s, s):
        raise ShapeMismatch(
            f"conditioning {tuple(conditioning.full.shape[-2:])} vs output {s}x{s}"
        )
    generator.eval()
    with torch.no_grad():
        zt = torch.from_numpy(np.asarray(z, dtype=np.float32)).unsqueeze(0)
        out = generator(zt, conditioning)[0]
    return out.permute(1, 2, 0).numpy().astype(np.float32)


def parameter_count(config: GeneratorConfig) -> int:
    """Total trainable parameters, a pure function of the config."""
    return sum(p.numel() for p in ConditionalGenerator(config).parameters())


def save_checkpoint(generator: ConditionalGenerator, path: str | Path) -> None:
    torch.save(
        {
            "format": CHECKPOINT_FORMAT,
            "n_blocks": generator.config.n_blocks,
            "base_width": generator.config.base_width,
            "state_dict": generator.state_dict(),
        },
        path,
    )


def load_checkpoint(path: str | Path) -> ConditionalGenerator:
    blob = torch.load(path, map_location="cpu", weights_only=True)
    if blob.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported generator checkpoint format {blob.get('format')!r}")
    gen = ConditionalGenerator(GeneratorConfig(n_blocks=int(blob["n_blocks"]), base_width=int(blob["base_width"])))
    gen.load_state_dict(blob["state_dict"])
    gen.eval()
    return gen
