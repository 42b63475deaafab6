"""Foreground person mask prediction from keypoint heatmaps.

An encoder-decoder with skip connections maps the 17-channel keypoint
heatmaps to a one-channel soft mask in [0, 1]. A convex hull over the
visible keypoints serves as the non-learned fallback.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from scipy.spatial import ConvexHull, QhullError
from torch import nn
from torch.nn import functional as F

from .errors import DegenerateHull, EmptyDataset, ResolutionMismatch
from .skeleton import NUM_KEYPOINTS, KeypointHeatmaps, Skeleton

CHECKPOINT_FORMAT = "me_v1"


class _DoubleConv(nn.Module):
    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.block = nn.Sequential(
            nn.Conv2d(in_ch, out_ch, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(out_ch, out_ch, 3, padding=1),
            nn.ReLU(inplace=True),
        )

    def forward(self, x):
        return self.block(x)


class MaskUNet(nn.Module):
    """Depth-4 U-Net, 17 heatmap channels in, sigmoid mask out.

    Spatial size is preserved end to end; inputs must be divisible by 16.
    """

    def __init__(self, base_width: int = 16, in_channels: int = NUM_KEYPOINTS):
        super().__init__()
        w = base_width
        self.enc = nn.ModuleList(
            [
                _DoubleConv(in_channels, w),
                _DoubleConv(w, 2 * w),
                _DoubleConv(2 * w, 4 * w),
                _DoubleConv(4 * w, 8 * w),
            ]
        )
        self.pool = nn.MaxPool2d(2)
        self.bottleneck = _DoubleConv(8 * w, 16 * w)
        self.up = nn.ModuleList(
            [
                nn.ConvTranspose2d(16 * w, 8 * w, 2, stride=2),
                nn.ConvTranspose2d(8 * w, 4 * w, 2, stride=2),
                nn.ConvTranspose2d(4 * w, 2 * w, 2, stride=2),
                nn.ConvTranspose2d(2 * w, w, 2, stride=2),
            ]
        )
        self.dec = nn.ModuleList(
            [
                _DoubleConv(16 * w, 8 * w),
                _DoubleConv(8 * w, 4 * w),
                _DoubleConv(4 * w, 2 * w),
                _DoubleConv(2 * w, w),
            ]
        )
        self.head = nn.Conv2d(w, 1, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        skips = []
        for enc in self.enc:
            x = enc(x)
            skips.append(x)
            x = self.pool(x)
        x = self.bottleneck(x)
        for up, dec, skip in zip(self.up, self.dec, reversed(skips)):
            x = dec(torch.cat([up(x), skip], dim=1))
        return torch.sigmoid(self.head(x))


@dataclass
class MaskEstimatorState:
    """Frozen trained mask estimator plus its training resolution."""

    net: MaskUNet
    resolution: tuple[int, int]

    def __post_init__(self):
        self.net.eval()
        for p in self.net.parameters():
            p.requires_grad_(False)


def estimate_mask(heatmaps: KeypointHeatmaps, state: MaskEstimatorState) -> np.ndarray:
    """Soft foreground mask (H, W) in [0, 1] predicted from heatmaps."""
    if heatmaps.shape != state.resolution:
        raise ResolutionMismatch(
            f"heatmaps {heatmaps.shape} vs model resolution {state.resolution}"
        )
    with torch.no_grad():
        x = torch.from_numpy(heatmaps.tensor).float().unsqueeze(0)
        out = state.net(x)[0, 0].numpy()
    return out.astype(np.float32)


def estimate_mask_batch(tensors: torch.Tensor, state: MaskEstimatorState) -> torch.Tensor:
    """Batched mask prediction for (B, 17, H, W) heatmap tensors."""
    if tuple(tensors.shape[-2:]) != state.resolution:
        raise ResolutionMismatch(
            f"heatmaps {tuple(tensors.shape[-2:])} vs model resolution {state.resolution}"
        )
    with torch.no_grad():
        return state.net(tensors)


def convex_hull_mask(skeleton: Skeleton, canvas: tuple[int, int]) -> np.ndarray:
    """Binary mask of the convex hull of the visible keypoints.

    A pixel is foreground when its center satisfies every hull half-space
    (with a small inclusive tolerance); the pixel containing each visible
    keypoint is always foreground. Raises DegenerateHull for fewer than 3
    visible keypoints or a collinear set.
    """
    h, w = canvas
    pts = skeleton.visible_points()
    if len(pts) < 3:
        raise DegenerateHull(f"need >= 3 visible keypoints, got {len(pts)}")
    try:
        hull = ConvexHull(pts)
    except QhullError as err:
        raise DegenerateHull("visible keypoints are collinear") from err

    xs = np.arange(w, dtype=np.float64)
    ys = np.arange(h, dtype=np.float64)
    gx, gy = np.meshgrid(xs, ys)
    inside = np.ones((h, w), dtype=bool)
    for a, b, c in hull.equations:  # a*x + b*y + c <= 0 inside
        inside &= a * gx + b * gy + c <= 1e-9
    mask = inside.astype(np.float32)
    cols = np.clip(np.floor(pts[:, 0]).astype(int), 0, w - 1)
    rows = np.clip(np.floor(pts[:, 1]).astype(int), 0, h - 1)
    mask[rows, cols] = 1.0
    return mask


def train_mask_estimator(
    dataset: list[tuple[KeypointHeatmaps, np.ndarray]],
    epochs: int = 30,
    lr: float = 1e-3,
    batch_size: int = 8,
    base_width: int = 16,
    val_fraction: float = 0.2,
    seed: int = 0,
) -> MaskEstimatorState:
    """Train the U-Net with per-pixel binary cross-entropy.

    Keeps the checkpoint with the lowest validation loss (training loss
    when the dataset is too small to split).
    """
    if not dataset:
        raise EmptyDataset("no training pairs")
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)

    res = dataset[0][0].shape
    x = torch.from_numpy(np.stack([hm.tensor for hm, _ in dataset])).float()
    y = torch.from_numpy(np.stack([m for _, m in dataset])).float().unsqueeze(1)

    n_val = int(round(val_fraction * len(dataset)))
    order = rng.permutation(len(dataset))
    val_idx = order[:n_val] if n_val > 0 else order
    trn_idx = order[n_val:] if n_val < len(dataset) else order

    net = MaskUNet(base_width=base_width)
    opt = torch.optim.Adam(net.parameters(), lr=lr)
    bce = nn.BCELoss()

    best_val = float("inf")
    best_state = {k: v.clone() for k, v in net.state_dict().items()}
    for _ in range(epochs):
        net.train()
        ep_order = rng.permutation(len(trn_idx))
        for start in range(0, len(ep_order), batch_size):
            sel = trn_idx[ep_order[start : start + batch_size]]
            opt.zero_grad()
            loss = bce(net(x[sel]), y[sel])
            loss.backward()
            opt.step()
        net.eval()
        with torch.no_grad():
            val = float(bce(net(x[val_idx]), y[val_idx]))
        if val < best_val:
            best_val = val
            best_state = {k: v.clone() for k, v in net.state_dict().items()}
    net.load_state_dict(best_state)
    return MaskEstimatorState(net=net, resolution=res)


def mask_iou(a: np.ndarray, b: np.ndarray, threshold: float = 0.5) -> float:
    """IoU of two soft masks binarized at a threshold."""
    fa = a > threshold
    fb = b > threshold
    union = np.logical_or(fa, fb).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(fa, fb).sum() / union)


def save_mask_png(mask: np.ndarray, path: str | Path) -> None:
    """Write a soft mask as 8-bit grayscale PNG (0..255 maps [0, 1])."""
    data = np.clip(np.round(np.asarray(mask, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path)


def load_mask_png(path: str | Path) -> np.ndarray:
    """Read an 8-bit grayscale PNG back into a [0, 1] float mask."""
    img = Image.open(path).convert("L")
    return np.asarray(img, dtype=np.float32) / 255.0


def save_checkpoint(state: MaskEstimatorState, path: str | Path, base_width: int = 16) -> None:
    torch.save(
        {
            "format": CHECKPOINT_FORMAT,
            "resolution": state.resolution,
            "base_width": base_width,
            "state_dict": state.net.state_dict(),
        },
        path,
    )


def load_checkpoint(path: str | Path) -> MaskEstimatorState:
    blob = torch.load(path, map_location="cpu", weights_only=True)
    if blob.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported mask checkpoint format {blob.get('format')!r}")
    net = MaskUNet(base_width=int(blob["base_width"]))
    net.load_state_dict(blob["state_dict"])
    return MaskEstimatorState(net=net, resolution=tuple(blob["resolution"]))
