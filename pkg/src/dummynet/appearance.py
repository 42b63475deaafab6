"""Appearance codec: a VAE whose encoder summarizes how a person looks.

The encoder maps a 64x64 person crop with zeroed background to a 16-D
latent; the fully convolutional decoder only exists for pretraining. At
generation time the latent conditions the generator, and the frozen
encoder also backs the appearance consistency loss.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .errors import BadResolution, EmptyDataset

LATENT_DIM = 16
INPUT_SIZE = 64
CHECKPOINT_FORMAT = "vae_v1"

DEFAULT_ENCODER_WIDTHS = (16, 32, 64, 128)


@dataclass
class AppearanceCode:
    """Latent appearance: posterior parameters and one reparametrized draw.

    Invariant: z = mu + exp(0.5 * log_var) * eps for the stored eps.
    """

    mu: np.ndarray
    log_var: np.ndarray
    z: np.ndarray
    eps: np.ndarray


class AppearanceEncoder(nn.Module):
    """Shared conv trunk with two fully-connected heads for mu and log-var."""

    def __init__(self, widths: tuple[int, ...] = DEFAULT_ENCODER_WIDTHS, latent_dim: int = LATENT_DIM):
        super().__init__()
        layers = []
        prev = 3
        for w in widths:
            layers += [nn.Conv2d(prev, w, 4, stride=2, padding=1), nn.ReLU(inplace=True)]
            prev = w
        self.trunk = nn.Sequential(*layers)
        spatial = INPUT_SIZE // (2 ** len(widths))
        flat = prev * spatial * spatial
        self.fc_mu = nn.Linear(flat, latent_dim)
        self.fc_log_var = nn.Linear(flat, latent_dim)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        h = self.trunk(x)
        h = h.flatten(1)
        return self.fc_mu(h), self.fc_log_var(h)


class AppearanceDecoder(nn.Module):
    """Latent vector back to a 64x64 image; used only in pretraining."""

    def __init__(self, widths: tuple[int, ...] = DEFAULT_ENCODER_WIDTHS, latent_dim: int = LATENT_DIM):
        super().__init__()
        rev = tuple(reversed(widths))
        spatial = INPUT_SIZE // (2 ** len(widths))
        self.spatial = spatial
        self.top = rev[0]
        self.fc = nn.Linear(latent_dim, rev[0] * spatial * spatial)
        layers = []
        prev = rev[0]
        for w in rev[1:]:
            layers += [nn.ConvTranspose2d(prev, w, 4, stride=2, padding=1), nn.ReLU(inplace=True)]
            prev = w
        layers += [nn.ConvTranspose2d(prev, 3, 4, stride=2, padding=1)]
        self.deconv = nn.Sequential(*layers)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        h = self.fc(z).view(-1, self.top, self.spatial, self.spatial)
        return torch.sigmoid(self.deconv(h))


def _check_input(image: np.ndarray) -> None:
    if image.shape != (INPUT_SIZE, INPUT_SIZE, 3):
        raise BadResolution(f"expected {INPUT_SIZE}x{INPUT_SIZE}x3, got {image.shape}")


def reparametrize(mu: np.ndarray, log_var: np.ndarray, seed: int) -> np.ndarray:
    """Draw z = mu + exp(0.5 * log_var) * eps with eps ~ N(0, I)."""
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal(np.shape(mu))
    return np.asarray(mu) + np.exp(0.5 * np.asarray(log_var)) * eps


def encode(image: np.ndarray, encoder: AppearanceEncoder, seed: int = 0) -> AppearanceCode:
    """Appearance code of a 64x64 masked person image in [0, 1]."""
    _check_input(image)
    encoder.eval()
    with torch.no_grad():
        x = torch.from_numpy(np.ascontiguousarray(image)).float().permute(2, 0, 1).unsqueeze(0)
        mu, log_var = encoder(x)
    mu = mu[0].numpy().astype(np.float64)
    log_var = log_var[0].numpy().astype(np.float64)
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal(mu.shape)
    z = mu + np.exp(0.5 * log_var) * eps
    return AppearanceCode(mu=mu, log_var=log_var, z=z, eps=eps)


def kl_divergence(mu: torch.Tensor, log_var: torch.Tensor) -> torch.Tensor:
    """Closed-form KL(N(mu, diag(exp(log_var))) || N(0, I)), summed over dims.

    Per dimension: 0.5 * (exp(log_var) + mu^2 - 1 - log_var). Batched
    inputs are averaged over the batch.
    """
    per_dim = 0.5 * (torch.exp(log_var) + mu * mu - 1.0 - log_var)
    per_sample = per_dim.sum(dim=-1)
    return per_sample.mean()


def train_vae(
    dataset: np.ndarray,
    epochs: int = 40,
    lr: float = 1e-3,
    batch_size: int = 16,
    beta: float = 1.0,
    widths: tuple[int, ...] = DEFAULT_ENCODER_WIDTHS,
    val_fraction: float = 0.2,
    seed: int = 0,
) -> tuple[AppearanceEncoder, AppearanceDecoder]:
    """Pretrain the VAE with pixel BCE plus beta-weighted KL, Adam optimizer.

    ``dataset`` is (N, 64, 64, 3) float in [0, 1] with backgrounds zeroed.
    Returns the best-validation encoder and decoder.
    """
    if len(dataset) == 0:
        raise EmptyDataset("no appearance crops")
    for img in dataset[:1]:
        _check_input(np.asarray(img))
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)

    x = torch.from_numpy(np.ascontiguousarray(dataset)).float().permute(0, 3, 1, 2)
    n_val = int(round(val_fraction * len(dataset)))
    order = rng.permutation(len(dataset))
    val_idx = order[:n_val] if n_val > 0 else order
    trn_idx = order[n_val:] if n_val < len(dataset) else order

    encoder = AppearanceEncoder(widths=widths)
    decoder = AppearanceDecoder(widths=widths)
    params = list(encoder.parameters()) + list(decoder.parameters())
    opt = torch.optim.Adam(params, lr=lr)
    bce = nn.BCELoss(reduction="mean")

    def loss_on(batch: torch.Tensor) -> torch.Tensor:
        mu, log_var = encoder(batch)
        eps = torch.randn_like(mu)
        z = mu + torch.exp(0.5 * log_var) * eps
        recon = decoder(z)
        return bce(recon, batch) + beta * kl_divergence(mu, log_var) / batch[0].numel()

    best_val = float("inf")
    best = (
        {k: v.clone() for k, v in encoder.state_dict().items()},
        {k: v.clone() for k, v in decoder.state_dict().items()},
    )
    for _ in range(epochs):
        encoder.train()
        decoder.train()
        ep_order = rng.permutation(len(trn_idx))
        for start in range(0, len(ep_order), batch_size):
            sel = trn_idx[ep_order[start : start + batch_size]]
            opt.zero_grad()
            loss = loss_on(x[sel])
            loss.backward()
            opt.step()
        encoder.eval()
        decoder.eval()
        with torch.no_grad():
            val = float(loss_on(x[val_idx]))
        if val < best_val:
            best_val = val
            best = (
                {k: v.clone() for k, v in encoder.state_dict().items()},
                {k: v.clone() for k, v in decoder.state_dict().items()},
            )
    encoder.load_state_dict(best[0])
    decoder.load_state_dict(best[1])
    encoder.eval()
    decoder.eval()
    return encoder, decoder


def freeze(module: nn.Module) -> nn.Module:
    """Disable gradients of a pretrained module; inputs still get grads."""
    module.eval()
    for p in module.parameters():
        p.requires_grad_(False)
    return module


def save_checkpoint(
    encoder: AppearanceEncoder,
    decoder: AppearanceDecoder,
    path: str | Path,
    widths: tuple[int, ...] = DEFAULT_ENCODER_WIDTHS,
) -> None:
    torch.save(
        {
            "format": CHECKPOINT_FORMAT,
            "widths": tuple(widths),
            "encoder": encoder.state_dict(),
            "decoder": decoder.state_dict(),
        },
        path,
    )


def load_checkpoint(path: str | Path) -> tuple[AppearanceEncoder, AppearanceDecoder]:
    blob = torch.load(path, map_location="cpu", weights_only=True)
    if blob.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported appearance checkpoint format {blob.get('format')!r}")
    widths = tuple(int(w) for w in blob["widths"])
    encoder = AppearanceEncoder(widths=widths)
    decoder = AppearanceDecoder(widths=widths)
    encoder.load_state_dict(blob["encoder"])
    decoder.load_state_dict(blob["decoder"])
    encoder.eval()
    decoder.eval()
    return encoder, decoder


def export_latents(codes: list[AppearanceCode], path: str | Path) -> None:
    """Write sampled latents as consecutive 16-float32 binary records."""
    arr = np.stack([c.z for c in codes]).astype(np.float32)
    arr.tofile(path)


def load_latents(path: str | Path) -> np.ndarray:
    """Read 16-float32 binary latent records into an (N, 16) array."""
    flat = np.fromfile(path, dtype=np.float32)
    if flat.size % LATENT_DIM != 0:
        raise ValueError("latent file length is not a multiple of 16 floats")
    return flat.reshape(-1, LATENT_DIM)
