"""Person classifier and miss-rate metrics.

The classifier is deliberately tiny (6,729 parameters with the default
widths) so it can run on an automotive signal processor and is always
trained from scratch. Metrics follow the pedestrian-benchmark
conventions: miss rate at a fixed false-positive rate for classifiers,
and miss rate averaged over 9 log-uniform false-positives-per-image
operating points for detectors.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .errors import EmptyDataset, NoGroundTruth, NoSamples

# conv widths chosen so the realized parameter count is exactly 6,729
# (biases included): 140 + 460 + 1456 + 4640 + 33
DEFAULT_CONV_WIDTHS = (5, 10, 16, 32)
CLASSIFIER_PARAM_COUNT = 6729


@dataclass
class ScoredSample:
    score: float
    label: bool  # True = positive (person)


def classifier_param_count(widths: tuple[int, int, int, int], in_channels: int = 3) -> int:
    """Analytic parameter count of TinyPersonClassifier for given widths."""
    total = 0
    prev = in_channels
    for w in widths:
        total += 9 * prev * w + w
        prev = w
    total += prev + 1  # fc head
    return total


class TinyPersonClassifier(nn.Module):
    """4 conv layers (3x3, stride 2, ReLU, maxpool) and a sigmoid head.

    Global max pooling reduces the last feature map to 1x1, so any input
    size that survives the downsampling chain (>= 32 px) works; the
    training protocol rescales inputs to a fixed size first.
    """

    def __init__(self, widths: tuple[int, int, int, int] = DEFAULT_CONV_WIDTHS, in_channels: int = 3):
        super().__init__()
        convs = []
        prev = in_channels
        for w in widths:
            convs.append(nn.Conv2d(prev, w, kernel_size=3, stride=2, padding=1))
            prev = w
        self.convs = nn.ModuleList(convs)
        self.pool = nn.MaxPool2d(kernel_size=2, stride=2, ceil_mode=True)
        self.fc = nn.Linear(prev, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for conv in self.convs:
            x = self.pool(F.relu(conv(x)))
        x = torch.amax(x, dim=(2, 3))
        return torch.sigmoid(self.fc(x)).squeeze(1)


def prepare_inputs(images: np.ndarray, size: int) -> torch.Tensor:
    """Stack HxWx3 float images into a resized (N, 3, size, size) batch."""
    batch = torch.from_numpy(np.ascontiguousarray(images)).float().permute(0, 3, 1, 2)
    if batch.shape[-1] != size or batch.shape[-2] != size:
        batch = F.interpolate(batch, size=(size, size), mode="bilinear", align_corners=False)
    return batch


def train_classifier(
    pos: np.ndarray,
    neg: np.ndarray,
    seed: int = 0,
    epochs: int = 100,
    lr: float = 0.05,
    momentum: float = 0.9,
    batch_size: int = 32,
    input_size: int = 64,
    val_fraction: float = 0.2,
    widths: tuple[int, int, int, int] = DEFAULT_CONV_WIDTHS,
) -> TinyPersonClassifier:
    """Train the tiny classifier with SGD and keep the best-validation epoch.

    ``pos`` and ``neg`` are (N, H, W, 3) float arrays in [0, 1]. A fixed
    fraction of each class is held out for validation; the returned model
    carries the weights of the epoch with the lowest validation BCE.
    """
    if len(pos) == 0 or len(neg) == 0:
        raise EmptyDataset("need at least one positive and one negative image")
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)

    x = prepare_inputs(np.concatenate([pos, neg]), input_size)
    y = torch.cat([torch.ones(len(pos)), torch.zeros(len(neg))])

    n_val_pos = max(1, int(round(val_fraction * len(pos)))) if len(pos) > 1 else 0
    n_val_neg = max(1, int(round(val_fraction * len(neg)))) if len(neg) > 1 else 0
    pos_order = rng.permutation(len(pos))
    neg_order = len(pos) + rng.permutation(len(neg))
    val_idx = np.concatenate([pos_order[:n_val_pos], neg_order[:n_val_neg]]).astype(int)
    trn_idx = np.concatenate([pos_order[n_val_pos:], neg_order[n_val_neg:]]).astype(int)
    if len(val_idx) == 0:
        val_idx = trn_idx

    model = TinyPersonClassifier(widths=widths)
    opt = torch.optim.SGD(model.parameters(), lr=lr, momentum=momentum)
    bce = nn.BCELoss()

    best_val = float("inf")
    best_state = {k: v.clone() for k, v in model.state_dict().items()}
    for _ in range(epochs):
        model.train()
        order = rng.permutation(len(trn_idx))
        for start in range(0, len(order), batch_size):
            sel = trn_idx[order[start : start + batch_size]]
            opt.zero_grad()
            out = model(x[sel])
            loss = bce(out, y[sel])
            loss.backward()
            opt.step()
        model.eval()
        with torch.no_grad():
            val_loss = float(bce(model(x[val_idx]), y[val_idx]))
        if val_loss < best_val:
            best_val = val_loss
            best_state = {k: v.clone() for k, v in model.state_dict().items()}
    model.load_state_dict(best_state)
    model.eval()
    return model


def score_images(model: TinyPersonClassifier, images: np.ndarray, input_size: int = 64) -> np.ndarray:
    """Classifier scores in [0, 1] for a stack of HxWx3 images."""
    model.eval()
    with torch.no_grad():
        return model(prepare_inputs(images, input_size)).numpy()


def miss_rate_at_fpr(samples: list[ScoredSample], fpr: float) -> float:
    """Miss rate at the smallest score threshold with empirical FPR <= fpr.

    A sample is classified positive when its score is strictly above the
    threshold, so scores equal to the threshold count as negatives.
    """
    pos = np.array([s.score for s in samples if s.label], dtype=np.float64)
    neg = np.array([s.score for s in samples if not s.label], dtype=np.float64)
    if pos.size == 0 or neg.size == 0:
        raise NoSamples("need at least one positive and one negative")
    if not (0.0 < fpr < 1.0):
        raise ValueError("fpr must lie strictly inside (0, 1)")
    best_mr = None
    for t in np.unique(np.concatenate([pos, neg])):
        if (neg > t).sum() / neg.size <= fpr:
            best_mr = (pos <= t).sum() / pos.size
            break  # thresholds ascend; the first valid one is the smallest
    return float(best_mr)


@dataclass
class Detection:
    image_id: str
    box: tuple[float, float, float, float]  # x0, y0, x1, y1
    score: float


def box_iou(a: tuple[float, float, float, float], b: tuple[float, float, float, float]) -> float:
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    if inter == 0.0:
        return 0.0
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (area_a + area_b - inter)


def _sorted_detections(detections: list[Detection]) -> list[Detection]:
    return sorted(detections, key=lambda d: (-d.score, d.image_id))


def match_detections(
    detections: list[Detection],
    ground_truth: dict[str, list[tuple[float, float, float, float]]],
    iou_threshold: float = 0.5,
) -> list[bool]:
    """Greedy score-ordered matching; one flag per sorted detection.

    Each detection claims the unmatched ground-truth box of its image with
    the highest IoU >= threshold; detections that claim nothing are false
    positives. Greedy assignment in score order makes the outcome at any
    score cutoff equal to matching the cutoff subset from scratch.
    """
    taken: dict[str, set[int]] = {k: set() for k in ground_truth}
    flags = []
    for det in _sorted_detections(detections):
        boxes = ground_truth.get(det.image_id, [])
        best_iou, best_j = 0.0, -1
        for j, gt in enumerate(boxes):
            if j in taken.setdefault(det.image_id, set()):
                continue
            iou = box_iou(det.box, gt)
            if iou >= iou_threshold and iou > best_iou:
                best_iou, best_j = iou, j
        if best_j >= 0:
            taken[det.image_id].add(best_j)
            flags.append(True)
        else:
            flags.append(False)
    return flags


FPPI_POINTS = np.logspace(-2.0, 0.0, 9)


def lamr(
    detections: list[Detection],
    ground_truth: dict[str, list[tuple[float, float, float, float]]],
    iou_threshold: float = 0.5,
) -> float:
    """Miss rate averaged over 9 log-uniform FPPI points in [1e-2, 1].

    Sweeps score thresholds over the matched detections to build the
    (FPPI, miss rate) curve, reads the curve at each reference point
    (largest achieved FPPI not exceeding it), and clamps reference points
    beyond the largest achieved FPPI to the lowest achieved miss rate.
    """
    n_gt = sum(len(v) for v in ground_truth.values())
    if n_gt == 0:
        raise NoGroundTruth("no ground-truth boxes")
    n_images = len(ground_truth)

    dets = _sorted_detections(detections)
    flags = match_detections(detections, ground_truth, iou_threshold)

    # curve points at every distinct score cutoff (detections kept if
    # score >= cutoff); (fppi=0, mr=1) is the empty-cutoff start point
    curve = [(0.0, 1.0)]
    tp = fp = 0
    for i, (det, flag) in enumerate(zip(dets, flags)):
        tp += int(flag)
        fp += int(not flag)
        last_of_tie = i + 1 == len(dets) or dets[i + 1].score != det.score
        if last_of_tie:
            curve.append((fp / n_images, 1.0 - tp / n_gt))

    values = []
    for ref in FPPI_POINTS:
        mr = 1.0
        for fppi, miss in curve:
            if fppi <= ref:
                mr = miss
            else:
                break
        values.append(mr)
    return float(np.mean(values))


def load_detections(path: str | Path) -> list[Detection]:
    """Read a JSON-lines detections file: {image_id, box, score} per line."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            out.append(Detection(image_id=str(rec["image_id"]), box=tuple(rec["box"]), score=float(rec["score"])))
    return out


def metrics_report(samples: list[ScoredSample]) -> dict:
    """Summary metrics for a scored classifier evaluation."""
    n_pos = sum(1 for s in samples if s.label)
    n_neg = len(samples) - n_pos
    return {
        "mr_at_1fpr": miss_rate_at_fpr(samples, 0.01),
        "mr_at_10fpr": miss_rate_at_fpr(samples, 0.10),
        "n_pos": n_pos,
        "n_neg": n_neg,
    }


def roc_sweep(samples: list[ScoredSample]) -> list[tuple[float, float, float]]:
    """(threshold, fpr, miss rate) rows over all distinct score thresholds."""
    pos = np.array([s.score for s in samples if s.label], dtype=np.float64)
    neg = np.array([s.score for s in samples if not s.label], dtype=np.float64)
    rows = []
    for t in np.unique(np.concatenate([pos, neg])):
        rows.append((float(t), float((neg > t).mean()), float((pos <= t).mean())))
    return rows
