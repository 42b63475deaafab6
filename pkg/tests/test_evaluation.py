"""Classifier construction and the miss-rate metrics with brute-force oracles."""
import numpy as np
import pytest

from dummynet.errors import EmptyDataset, NoGroundTruth, NoSamples
from dummynet.evaluation import (
    CLASSIFIER_PARAM_COUNT,
    DEFAULT_CONV_WIDTHS,
    Detection,
    ScoredSample,
    TinyPersonClassifier,
    classifier_param_count,
    lamr,
    load_detections,
    match_detections,
    miss_rate_at_fpr,
    prepare_inputs,
    train_classifier,
)


def oracle_mr_at_fpr(pos, neg, fpr):
    """Exhaustive sweep over all distinct scores."""
    best = None
    for t in sorted(set(pos) | set(neg)):
        if sum(1 for s in neg if s > t) / len(neg) <= fpr:
            mr = sum(1 for s in pos if s <= t) / len(pos)
            if best is None:
                best = (t, mr)
    return best[1]


class TestMissRateAtFpr:
    def test_separable(self):
        samples = [ScoredSample(0.9, True), ScoredSample(0.8, True),
                   ScoredSample(0.1, False), ScoredSample(0.2, False)]
        assert miss_rate_at_fpr(samples, 0.10) == 0.0

    def test_all_equal_scores(self):
        samples = [ScoredSample(0.5, True)] * 3 + [ScoredSample(0.5, False)] * 3
        for fpr in (0.01, 0.10, 0.5, 0.99):
            assert miss_rate_at_fpr(samples, fpr) == 1.0

    def test_matches_oracle_100_seeds(self):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            n_pos = int(rng.integers(20, 100))
            n_neg = 200 - n_pos
            pos = rng.uniform(size=n_pos)
            neg = rng.uniform(size=n_neg) * rng.uniform(0.5, 1.0)
            samples = [ScoredSample(float(s), True) for s in pos] + [
                ScoredSample(float(s), False) for s in neg
            ]
            fpr = float(rng.uniform(0.01, 0.5))
            assert miss_rate_at_fpr(samples, fpr) == oracle_mr_at_fpr(pos, neg, fpr)

    def test_monotone_in_fpr(self):
        rng = np.random.default_rng(7)
        samples = [ScoredSample(float(s), True) for s in rng.uniform(size=60)] + [
            ScoredSample(float(s), False) for s in rng.uniform(size=140)
        ]
        values = [miss_rate_at_fpr(samples, f) for f in np.linspace(0.01, 0.9, 25)]
        assert all(a >= b - 1e-12 for a, b in zip(values, values[1:]))

    def test_requires_both_classes(self):
        with pytest.raises(NoSamples):
            miss_rate_at_fpr([ScoredSample(0.5, True)], 0.1)


def oracle_lamr(detections, ground_truth, iou_threshold=0.5):
    """Re-match the kept subset from scratch at every threshold."""
    from dummynet.evaluation import box_iou

    n_gt = sum(len(v) for v in ground_truth.values())
    n_images = len(ground_truth)
    scores = sorted({d.score for d in detections}, reverse=True)
    curve = [(0.0, 1.0)]
    for t in scores:
        kept = [d for d in detections if d.score >= t]
        kept.sort(key=lambda d: (-d.score, d.image_id))
        taken = {k: set() for k in ground_truth}
        tp = fp = 0
        for det in kept:
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
                tp += 1
            else:
                fp += 1
        curve.append((fp / n_images, 1.0 - tp / n_gt))
    values = []
    for ref in np.logspace(-2, 0, 9):
        mr = 1.0
        for fppi, miss in curve:
            if fppi <= ref:
                mr = miss
        values.append(mr)
    return float(np.mean(values))


def random_detection_problem(rng, n_images=10):
    ground_truth = {}
    detections = []
    for i in range(n_images):
        image_id = f"img{i}"
        boxes = []
        for _ in range(int(rng.integers(0, 4))):
            x0, y0 = rng.uniform(0, 80, size=2)
            w, h = rng.uniform(8, 30, size=2)
            boxes.append((x0, y0, x0 + w, y0 + h))
        ground_truth[image_id] = boxes
        for box in boxes:
            if rng.uniform() < 0.8:  # noisy true positive
                jitter = rng.uniform(-3, 3, size=4)
                det_box = tuple(np.array(box) + jitter)
                detections.append(Detection(image_id, det_box, float(rng.uniform())))
        for _ in range(int(rng.integers(0, 3))):  # false positives
            x0, y0 = rng.uniform(0, 80, size=2)
            detections.append(
                Detection(image_id, (x0, y0, x0 + 10, y0 + 10), float(rng.uniform()))
            )
    if not any(ground_truth.values()):
        ground_truth["img0"] = [(0, 0, 10, 10)]
    return detections, ground_truth


class TestLamr:
    def test_perfect_detector_zero(self):
        gt = {"a": [(0, 0, 10, 10)], "b": [(5, 5, 20, 20)]}
        dets = [Detection("a", (0, 0, 10, 10), 1.0), Detection("b", (5, 5, 20, 20), 1.0)]
        assert lamr(dets, gt) == 0.0

    def test_silent_detector_one(self):
        gt = {"a": [(0, 0, 10, 10)]}
        assert lamr([], gt) == 1.0

    def test_matches_bruteforce_oracle(self):
        for seed in range(30):
            rng = np.random.default_rng(seed)
            dets, gt = random_detection_problem(rng)
            assert lamr(dets, gt) == pytest.approx(oracle_lamr(dets, gt), abs=1e-12)

    def test_invariant_to_monotone_score_rescale(self):
        rng = np.random.default_rng(123)
        dets, gt = random_detection_problem(rng)
        rescaled = [Detection(d.image_id, d.box, d.score * 0.3 + 0.5) for d in dets]
        assert lamr(dets, gt) == lamr(rescaled, gt)

    def test_bounded(self):
        for seed in range(10):
            rng = np.random.default_rng(seed + 100)
            dets, gt = random_detection_problem(rng)
            assert 0.0 <= lamr(dets, gt) <= 1.0

    def test_no_ground_truth_raises(self):
        with pytest.raises(NoGroundTruth):
            lamr([], {"a": []})

    def test_greedy_matching_flags(self):
        gt = {"a": [(0, 0, 10, 10)]}
        dets = [
            Detection("a", (0, 0, 10, 10), 0.9),
            Detection("a", (1, 1, 11, 11), 0.8),  # second match on same GT -> FP
        ]
        assert match_detections(dets, gt) == [True, False]


class TestClassifier:
    def test_param_count_fixture(self):
        model = TinyPersonClassifier()
        realized = sum(p.numel() for p in model.parameters())
        assert realized == CLASSIFIER_PARAM_COUNT == 6729
        assert classifier_param_count(DEFAULT_CONV_WIDTHS) == realized

    def test_param_count_formula_other_widths(self):
        widths = (4, 8, 8, 16)
        model = TinyPersonClassifier(widths=widths)
        assert sum(p.numel() for p in model.parameters()) == classifier_param_count(widths)

    def test_input_rescaled_to_128(self):
        rng = np.random.default_rng(0)
        imgs = rng.uniform(size=(2, 50, 70, 3))
        batch = prepare_inputs(imgs, 128)
        assert batch.shape == (2, 3, 128, 128)
        model = TinyPersonClassifier()
        out = model(batch)
        assert out.shape == (2,) and float(out.min()) >= 0.0 and float(out.max()) <= 1.0

    def test_empty_dataset_raises(self):
        with pytest.raises(EmptyDataset):
            train_classifier(np.zeros((0, 8, 8, 3)), np.zeros((1, 8, 8, 3)))

    def test_separable_task_zero_miss_rate(self):
        rng = np.random.default_rng(0)
        pos = np.clip(rng.uniform(0.7, 1.0, size=(24, 32, 32, 3)), 0, 1)
        neg = np.clip(rng.uniform(0.0, 0.3, size=(24, 32, 32, 3)), 0, 1)
        model = train_classifier(pos, neg, seed=0, epochs=18, input_size=32)
        from dummynet.evaluation import score_images

        test_pos = np.clip(rng.uniform(0.7, 1.0, size=(16, 32, 32, 3)), 0, 1)
        test_neg = np.clip(rng.uniform(0.0, 0.3, size=(16, 32, 32, 3)), 0, 1)
        samples = [ScoredSample(float(s), True) for s in score_images(model, test_pos, 32)] + [
            ScoredSample(float(s), False) for s in score_images(model, test_neg, 32)
        ]
        assert miss_rate_at_fpr(samples, 0.10) == 0.0

    def test_training_reproducible_for_seed(self):
        rng = np.random.default_rng(1)
        pos = rng.uniform(size=(12, 32, 32, 3))
        neg = rng.uniform(size=(12, 32, 32, 3))
        a = train_classifier(pos, neg, seed=3, epochs=4, input_size=32)
        b = train_classifier(pos, neg, seed=3, epochs=4, input_size=32)
        for pa, pb in zip(a.parameters(), b.parameters()):
            assert np.array_equal(pa.detach().numpy(), pb.detach().numpy())


class TestDetectionIO:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "dets.jsonl"
        path.write_text(
            '{"image_id": "a", "box": [1, 2, 3, 4], "score": 0.5}\n'
            '{"image_id": "b", "box": [0, 0, 5, 5], "score": 0.25}\n'
        )
        dets = load_detections(path)
        assert len(dets) == 2
        assert dets[0].image_id == "a" and dets[0].box == (1, 2, 3, 4)
