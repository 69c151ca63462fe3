"""Max-margin learning of parse feature weights.

Gold paths come from matching detections to ground-truth character masks
(IoU >= 0.8, same label). Weights are learned with the loss-augmented averaged
structured perceptron: per sample, inference runs with a per-edge Hamming loss
added to the transition potentials, and the weights move along the feature
difference between the gold path and the loss-augmented argmax.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

import numpy as np

from .detect import CandidateDetection, detection_mask, mask_iou
from .edges import InvalidInputError
from .parsing import (
    START,
    END,
    FeatureWeights,
    ParseGraph,
    ParsePath,
    infer_best,
    path_features,
)

DEFAULT_IOU_THRESHOLD = 0.8


@dataclass
class GoldMatchRejection:
    character_index: int
    reason: str


@dataclass
class TrainingSample:
    graph: ParseGraph
    gold: ParsePath
    lm: object = None
    image_id: str = ""


@dataclass
class LearnerConfig:
    C: float = 1.0           # learning-rate scale
    max_epochs: int = 30
    tolerance: float = 1e-9
    seed: int = 0
    iou_threshold: float = DEFAULT_IOU_THRESHOLD


@dataclass
class TrainingTrace:
    violations_per_epoch: list[int] = field(default_factory=list)
    converged: bool = False
    final_weights: FeatureWeights | None = None
    averaged_weights: FeatureWeights | None = None


def match_gold(
    graph: ParseGraph,
    gt_masks: list[np.ndarray],
    gt_labels: list[str],
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
    candidate_masks: list[np.ndarray] | None = None,
    image: np.ndarray | None = None,
) -> ParsePath | GoldMatchRejection:
    """Match each ground-truth character (left to right) to the highest-IoU
    same-label candidate at IoU >= threshold, then assemble the gold path.
    Returns a rejection naming the failing character when any character is
    unmatched or the matches cannot be chained in the graph."""
    if candidate_masks is None:
        candidate_masks = [
            detection_mask(det, graph.image_shape, image=image) for det in graph.candidates
        ]
    used: set[int] = set()
    matched: list[int] = []
    for gi, (gmask, glabel) in enumerate(zip(gt_masks, gt_labels)):
        best, best_iou = None, 0.0
        for ci, det in enumerate(graph.candidates):
            if ci in used or det.label != glabel:
                continue
            iou = mask_iou(gmask, candidate_masks[ci])
            if iou > best_iou or (iou == best_iou and best is not None and ci < best):
                best, best_iou = ci, iou
        if best is None or best_iou < iou_threshold:
            return GoldMatchRejection(gi, f"best IoU {best_iou:.3f} below {iou_threshold}")
        used.add(best)
        matched.append(best)

    seq = [START] + matched + [END]
    edge_ids = []
    for u, v in zip(seq, seq[1:]):
        eid = graph.edge_index.get((u, v))
        if eid is None:
            gi = min(seq.index(v) - 1, len(matched) - 1)
            return GoldMatchRejection(gi, f"no graph edge {u}->{v}")
        edge_ids.append(eid)
    word = "".join(graph.candidates[i].label for i in matched)
    return ParsePath(nodes=matched, edge_ids=edge_ids, score=0.0, word=word)


def hamming_loss(path: ParsePath, gold: ParsePath) -> float:
    """Symmetric difference of activated edge sets."""
    a, b = set(path.edge_ids), set(gold.edge_ids)
    return float(len(a ^ b))


def _loss_bonus(graph: ParseGraph, gold: ParsePath) -> dict[int, float]:
    # per-edge augmentation; with the constant |gold| this realizes the Hamming
    # loss over edge sets (the constant does not affect the argmax)
    gold_set = set(gold.edge_ids)
    return {e: (-1.0 if e in gold_set else 1.0) for e in range(len(graph.edges))}


def train_maxmargin(
    samples: list[TrainingSample], config: LearnerConfig | None = None
) -> tuple[FeatureWeights, TrainingTrace]:
    """Loss-augmented structured perceptron with averaging.

    Returns the final weights when training converged (an epoch with zero
    loss-augmented violations; these provably satisfy the margin condition on
    the training set), otherwise the averaged weights. The trace carries both.
    """
    config = config or LearnerConfig()
    if not samples:
        raise InvalidInputError("no valid training samples")
    rng = random.Random(config.seed)
    order = list(range(len(samples)))
    w = np.zeros(18)
    w_sum = np.zeros(18)
    steps = 0
    trace = TrainingTrace()

    gold_feats = [
        path_features(s.graph, s.gold, s.lm) for s in samples
    ]
    for _ in range(config.max_epochs):
        rng.shuffle(order)
        violations = 0
        for idx in order:
            s = samples[idx]
            weights = FeatureWeights.from_vector(w)
            bonus = _loss_bonus(s.graph, s.gold)
            pred = infer_best(s.graph, weights, k=1, lm=s.lm, edge_bonus=bonus)
            if not pred:
                continue
            pred = pred[0]
            if set(pred.edge_ids) != set(s.gold.edge_ids):
                violations += 1
                phi_pred = path_features(s.graph, pred, s.lm)
                w = w + config.C * (gold_feats[idx] - phi_pred)
            w_sum += w
            steps += 1
        trace.violations_per_epoch.append(violations)
        if violations == 0:
            trace.converged = True
            break

    trace.final_weights = FeatureWeights.from_vector(w)
    trace.averaged_weights = FeatureWeights.from_vector(w_sum / max(steps, 1))
    result = trace.final_weights if trace.converged else trace.averaged_weights
    return result, trace


# ---------------------------------------------------------------------------
# ground-truth segmentation files (GTSEG v1): exact row runs per character

def save_gtseg(path, labels: list[str], masks: list[np.ndarray], shape: tuple[int, int]) -> None:
    h, w = shape
    lines = [f"GTSEG v1 {w} {h}"]
    for label, mask in zip(labels, masks):
        runs = []
        for y in range(mask.shape[0]):
            xs = np.nonzero(mask[y])[0]
            if len(xs) == 0:
                continue
            start = prev = int(xs[0])
            for x in xs[1:]:
                if x == prev + 1:
                    prev = int(x)
                else:
                    runs.append((y, start, prev))
                    start = prev = int(x)
            runs.append((y, start, prev))
        lines.append(f"char {label} {len(runs)}")
        lines.extend(f"run {y} {x0} {x1}" for y, x0, x1 in runs)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_gtseg(path) -> tuple[list[str], list[np.ndarray], tuple[int, int]]:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    head = lines[0].split()
    if head[:2] != ["GTSEG", "v1"]:
        raise InvalidInputError("not a GTSEG v1 file")
    w, h = int(head[2]), int(head[3])
    labels: list[str] = []
    masks: list[np.ndarray] = []
    i = 1
    while i < len(lines):
        toks = lines[i].split()
        if toks[0] != "char":
            raise InvalidInputError(f"unexpected line {lines[i]!r}")
        label, nruns = toks[1], int(toks[2])
        mask = np.zeros((h, w), dtype=bool)
        i += 1
        for _ in range(nruns):
            _, y, x0, x1 = lines[i].split()
            mask[int(y), int(x0) : int(x1) + 1] = True
            i += 1
        labels.append(label)
        masks.append(mask)
    return labels, masks, (h, w)
