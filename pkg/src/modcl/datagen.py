"""Seeded synthetic detection streams for training and evaluation harnesses.

Ground-truth label sets are random draws repaired by MaxSAT so they satisfy
the requirements (and carry at least one agent label); detector scores are
the ground truth plus clipped Gaussian noise and random flips.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .detections import Box, Detection, DetectionFrame, GroundTruthFrame, LabeledBox
from .errors import InputError
from .maxsat import WcnfProblem, solve


@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
    num_frames: int = 100
    min_boxes: int = 1
    max_boxes: int = 3
    sigma: float = 0.2
    flip: float = 0.05
    labeled_fraction: float = 0.5
    label_density: float = 0.15
    width: float = 640.0
    height: float = 480.0

    def __post_init__(self):
        if min(self.seed, self.num_frames, self.min_boxes, self.sigma, self.flip,
               self.labeled_fraction, self.label_density) < 0:
            raise InputError("generator parameters must be nonnegative")
        if self.max_boxes < self.min_boxes:
            raise InputError("max_boxes < min_boxes")
        if self.labeled_fraction > 1 or self.flip > 1 or self.label_density > 1:
            raise InputError("fractions and probabilities must be <= 1")


@dataclass(frozen=True, eq=False)
class GeneratedData:
    scores: list[DetectionFrame]
    truth: list[GroundTruthFrame]
    labeled: list[str]
    unlabeled: list[str]

    def split_json(self) -> str:
        return json.dumps({"labeled": self.labeled, "unlabeled": self.unlabeled}, separators=(",", ":")) + "\n"


def _hard_clauses(rs):
    clauses = rs.to_int_clauses()
    agents = [int(i) + 1 for i in rs.label_space.agent_indices]
    if not any(sorted(c) == agents for c in clauses):
        clauses.append(agents)
    return clauses


def sample_labelset(rs, rng: np.random.Generator, density: float = 0.15) -> np.ndarray:
    """Random label draw repaired to the nearest requirement-satisfying set with an agent."""
    n = rs.num_labels
    draw = rng.random(n) < density
    hi = rng.uniform(0.5, 1.0, n)
    lo = rng.uniform(0.0, 0.5, n)
    p = np.where(draw, hi, lo)
    soft = []
    for x, px in enumerate(p.tolist()):
        w = int(round(1000 * abs(2 * px - 1)))
        if w > 0:
            soft.append(((x + 1 if px > 0.5 else -(x + 1),), w))
    values, _ = solve(WcnfProblem.build(n, _hard_clauses(rs), soft))
    return values


def perturb(labels: np.ndarray, rng: np.random.Generator, sigma: float, flip: float) -> np.ndarray:
    noise = rng.normal(0.0, 1.0, labels.shape) * sigma
    scores = np.clip(labels.astype(np.float64) + noise, 0.0, 1.0)
    flips = rng.random(labels.shape) < flip
    return np.where(flips, 1.0 - scores, scores)


def _random_box(rng, cfg: GenConfig) -> Box:
    w, h = rng.uniform(20.0, 200.0, 2)
    x1 = rng.uniform(0.0, cfg.width - w)
    y1 = rng.uniform(0.0, cfg.height - h)
    return Box(*(round(float(v), 2) for v in (x1, y1, x1 + w, y1 + h)))


def generate(rs, cfg: GenConfig) -> GeneratedData:
    rng = np.random.default_rng(cfg.seed)
    scores, truth = [], []
    for i in range(cfg.num_frames):
        fid = f"{i:06d}"
        k = int(rng.integers(cfg.min_boxes, cfg.max_boxes + 1))
        dets, gts = [], []
        for _ in range(k):
            box = _random_box(rng, cfg)
            labels = sample_labelset(rs, rng, cfg.label_density)
            gts.append(LabeledBox(box, labels))
            dets.append(Detection(box, perturb(labels, rng, cfg.sigma, cfg.flip)))
        scores.append(DetectionFrame(fid, tuple(dets)))
        truth.append(GroundTruthFrame(fid, tuple(gts)))
    n_labeled = int(np.floor(cfg.labeled_fraction * cfg.num_frames))
    ids = [f.frame_id for f in scores]
    return GeneratedData(scores, truth, ids[:n_labeled], ids[n_labeled:])


def stack_scores(frames) -> np.ndarray:
    """All detection score vectors of a stream as one ``(M, N)`` array."""
    rows = [d.scores for f in frames for d in f.detections]
    return np.stack(rows) if rows else np.zeros((0, 0))


def stack_labels(frames) -> np.ndarray:
    rows = [d.labels for f in frames for d in f.detections]
    return np.stack(rows) if rows else np.zeros((0, 0), dtype=bool)
