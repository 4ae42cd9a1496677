"""Frame-level detection metrics: per-label AP / frame-mAP and micro P/R/F1.

Matching conventions
--------------------
frame-mAP: for each label, predictions from all frames are ranked by that
label's score (ties by frame id, then detection index).  Each prediction
is matched to the unmatched ground-truth box in its frame that carries the
label and has the highest IoU >= threshold; AP uses all-points
interpolation.  The mean runs over labels with at least one GT instance.

P/R/F1: per frame, each prediction is paired with its highest-IoU GT box;
pairs with IoU >= threshold are accepted greedily by descending IoU.  Within a matched pair every predicted label is a TP if the
GT box carries it and an FP otherwise; GT labels not predicted are FNs.
Unmatched predictions count all their labels as FPs, unmatched GT boxes
all theirs as FNs.  Counts are micro-averaged.
"""

from __future__ import annotations

import json
from fractions import Fraction
from dataclasses import dataclass

import numpy as np

from .detections import iou
from .errors import InputError


@dataclass(frozen=True)
class MatchConfig:
    iou_threshold: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.iou_threshold <= 1.0:
            raise InputError("iou_threshold must lie in (0, 1]")


@dataclass(frozen=True, eq=False)
class EvalReport:
    ap: np.ndarray | None = None
    gt_counts: np.ndarray | None = None
    frame_map: float | None = None
    precision: float | None = None
    recall: float | None = None
    f1: float | None = None
    tp: np.ndarray | None = None
    fp: np.ndarray | None = None
    fn: np.ndarray | None = None

    def summary(self) -> dict:
        out = {}
        if self.frame_map is not None:
            out["frame_map"] = self.frame_map
            out["ap"] = [float(v) for v in self.ap]
            out["gt_counts"] = [int(v) for v in self.gt_counts]
        if self.f1 is not None:
            out.update(precision=self.precision, recall=self.recall, f1=self.f1,
                       tp=[int(v) for v in self.tp], fp=[int(v) for v in self.fp], fn=[int(v) for v in self.fn])
        return out

    def to_json(self) -> str:
        return json.dumps(self.summary(), separators=(",", ":")) + "\n"

    def to_table(self, names=None) -> str:
        lines = []
        if self.frame_map is not None:
            lines.append(f"frame_map {self.frame_map:.6f}")
            for i, (a, c) in enumerate(zip(self.ap, self.gt_counts)):
                name = names[i] if names is not None else str(i)
                if c:
                    lines.append(f"ap[{name}] {a:.6f}")
        if self.f1 is not None:
            lines.append(f"precision {self.precision:.6f}")
            lines.append(f"recall {self.recall:.6f}")
            lines.append(f"f1 {self.f1:.6f}")
            lines.append(f"tp {int(self.tp.sum())}")
            lines.append(f"fp {int(self.fp.sum())}")
            lines.append(f"fn {int(self.fn.sum())}")
        return "\n".join(lines) + "\n"


def _pair_frames(preds, gt):
    gt_by_id = {f.frame_id: f for f in gt}
    pred_ids = [f.frame_id for f in preds]
    if set(pred_ids) != set(gt_by_id) or len(pred_ids) != len(gt_by_id):
        raise InputError("prediction and ground-truth streams cover different frame ids")
    return [(p, gt_by_id[p.frame_id]) for p in preds]


def _num_labels(pairs):
    for p, g in pairs:
        for d in g.detections:
            return d.labels.size
        for d in p.detections:
            return (d.scores if hasattr(d, "scores") else d.labels).size
    return 0


def _exact_ap(is_tp, n_gt: int) -> Fraction:
    if n_gt == 0 or len(is_tp) == 0:
        return Fraction(0)
    tp = np.cumsum(np.asarray(is_tp, dtype=np.int64)).tolist()
    # precision envelope, right to left, compared exactly as tp_i / i
    best_num, best_den = 0, 1
    total = Fraction(0)
    for i in range(len(tp) - 1, -1, -1):
        num, den = tp[i], i + 1
        if num * best_den > best_num * den:
            best_num, best_den = num, den
        if is_tp[i]:
            total += Fraction(best_num, best_den)
    return total / n_gt


def average_precision(is_tp: np.ndarray, n_gt: int) -> float:
    """All-points interpolated AP of a ranked TP/FP sequence, rounded once from the exact value."""
    return float(_exact_ap(is_tp, n_gt))


def frame_map(preds, gt, cfg: MatchConfig = MatchConfig(), n: int | None = None) -> EvalReport:
    pairs = sorted(_pair_frames(preds, gt), key=lambda pg: pg[0].frame_id)
    n = n if n is not None else _num_labels(pairs)
    ap = np.zeros(n)
    exact = [Fraction(0)] * n
    counts = np.zeros(n, dtype=np.int64)
    for label in range(n):
        gts = []
        ranked = []
        for f, (p, g) in enumerate(pairs):
            gts.append([d.box for d in g.detections if d.labels[label]])
            ranked += [(-float(d.scores[label]), f, k, d.box) for k, d in enumerate(p.detections)]
        counts[label] = sum(len(b) for b in gts)
        if counts[label] == 0:
            continue
        ranked.sort(key=lambda t: t[:3])
        matched = [np.zeros(len(b), dtype=bool) for b in gts]
        is_tp = np.zeros(len(ranked), dtype=bool)
        for r, (_, f, _, box) in enumerate(ranked):
            best, best_j = -1.0, -1
            for j, gbox in enumerate(gts[f]):
                if matched[f][j]:
                    continue
                v = iou(box, gbox)
                if v >= cfg.iou_threshold and v > best:
                    best, best_j = v, j
            if best_j >= 0:
                matched[f][best_j] = True
                is_tp[r] = True
        exact[label] = _exact_ap(is_tp.tolist(), int(counts[label]))
        ap[label] = float(exact[label])
    present = [i for i in range(n) if counts[i]]
    fmap = float(sum(exact[i] for i in present) / len(present)) if present else 0.0
    return EvalReport(ap=ap, gt_counts=counts, frame_map=fmap)


def match_boxes(pred_boxes, gt_boxes, threshold: float):
    """Greedy one-to-one matching by descending IoU; returns (pred, gt) index pairs.

    Each prediction only competes for its own highest-IoU GT box (lowest
    index on ties), so a duplicated prediction can never pick up a second
    GT box that the original left free.
    """
    cand = []
    for i, pb in enumerate(pred_boxes):
        best, best_j = -1.0, -1
        for j, gb in enumerate(gt_boxes):
            v = iou(pb, gb)
            if v > best:
                best, best_j = v, j
        if best_j >= 0 and best >= threshold:
            cand.append((-best, i, best_j))
    cand.sort()
    used_g, pairs = set(), []
    for _, i, j in cand:
        if j in used_g:
            continue
        used_g.add(j)
        pairs.append((i, j))
    return pairs


def prf1(preds, gt, cfg: MatchConfig = MatchConfig(), n: int | None = None) -> EvalReport:
    pairs = _pair_frames(preds, gt)
    n = n if n is not None else _num_labels(pairs)
    tp = np.zeros(n, dtype=np.int64)
    fp = np.zeros(n, dtype=np.int64)
    fn = np.zeros(n, dtype=np.int64)
    for p, g in pairs:
        matches = match_boxes([d.box for d in p.detections], [d.box for d in g.detections], cfg.iou_threshold)
        mp = {i for i, _ in matches}
        mg = {j for _, j in matches}
        for i, j in matches:
            a, b = p.detections[i].labels, g.detections[j].labels
            tp += a & b
            fp += a & ~b
            fn += ~a & b
        for i, d in enumerate(p.detections):
            if i not in mp:
                fp += d.labels
        for j, d in enumerate(g.detections):
            if j not in mg:
                fn += d.labels
    t, f_p, f_n = int(tp.sum()), int(fp.sum()), int(fn.sum())
    precision = t / (t + f_p) if t + f_p else 0.0
    recall = t / (t + f_n) if t + f_n else 0.0
    # 2PR / (P + R) simplifies to 2TP / (2TP + FP + FN); one correctly rounded division
    f1 = 2 * t / (2 * t + f_p + f_n) if t else 0.0
    return EvalReport(precision=precision, recall=recall, f1=f1, tp=tp, fp=fp, fn=fn)


def violation_rate(rs, scores: np.ndarray, threshold: float = 0.5) -> float:
    """Fraction of score vectors whose thresholded label set violates a requirement."""
    scores = np.asarray(scores)
    if len(scores) == 0 or len(rs) == 0:
        return 0.0
    values = scores > threshold
    cc = rs.compiled
    lit_true = (values[:, cc.index] != cc.negated) & cc.mask
    return float((~lit_true.any(axis=2)).any(axis=1).mean())
