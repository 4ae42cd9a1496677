"""Boxes, detection frames, agent-wise thresholding and NMS, JSON-lines I/O.

Stream files hold one frame per line::

    {"frame_id": "f0", "detections": [{"box": [x1, y1, x2, y2], "scores": [...]}]}

Ground-truth and decoded streams use ``"labels": [true, false, ...]`` in
place of ``"scores"``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import _kernels
from .errors import InputError, LabelSpaceMismatch, ParseError
from .fuzzy import score_vector

DEFAULT_TAU = 0.25
DEFAULT_IOU = 0.5
NMS_MODES = ("agnostic", "per_agent")


@dataclass(frozen=True)
class Box:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(np.isfinite(c) for c in coords):
            raise InputError(f"non-finite box {coords}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise InputError(f"degenerate box {coords}")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def as_list(self) -> list[float]:
        return [self.x1, self.y1, self.x2, self.y2]


def iou(a: Box, b: Box) -> float:
    w = min(a.x2, b.x2) - max(a.x1, b.x1)
    h = min(a.y2, b.y2) - max(a.y1, b.y1)
    if w <= 0 or h <= 0:
        return 0.0
    inter = w * h
    return inter / (a.area + b.area - inter)


@dataclass(frozen=True, eq=False)
class Detection:
    box: Box
    scores: np.ndarray


@dataclass(frozen=True, eq=False)
class LabeledBox:
    box: Box
    labels: np.ndarray


@dataclass(frozen=True, eq=False)
class DetectionFrame:
    frame_id: str
    detections: tuple[Detection, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not self.frame_id:
            raise InputError("frame_id must be nonempty")


@dataclass(frozen=True, eq=False)
class GroundTruthFrame:
    frame_id: str
    detections: tuple[LabeledBox, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not self.frame_id:
            raise InputError("frame_id must be nonempty")


def _agent_scores(frame: DetectionFrame, ls) -> np.ndarray:
    agents = ls.agent_indices
    if agents.size == 0:
        raise InputError("label space has no agent labels")
    if not frame.detections:
        return np.zeros((0, agents.size))
    scores = np.stack([d.scores for d in frame.detections])
    if scores.shape[1] != len(ls):
        raise LabelSpaceMismatch(f"detections carry {scores.shape[1]} scores, label space has {len(ls)}")
    return scores[:, agents]


def agent_threshold(frame: DetectionFrame, ls, tau: float = DEFAULT_TAU) -> DetectionFrame:
    """Keep detections whose best agent score exceeds ``tau``."""
    if not 0.0 <= tau <= 1.0:
        raise InputError("tau must lie in [0, 1]")
    agent = _agent_scores(frame, ls)
    keep = [d for d, s in zip(frame.detections, agent) if s.max() > tau]
    return DetectionFrame(frame.frame_id, tuple(keep))


def agent_nms(frame: DetectionFrame, ls, tau_iou: float = DEFAULT_IOU, mode: str = "agnostic") -> DetectionFrame:
    """Greedy NMS ranked by the best agent score; ties go to the earlier detection.

    In ``per_agent`` mode only boxes sharing their arg-max agent label suppress
    each other.  Kept detections keep their full score vectors and input order.
    """
    if not 0.0 <= tau_iou <= 1.0:
        raise InputError("tau_iou must lie in [0, 1]")
    if mode not in NMS_MODES:
        raise InputError(f"unknown NMS mode {mode!r}")
    if not frame.detections:
        return frame
    agent = _agent_scores(frame, ls)
    boxes = np.array([d.box.as_list() for d in frame.detections], dtype=np.float64)
    classes = np.argmax(agent, axis=1) if mode == "per_agent" else None
    keep = _kernels.greedy_nms(boxes, agent.max(axis=1), classes, float(tau_iou))
    return DetectionFrame(frame.frame_id, tuple(frame.detections[int(i)] for i in sorted(keep)))


# -- JSON lines -----------------------------------------------------------


def _box_from(raw, lineno) -> Box:
    if not isinstance(raw, list) or len(raw) != 4:
        raise ParseError("box must be a list of four numbers", lineno)
    try:
        return Box(*(float(v) for v in raw))
    except (TypeError, ValueError, InputError) as exc:
        raise ParseError(str(exc), lineno) from None


def _frames(text: str):
    seen = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", lineno) from None
        fid = obj.get("frame_id") if isinstance(obj, dict) else None
        if not isinstance(fid, str) or not fid:
            raise ParseError("missing frame_id", lineno)
        if fid in seen:
            raise ParseError(f"duplicate frame_id {fid!r}", lineno)
        seen.add(fid)
        dets = obj.get("detections", [])
        if not isinstance(dets, list):
            raise ParseError("detections must be a list", lineno)
        yield lineno, fid, dets


def read_detections(text: str, n: int | None = None) -> list[DetectionFrame]:
    frames = []
    for lineno, fid, dets in _frames(text):
        out = []
        for d in dets:
            try:
                scores = score_vector(d["scores"], n)
            except (KeyError, TypeError):
                raise ParseError("detection without scores", lineno) from None
            except InputError as exc:
                raise ParseError(str(exc), lineno) from None
            out.append(Detection(_box_from(d.get("box"), lineno), scores))
        frames.append(DetectionFrame(fid, tuple(out)))
    return frames


def read_ground_truth(text: str, n: int | None = None) -> list[GroundTruthFrame]:
    frames = []
    for lineno, fid, dets in _frames(text):
        out = []
        for d in dets:
            labels = d.get("labels") if isinstance(d, dict) else None
            if not isinstance(labels, list) or not all(isinstance(v, bool) for v in labels):
                raise ParseError("labels must be a list of booleans", lineno)
            if n is not None and len(labels) != n:
                raise ParseError(f"labels have length {len(labels)}, expected {n}", lineno)
            out.append(LabeledBox(_box_from(d.get("box"), lineno), np.array(labels, dtype=bool)))
        frames.append(GroundTruthFrame(fid, tuple(out)))
    return frames


def frame_to_json(frame) -> str:
    dets = []
    for d in frame.detections:
        if isinstance(d, Detection):
            dets.append({"box": d.box.as_list(), "scores": [float(v) for v in d.scores]})
        else:
            dets.append({"box": d.box.as_list(), "labels": [bool(v) for v in d.labels]})
    return json.dumps({"frame_id": frame.frame_id, "detections": dets}, separators=(",", ":"))


def write_stream(frames: Iterable) -> str:
    return "".join(frame_to_json(f) + "\n" for f in frames)
