import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modcl.detections import (
    Box,
    Detection,
    DetectionFrame,
    agent_nms,
    agent_threshold,
    iou,
    read_detections,
    read_ground_truth,
    write_stream,
)
from modcl.errors import InputError, LabelSpaceMismatch, ParseError
from modcl.requirements import parse_labelspace


@pytest.fixture(scope="module")
def ls():
    return parse_labelspace("ped agent\ncar agent\nmove action\n")


def det(box, scores):
    return Detection(Box(*box), np.array(scores, dtype=float))


def test_iou_values():
    a = Box(0, 0, 10, 10)
    assert iou(a, a) == 1.0
    assert iou(a, Box(5, 0, 15, 10)) == pytest.approx(50 / 150)
    assert iou(a, Box(10, 0, 20, 10)) == 0.0
    assert iou(a, Box(20, 20, 30, 30)) == 0.0


@pytest.mark.parametrize("coords", [(0, 0, 0, 5), (5, 0, 1, 5), (0, float("nan"), 1, 1)])
def test_box_rejects(coords):
    with pytest.raises(InputError):
        Box(*coords)


def test_agent_threshold(ls):
    frame = DetectionFrame("f", (det([0, 0, 1, 1], [0.3, 0.1, 0.9]), det([0, 0, 1, 1], [0.2, 0.25, 0.9])))
    kept = agent_threshold(frame, ls, tau=0.25)
    assert len(kept.detections) == 1
    assert kept.detections[0] is frame.detections[0]
    with pytest.raises(InputError):
        agent_threshold(frame, ls, tau=1.5)


def test_nms_example(ls):
    frame = DetectionFrame("f", (
        det([0, 0, 10, 10], [0.6, 0.1, 0.0]),
        det([1, 0, 11, 10], [0.1, 0.9, 0.0]),
        det([50, 50, 60, 60], [0.2, 0.2, 0.0]),
    ))
    kept = agent_nms(frame, ls, 0.5)
    assert [d is frame.detections[i] for i, d in zip([1, 2], kept.detections)] == [True, True]
    per = agent_nms(frame, ls, 0.5, mode="per_agent")
    assert len(per.detections) == 3


def test_nms_tie_goes_to_earlier(ls):
    frame = DetectionFrame("f", (det([0, 0, 10, 10], [0.5, 0, 0]), det([0, 0, 10, 10], [0.5, 0, 0])))
    kept = agent_nms(frame, ls)
    assert len(kept.detections) == 1 and kept.detections[0] is frame.detections[0]


def test_nms_threshold_is_strict(ls):
    # IoU exactly 1/3 is not suppressed at tau_iou = 1/3
    frame = DetectionFrame("f", (det([0, 0, 10, 10], [0.9, 0, 0]), det([5, 0, 15, 10], [0.8, 0, 0])))
    assert len(agent_nms(frame, ls, 50 / 150).detections) == 2
    assert len(agent_nms(frame, ls, 0.3).detections) == 1


def test_nms_errors(ls):
    frame = DetectionFrame("f", (det([0, 0, 1, 1], [0.5, 0.5]),))
    with pytest.raises(LabelSpaceMismatch):
        agent_nms(frame, ls)
    with pytest.raises(InputError):
        agent_nms(DetectionFrame("f"), ls, mode="soft")
    assert agent_nms(DetectionFrame("f"), ls).detections == ()


def reference_nms(frame, ls, tau_iou, mode="agnostic"):
    """Quadratic reference: repeatedly take the best remaining box and drop its overlaps."""
    agents = ls.agent_indices
    remaining = list(range(len(frame.detections)))
    keep = []
    while remaining:
        best = min(remaining, key=lambda i: (-frame.detections[i].scores[agents].max(), i))
        keep.append(best)
        cls = int(np.argmax(frame.detections[best].scores[agents]))
        remaining = [
            j for j in remaining
            if j != best and not (
                iou(frame.detections[best].box, frame.detections[j].box) > tau_iou
                and (mode == "agnostic" or int(np.argmax(frame.detections[j].scores[agents])) == cls)
            )
        ]
    return sorted(keep)


def random_frame(rng, n_labels, count, quantize=False):
    dets = []
    for _ in range(count):
        x, y = rng.uniform(0, 80, size=2)
        w, h = rng.uniform(5, 40, size=2)
        scores = rng.random(n_labels)
        if quantize:
            scores = np.round(scores * 4) / 4
        dets.append(Detection(Box(x, y, x + w, y + h), scores))
    return DetectionFrame("f", tuple(dets))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["agnostic", "per_agent"]), st.sampled_from([0.0, 0.3, 0.5, 0.9]))
def test_nms_matches_reference(ls, seed, mode, tau_iou):
    rng = np.random.default_rng(seed)
    frame = random_frame(rng, 3, int(rng.integers(0, 15)), quantize=bool(seed % 2))
    kept = agent_nms(frame, ls, tau_iou, mode)
    index = {id(d): i for i, d in enumerate(frame.detections)}
    assert [index[id(d)] for d in kept.detections] == reference_nms(frame, ls, tau_iou, mode)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_nms_properties(ls, seed):
    rng = np.random.default_rng(seed)
    frame = random_frame(rng, 3, int(rng.integers(0, 20)))
    kept = agent_nms(frame, ls, 0.4)
    boxes = [d.box for d in kept.detections]
    for i in range(len(boxes)):
        for j in range(i + 1, len(boxes)):
            assert iou(boxes[i], boxes[j]) <= 0.4
    again = agent_nms(kept, ls, 0.4)
    assert [id(d) for d in again.detections] == [id(d) for d in kept.detections]
    # permutation invariance (scores are distinct almost surely)
    perm = rng.permutation(len(frame.detections))
    shuffled = DetectionFrame("f", tuple(frame.detections[i] for i in perm))
    assert {id(d) for d in agent_nms(shuffled, ls, 0.4).detections} == {id(d) for d in kept.detections}


def test_json_round_trip():
    text = (
        '{"frame_id":"a","detections":[{"box":[0.0,0.0,1.0,2.0],"scores":[0.1,0.9,0.5]}]}\n'
        '{"frame_id":"b","detections":[]}\n'
    )
    frames = read_detections(text, 3)
    assert write_stream(frames) == text
    gt = '{"frame_id":"a","detections":[{"box":[0.0,0.0,1.0,2.0],"labels":[true,false,true]}]}\n'
    assert write_stream(read_ground_truth(gt, 3)) == gt


@pytest.mark.parametrize(
    "line",
    [
        "not json",
        '{"detections":[]}',
        '{"frame_id":"a","detections":[{"box":[0,0,1,1]}]}',
        '{"frame_id":"a","detections":[{"box":[0,0,1],"scores":[0.1,0.1,0.1]}]}',
        '{"frame_id":"a","detections":[{"box":[0,0,1,1],"scores":[0.1,2.0,0.1]}]}',
        '{"frame_id":"a","detections":[{"box":[0,0,1,1],"scores":[0.1,0.1]}]}',
        '{"frame_id":"a","detections":[]}\n{"frame_id":"a","detections":[]}',
    ],
)
def test_read_detections_errors(line):
    with pytest.raises(ParseError):
        read_detections(line, 3)


def test_parse_error_has_line():
    with pytest.raises(ParseError) as info:
        read_detections('{"frame_id":"a"}\n\nbad\n', 3)
    assert info.value.line == 3


def test_ground_truth_rejects_non_bool():
    with pytest.raises(ParseError):
        read_ground_truth(json.dumps({"frame_id": "a", "detections": [{"box": [0, 0, 1, 1], "labels": [1, 0]}]}), 2)
