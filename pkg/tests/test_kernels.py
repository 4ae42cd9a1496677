import os
import subprocess
import sys

import numpy as np
import pytest

from modcl import _kernels
from modcl.maxsat import encode, solve

from test_maxsat import random_problem

try:
    compiled = _kernels.get_backend("compiled")
except ImportError:
    compiled = None
pure = _kernels.get_backend("pure")

needs_compiled = pytest.mark.skipif(compiled is None, reason="compiled extension not built")


def test_unknown_backend():
    with pytest.raises(ValueError):
        _kernels.get_backend("gpu")


def test_active_backend_reported():
    import modcl

    assert modcl.BACKEND in ("compiled", "pure")


@needs_compiled
@pytest.mark.parametrize("seed", range(40))
def test_solve_backends_agree(seed):
    rng = np.random.default_rng(seed)
    _, prob = random_problem(rng, int(rng.integers(1, 14)), density=3.0)
    assert solve(prob, backend="compiled")[1] == solve(prob, backend="pure")[1]
    assert solve(prob, backend="compiled")[0].tolist() == solve(prob, backend="pure")[0].tolist()


@needs_compiled
def test_solve_backends_agree_on_fixture(road_rs):
    rng = np.random.default_rng(7)
    for _ in range(10):
        prob = encode(road_rs, rng.random(road_rs.num_labels))
        a, ca = solve(prob, backend="compiled")
        b, cb = solve(prob, backend="pure")
        assert ca == cb and a.tolist() == b.tolist()


@needs_compiled
@pytest.mark.parametrize("seed", range(30))
@pytest.mark.parametrize("classes", [False, True])
def test_nms_backends_agree(seed, classes):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(0, 40))
    xy = rng.uniform(0, 100, size=(m, 2))
    wh = rng.uniform(1, 30, size=(m, 2))
    boxes = np.hstack([xy, xy + wh])
    scores = np.round(rng.random(m), 1)
    cls = rng.integers(0, 3, size=m) if classes else None
    thr = float(rng.choice([0.0, 0.3, 0.5, 0.7]))
    a = compiled.greedy_nms(boxes, scores, cls, thr)
    b = pure.greedy_nms(boxes, scores, cls, thr)
    assert list(a) == list(b)


def test_env_forces_pure_backend():
    env = dict(os.environ, MODCL_PURE="1")
    out = subprocess.run([sys.executable, "-c", "import modcl; print(modcl.BACKEND)"],
                         capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == "pure"
