import shutil

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modcl.detections import Box, Detection, DetectionFrame
from modcl.errors import HardUnsat, InputError, LabelSpaceMismatch, ParseError, TooManyVars
from modcl.maxsat import (
    ExternalSolver,
    WcnfProblem,
    correct_frame,
    encode,
    parse_model,
    parse_wcnf,
    solve,
    solve_bruteforce,
)
from modcl.requirements import eval_boolean, parse_labelspace, parse_requirements, requirement_set

from helpers import generic_ls

REFERENCE_WCNF = "p wcnf 3 5 23\n23 1 2 0\n23 -3 1 0\n8 -1 0\n8 2 0\n6 3 0\n"


@pytest.fixture
def three():
    ls = parse_labelspace("a agent\nb agent\nc action\n")
    return parse_requirements("a | b\n!c | a\n", ls)


def test_reference_wcnf_bytes(three):
    prob = encode(three, [0.1, 0.9, 0.8], scale=10)
    assert prob.to_wcnf() == REFERENCE_WCNF


def test_reference_solution(three, backend):
    prob = encode(three, [0.1, 0.9, 0.8], scale=10)
    values, cost = solve(prob, backend=backend)
    assert values.tolist() == [False, True, False]
    assert cost == 6
    assert solve_bruteforce(prob)[1] == 6


def test_parse_wcnf_round_trip(three):
    prob = encode(three, [0.1, 0.9, 0.8], scale=10)
    assert parse_wcnf(prob.to_wcnf()) == prob


def test_parse_wcnf_h_format():
    text = "c new style\nh 1 2 0\nh -3 1 0\n8 -1 0\n8 2 0\n6 3 0\n"
    assert parse_wcnf(text).to_wcnf() == REFERENCE_WCNF


@pytest.mark.parametrize("text", ["p cnf 3 1\n1 0\n", "p wcnf 2 1 5\n3 1 2\n"])
def test_parse_wcnf_errors(text):
    with pytest.raises(ParseError):
        parse_wcnf(text)


def test_problem_validation():
    with pytest.raises(ValueError):
        WcnfProblem(2, ((1, 2),), (((1,), 5),), 5)
    with pytest.raises(ValueError):
        WcnfProblem.build(2, [(3,)])
    with pytest.raises(ValueError):
        WcnfProblem.build(2, [], [((1,), 0)])


def test_encode_polarity_and_raw(three):
    prob = encode(three, [0.5, 0.75, 0.0], scale=100)
    assert prob.soft == (((2,), 50), ((-3,), 100))
    raw = encode(three, [0.5, 0.75, 0.0], scale=100, weighting="raw")
    assert raw.soft == (((1,), 50), ((2,), 75))
    with pytest.raises(InputError):
        encode(three, [0.5] * 3, weighting="bogus")
    with pytest.raises(LabelSpaceMismatch):
        encode(three, [0.5] * 4)


def test_rounding_half_up(three):
    # 0.5 * |2p - 1| * scale lands exactly on .5 -> rounds up
    prob = encode(three, [0.625, 0.375, 0.5], scale=2)
    assert prob.soft == (((1,), 1), ((-2,), 1))


def test_hard_unsat(backend):
    prob = WcnfProblem.build(1, [(1,), (-1,)], [])
    with pytest.raises(HardUnsat):
        solve(prob, backend=backend)
    with pytest.raises(HardUnsat):
        solve_bruteforce(prob)


def test_bruteforce_limits():
    with pytest.raises(TooManyVars):
        solve_bruteforce(WcnfProblem.build(25))
    values, cost = solve_bruteforce(WcnfProblem.build(0))
    assert values.size == 0 and cost == 0


def test_tie_break_lexicographic(backend):
    # x1 | x2 with no preference: (F, T) is the smallest optimum.
    prob = WcnfProblem.build(2, [(1, 2)], [])
    assert solve(prob, backend=backend)[0].tolist() == [False, True]
    assert solve_bruteforce(prob)[0].tolist() == [False, True]


def random_problem(rng, n, density=2.0, scale=1000):
    ls = generic_ls(n)
    clauses = []
    for _ in range(int(rng.integers(0, int(density * n) + 1))):
        k = int(rng.integers(1, min(4, n) + 1))
        vars_ = rng.choice(n, size=k, replace=False)
        clause = [int(v + 1) * int(rng.choice([-1, 1])) for v in vars_]
        rs_try = requirement_set(ls, clauses + [clause], check=False)
        if _satisfiable(rs_try):
            clauses.append(clause)
    rs = requirement_set(ls, clauses, check=False)
    # coarse scores so that ties actually occur
    p = rng.integers(0, 9, size=n) / 8
    return rs, encode(rs, p, scale=scale)


def _satisfiable(rs):
    try:
        solve(WcnfProblem.build(rs.num_labels, rs.to_int_clauses()))
        return True
    except HardUnsat:
        return False


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 10))
def test_solver_matches_bruteforce(seed, n):
    rng = np.random.default_rng(seed)
    _, prob = random_problem(rng, n, density=3.0)
    expected = solve_bruteforce(prob)
    for b in ("pure", "compiled"):
        try:
            got = solve(prob, backend=b)
        except ImportError:
            continue
        assert got[1] == expected[1]
        assert got[0].tolist() == expected[0].tolist()


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_encoding_objective_identity(seed):
    """Cost of any feasible assignment equals the polarity-weighted disagreement."""
    rng = np.random.default_rng(seed)
    n = 6
    rs, _ = random_problem(rng, n)
    p = rng.random(n)
    prob = encode(rs, p, scale=10_000)
    a = rng.random(n) < 0.5
    w = np.floor(10_000 * np.abs(2 * p - 1) + 0.5)
    disagree = a != (p > 0.5)
    assert prob.cost(a) == int(w[disagree & (p != 0.5)].sum())


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_weight_monotonicity(seed):
    """Raising the weight on one unit soft clause by d raises the optimum by at most d."""
    rng = np.random.default_rng(seed)
    _, prob = random_problem(rng, 7)
    if not prob.soft:
        return
    k = int(rng.integers(len(prob.soft)))
    d = int(rng.integers(1, 500))
    soft = list(prob.soft)
    soft[k] = (soft[k][0], soft[k][1] + d)
    bumped = WcnfProblem.build(prob.num_vars, prob.hard, soft)
    base = solve(prob)[1]
    new = solve(bumped)[1]
    assert base <= new <= base + d


def test_parse_model_formats():
    assert parse_model("s OPTIMUM FOUND\nv 1 -2 3 0\n", 3).tolist() == [True, False, True]
    assert parse_model("v 101\n", 3).tolist() == [True, False, True]
    with pytest.raises(ParseError):
        parse_model("s OPTIMUM FOUND\n", 3)
    with pytest.raises(ParseError):
        parse_model("v 1 4 0\n", 3)


def test_correct_frame_satisfies(road_rs, rng):
    n = road_rs.num_labels
    dets = tuple(Detection(Box(0, 0, 10, 10), rng.random(n)) for _ in range(20))
    out = correct_frame(road_rs, DetectionFrame("f", dets))
    assert len(out) == 20
    for box, values in out:
        assert box == Box(0, 0, 10, 10)
        assert eval_boolean(road_rs, values)[0]


RC2 = shutil.which("rc2.py")


@pytest.mark.skipif(RC2 is None, reason="rc2.py not installed")
def test_external_solver_matches(three, rng):
    ext = ExternalSolver(RC2, args=["-vv"])
    prob = encode(three, [0.1, 0.9, 0.8], scale=10)
    values, cost = ext(prob)
    assert cost == 6
    assert prob.hard_satisfied(values)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_optimum_maximizes_agreement(seed):
    """At a fine scale the decoded labels maximize sum of x*p + (1-x)*(1-p) over feasible x."""
    rng = np.random.default_rng(seed)
    n = 6
    rs, _ = random_problem(rng, n, density=2.0)
    p = rng.random(n)
    values, _ = solve(encode(rs, p, scale=10**9))
    best = -np.inf
    for k in range(1 << n):
        x = np.array([(k >> (n - 1 - i)) & 1 for i in range(n)], dtype=bool)
        if eval_boolean(rs, x)[0]:
            best = max(best, float(np.sum(np.where(x, p, 1 - p))))
    got = float(np.sum(np.where(values, p, 1 - p)))
    assert got == pytest.approx(best, abs=1e-6)
