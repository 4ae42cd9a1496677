"""Weighted Partial MaxSAT decoding of per-box label scores.

Requirement clauses become hard clauses; every label contributes one unit
soft clause on the polarity its score prefers, weighted by how far the
score is from 0.5.  Problems are solved exactly in-process or handed to
an external solver through a DIMACS WCNF file.
"""

from __future__ import annotations

import math
import os
import subprocess
import tempfile
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import HardUnsat, InputError, LabelSpaceMismatch, ParseError, TooManyVars

DEFAULT_SCALE = 1_000_000
BRUTEFORCE_MAX_VARS = 24
_NO_LIMIT = 2**62


@dataclass(frozen=True)
class WcnfProblem:
    num_vars: int
    hard: tuple[tuple[int, ...], ...]
    soft: tuple[tuple[tuple[int, ...], int], ...]
    top: int

    def __post_init__(self):
        total = sum(w for _, w in self.soft)
        if self.top <= total:
            raise ValueError(f"top {self.top} must exceed the soft weight sum {total}")
        for clause in list(self.hard) + [c for c, _ in self.soft]:
            if not clause:
                raise ValueError("empty clause")
            for lit in clause:
                if lit == 0 or abs(lit) > self.num_vars:
                    raise ValueError(f"literal {lit} outside [1, {self.num_vars}]")
        for _, w in self.soft:
            if w <= 0:
                raise ValueError("soft weights must be positive")

    @classmethod
    def build(cls, num_vars, hard=(), soft=()):
        hard = tuple(tuple(int(v) for v in c) for c in hard)
        soft = tuple((tuple(int(v) for v in c), int(w)) for c, w in soft)
        return cls(num_vars, hard, soft, 1 + sum(w for _, w in soft))

    def cost(self, assignment) -> int:
        """Total weight of soft clauses falsified by ``assignment`` (0/1 per variable)."""
        a = np.asarray(assignment, dtype=bool)
        return sum(w for c, w in self.soft if not any(a[abs(l) - 1] == (l > 0) for l in c))

    def hard_satisfied(self, assignment) -> bool:
        a = np.asarray(assignment, dtype=bool)
        return all(any(a[abs(l) - 1] == (l > 0) for l in c) for c in self.hard)

    def to_wcnf(self) -> str:
        lines = [f"p wcnf {self.num_vars} {len(self.hard) + len(self.soft)} {self.top}"]
        lines += [" ".join(map(str, (self.top, *c, 0))) for c in self.hard]
        lines += [" ".join(map(str, (w, *c, 0))) for c, w in self.soft]
        return "\n".join(lines) + "\n"


def parse_wcnf(text: str) -> WcnfProblem:
    """Parse classic ``p wcnf`` files and the header-less 2022 ``h`` format."""
    num_vars = None
    top = None
    hard, soft = [], []
    tokens: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("c"):
            continue
        if line.startswith("p"):
            parts = line.split()
            if len(parts) < 4 or parts[1] != "wcnf":
                raise ParseError(f"bad header {line!r}", lineno)
            num_vars = int(parts[2])
            top = int(parts[4]) if len(parts) > 4 else None
            continue
        tokens += line.split()
        while "0" in tokens:
            end = tokens.index("0")
            clause, tokens = tokens[:end], tokens[end + 1:]
            if not clause:
                raise ParseError("clause without weight", lineno)
            head, lits = clause[0], tuple(int(v) for v in clause[1:])
            if head == "h" or (top is not None and int(head) >= top):
                hard.append(lits)
            else:
                soft.append((lits, int(head)))
    if tokens:
        raise ParseError("trailing clause not terminated by 0")
    if num_vars is None:
        num_vars = max((abs(l) for c in hard + [c for c, _ in soft] for l in c), default=0)
    return WcnfProblem.build(num_vars, hard, soft)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def encode(rs, p, scale: int = DEFAULT_SCALE, weighting: str = "polarity") -> WcnfProblem:
    """Encode requirements as hard clauses and scores as unit soft clauses.

    ``weighting="polarity"`` puts weight ``round(scale * |2p - 1|)`` on the
    preferred literal; ``"raw"`` puts ``round(scale * p)`` on the positive
    literal only.  Labels whose weight rounds to zero get no soft clause.
    """
    if scale < 1:
        raise InputError("scale must be >= 1")
    p = np.asarray(p, dtype=np.float64)
    n = rs.num_labels
    if p.shape != (n,):
        raise LabelSpaceMismatch(f"score vector has length {p.size}, expected {n}")
    soft = []
    for x, px in enumerate(p.tolist()):
        if weighting == "polarity":
            if px == 0.5:
                continue
            w = _round_half_up(scale * abs(2.0 * px - 1.0))
            lit = x + 1 if px > 0.5 else -(x + 1)
        elif weighting == "raw":
            w = _round_half_up(scale * px)
            lit = x + 1
        else:
            raise InputError(f"unknown weighting {weighting!r}")
        if w > 0:
            soft.append(((lit,), w))
    return WcnfProblem.build(n, rs.to_int_clauses(), soft)


def _flatten(clauses):
    start = [0]
    lits = []
    for c in clauses:
        lits.extend(c)
        start.append(len(lits))
    return np.array(lits, dtype=np.intc), np.array(start, dtype=np.intc)


def solve(prob: WcnfProblem, backend=None) -> tuple[np.ndarray, int]:
    """Exact solve; returns the lexicographically smallest optimal assignment.

    Lexicographic order compares variable 1 first with False < True.
    """
    kern = _kernels.get_backend(backend)
    n = prob.num_vars
    hl, hs = _flatten(prob.hard)
    sl, ss = _flatten([c for c, _ in prob.soft])
    sw = np.array([w for _, w in prob.soft], dtype=np.int64)

    # first pass: heavy variables first, preferred polarity first, for a tight optimum
    weight = np.zeros(n, dtype=np.int64)
    first = np.zeros(n, dtype=np.int8)
    for c, w in prob.soft:
        if len(c) == 1:
            v = abs(c[0]) - 1
            weight[v] += w
            first[v] = 1 if c[0] > 0 else 0
    order = np.lexsort((np.arange(n), -weight)).astype(np.intc)
    best, cost = kern.bnb_search(n, hl, hs, sl, ss, sw, order, first, _NO_LIMIT, False)
    if best is None:
        raise HardUnsat("hard clauses are unsatisfiable")

    # second pass: index order, False first, stop at the first leaf reaching the optimum
    lex, lex_cost = kern.bnb_search(
        n, hl, hs, sl, ss, sw, np.arange(n, dtype=np.intc), np.zeros(n, dtype=np.int8), cost + 1, True
    )
    assert lex is not None and lex_cost == cost
    return lex.astype(bool), int(cost)


def is_satisfiable(num_vars: int, clauses) -> bool:
    kern = _kernels.get_backend()
    hl, hs = _flatten(clauses)
    empty = np.zeros(0, dtype=np.intc)
    found, _ = kern.bnb_search(
        num_vars, hl, hs, empty, np.zeros(1, dtype=np.intc), np.zeros(0, dtype=np.int64),
        np.arange(num_vars, dtype=np.intc), np.zeros(num_vars, dtype=np.int8), 1, True,
    )
    return found is not None


def solve_bruteforce(prob: WcnfProblem, chunk_bits: int = 16) -> tuple[np.ndarray, int]:
    """Exhaustive enumeration in lexicographic order; the first minimum wins."""
    n = prob.num_vars
    if n > BRUTEFORCE_MAX_VARS:
        raise TooManyVars(f"{n} variables exceeds brute-force limit {BRUTEFORCE_MAX_VARS}")
    if n == 0:
        if prob.hard:
            raise HardUnsat("hard clauses are unsatisfiable")
        return np.zeros(0, dtype=bool), 0
    total = 1 << n
    chunk = 1 << min(n, chunk_bits)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    best_cost, best_idx = None, None
    for lo in range(0, total, chunk):
        idx = np.arange(lo, min(lo + chunk, total), dtype=np.int64)
        bits = ((idx[:, None] >> shifts[None, :]) & 1).astype(bool)
        feasible = np.ones(len(idx), dtype=bool)
        for c in prob.hard:
            sat = np.zeros(len(idx), dtype=bool)
            for lit in c:
                col = bits[:, abs(lit) - 1]
                sat |= col if lit > 0 else ~col
            feasible &= sat
        cost = np.zeros(len(idx), dtype=np.int64)
        for c, w in prob.soft:
            sat = np.zeros(len(idx), dtype=bool)
            for lit in c:
                col = bits[:, abs(lit) - 1]
                sat |= col if lit > 0 else ~col
            cost += np.where(sat, 0, w)
        cost = np.where(feasible, cost, np.iinfo(np.int64).max)
        k = int(np.argmin(cost))
        if feasible[k] and (best_cost is None or cost[k] < best_cost):
            best_cost, best_idx = int(cost[k]), int(idx[k])
    if best_cost is None:
        raise HardUnsat("hard clauses are unsatisfiable")
    values = np.array([(best_idx >> int(s)) & 1 for s in shifts], dtype=bool)
    return values, best_cost


def parse_model(output: str, num_vars: int) -> np.ndarray:
    """Read a solver model from its ``v`` lines (literal list or 0/1 string)."""
    tokens = []
    for line in output.splitlines():
        if line.startswith("v ") or line == "v":
            tokens += line[1:].split()
    if not tokens:
        raise ParseError("solver output has no 'v' line")
    if len(tokens) == 1 and set(tokens[0]) <= {"0", "1"} and len(tokens[0]) == num_vars:
        return np.array([ch == "1" for ch in tokens[0]], dtype=bool)
    values = np.zeros(num_vars, dtype=bool)
    for tok in tokens:
        lit = int(tok)
        if lit == 0:
            continue
        if abs(lit) > num_vars:
            raise ParseError(f"model literal {lit} outside [1, {num_vars}]")
        values[abs(lit) - 1] = lit > 0
    return values


class ExternalSolver:
    """Run an external MaxSAT binary as ``<path> <file.wcnf>`` and read its model."""

    def __init__(self, path: str, args=(), timeout: float = 60.0):
        self.path = path
        self.args = list(args)
        self.timeout = timeout

    def __call__(self, prob: WcnfProblem) -> tuple[np.ndarray, int]:
        with tempfile.TemporaryDirectory() as tmp:
            fname = os.path.join(tmp, "problem.wcnf")
            with open(fname, "w") as fh:
                fh.write(prob.to_wcnf())
            proc = subprocess.run(
                [self.path, *self.args, fname], capture_output=True, text=True, timeout=self.timeout
            )
        if "UNSATISFIABLE" in proc.stdout:
            raise HardUnsat(f"{self.path} reports the hard clauses unsatisfiable")
        values = parse_model(proc.stdout, prob.num_vars)
        if not prob.hard_satisfied(values):
            raise HardUnsat(f"model from {self.path} violates hard clauses")
        return values, prob.cost(values)


def correct_frame(rs, frame, scale: int = DEFAULT_SCALE, weighting: str = "polarity", solver=None):
    """Decode every detection of a frame into a requirement-satisfying label vector."""
    solver = solver or solve
    out = []
    for det in frame.detections:
        values, _ = solver(encode(rs, det.scores, scale, weighting))
        out.append((det.box, values))
    return out

