"""Label vocabulary and propositional requirements over it.

A requirement is a disjunctive clause over label literals; a
:class:`RequirementSet` is their conjunction.  Both file formats are
line oriented::

    # labels: name group
    Ped agent
    Mov action

    # requirements: literals joined by '|', '!' negates
    !Mov | Ped
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DuplicateName,
    EmptyClause,
    LabelSpaceMismatch,
    ParseError,
    TautologicalClause,
    UnknownGroup,
    UnknownLabel,
    Unsatisfiable,
)

GROUPS = ("agent", "action", "location", "other")


def _content_lines(text: str):
    """Yield (line_number, stripped_content) skipping blanks and comments."""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


@dataclass(frozen=True)
class LabelSpace:
    names: tuple[str, ...]
    groups: tuple[str, ...]

    def __post_init__(self):
        if len(self.names) != len(self.groups):
            raise ValueError("names and groups differ in length")
        if not self.names:
            raise ParseError("label space is empty")
        seen = set()
        for name, group in zip(self.names, self.groups):
            if not name or any(c.isspace() for c in name) or name.startswith("!"):
                raise ParseError(f"invalid label name {name!r}")
            if name in seen:
                raise DuplicateName(f"duplicate label name {name!r}")
            if group not in GROUPS:
                raise UnknownGroup(f"unknown group {group!r} for label {name!r}")
            seen.add(name)
        if "agent" not in self.groups:
            raise ParseError("label space has no agent label")

    def __len__(self):
        return len(self.names)

    @cached_property
    def index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.names)}

    def indices_of(self, group: str) -> np.ndarray:
        return np.array([i for i, g in enumerate(self.groups) if g == group], dtype=np.intp)

    @property
    def agent_indices(self) -> np.ndarray:
        return self.indices_of("agent")

    def serialize(self) -> str:
        return "".join(f"{n} {g}\n" for n, g in zip(self.names, self.groups))


def parse_labelspace(text: str) -> LabelSpace:
    names, groups = [], []
    seen = set()
    for lineno, line in _content_lines(text):
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(f"expected 'name group', got {line!r}", lineno)
        name, group = parts
        if name in seen:
            raise DuplicateName(f"duplicate label name {name!r}", lineno)
        if group not in GROUPS:
            raise UnknownGroup(f"unknown group {group!r}", lineno)
        seen.add(name)
        names.append(name)
        groups.append(group)
    if not names:
        raise ParseError("label file is empty")
    return LabelSpace(tuple(names), tuple(groups))


@dataclass(frozen=True, order=True)
class Literal:
    label_index: int
    negated: bool = False

    def to_int(self) -> int:
        """1-based signed DIMACS literal."""
        v = self.label_index + 1
        return -v if self.negated else v

    def value(self, assignment) -> bool:
        return bool(assignment[self.label_index]) != self.negated


@dataclass(frozen=True)
class Requirement:
    literals: tuple[Literal, ...]

    def __post_init__(self):
        if not self.literals:
            raise EmptyClause("empty clause")
        if len(set(self.literals)) != len(self.literals):
            raise ParseError("duplicate literal in clause")
        indices = [lit.label_index for lit in self.literals]
        if len(set(indices)) != len(indices):
            raise TautologicalClause("clause contains a literal and its negation")

    def satisfied_by(self, assignment) -> bool:
        return any(lit.value(assignment) for lit in self.literals)

    def to_ints(self) -> list[int]:
        return [lit.to_int() for lit in self.literals]

    def format(self, ls: LabelSpace) -> str:
        return " | ".join(("!" if l.negated else "") + ls.names[l.label_index] for l in self.literals)


@dataclass(frozen=True, eq=False)
class CompiledClauses:
    """Padded (R, K) literal tables used by the vectorized loss kernels.

    Padding slots have ``mask`` False and contribute a factor of 1.
    """

    index: np.ndarray
    negated: np.ndarray
    mask: np.ndarray


def _compile(clauses) -> CompiledClauses:
    r = len(clauses)
    k = max((len(c.literals) for c in clauses), default=1)
    index = np.zeros((r, k), dtype=np.intp)
    negated = np.zeros((r, k), dtype=bool)
    mask = np.zeros((r, k), dtype=bool)
    for i, clause in enumerate(clauses):
        for j, lit in enumerate(clause.literals):
            index[i, j] = lit.label_index
            negated[i, j] = lit.negated
            mask[i, j] = True
    for arr in (index, negated, mask):
        arr.setflags(write=False)
    return CompiledClauses(index, negated, mask)


@dataclass(frozen=True)
class RequirementSet:
    clauses: tuple[Requirement, ...]
    label_space: LabelSpace

    def __post_init__(self):
        n = len(self.label_space)
        for i, clause in enumerate(self.clauses):
            for lit in clause.literals:
                if not 0 <= lit.label_index < n:
                    raise UnknownLabel(f"clause {i} refers to label index {lit.label_index} outside [0, {n})")

    def __len__(self):
        return len(self.clauses)

    @property
    def num_labels(self) -> int:
        return len(self.label_space)

    @cached_property
    def compiled(self) -> CompiledClauses:
        return _compile(self.clauses)

    @cached_property
    def canonical_order(self) -> np.ndarray:
        """Clause indices sorted by literal content, independent of file order."""
        keys = [c.to_ints() for c in self.clauses]
        order = np.array(sorted(range(len(keys)), key=lambda i: (keys[i], i)), dtype=np.intp)
        order.setflags(write=False)
        return order

    @cached_property
    def canonical(self) -> CompiledClauses:
        """Tables in ``canonical_order``; sums over them do not depend on clause order."""
        return _compile([self.clauses[i] for i in self.canonical_order])

    def to_int_clauses(self) -> list[list[int]]:
        return [c.to_ints() for c in self.clauses]

    def serialize(self) -> str:
        return "".join(c.format(self.label_space) + "\n" for c in self.clauses)

    def check_satisfiable(self) -> None:
        """Raise :class:`Unsatisfiable` naming the first clause whose prefix has no model."""
        from .maxsat import is_satisfiable

        n = self.num_labels
        clauses = self.to_int_clauses()
        if is_satisfiable(n, clauses):
            return
        lo, hi = 1, len(clauses)
        # smallest prefix length that is unsatisfiable
        while lo < hi:
            mid = (lo + hi) // 2
            if is_satisfiable(n, clauses[:mid]):
                lo = mid + 1
            else:
                hi = mid
        bad = lo - 1
        raise Unsatisfiable(
            f"requirements are unsatisfiable: clause {bad} ({self.clauses[bad].format(self.label_space)}) "
            "conflicts with the clauses before it",
            clause_index=bad,
        )


def _parse_literal(token: str, ls: LabelSpace, lineno: int) -> Literal:
    token = token.strip()
    negated = token.startswith("!")
    name = token[1:].strip() if negated else token
    if not name:
        raise EmptyClause("empty literal", lineno)
    try:
        return Literal(ls.index[name], negated)
    except KeyError:
        raise UnknownLabel(f"unknown label {name!r}", lineno) from None


def parse_requirements(text: str, ls: LabelSpace, check: bool = True) -> RequirementSet:
    clauses = []
    for lineno, line in _content_lines(text):
        tokens = line.split("|")
        if any(not t.strip() for t in tokens):
            raise EmptyClause(f"empty literal in {line!r}", lineno)
        lits = tuple(_parse_literal(t, ls, lineno) for t in tokens)
        if len(set(lits)) != len(lits):
            raise ParseError(f"duplicate literal in {line!r}", lineno)
        if len({l.label_index for l in lits}) != len(lits):
            raise TautologicalClause(f"tautological clause {line!r}", lineno)
        clauses.append(Requirement(lits))
    rs = RequirementSet(tuple(clauses), ls)
    if check:
        rs.check_satisfiable()
    return rs


def requirement_set(ls: LabelSpace, clauses: Iterable[Sequence[int]], check: bool = True) -> RequirementSet:
    """Build a set from 1-based signed integer clauses (DIMACS convention)."""
    reqs = tuple(Requirement(tuple(Literal(abs(v) - 1, v < 0) for v in c)) for c in clauses)
    rs = RequirementSet(reqs, ls)
    if check:
        rs.check_satisfiable()
    return rs


def eval_boolean(rs: RequirementSet, assignment) -> tuple[bool, list[int]]:
    values = np.asarray(assignment, dtype=bool)
    if values.shape != (rs.num_labels,):
        raise LabelSpaceMismatch(f"assignment has length {values.size}, expected {rs.num_labels}")
    if not rs.clauses:
        return True, []
    cc = rs.compiled
    lit_true = (values[cc.index] != cc.negated) & cc.mask
    violated = np.flatnonzero(~lit_true.any(axis=1)).tolist()
    return not violated, violated
