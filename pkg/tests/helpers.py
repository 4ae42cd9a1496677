"""Shared test helpers (importable because pytest puts tests/ on sys.path)."""

from modcl.requirements import parse_labelspace

ACCEPTANCE_LINES = []


def generic_ls(n):
    """Label space x0..x{n-1}; x0 is the only agent."""
    return parse_labelspace("".join(f"x{i} {'agent' if i == 0 else 'action'}\n" for i in range(n)))


def report(number, passed, detail):
    ACCEPTANCE_LINES.append(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
