"""Shipped example label space (41 labels) and requirement set (243 clauses)."""

from functools import lru_cache
from importlib import resources

from .requirements import parse_labelspace, parse_requirements

LABELS_FILE = "road_labels.txt"
REQUIREMENTS_FILE = "road_requirements.txt"


def data_text(name: str) -> str:
    return resources.files("modcl").joinpath("data", name).read_text(encoding="utf-8")


@lru_cache(maxsize=None)
def example_label_space():
    return parse_labelspace(data_text(LABELS_FILE))


@lru_cache(maxsize=None)
def example_requirements():
    return parse_requirements(data_text(REQUIREMENTS_FILE), example_label_space())
