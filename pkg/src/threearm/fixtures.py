"""Bundled data files."""

from __future__ import annotations

from importlib import resources

import numpy as np

from .trial import TrialData


def data_path(name: str):
    """Path-like handle to a bundled data file."""
    return resources.files("threearm") / "data" / name


def worked_example() -> TrialData:
    """Tiny trial E = {0, 2}, R = {1, 3}, P = {4, 6}."""
    from .cli import parse_trial_csv

    return parse_trial_csv(data_path("worked_example.csv").read_text(encoding="utf-8"))


def interferon_lesions() -> np.ndarray:
    """Lesion counts for a 52-patient active-control arm.

    Individual counts are not published; this vector reproduces the
    published frequencies (0: 25, 1: 5, 2: 5, 3: 0, >=4: 17), mean 6.9 and
    standard deviation 16 after rounding.
    """
    text = data_path("interferon_lesions.csv").read_text(encoding="utf-8")
    return np.array([float(v) for v in text.split()[1:]])
