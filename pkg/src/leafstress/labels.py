"""Class enumerations for the two tasks."""

from enum import IntEnum


class StressClass(IntEnum):
    healthy = 0
    leaf_miner = 1
    rust = 2
    brown_leaf_spot = 3
    cercospora_leaf_spot = 4


class SeverityClass(IntEnum):
    """Ordinal severity; rank order matches symptom magnitude."""

    healthy = 0
    very_low = 1
    low = 2
    high = 3
    very_high = 4


STRESS_NAMES = [c.name for c in StressClass]
SEVERITY_NAMES = [c.name for c in SeverityClass]
CLASS_NAMES = {"stress": STRESS_NAMES, "severity": SEVERITY_NAMES}
