"""Pass/fail reports for randomized property checks.

A check either passes all trials or records the first concrete
counterexample it found; counterexamples are plain JSON-serializable
dicts so they can be written out by the CLI verbatim.
"""

from __future__ import annotations

from dataclasses import dataclass, field


def _jsonable(obj):
    """Recursively convert numpy scalars/arrays into plain Python values."""
    import numpy as np

    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


@dataclass
class PropertyCheck:
    """Outcome of one randomized property check."""

    name: str
    passed: bool
    trials: int
    counterexample: dict | None = None

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "trials": self.trials,
            "counterexample": _jsonable(self.counterexample),
        }


@dataclass
class PropertyReport:
    """A bundle of property checks run against one object."""

    checks: list[PropertyCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> PropertyCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_json(self) -> dict:
        return {"passed": self.passed, "checks": [c.to_json() for c in self.checks]}
