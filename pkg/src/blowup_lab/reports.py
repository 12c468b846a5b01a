"""Machine-readable check reports.

A report stores every gated number next to its bound, so the verdict can be
recomputed from the report alone (:func:`rederive_verdict`).
"""
from __future__ import annotations

import json
import math
import operator
from dataclasses import asdict, dataclass, field

_OPS = {
    "<=": operator.le,
    "<": operator.lt,
    ">=": operator.ge,
    ">": operator.gt,
    "==": operator.eq,
}


def _clean(obj):
    """Convert numpy scalars/arrays and tuples to plain JSON values."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "tolist"):
        return _clean(obj.tolist())
    if isinstance(obj, float) and math.isnan(obj):
        return None
    return obj


@dataclass
class Condition:
    name: str
    value: float
    op: str
    bound: float
    expected: bool = True

    @property
    def holds(self) -> bool:
        if self.value is None or (isinstance(self.value, float) and math.isnan(self.value)):
            return False
        return bool(_OPS[self.op](self.value, self.bound))

    @property
    def ok(self) -> bool:
        return self.holds == self.expected


@dataclass
class CheckReport:
    name: str
    config: dict = field(default_factory=dict)
    measured: dict = field(default_factory=dict)
    conditions: list = field(default_factory=list)
    seed: int | None = None
    wall_time: float = 0.0
    error: str | None = None

    def add(self, name, value, op, bound, expected=True):
        self.conditions.append(Condition(name, float(value), op, float(bound), expected))
        return self

    @property
    def thresholds(self) -> dict:
        return {c.name: {"op": c.op, "bound": c.bound, "expected": c.expected} for c in self.conditions}

    @property
    def verdict(self) -> bool:
        if self.error is not None or not self.conditions:
            return False
        return all(c.ok for c in self.conditions)

    def to_dict(self, timing: bool = False) -> dict:
        out = {
            "name": self.name,
            "verdict": "pass" if self.verdict else "fail",
            "seed": self.seed,
            "config": self.config,
            "measured": self.measured,
            "conditions": [dict(asdict(c), holds=c.holds) for c in self.conditions],
            "error": self.error,
        }
        if timing:
            out["wall_time"] = self.wall_time
        return _clean(out)

    def to_json(self, timing: bool = False) -> str:
        return json.dumps(self.to_dict(timing), sort_keys=True)


def rederive_verdict(record: dict) -> bool:
    """Recompute a verdict from a serialized report."""
    if record.get("error") is not None or not record["conditions"]:
        return False
    return all(
        Condition(c["name"], c["value"], c["op"], c["bound"], c["expected"]).ok
        for c in record["conditions"]
    )


def summary_table(reports) -> str:
    width = max([len(r.name) for r in reports] + [5])
    lines = [f"{'check':<{width}}  verdict  seconds", "-" * (width + 18)]
    for r in reports:
        lines.append(f"{r.name:<{width}}  {'pass' if r.verdict else 'FAIL':<7}  {r.wall_time:7.2f}")
    return "\n".join(lines)
