"""One row of a results table: target return, solver, value, iterations, time."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field


@dataclass
class SolveReport:
    R: float
    solver: str
    value: float | None
    iterations: int
    cpu_seconds: float
    status: str
    config: dict = field(default_factory=dict)
    init_seconds: float = 0.0
    flagged: bool = False
    message: str = ""
    traces: list = field(default_factory=list, repr=False, compare=False)

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "converged", "proved_optimal")

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("traces")
        if out["value"] is not None and not math.isfinite(out["value"]):
            out["value"] = None
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SolveReport":
        return cls(
            R=float(data["R"]),
            solver=str(data["solver"]),
            value=None if data.get("value") in (None, "") else float(data["value"]),
            iterations=int(data["iterations"]),
            cpu_seconds=float(data["cpu_seconds"]),
            status=str(data["status"]),
            config=dict(data.get("config") or {}),
            init_seconds=float(data.get("init_seconds", 0.0)),
            flagged=bool(data.get("flagged", False)),
            message=str(data.get("message", "")),
        )
