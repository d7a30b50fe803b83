"""Per-iteration optimizer traces shared by both alternating solvers."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import flops

TRACE_COLUMNS = ("iteration", "objective", "mi_upper", "mi_exact", "min_rate", "power", "flops", "ms")


@dataclass
class TraceRow:
    iteration: int
    objective: float
    mi_upper: float
    mi_exact: float
    min_rate: float
    power: float
    flops: int
    ms: float

    def as_row(self) -> list:
        return [getattr(self, c) for c in TRACE_COLUMNS]


@dataclass
class OptimizerTrace:
    """Outer-loop history of one optimizer run.

    ``objective`` is the quantity the loop is monotone in: the MI bound for
    SDR-ODI and the weighted objective for AO-RG. ``flops``/``calls`` hold
    the per-stage counters accumulated during the run.
    """

    algorithm: str
    rows: list = field(default_factory=list)
    converged: bool = False
    stalled: bool = False
    flops: dict = field(default_factory=dict)
    calls: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    inner: list = field(default_factory=list)
    _t0: float = field(default_factory=time.perf_counter, repr=False)

    def record(self, iteration, objective, report, counter: flops.FlopCounter | None = None):
        self.rows.append(TraceRow(
            iteration=int(iteration),
            objective=float(objective),
            mi_upper=float(report.mi_upper),
            mi_exact=float(report.mi_exact),
            min_rate=float(np.min(report.rates)),
            power=float(report.power),
            flops=int(counter.total()) if counter is not None else 0,
            ms=1e3 * (time.perf_counter() - self._t0),
        ))

    def finish(self, counter: flops.FlopCounter | None):
        if counter is not None:
            self.flops = dict(counter.counts)
            self.calls = dict(counter.calls)

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.rows])

    @property
    def iterations(self) -> int:
        """Outer iterations after the initial point."""
        return max(len(self.rows) - 1, 0)

    def is_monotone(self, tol: float = 1e-9) -> bool:
        obj = self.objectives
        return bool(np.all(np.diff(obj) >= -tol))
