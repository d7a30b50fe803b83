"""Flop instrumentation.

Kernels report the arithmetic they perform through :func:`count`; the
numbers land in whichever :class:`FlopCounter` is active (see
:func:`counting`). Complex multiply-accumulate is charged 8 real flops.
The closed-form per-iteration predictions are kept here so measured and
predicted counts can be tabulated side by side.
"""

from __future__ import annotations

import contextlib
import contextvars
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

_active: contextvars.ContextVar["FlopCounter | None"] = contextvars.ContextVar("flop_counter", default=None)


@dataclass
class FlopCounter:
    counts: dict = field(default_factory=lambda: defaultdict(int))
    calls: dict = field(default_factory=lambda: defaultdict(int))

    def add(self, stage: str, flops: float):
        self.counts[stage] += int(flops)

    def tick(self, stage: str, n: int = 1):
        self.calls[stage] += n

    def total(self, prefix: str = "") -> int:
        return sum(v for k, v in self.counts.items() if k.startswith(prefix))

    def reset(self):
        self.counts.clear()
        self.calls.clear()

    def snapshot(self) -> dict:
        return dict(self.counts)


@contextlib.contextmanager
def counting(counter: FlopCounter | None = None):
    counter = counter if counter is not None else FlopCounter()
    token = _active.set(counter)
    try:
        yield counter
    finally:
        _active.reset(token)


def active() -> FlopCounter | None:
    return _active.get()


def count(stage: str, flops: float):
    c = _active.get()
    if c is not None:
        c.add(stage, flops)


def tick(stage: str, n: int = 1):
    c = _active.get()
    if c is not None:
        c.tick(stage, n)


def cmm(m: int, n: int, p: int) -> int:
    """Flops of an (m x n) @ (n x p) complex product."""
    return 8 * m * n * p


# closed-form predictions -------------------------------------------------

def predicted_sdr(nt, k):
    return nt**4 * k**0.5 + k**4.5


def predicted_odi(nt, nr, m, k, l, d):
    return d * m * (
        40 * nt * m**2 * l + 16 * nt * m * nr * l + 16 * nt**2 * nr * l + 16 * nt**3 * l
        + 8 * nt**2 * m * l + 8 * nt**2 * k + 8 * m**2 * k + 8 * nt * m * k + 32 * nt * k
    )


def predicted_rsa_tx_iteration(nt, k):
    return (48 + 16 + 4 + 12) * nt * k


def predicted_rsa_ris_iteration(nt, nr, m, k, l):
    eg = k * l * (64 * m**3 + 8 * nt**2 * m + 16 * nt * m**2 + 8 * nr * m**2 + 48 * m**2 + 16 * nt * m + 6 * m)
    eg += k**2 * (24 * nt * m + 16 * m**2 + 16 * nt + 8 * m)
    return eg + 24 * m + 16 * m + 4 * m + 6 * m


def growth_exponent(sizes, counts) -> float:
    """Least-squares slope of log(count) against log(size)."""
    x, y = np.log(np.asarray(sizes, float)), np.log(np.asarray(counts, float))
    return float(np.polyfit(x, y, 1)[0])


def flop_report(trace, cfg) -> list[dict]:
    """Measured per-call/per-iteration counts next to the closed forms.

    Returns one dict per instrumented stage found in ``trace.flops``; an
    empty trace yields an empty table.
    """
    if trace is None or not trace.flops:
        return []
    nt, nr, m, k, l, d = cfg.n_tx, cfg.n_rx, cfg.n_ris, cfg.n_users, cfg.n_scatterers, cfg.n_levels
    predictions = {
        "sdp": ("solve", predicted_sdr(nt, k)),
        "odi": ("sweep", predicted_odi(nt, nr, m, k, l, d)),
        "rsa_tx": ("iteration", predicted_rsa_tx_iteration(nt, k)),
        "rsa_ris": ("iteration", predicted_rsa_ris_iteration(nt, nr, m, k, l)),
    }
    rows = []
    for stage, (unit, predicted) in predictions.items():
        measured = sum(v for s, v in trace.flops.items() if s.split(".")[0] == stage)
        if not measured:
            continue
        n = max(trace.calls.get(f"{stage}.{unit}", 0), 1)
        rows.append(dict(stage=stage, unit=unit, units=n, measured_total=measured,
                         measured_per_unit=measured / n, predicted_per_unit=predicted))
    return rows
