"""Deterministic parameter sweeps producing CSV plot data.

Each sweep point is a (value, seed) pair. Channels depend only on the seed
(and on the point index when ``geometry="per_point"``), so every algorithm,
bit depth and path mask at one seed sees the same realization.

CSV schema (version 1), one row per (value, seed, algorithm, paths)::

    value, seed, algorithm, paths, status, mi_exact, mi_upper,
    rate_0..rate_{K-1}, min_rate, sum_rate, weighted_objective, power,
    iterations, converged, flops

CSI-error sweeps append the metrics realized on the true channels
(``true_mi_upper``, ``true_rate_*``, ``true_min_rate``, ``true_sum_rate``);
``--timing`` appends ``ms``. Wall time is opt-in because it would break
byte-identical reruns.
"""

from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channels import PhaseAlphabet, perturb_csi, synthesize_channels
from .config import ScenarioConfig, config_from_mapping, dbm_to_watt
from .errors import ConfigError, NoFeasibleStart, OracleTooLarge
from .manifold import ao_rg
from .metrics import SENSING_PATHS, BeamformingState, path_decomposition
from .oracles import exhaustive_phase_oracle, random_phase_baseline
from .sdr_odi import ao_sdr_odi
from .trace import TRACE_COLUMNS

SCHEMA_VERSION = 1
SWEEP_VARIABLES = ("ris_elements", "power_dbm", "rate_threshold", "phase_bits", "csi_error")
ALGORITHMS = ("sdr_odi", "rg")
_CSI_STREAM = 7919


@dataclass(frozen=True)
class SweepSpec:
    """What to sweep, with which optimizer(s), over how many seeds.

    ``fixed`` holds profile-style overrides applied before the swept
    variable; ``path_sets`` lists the sensing-path masks to run (the full
    model by default).
    """

    variable: str
    values: tuple
    algorithm: str = "sdr_odi"
    n_seeds: int = 20
    fixed: dict = field(default_factory=dict)
    geometry: str = "per_seed"
    path_sets: tuple = (SENSING_PATHS,)
    first_seed: int = 0

    def __post_init__(self):
        if self.variable not in SWEEP_VARIABLES:
            raise ConfigError(f"unknown sweep variable {self.variable!r}")
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ConfigError("sweep needs at least one value")
        diffs = np.diff(vals)
        if len(vals) > 1 and not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise ConfigError("sweep values must be strictly monotone")
        object.__setattr__(self, "values", vals)
        if self.algorithm not in ALGORITHMS + ("both",):
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.n_seeds < 1:
            raise ConfigError("n_seeds must be >= 1")
        if self.geometry not in ("per_seed", "per_point"):
            raise ConfigError("geometry must be 'per_seed' or 'per_point'")
        object.__setattr__(self, "path_sets", tuple(tuple(p) for p in self.path_sets))
        partial = any(set(p) != set(SENSING_PATHS) for p in self.path_sets)
        if partial and "rg" in self.algorithms:
            raise ConfigError("sensing-path masks are only supported by the sdr_odi algorithm")
        for p in self.path_sets:
            if not p or set(p) - set(SENSING_PATHS):
                raise ConfigError(f"bad sensing-path set {p!r}")

    @property
    def algorithms(self) -> tuple:
        return ALGORITHMS if self.algorithm == "both" else (self.algorithm,)

    @property
    def seeds(self) -> range:
        return range(self.first_seed, self.first_seed + self.n_seeds)


def point_config(base: ScenarioConfig, variable: str, value: float) -> ScenarioConfig:
    """Config at one sweep value (``csi_error`` leaves the config unchanged)."""
    if variable == "ris_elements":
        return base.replace(n_ris=int(value))
    if variable == "power_dbm":
        return base.replace(tx_power_budget_w=dbm_to_watt(value))
    if variable == "rate_threshold":
        return base.replace(rate_threshold=float(value))
    if variable == "phase_bits":
        return base.replace(phase_bits=int(value))
    if variable == "csi_error":
        return base
    raise ConfigError(f"unknown sweep variable {variable!r}")


def columns(spec: SweepSpec, n_users: int, timing: bool = False) -> list[str]:
    cols = ["value", "seed", "algorithm", "paths", "status", "mi_exact", "mi_upper"]
    cols += [f"rate_{k}" for k in range(n_users)]
    cols += ["min_rate", "sum_rate", "weighted_objective", "power", "iterations", "converged", "flops"]
    if spec.variable == "csi_error":
        cols += ["true_mi_upper"] + [f"true_rate_{k}" for k in range(n_users)] + ["true_min_rate", "true_sum_rate"]
    if timing:
        cols.append("ms")
    return cols


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    return "" if x is None else str(x)


@dataclass
class PointTask:
    base: ScenarioConfig
    spec: SweepSpec
    index: int
    value: float
    seed: int
    oracle: bool = False
    keep_trace: bool = False


@dataclass
class PointResult:
    rows: list
    traces: list
    failures: list


def _metrics_row(state, ch, cfg, alphabet, trace, paths=SENSING_PATHS, mi_norm=None, rate_norm=None) -> dict:
    # sensing metrics count only the masked paths the design was optimized for
    rep = path_decomposition(state, ch, cfg, paths, alphabet=alphabet, mi_norm=mi_norm, rate_norm=rate_norm)
    row = dict(mi_exact=rep.mi_exact, mi_upper=rep.mi_upper, min_rate=float(np.min(rep.rates)),
               sum_rate=float(np.sum(rep.rates)), weighted_objective=rep.weighted_objective,
               power=rep.power, iterations=trace.iterations, converged=trace.converged,
               flops=int(sum(trace.flops.values())))
    row.update({f"rate_{k}": r for k, r in enumerate(rep.rates)})
    return row


def _normalizers(trace):
    for note in trace.notes:
        if note.startswith("normalizers"):
            parts = dict(p.split("=") for p in note.split()[1:])
            return float(parts["mi"]), float(parts["rate"])
    return None, None


def run_point(task: PointTask) -> PointResult:
    """All algorithms and path masks at one (value, seed)."""
    spec = task.spec
    cfg = point_config(task.base, spec.variable, task.value)
    salt = task.index if spec.geometry == "per_point" else 0
    true_ch = synthesize_channels(cfg, task.seed, geometry_salt=salt)
    model_ch = true_ch
    if spec.variable == "csi_error":
        model_ch = perturb_csi(true_ch, task.value, np.random.default_rng([task.seed, _CSI_STREAM]))
    alphabet = PhaseAlphabet.from_bits(cfg.phase_bits)
    rows, traces, failures = [], [], []
    for paths in spec.path_sets:
        for algo in spec.algorithms:
            row = dict(value=task.value, seed=task.seed, algorithm=algo, paths="+".join(paths))
            t0 = time.perf_counter()
            try:
                if algo == "sdr_odi":
                    state, trace = ao_sdr_odi(model_ch, cfg, task.seed, alphabet, sensing_paths=paths)
                else:
                    state, trace = ao_rg(model_ch, cfg, task.seed, alphabet)
            except NoFeasibleStart:
                row["status"] = "infeasible"
                row["ms"] = 1e3 * (time.perf_counter() - t0)
                rows.append(row)
                continue
            row["ms"] = 1e3 * (time.perf_counter() - t0)
            row["status"] = "ok"
            mi_norm, rate_norm = _normalizers(trace)
            row.update(_metrics_row(state, model_ch, cfg, alphabet, trace, paths, mi_norm, rate_norm))
            if spec.variable == "csi_error":
                rep = path_decomposition(state, true_ch, cfg, paths, alphabet=alphabet)
                row.update(true_mi_upper=rep.mi_upper, true_min_rate=float(np.min(rep.rates)),
                           true_sum_rate=float(np.sum(rep.rates)))
                row.update({f"true_rate_{k}": r for k, r in enumerate(rep.rates)})
            if not trace.is_monotone():
                failures.append(f"value={task.value} seed={task.seed} {algo}: objective trace decreased")
            if task.oracle and algo == "sdr_odi":
                failures += _oracle_checks(state, model_ch, cfg, alphabet, task)
            if task.keep_trace:
                for r in trace.rows:
                    traces.append(dict(value=task.value, seed=task.seed, algorithm=algo,
                                       paths=row["paths"], **{c: getattr(r, c) for c in TRACE_COLUMNS}))
            rows.append(row)
    return PointResult(rows, traces, failures)


def _oracle_checks(state, ch, cfg, alphabet, task) -> list[str]:
    """Exhaustive >= ODI >= random-phase baseline at the final transmit matrix."""
    from .sdr_odi import odi_phase_search

    tag = f"value={task.value} seed={task.seed}"
    try:
        _, best, _ = exhaustive_phase_oracle(state, ch, cfg, alphabet)
    except OracleTooLarge:
        return []
    odi = odi_phase_search(state, ch, cfg, alphabet).objective
    out = []
    if best < odi - 1e-9:
        out.append(f"{tag}: ODI objective {odi} exceeds exhaustive optimum {best}")
    base = random_phase_baseline(BeamformingState(state.tx_matrix, state.ris_phases), ch, cfg,
                                 np.random.default_rng([task.seed, 1]), alphabet)
    if base is not None and base[1] > odi + 1e-9:
        out.append(f"{tag}: random-phase baseline {base[1]} beats ODI {odi}")
    return out


@dataclass
class SweepResult:
    spec: SweepSpec
    columns: list
    rows: list
    traces: list
    failures: list

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO() if fh is None else fh
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(r.get(c)) for c in self.columns])
        return buf.getvalue() if fh is None else ""

    def traces_csv(self, timing: bool = False) -> str:
        cols = ["value", "seed", "algorithm", "paths"] + [c for c in TRACE_COLUMNS if timing or c != "ms"]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in self.traces:
            w.writerow([_fmt(r.get(c)) for c in cols])
        return buf.getvalue()

    def mean(self, column: str, algorithm: str | None = None, paths: str | None = None) -> dict:
        """Seed average of ``column`` per sweep value over rows with status ok."""
        out = {}
        for v in self.spec.values:
            vals = [r[column] for r in self.rows
                    if r["value"] == v and r["status"] == "ok"
                    and (algorithm is None or r["algorithm"] == algorithm)
                    and (paths is None or r["paths"] == paths)]
            out[v] = float(np.mean(vals)) if vals else float("nan")
        return out


def run_sweep(spec: SweepSpec, base: ScenarioConfig | None = None, workers: int = 1,
              timing: bool = False, oracle: bool = False, keep_trace: bool = False) -> SweepResult:
    """Run every (value, seed) point; rows come back in (value, seed) order."""
    base = base or ScenarioConfig()
    if spec.fixed:
        base = config_from_mapping(spec.fixed, base)
    tasks = [PointTask(base, spec, i, v, s, oracle, keep_trace)
             for i, v in enumerate(spec.values) for s in spec.seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_point, tasks))
    else:
        results = [run_point(t) for t in tasks]
    rows = [r for res in results for r in res.rows]
    n_users = max([point_config(base, spec.variable, v).n_users for v in spec.values])
    return SweepResult(
        spec=spec,
        columns=columns(spec, n_users, timing),
        rows=rows,
        traces=[t for res in results for t in res.traces],
        failures=[f for res in results for f in res.failures],
    )


def write_sweep(result: SweepResult, path: str | Path, timing: bool = False):
    path = Path(path)
    path.write_text(result.to_csv())
    if result.traces:
        path.with_suffix(".trace.csv").write_text(result.traces_csv(timing))


def ris_flop_scaling(base: ScenarioConfig | None = None, sizes=(8, 16, 32, 64), seed: int = 0):
    """Measured rsa_ris flops per inner iteration for each RIS size.

    Returns
    -------
    counts : list of float
        Flops charged to ``rsa_ris.*`` divided by the iteration count, per size.
    exponent : float
        Log-log slope of ``counts`` against ``sizes``.
    """
    from . import flops
    from .manifold import _problem, rsa_ris
    from .sdr_odi import feasible_start

    base = base or ScenarioConfig()
    counts = []
    for m in sizes:
        cfg = base.replace(n_ris=int(m))
        ch = synthesize_channels(cfg, seed)
        alphabet = PhaseAlphabet.from_bits(cfg.phase_bits)
        state = feasible_start(ch, cfg, np.random.default_rng(seed), alphabet)
        problem = _problem(state, ch, cfg, None, None)
        with flops.counting() as counter:
            rsa_ris(state, ch, cfg, alphabet=alphabet, problem=problem)
        n = max(counter.calls.get("rsa_ris.iteration", 0), 1)
        counts.append(counter.total("rsa_ris") / n)
    return counts, flops.growth_exponent(sizes, counts)
