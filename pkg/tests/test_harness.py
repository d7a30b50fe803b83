import csv
import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from risisac.config import ScenarioConfig
from risisac.errors import ConfigError
from risisac.harness import SweepSpec, columns, point_config, run_sweep, write_sweep

SMALL = ScenarioConfig(n_ris=6, phase_bits=2)


@pytest.mark.parametrize("kw", [
    dict(variable="n_ris", values=(1, 2)), dict(variable="power_dbm", values=()),
    dict(variable="power_dbm", values=(20, 30, 25)), dict(variable="power_dbm", values=(20, 20)),
    dict(variable="power_dbm", values=(20,), n_seeds=0), dict(variable="power_dbm", values=(20,), algorithm="x"),
    dict(variable="power_dbm", values=(20,), geometry="sometimes"),
    dict(variable="power_dbm", values=(20,), algorithm="rg", path_sets=(("BTR",),)),
    dict(variable="power_dbm", values=(20,), path_sets=(("XYZ",),)),
    dict(variable="power_dbm", values=(20,), path_sets=((),)),
])
def test_spec_validation(kw):
    with pytest.raises(ConfigError):
        SweepSpec(**kw)


@given(values=st.lists(st.floats(-50, 50, allow_nan=False), min_size=1, max_size=6, unique=True))
def test_sorted_values_accepted(values):
    spec = SweepSpec("power_dbm", sorted(values))
    assert spec.values == tuple(sorted(values))
    assert SweepSpec("power_dbm", sorted(values, reverse=True)).values == tuple(sorted(values, reverse=True))


def test_point_config():
    assert point_config(SMALL, "ris_elements", 16).n_ris == 16
    assert point_config(SMALL, "power_dbm", 20).tx_power_budget_w == pytest.approx(0.1)
    assert point_config(SMALL, "rate_threshold", 6).rate_threshold == 6
    assert point_config(SMALL, "phase_bits", 1).phase_bits == 1
    assert point_config(SMALL, "csi_error", 0.1) == SMALL


def test_sweep_is_byte_identical():
    spec = SweepSpec("rate_threshold", (2, 4), algorithm="both", n_seeds=2)
    a = run_sweep(spec, SMALL).to_csv()
    b = run_sweep(spec, SMALL).to_csv()
    c = run_sweep(spec, SMALL, workers=2).to_csv()
    assert a == b == c
    rows = list(csv.DictReader(io.StringIO(a)))
    assert [(r["value"], r["seed"], r["algorithm"]) for r in rows] == [
        ("2", "0", "sdr_odi"), ("2", "0", "rg"), ("2", "1", "sdr_odi"), ("2", "1", "rg"),
        ("4", "0", "sdr_odi"), ("4", "0", "rg"), ("4", "1", "sdr_odi"), ("4", "1", "rg")]
    assert "ms" not in rows[0]


def test_timing_column_opt_in():
    spec = SweepSpec("power_dbm", (30,), n_seeds=1)
    res = run_sweep(spec, SMALL, timing=True)
    assert res.columns[-1] == "ms" and float(res.rows[0]["ms"]) > 0


def test_infeasible_rows_flagged():
    base = SMALL.replace(init_retries=2)
    spec = SweepSpec("rate_threshold", (4, 200), n_seeds=2)
    res = run_sweep(spec, base)
    status = [r["status"] for r in res.rows]
    assert status == ["ok", "ok", "infeasible", "infeasible"]
    text = res.to_csv()
    assert text.count("infeasible") == 2


def test_csi_sweep_columns():
    spec = SweepSpec("csi_error", (0.0, 0.25), n_seeds=1)
    res = run_sweep(spec, SMALL)
    assert "true_min_rate" in res.columns and "true_rate_1" in res.columns
    clean, noisy = res.rows
    assert clean["true_mi_upper"] == pytest.approx(clean["mi_upper"])
    assert noisy["true_min_rate"] != pytest.approx(noisy["min_rate"])


def test_path_sets_and_geometry_modes():
    spec = SweepSpec("power_dbm", (25, 30), n_seeds=1, path_sets=(("BTR",), ("RTR",)))
    res = run_sweep(spec, SMALL)
    assert [r["paths"] for r in res.rows] == ["BTR", "RTR", "BTR", "RTR"]
    # masked rows report the MI of the masked paths only
    full = run_sweep(SweepSpec("power_dbm", (25, 30), n_seeds=1), SMALL).rows
    assert all(r["mi_upper"] < f["mi_upper"] for r, f in zip(res.rows[::2], full))
    fixed = run_sweep(SweepSpec("csi_error", (0.0, 0.01), n_seeds=1), SMALL).rows
    moved = run_sweep(SweepSpec("csi_error", (0.0, 0.01), n_seeds=1, geometry="per_point"), SMALL).rows
    assert fixed[0]["mi_upper"] == moved[0]["mi_upper"]
    assert abs(fixed[1]["mi_upper"] - moved[1]["mi_upper"]) > 1e-3


def test_fixed_overrides_and_mean():
    spec = SweepSpec("power_dbm", (20, 30), n_seeds=2, fixed={"n_ris": 4})
    res = run_sweep(spec, SMALL)
    means = res.mean("mi_upper")
    assert set(means) == {20.0, 30.0} and means[30.0] > means[20.0]


def test_oracle_and_trace_outputs(tmp_path):
    spec = SweepSpec("rate_threshold", (2,), n_seeds=2)
    res = run_sweep(spec, SMALL, oracle=True, keep_trace=True)
    assert res.failures == []
    out = tmp_path / "sweep.csv"
    write_sweep(res, out)
    trace = (tmp_path / "sweep.trace.csv").read_text().splitlines()
    assert trace[0].startswith("value,seed,algorithm,paths,iteration,objective")
    assert len(trace) - 1 == len(res.traces)


def test_columns_layout():
    spec = SweepSpec("power_dbm", (30,))
    assert columns(spec, 2)[:7] == ["value", "seed", "algorithm", "paths", "status", "mi_exact", "mi_upper"]
    assert columns(spec, 3)[7:10] == ["rate_0", "rate_1", "rate_2"]
