import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rampc.config import ExperimentConfig, TrajectorySpec
from rampc.core_model import Plant, SystemBounds, sample_plant, truncation_error
from rampc.errors import ConfigurationError
from rampc.harness import (
    RUN_COLUMNS,
    TRAJECTORIES,
    CellStats,
    RunRecord,
    SummaryTable,
    derived_seeds,
    make_reference,
    monte_carlo,
    rms_deviation,
    run_closed_loop,
    runtime_profile,
)
from rampc.mpc import MpcConfig

SMALL = ExperimentConfig(mpc=MpcConfig(N=5, m=6), p=24, s=12, T=20)


# -- references --------------------------------------------------------------


def test_sinusoid_formula():
    ref = make_reference("sinusoid", 100, SystemBounds())
    t = np.arange(1, 101)
    np.testing.assert_allclose(ref.samples, 1.5 * np.sin(2 * np.pi * t / 40))


def test_step_has_smaller_swing():
    b = SystemBounds()
    swing = {n: np.ptp(make_reference(n, 100, b).samples) for n in TRAJECTORIES}
    assert swing["step"] == pytest.approx(1.5)
    assert all(swing["step"] < swing[n] for n in ("rampSaw", "rampStep", "sinusoid"))
    assert set(np.unique(make_reference("step", 100, b).samples)) == {-0.75, 0.75}


@pytest.mark.parametrize("name", TRAJECTORIES)
def test_references_are_trackable(name):
    b = SystemBounds()
    ref = make_reference(name, 100, b, preview=15)
    assert np.max(np.abs(ref.samples)) <= b.y_max - truncation_error(b, 12)
    assert ref.T == 100 and ref.preview.size == 15


def test_ramp_shapes():
    b = SystemBounds()
    saw = make_reference("rampSaw", 40, b).samples
    assert saw[9] == pytest.approx(1.5) and saw[29] == pytest.approx(-1.5)
    assert np.allclose(np.abs(np.diff(saw)), 0.15)
    stp = make_reference("rampStep", 40, b).samples
    assert np.all(stp[9:19] == 1.5) and np.all(stp[19:29] == -1.5)


def test_reference_errors():
    b = SystemBounds()
    with pytest.raises(ConfigurationError):
        make_reference("square", 10, b)
    with pytest.raises(ConfigurationError):
        make_reference("sinusoid", 10, b, spec=TrajectorySpec(3.9, 40))
    with pytest.raises(ConfigurationError):
        make_reference("custom", 10, b, samples=np.zeros(5))


def test_window_holds_last_value():
    ref = make_reference("custom", 3, SystemBounds(), samples=[1.0, 2.0, 3.0])
    np.testing.assert_array_equal(ref.window(1, 4), [2.0, 3.0, 3.0, 3.0])


# -- rms -------------------------------------------------------------------------


def test_rms_simple_cases():
    assert rms_deviation([1, 2, 3], [1, 2, 3]) == 0.0
    assert rms_deviation(np.full(10, 0.3), np.zeros(10)) == pytest.approx(0.3)
    with pytest.raises(ValueError):
        rms_deviation([], [])


@given(seed=st.integers(0, 10_000), n=st.integers(1, 300))
def test_rms_two_pass(seed, n):
    rng = np.random.default_rng(seed)
    y, r = rng.normal(size=n), rng.normal(size=n)
    total = 0.0
    for a, b in zip(y, r):
        total += (a - b) ** 2
    assert rms_deviation(y, r) == pytest.approx((total / n) ** 0.5, abs=1e-12)


# -- single runs ---------------------------------------------------------------


def test_pure_delay_zero_reference():
    bounds = SystemBounds(L_l=0.0)
    cfg = replace(SMALL, bounds=bounds)
    plant = Plant(np.eye(1, 40, 0).ravel())
    ref = make_reference("custom", 20, bounds, m=6, samples=np.zeros(25))
    for variant in ("rampc", "ampc"):
        rec = run_closed_loop(plant, variant, ref, cfg, noise_seed=1)
        np.testing.assert_allclose(rec.rows["u"], 0.0, atol=1e-9)
        assert rec.rms == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("variant", ["rampc", "ampc"])
def test_run_is_deterministic_and_safe(variant):
    plant = sample_plant(SMALL.bounds, SMALL.M_true, seed=3)
    a = run_closed_loop(plant, variant, "rampSaw", SMALL, noise_seed=9, diagnostics=True)
    b = run_closed_loop(plant, variant, "rampSaw", SMALL, noise_seed=9)
    for col in RUN_COLUMNS:
        if col != "step_time":
            assert np.array_equal(np.asarray(a.rows[col]), np.asarray(b.rows[col]))
    assert a.rms == b.rms and not a.failed and a.steps == SMALL.T
    assert a.constraint_violations(SMALL.bounds) == {"u": 0, "du": 0, "y": 0}
    # the truncated plant stays inside the set, and offsets only shrink
    assert a.audit["fss_margin"].min() >= -1e-7
    assert a.audit["b_increase"].max() <= 1e-12
    # learning signal: total width of the coordinate supports never grows
    size = a.diagnostics["upper"].sum(axis=1) - a.diagnostics["lower"].sum(axis=1)
    assert np.all(np.diff(size) <= 1e-12)


def test_failed_run_is_recorded():
    # an inconsistent plant empties the set: the error is recorded, not raised
    plant = Plant(np.full(40, 1.0))
    ref = make_reference("sinusoid", 20, SMALL.bounds, m=6, preview=5)
    rec = run_closed_loop(plant, "ampc", ref, SMALL, on_error="record")
    assert rec.failed and rec.failed_step is not None and rec.error
    assert rec.rows["status"][-1] in ("error", "infeasible")
    with pytest.raises(Exception, match="step"):
        run_closed_loop(plant, "ampc", ref, SMALL)


def test_csv_roundtrip(tmp_path):
    plant = sample_plant(SMALL.bounds, SMALL.M_true, seed=3)
    rec = run_closed_loop(plant, "rampc", "step", SMALL, noise_seed=2, diagnostics=True)
    rec.to_csv(tmp_path / "run.csv")
    back = RunRecord.from_csv(tmp_path / "run.csv")
    for col in RUN_COLUMNS:
        if col == "status":
            assert back.rows[col] == rec.rows[col]
        else:
            assert np.array_equal(back.rows[col], rec.rows[col])
    assert back.rms == rec.rms
    header = (tmp_path / "run.csv").read_text().splitlines()[1].split(",")
    assert header[:8] == ["t", "u", "du", "y_true", "y_meas", "y_des", "cost", "status"]
    rec.diagnostics_to_csv(tmp_path / "diag.csv")
    lines = (tmp_path / "diag.csv").read_text().splitlines()
    assert len(lines) == SMALL.T + 1 and lines[0].startswith("t,status,cost,qp_vars")


# -- sweeps ------------------------------------------------------------------------


def test_paired_seeds_and_exact_recompute(tmp_path):
    seen = []
    table = monte_carlo(
        2, ("sinusoid", "step"), cfg=SMALL, master_seed=5, out_dir=tmp_path, callback=seen.append,
    )
    assert len(seen) == 8
    for i in range(2):
        for traj in ("sinusoid", "step"):
            pair = [r for r in seen if r.plant_index == i and r.trajectory == traj]
            assert {r.variant for r in pair} == {"rampc", "ampc"}
            assert pair[0].plant_seed == pair[1].plant_seed
            assert pair[0].noise_seed == pair[1].noise_seed
            # same plant, same noise: the first measurement (before any input) is identical
            assert pair[0].rows["y_meas"][0] == pair[1].rows["y_meas"][0]
    again = SummaryTable.from_csv_dir(tmp_path, requested=2)
    assert again.to_json() == table.to_json()
    for _, _, cell in table.rows():
        assert cell.count == 2 and cell.max_rms >= cell.mean_rms
    path = tmp_path / "summary.json"
    table.save(path)
    assert SummaryTable.from_json(json.loads(path.read_text())).to_json() == table.to_json()
    assert "sinusoid" in table.format()


def test_derived_seeds_are_stable():
    assert derived_seeds(0, 3, 4) == derived_seeds(0, 3, 4)
    assert derived_seeds(0, 3, 4)[0] != derived_seeds(0, 4, 4)[0]
    assert derived_seeds(0, 3, 2)[1] == derived_seeds(0, 3, 4)[1][:2]


def _fake(plant, variant, rms, failed=False):
    rows = {c: np.zeros(3) for c in RUN_COLUMNS}
    rows["status"] = ["optimal"] * 3
    return RunRecord("step", variant, plant, 0, 0, rows, rms, failed=failed,
                     error="FeasibilityLoss: x" if failed else "", failed_step=2 if failed else None)


def test_failed_runs_are_excluded_and_reported():
    recs = [_fake(0, "rampc", 0.2), _fake(1, "rampc", float("nan"), failed=True), _fake(2, "rampc", 0.4)]
    cell = SummaryTable.from_records(recs, requested=3).cells[("step", "rampc")]
    assert cell.count == 2 and cell.failed == 1
    assert cell.mean_rms == pytest.approx(0.3) and cell.max_rms == pytest.approx(0.4)
    assert cell.failures == [(1, 2, "FeasibilityLoss: x")]


def test_tight_prior_gives_close_variants():
    bounds = SystemBounds(L_l=0.99, L_u=1.0)
    cfg = replace(SMALL, bounds=bounds, trajectories={"step": TrajectorySpec(0.75, 40)})
    table = monte_carlo(1, ("step",), cfg=cfg, master_seed=1)
    r, a = table.cells[("step", "rampc")], table.cells[("step", "ampc")]
    assert abs(r.mean_rms - a.mean_rms) < 0.02


def test_monte_carlo_validation():
    with pytest.raises(ConfigurationError):
        monte_carlo(0, cfg=SMALL)
    with pytest.raises(ConfigurationError):
        monte_carlo(1, variants=("mpc",), cfg=SMALL)


def test_runtime_profile_rows():
    cfg = replace(SMALL, T=8)
    rows = runtime_profile(cfg, fir_lengths=(8, 20), warmup=True)
    assert [(r["m"], r["variant"]) for r in rows] == [(8, "rampc"), (8, "ampc"), (20, "rampc"), (20, "ampc")]
    t = {(r["m"], r["variant"]): r["mean_step"] for r in rows}
    assert all(r["steps"] == 8 for r in rows)
    assert t[(20, "rampc")] > t[(8, "rampc")] and t[(20, "ampc")] > t[(8, "ampc")]
    again = runtime_profile(cfg, fir_lengths=(8, 20), warmup=False)
    assert [(r["m"], r["variant"], r["steps"]) for r in again] == [(r["m"], r["variant"], r["steps"]) for r in rows]
