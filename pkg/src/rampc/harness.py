"""Closed-loop simulation, Monte-Carlo sweeps, RMS statistics and persistence.

Time convention: step ``t = 1..T`` measures ``y(t)`` (driven by the inputs
applied before ``t``), updates the feasible system set, solves the MPC
problem and applies ``u(t)``.  The reference sample ``y_des(t)`` is compared
with ``y_true(t)``; the controller previews ``y_des(t+1) .. y_des(t+N)``.
"""

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Optional

import numpy as np

from .config import ExperimentConfig, TrajectorySpec
from .core_model import Plant, measure, sample_plant, truncation_error
from .errors import ConfigurationError, FeasibilityLoss, RampcError
from .mpc import VARIANTS, Controller, MpcProblem
from .set_membership import FeasibleSet

TRAJECTORIES = ("rampSaw", "rampStep", "sinusoid", "step")
RUN_COLUMNS = ("t", "u", "du", "y_true", "y_meas", "y_des", "cost", "status", "step_time")
REFERENCE_MARGIN = 1e-6
AUDIT_TOL = 1e-9


# --------------------------------------------------------------------------
# reference trajectories


@dataclass(frozen=True)
class ReferenceTrajectory:
    """``samples[t-1] = y_des(t)`` for ``t = 1..T``; ``preview`` continues the
    waveform past ``T`` for the prediction horizon (held constant if short)."""

    name: str
    samples: np.ndarray
    preview: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def T(self) -> int:
        return self.samples.size

    def window(self, t: int, N: int) -> np.ndarray:
        """References for ``y(t+1) .. y(t+N)``."""
        full = np.concatenate([self.samples, self.preview])
        idx = np.minimum(np.arange(t, t + N), full.size - 1)
        return full[idx]


def _waveform(name: str, spec: TrajectorySpec, t: np.ndarray) -> np.ndarray:
    a, P = spec.amplitude, float(spec.period)
    phase = np.mod(t, P) / P
    if name == "sinusoid":
        return a * np.sin(2 * np.pi * t / P)
    if name == "rampSaw":
        # triangle wave: 0 -> a -> -a -> 0 over one period
        return a * (2 / np.pi) * np.arcsin(np.sin(2 * np.pi * t / P))
    if name == "rampStep":
        # ramp 0 -> a, hold a, jump to -a and hold, ramp -a -> 0
        return np.select(
            [phase < 0.25, phase < 0.5, phase < 0.75],
            [a * phase / 0.25, np.full_like(t, a), np.full_like(t, -a)],
            a * (phase - 1.0) / 0.25,
        )
    if name == "step":
        return np.where(phase < 0.5, a, -a)
    raise ConfigurationError(f"unknown trajectory {name!r}")


def make_reference(
    name: str,
    T: int,
    bounds,
    spec: Optional[TrajectorySpec] = None,
    m: int = 12,
    preview: int = 0,
    samples=None,
) -> ReferenceTrajectory:
    """Build a named reference; ``name="custom"`` takes ``samples`` verbatim.

    Raises ConfigurationError for unknown names or references that exceed
    the robustly trackable level ``y_max - eta_m``.
    """
    if T < 1:
        raise ConfigurationError("T must be at least 1")
    if name == "custom":
        if samples is None:
            raise ConfigurationError("custom reference needs samples")
        full = np.asarray(samples, dtype=float).ravel()
        if full.size < T:
            raise ConfigurationError("custom reference shorter than T")
    else:
        if name not in TRAJECTORIES:
            raise ConfigurationError(f"unknown trajectory {name!r}; expected one of {TRAJECTORIES}")
        if spec is None:
            spec = ExperimentConfig().trajectories[name]
        full = _waveform(name, spec, np.arange(1, T + preview + 1, dtype=float))
    limit = bounds.y_max - truncation_error(bounds, m) - REFERENCE_MARGIN
    if np.max(np.abs(full[: T + preview])) > limit:
        raise ConfigurationError(f"reference {name!r} exceeds the trackable level {limit:.4f}")
    return ReferenceTrajectory(name, full[:T].copy(), full[T:T + preview].copy())


def rms_deviation(y, y_des) -> float:
    y = np.asarray(y, dtype=float)
    y_des = np.asarray(y_des, dtype=float)
    if y.shape != y_des.shape or y.size == 0:
        raise ValueError("y and y_des must be non-empty and of equal length")
    return float(np.sqrt(np.mean((y - y_des) ** 2)))


# --------------------------------------------------------------------------
# single run


@dataclass
class RunRecord:
    """Per-step log of one closed loop plus its identity and outcome.

    ``rows`` maps each name in ``RUN_COLUMNS`` to a length-``T`` array (shorter
    if the run failed).  ``diagnostics`` holds optional per-step extras, and
    ``audit`` the per-step identification checks.
    """

    trajectory: str
    variant: str
    plant_index: int
    plant_seed: int
    noise_seed: int
    rows: dict
    rms: float
    failed: bool = False
    error: str = ""
    failed_step: Optional[int] = None
    diagnostics: dict = field(default_factory=dict)
    audit: dict = field(default_factory=dict)
    snapshots: list = field(default_factory=list)
    final_fss: Optional[FeasibleSet] = None

    @property
    def steps(self) -> int:
        return len(self.rows["t"])

    def constraint_violations(self, bounds) -> dict:
        u, du, y = (np.asarray(self.rows[k], dtype=float) for k in ("u", "du", "y_true"))
        return {
            "u": int(np.sum(np.abs(u) > bounds.u_max + AUDIT_TOL)),
            "du": int(np.sum(np.abs(du) > bounds.du_max + AUDIT_TOL)),
            "y": int(np.sum(np.abs(y) > bounds.y_max + AUDIT_TOL)),
        }

    def to_csv(self, path) -> None:
        meta = {
            "trajectory": self.trajectory,
            "variant": self.variant,
            "plant_index": self.plant_index,
            "plant_seed": self.plant_seed,
            "noise_seed": self.noise_seed,
            "failed": self.failed,
            "failed_step": self.failed_step,
            "error": self.error,
        }
        with open(path, "w", newline="") as fh:
            fh.write("# " + json.dumps(meta) + "\n")
            w = csv.writer(fh)
            w.writerow(RUN_COLUMNS)
            for i in range(self.steps):
                out = []
                for col in RUN_COLUMNS:
                    v = self.rows[col][i]
                    out.append(v if col == "status" else repr(int(v) if col == "t" else float(v)))
                w.writerow(out)

    @classmethod
    def from_csv(cls, path) -> "RunRecord":
        with open(path, newline="") as fh:
            meta = json.loads(fh.readline()[1:])
            reader = csv.DictReader(fh)
            data = {c: [] for c in RUN_COLUMNS}
            for row in reader:
                for c in RUN_COLUMNS:
                    data[c].append(row[c])
        rows = {c: np.array([float(v) for v in data[c]]) for c in RUN_COLUMNS if c != "status"}
        rows["t"] = rows["t"].astype(int)
        rows["status"] = list(data["status"])
        ok = ~np.isnan(rows["y_des"])
        rms = float("nan") if meta["failed"] else rms_deviation(rows["y_true"][ok], rows["y_des"][ok])
        return cls(
            trajectory=meta["trajectory"],
            variant=meta["variant"],
            plant_index=meta["plant_index"],
            plant_seed=meta["plant_seed"],
            noise_seed=meta["noise_seed"],
            rows=rows,
            rms=rms,
            failed=meta["failed"],
            error=meta["error"],
            failed_step=meta["failed_step"],
        )

    def diagnostics_to_csv(self, path) -> None:
        """Per-step QP size, status, worst-case cost and coordinate supports."""
        d = self.diagnostics
        if not d:
            raise ValueError("run was recorded without diagnostics")
        m = d["upper"].shape[1]
        cols = ["t", "status", "cost", "qp_vars", "qp_rows", "dense_vars", "rounds", "cuts"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols + [f"upper_{k + 1}" for k in range(m)] + [f"lower_{k + 1}" for k in range(m)])
            for i in range(len(d["qp_vars"])):
                row = [self.rows["t"][i], self.rows["status"][i], repr(float(self.rows["cost"][i]))]
                row += [int(d[c][i]) for c in cols[3:]]
                row += [repr(float(v)) for v in d["upper"][i]] + [repr(float(v)) for v in d["lower"][i]]
                w.writerow(row)


def run_closed_loop(
    plant: Plant,
    variant: str,
    trajectory,
    cfg: ExperimentConfig = ExperimentConfig(),
    noise_seed: int = 0,
    plant_seed: int = -1,
    plant_index: int = 0,
    on_error: str = "raise",
    snapshot_every: Optional[int] = None,
    diagnostics: bool = False,
) -> RunRecord:
    """Simulate ``T`` steps of measure, identify, solve, apply.

    ``trajectory`` is a name or a :class:`ReferenceTrajectory`.  Controller
    errors are re-raised with the step index (``on_error="raise"``) or
    recorded in the returned record (``on_error="record"``).
    ``snapshot_every=k`` keeps every k-th MPC problem for offline analysis.
    """
    if on_error not in ("raise", "record"):
        raise ConfigurationError("on_error must be 'raise' or 'record'")
    bounds = cfg.bounds
    m, N = cfg.mpc.m, cfg.mpc.N
    if isinstance(trajectory, str):
        ref = make_reference(trajectory, cfg.T, bounds, cfg.trajectories.get(trajectory), m=m, preview=N)
    else:
        ref = trajectory
    T = ref.T
    ctrl = Controller(
        bounds, cfg.mpc, variant, p=cfg.p, s=cfg.s, eta_m=cfg.eta_m,
        facet_kind=cfg.facet_kind, facet_seed=cfg.facet_seed,
    )
    rng = np.random.default_rng(noise_seed)
    h_head = np.zeros(m)
    h_head[: min(m, plant.M_true)] = plant.head(m)

    hist = np.zeros(plant.M_true)  # newest first
    cols = {c: [] for c in RUN_COLUMNS}
    diag = {k: [] for k in ("qp_vars", "qp_rows", "dense_vars", "rounds", "cuts", "upper", "lower")}
    margin, increase = [], []
    snapshots = []
    b_prev = ctrl.fss.b_h.copy()
    failed, error, failed_step = False, "", None

    for t in range(1, T + 1):
        meas = measure(plant, hist, rng, bounds.eps)
        y_des_now = ref.samples[t - 1]
        try:
            res = ctrl.step(meas.y_meas, ref.window(t, N))
        except RampcError as exc:
            if on_error == "raise":
                if isinstance(exc, FeasibilityLoss):
                    raise
                raise type(exc)(f"step {t}: {exc}") from exc
            failed, error, failed_step = True, f"{type(exc).__name__}: {exc}", t
            status = "infeasible" if isinstance(exc, FeasibilityLoss) else "error"
            for c, v in zip(RUN_COLUMNS, (t, np.nan, np.nan, meas.y_true, meas.y_meas, y_des_now, np.nan, status, np.nan)):
                cols[c].append(v)
            break
        b = res.fss.b_h
        margin.append(float(np.min(b - res.fss.A_h @ h_head)))
        increase.append(float(np.max(b - b_prev)))
        b_prev = b.copy()
        sol = res.solution
        row = (t, res.u, res.u - hist[0], meas.y_true, meas.y_meas, y_des_now, sol.cost, sol.status, res.timings["total"])
        for c, v in zip(RUN_COLUMNS, row):
            cols[c].append(v)
        if diagnostics:
            upper, lower = res.fss.coordinate_supports()
            for k in ("qp_vars", "qp_rows", "dense_vars", "rounds", "cuts"):
                diag[k].append(sol.diagnostics[k])
            diag["upper"].append(upper)
            diag["lower"].append(lower)
        if snapshot_every and t % snapshot_every == 0:
            snapshots.append(res.problem)
        hist = np.concatenate([[res.u], hist[:-1]])

    rows = {c: np.asarray(cols[c], dtype=float) for c in RUN_COLUMNS if c != "status"}
    rows["t"] = rows["t"].astype(int)
    rows["status"] = list(cols["status"])
    rms = float("nan") if failed else rms_deviation(rows["y_true"], rows["y_des"])
    if diagnostics and diag["upper"]:
        diag = {k: np.array(v) for k, v in diag.items()}
    else:
        diag = {}
    return RunRecord(
        trajectory=ref.name,
        variant=variant,
        plant_index=plant_index,
        plant_seed=plant_seed,
        noise_seed=noise_seed,
        rows=rows,
        rms=rms,
        failed=failed,
        error=error,
        failed_step=failed_step,
        diagnostics=diag,
        audit={"fss_margin": np.array(margin), "b_increase": np.array(increase)},
        snapshots=snapshots,
        final_fss=ctrl.fss,
    )


# --------------------------------------------------------------------------
# Monte-Carlo sweep


def derived_seeds(master_seed: int, plant_index: int, n_trajectories: int):
    """``(plant_seed, [noise_seed per trajectory])``; independent of variant."""
    state = np.random.SeedSequence([master_seed, plant_index]).generate_state(1 + n_trajectories, np.uint32)
    return int(state[0]), [int(s) for s in state[1:]]


@dataclass
class CellStats:
    mean_rms: float
    max_rms: float
    count: int
    failed: int = 0
    failures: list = field(default_factory=list)  # (plant_index, step, error)


@dataclass
class SummaryTable:
    """Per ``(trajectory, variant)`` RMS statistics and per-variant step times."""

    cells: dict
    runtime: dict
    requested: int = 0

    @classmethod
    def from_records(cls, records: Iterable[RunRecord], requested: int = 0) -> "SummaryTable":
        groups, times = {}, {}
        for rec in sorted(records, key=lambda r: (r.trajectory, r.variant, r.plant_index)):
            groups.setdefault((rec.trajectory, rec.variant), []).append(rec)
            if not rec.failed:
                times.setdefault(rec.variant, []).append(np.asarray(rec.rows["step_time"], dtype=float))
        cells = {}
        for key, recs in groups.items():
            good = [r.rms for r in recs if not r.failed]
            bad = [(r.plant_index, r.failed_step, r.error) for r in recs if r.failed]
            cells[key] = CellStats(
                mean_rms=float(np.mean(good)) if good else float("nan"),
                max_rms=float(np.max(good)) if good else float("nan"),
                count=len(good),
                failed=len(bad),
                failures=bad,
            )
        runtime = {}
        for variant, chunks in times.items():
            st = np.concatenate(chunks)
            runtime[variant] = {"mean_step": float(np.mean(st)), "max_step": float(np.max(st)), "steps": int(st.size)}
        return cls(cells, runtime, requested)

    @classmethod
    def from_csv_dir(cls, directory, requested: int = 0) -> "SummaryTable":
        paths = sorted(Path(directory).glob("*.csv"))
        return cls.from_records([RunRecord.from_csv(p) for p in paths], requested)

    def rows(self):
        """``(trajectory, variant, CellStats)`` in a stable order."""
        return [(t, v, self.cells[(t, v)]) for t, v in sorted(self.cells)]

    def to_json(self) -> dict:
        return {
            "requested": self.requested,
            "cells": [
                {
                    "trajectory": t,
                    "variant": v,
                    "mean_rms": c.mean_rms,
                    "max_rms": c.max_rms,
                    "count": c.count,
                    "failed": c.failed,
                    "failures": [list(f) for f in c.failures],
                }
                for t, v, c in self.rows()
            ],
            "runtime": self.runtime,
        }

    @classmethod
    def from_json(cls, data: dict) -> "SummaryTable":
        cells = {}
        for c in data["cells"]:
            cells[(c["trajectory"], c["variant"])] = CellStats(
                c["mean_rms"], c["max_rms"], c["count"], c["failed"], [tuple(f) for f in c["failures"]]
            )
        return cls(cells, data["runtime"], data.get("requested", 0))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)

    def format(self) -> str:
        trajs = sorted({t for t, _ in self.cells})
        lines = [f"{'trajectory':<10} {'mean AMPC':>10} {'mean RAMPC':>11} {'max AMPC':>10} {'max RAMPC':>10} {'failed':>7}"]
        for t in trajs:
            a = self.cells.get((t, "ampc"))
            r = self.cells.get((t, "rampc"))
            nan = CellStats(float("nan"), float("nan"), 0)
            a, r = a or nan, r or nan
            lines.append(
                f"{t:<10} {a.mean_rms:>10.4f} {r.mean_rms:>11.4f} {a.max_rms:>10.4f} {r.max_rms:>10.4f} {a.failed + r.failed:>7d}"
            )
        for v, st in sorted(self.runtime.items()):
            lines.append(f"{v}: mean step {1e3 * st['mean_step']:.2f} ms over {st['steps']} steps")
        return "\n".join(lines)


def _run_job(job):
    cfg, plant_index, plant_seed, noise_seed, trajectory, variant, out_dir, run_kwargs = job
    plant = sample_plant(cfg.bounds, cfg.M_true, seed=plant_seed)
    rec = run_closed_loop(
        plant, variant, trajectory, cfg, noise_seed=noise_seed, plant_seed=plant_seed,
        plant_index=plant_index, on_error="record", **run_kwargs,
    )
    if out_dir is not None:
        rec.to_csv(Path(out_dir) / run_filename(rec))
    return rec


def run_filename(rec: RunRecord) -> str:
    return f"{rec.trajectory}_{rec.variant}_plant{rec.plant_index:04d}.csv"


def monte_carlo(
    n_plants: int,
    trajectories=TRAJECTORIES,
    variants=VARIANTS,
    cfg: ExperimentConfig = ExperimentConfig(),
    master_seed: int = 0,
    out_dir=None,
    workers: int = 1,
    callback: Optional[Callable[[RunRecord], None]] = None,
    run_kwargs: Optional[dict] = None,
) -> SummaryTable:
    """Paired sweep: every plant and noise sequence is shared by all variants.

    ``callback`` sees each finished :class:`RunRecord` (full audit data);
    only the summary is returned.  Failed runs are excluded from the RMS
    statistics and listed in their cell.
    """
    if n_plants < 1:
        raise ConfigurationError("n_plants must be at least 1")
    for v in variants:
        if v not in VARIANTS:
            raise ConfigurationError(f"unknown variant {v!r}")
    trajectories = list(trajectories)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    jobs = []
    for i in range(n_plants):
        plant_seed, noise_seeds = derived_seeds(master_seed, i, len(trajectories))
        for traj, ns in zip(trajectories, noise_seeds):
            for v in variants:
                jobs.append((cfg, i, plant_seed, ns, traj, v, out_dir, run_kwargs or {}))
    slim = []

    def consume(rec):
        if callback is not None:
            callback(rec)
        rec.snapshots, rec.diagnostics, rec.audit, rec.final_fss = [], {}, {}, None
        slim.append(rec)

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for rec in pool.map(_run_job, jobs, chunksize=4):
                consume(rec)
    else:
        for job in jobs:
            consume(_run_job(job))
    return SummaryTable.from_records(slim, requested=n_plants)


# --------------------------------------------------------------------------
# runtime profile


def runtime_profile(
    cfg: ExperimentConfig = ExperimentConfig(),
    fir_lengths=(8, 10, 12, 14, 20),
    n_plants: int = 1,
    trajectory: str = "sinusoid",
    master_seed: int = 0,
    warmup: bool = True,
):
    """Mean wall-clock time per controller step for every FIR length and variant.

    The horizon ``N`` is held fixed; ``p`` scales as ``m(m+1)``.  Each row is
    a dict with keys ``m, variant, mean_step, steps`` (seconds).
    """
    if warmup:  # compile the jitted kernels outside the timed region
        small = cfg.with_fir_length(min(fir_lengths))
        for v in VARIANTS:
            run_closed_loop(sample_plant(small.bounds, small.M_true, seed=0), v, trajectory, replace(small, T=5))
    rows = []
    for m in fir_lengths:
        cfg_m = cfg.with_fir_length(m)
        for v in VARIANTS:
            step_times = []
            for i in range(n_plants):
                plant_seed, (noise_seed,) = derived_seeds(master_seed, i, 1)
                plant = sample_plant(cfg_m.bounds, cfg_m.M_true, seed=plant_seed)
                rec = run_closed_loop(plant, v, trajectory, cfg_m, noise_seed=noise_seed)
                step_times.append(rec.rows["step_time"])
            st = np.concatenate(step_times)
            rows.append({"m": m, "variant": v, "mean_step": float(st.mean()), "steps": int(st.size)})
    return rows

