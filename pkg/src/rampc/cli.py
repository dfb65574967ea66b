"""Command line entry point: ``rampc simulate | montecarlo | profile``."""

import argparse
import json
import sys

from .config import load_config
from .core_model import sample_plant
from .errors import RampcError
from .harness import TRAJECTORIES, derived_seeds, monte_carlo, run_closed_loop, runtime_profile
from .mpc import VARIANTS


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _name_list(choices):
    def parse(text):
        names = [v.strip() for v in text.split(",") if v.strip()]
        bad = [n for n in names if n not in choices]
        if bad or not names:
            raise argparse.ArgumentTypeError(f"expected names from {choices}, got {text!r}")
        return names

    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rampc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="one plant, one trajectory, one controller")
    sim.add_argument("--config", default=None, help="JSON experiment config")
    sim.add_argument("--variant", choices=VARIANTS, default="rampc")
    sim.add_argument("--trajectory", choices=TRAJECTORIES, default="sinusoid")
    sim.add_argument("--seed", type=int, default=0, help="master seed for plant and noise")
    sim.add_argument("--out", default=None, help="per-step CSV log")
    sim.add_argument("--fss-out", default=None, help="CSV of the final feasible system set")
    sim.add_argument("--diagnostics-out", default=None, help="per-step solver diagnostics CSV")

    mc = sub.add_parser("montecarlo", help="paired sweep over sampled plants")
    mc.add_argument("--config", default=None)
    mc.add_argument("--n", type=int, default=200, help="number of plants")
    mc.add_argument("--seed", type=int, default=0)
    mc.add_argument("--out-dir", default=None, help="directory for the per-run CSVs")
    mc.add_argument("--summary", default=None, help="JSON summary path")
    mc.add_argument("--workers", type=int, default=1)
    mc.add_argument("--trajectories", type=_name_list(TRAJECTORIES), default=list(TRAJECTORIES))
    mc.add_argument("--variants", type=_name_list(VARIANTS), default=list(VARIANTS))

    prof = sub.add_parser("profile", help="mean step time against FIR length")
    prof.add_argument("--config", default=None)
    prof.add_argument("--fir-lengths", type=_int_list, default=[8, 10, 12, 14, 20])
    prof.add_argument("--n-plants", type=int, default=1)
    prof.add_argument("--out", default=None, help="JSON file for the rows")
    return parser


def _simulate(args, cfg):
    plant_seed, (noise_seed,) = derived_seeds(args.seed, 0, 1)
    plant = sample_plant(cfg.bounds, cfg.M_true, seed=plant_seed)
    rec = run_closed_loop(
        plant, args.variant, args.trajectory, cfg, noise_seed=noise_seed, plant_seed=plant_seed,
        on_error="record", diagnostics=args.diagnostics_out is not None,
    )
    if args.out:
        rec.to_csv(args.out)
    if args.fss_out and rec.final_fss is not None:
        rec.final_fss.to_csv(args.fss_out)
    if args.diagnostics_out and rec.diagnostics:
        rec.diagnostics_to_csv(args.diagnostics_out)
    if rec.failed:
        print(f"error: run failed at step {rec.failed_step}: {rec.error}", file=sys.stderr)
        return 1
    print(f"{args.trajectory} {args.variant}: rms {rec.rms:.4f} over {rec.steps} steps")
    return 0


def _montecarlo(args, cfg):
    table = monte_carlo(
        args.n, args.trajectories, args.variants, cfg, master_seed=args.seed,
        out_dir=args.out_dir, workers=args.workers,
    )
    if args.summary:
        table.save(args.summary)
    print(table.format())
    failures = [(t, v, f) for t, v, c in table.rows() for f in c.failures]
    for t, v, (plant, step, err) in failures:
        print(f"error: {t} {v} plant {plant} failed at step {step}: {err}", file=sys.stderr)
    return 1 if failures else 0


def _profile(args, cfg):
    rows = runtime_profile(cfg, tuple(args.fir_lengths), n_plants=args.n_plants)
    for r in rows:
        print(f"m={r['m']:<3d} {r['variant']:<6} {1e3 * r['mean_step']:8.3f} ms/step ({r['steps']} steps)")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        handler = {"simulate": _simulate, "montecarlo": _montecarlo, "profile": _profile}[args.command]
        return handler(args, cfg)
    except (RampcError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
