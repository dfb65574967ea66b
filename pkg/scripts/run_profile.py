"""Mean controller step time for several FIR lengths (p = m(m+1), N fixed)."""

import argparse
import json

from rampc import load_config, runtime_profile


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--fir-lengths", default="8,10,12,14,20")
    ap.add_argument("--n-plants", type=int, default=3)
    ap.add_argument("--config", default=None)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    ms = tuple(int(v) for v in args.fir_lengths.split(","))
    rows = runtime_profile(load_config(args.config), ms, n_plants=args.n_plants)
    by_m = {}
    for r in rows:
        by_m.setdefault(r["m"], {})[r["variant"]] = r["mean_step"]
    print(f"{'m':>3} {'AMPC ms':>9} {'RAMPC ms':>9} {'ratio':>6}")
    for m, t in sorted(by_m.items()):
        print(f"{m:>3} {1e3 * t['ampc']:>9.3f} {1e3 * t['rampc']:>9.3f} {t['rampc'] / t['ampc']:>6.2f}")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
