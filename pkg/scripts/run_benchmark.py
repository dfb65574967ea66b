"""Paired Monte-Carlo benchmark: RMS tracking deviation of RAMPC against AMPC.

    python scripts/run_benchmark.py --n 200 --out-dir runs/ --summary runs/summary.json
"""

import argparse
import time

from rampc import load_config, monte_carlo


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--config", default=None)
    ap.add_argument("--out-dir", default=None)
    ap.add_argument("--summary", default=None)
    args = ap.parse_args()

    cfg = load_config(args.config)
    t0 = time.perf_counter()
    done = [0]

    def progress(rec):
        done[0] += 1
        if done[0] % 50 == 0:
            print(f"  {done[0]} runs, {time.perf_counter() - t0:.0f} s", flush=True)

    table = monte_carlo(args.n, cfg=cfg, master_seed=args.seed, out_dir=args.out_dir, callback=progress)
    if args.summary:
        table.save(args.summary)
    print(table.format())


if __name__ == "__main__":
    main()
