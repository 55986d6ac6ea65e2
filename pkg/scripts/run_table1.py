"""Scaled accuracy table: CNN (quad, optionally grid16) against the pixel baselines.

Example:
    python3 scripts/run_table1.py --synth-size 200 --queries 50 --out table1.tsv
"""

import argparse
import logging
import os

from patchfinder.bench import run_bench


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--corpus", help="image directory; a synthetic corpus is generated when omitted")
    parser.add_argument("--synth-size", type=int, default=200)
    parser.add_argument("--queries", type=int, default=50)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--crop-policy", choices=["exact", "random"], default="random")
    parser.add_argument("--grid16", action="store_true", help="also run the 16-piece mode (slow)")
    parser.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    parser.add_argument("--out")
    args = parser.parse_args()
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    modes = ("quad", "grid16") if args.grid16 else ("quad",)
    report = run_bench(args.corpus, args.queries, modes, args.seed, args.crop_policy,
                       corpus_size=args.synth_size, workers=args.workers)
    print(report.to_text())
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(report.to_tsv())


if __name__ == "__main__":
    main()
