"""Command-line entry point: index, query, bench, calibrate, synth.

Exit codes: 0 success or match, 2 searched but no match, 1 error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .bench import CalibrationError, calibrate, run_bench
from .imaging import ImageDecodeError, SliceGrid, load_image
from .index import EmptyCorpusError, IndexFormatError, build_index, load_index, load_library, save_index
from .matcher import CandidateLookupError, MatchConfig, Matcher, best_match
from .nn import Network, NetworkSpec
from .synth import write_corpus

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NO_MATCH = 2

log = logging.getLogger("patchfinder")


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_ERROR


def cmd_index(args) -> int:
    corpus = Path(args.corpus)
    if not corpus.is_dir():
        return _fail(f"empty corpus: {corpus} is not a directory")
    try:
        index, skipped = build_index(corpus, NetworkSpec(seed=args.seed))
    except EmptyCorpusError as exc:
        return _fail(str(exc))
    save_index(index, args.out)
    print(f"indexed {len(index)} images")
    print(f"skipped {len(skipped)} files")
    for rel in skipped:
        print(f"skipped\t{rel}")
    return EXIT_OK


def _format_result(rank: int, r) -> str:
    dists = ",".join(f"{d:.6g}" for d in r.distances)
    return "\t".join(
        (str(rank), str(r.image_id), r.source_path, str(r.best_placement), f"{r.best_distance:.6g}",
         str(r.matched).lower(), dists)
    )


def cmd_query(args) -> int:
    try:
        index = load_index(args.index)
    except (OSError, IndexFormatError) as exc:
        return _fail(f"cannot read index {args.index}: {exc}")
    try:
        patch = load_image(args.patch)
    except ImageDecodeError as exc:
        return _fail(str(exc))
    config = MatchConfig(args.mode, args.tolerance)
    net = Network(NetworkSpec(seed=index.network_seed))
    root = Path(args.corpus) if args.corpus else Path(args.index).resolve().parent
    try:
        ranked = Matcher(net, index, root, config, workers=args.workers).query(patch)
    except CandidateLookupError as exc:
        return _fail(str(exc))
    print("\t".join(("rank", "id", "path", "placement", "distance", "matched", "distances")))
    for i, r in enumerate(ranked[: args.top], start=1):
        print(_format_result(i, r))
    winner = best_match(ranked)
    if winner is None:
        print(f"verdict\tno-match\ttolerance={config.tolerance:g}")
        return EXIT_NO_MATCH
    print(f"verdict\tmatch\t{winner.image_id}\t{winner.source_path}\ttolerance={config.tolerance:g}")
    return EXIT_OK


def cmd_bench(args) -> int:
    corpus = args.corpus
    if corpus is not None and not Path(corpus).is_dir():
        return _fail(f"empty corpus: {corpus} is not a directory")
    modes = [SliceGrid(m) for m in (args.mode or ["quad"])]
    try:
        report = run_bench(
            corpus,
            query_count=args.queries,
            modes=modes,
            seed=args.seed,
            crop_policy=args.crop_policy,
            tolerance=args.tolerance,
            include_baselines=not args.no_baselines,
            corpus_size=args.synth_size,
            workers=args.workers,
        )
    except (ValueError, EmptyCorpusError) as exc:
        return _fail(str(exc))
    print(report.to_text())
    if args.out:
        Path(args.out).write_text(report.to_tsv())
    return EXIT_OK


def cmd_calibrate(args) -> int:
    corpus = Path(args.corpus)
    if not corpus.is_dir():
        return _fail(f"empty corpus: {corpus} is not a directory")
    net = Network(NetworkSpec(seed=args.seed))
    try:
        index, _ = build_index(corpus, net)
    except EmptyCorpusError as exc:
        return _fail(str(exc))
    _, images, _ = load_library(corpus, [e.source_path for e in index])
    encodings = index.stacked_encodings()
    lines = ["\t".join(("mode", "tolerance", "set", "count", "min", "p5", "median", "p95", "max"))]
    try:
        for mode in args.mode or ["quad", "grid16"]:
            cal = calibrate(net, images, encodings, mode, args.holdout, args.seed, args.crop_policy)
            for name, summary in (("true", cal.true_summary), ("impostor", cal.impostor_summary)):
                stats = [f"{summary[k]:.6g}" for k in ("min", "p5", "median", "p95", "max")]
                lines.append("\t".join((cal.mode, f"{cal.tolerance:.6g}", name, str(summary["count"]), *stats)))
            if cal.overlap:
                lines.append(f"warning\t{cal.mode}\tdistributions overlap")
            lines.append(f"recommend\t{cal.mode}\t{cal.tolerance:.6g}")
    except CalibrationError as exc:
        return _fail(str(exc))
    text = "\n".join(lines)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return EXIT_OK


def cmd_synth(args) -> int:
    paths = write_corpus(args.out, args.count, args.seed)
    print(f"wrote {len(paths)} images to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="patchfinder", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="encode a corpus directory into an index file")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="index file to write")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("query", help="find the library image a patch came from")
    p.add_argument("--index", required=True)
    p.add_argument("--patch", required=True)
    p.add_argument("--corpus", help="image root the index paths are relative to (default: index directory)")
    p.add_argument("--mode", choices=[g.value for g in SliceGrid], default="quad")
    p.add_argument("--tolerance", type=float)
    p.add_argument("--top", type=int, default=5)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("bench", help="accuracy table over generated queries")
    p.add_argument("--corpus", help="image directory (default: synthesize one)")
    p.add_argument("--synth-size", type=int, default=200)
    p.add_argument("--queries", type=int, default=50)
    p.add_argument("--mode", choices=[g.value for g in SliceGrid], action="append")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--crop-policy", choices=["exact", "random"], default="random")
    p.add_argument("--tolerance", type=float, help="skip calibration and use this value")
    p.add_argument("--no-baselines", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="tab-separated report file")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("calibrate", help="recommend a tolerance per mode")
    p.add_argument("--corpus", required=True)
    p.add_argument("--mode", choices=[g.value for g in SliceGrid], action="append")
    p.add_argument("--holdout", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--crop-policy", choices=["exact", "random"], default="random")
    p.add_argument("--out")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("synth", help="write a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
