"""Command line entry point.

    crossalign gen-corpus --out DIR [--spec FILE] [--seed N]
    crossalign grid-configs --corpus DIR --out DIR [--seed N]
    crossalign train --config FILE
    crossalign evaluate --checkpoint FILE --data FILE
    crossalign grid --configs DIR
    crossalign significance --k1 K --n1 N --k2 K --n2 N

Exit codes: 0 success, 1 validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .data import CipherSpec, CorpusError, load_corpus
from .tagging import TagError

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("crossalign")


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2))


def cmd_gen_corpus(args) -> int:
    from .benchmark import TRAIN_PER_INTENT, corpus_files
    from .synthetic import default_cipher_spec

    spec = CipherSpec.load(args.spec) if args.spec else default_cipher_spec(noise=args.noise)
    spec.validate()
    paths = corpus_files(spec, args.out, args.seed, args.per_intent or TRAIN_PER_INTENT)
    _print_json({k: str(v) for k, v in paths.items()})
    return EXIT_OK


def cmd_grid_configs(args) -> int:
    from .benchmark import write_grid_configs

    corpus = Path(args.corpus)
    paths = {k: corpus / f"{k}.jsonl" for k in ("eng_train", "tar_train", "eng_eval", "tar_eval")}
    for k, p in paths.items():
        if not p.is_file():
            raise CorpusError(f"{k}: no such file {p}")
    written = write_grid_configs(args.out, paths, seed=args.seed)
    print(f"wrote {len(written)} configs to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .trainer import ExperimentConfig, prepare_data, train

    config = ExperimentConfig.load(args.config)
    config.validate()
    data = prepare_data(config)
    try:
        record = train(config, data)
    except Exception as exc:
        log.error("training failed: %s", exc)
        return EXIT_RUNTIME
    summary = {k: v for k, v in record.final.items()}
    summary["checkpoint"] = record.checkpoint
    summary["wall_clock"] = record.wall_clock
    _print_json(summary)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .trainer import evaluate

    corpus = load_corpus(args.data)
    report = evaluate(args.checkpoint, corpus)
    _print_json(report.to_json())
    print(report.summary(), file=sys.stderr)
    return EXIT_OK


def cmd_grid(args) -> int:
    from .trainer import ExperimentConfig, run_grid

    files = sorted(Path(args.configs).glob("*.json"))
    if not files:
        raise CorpusError(f"no *.json configs in {args.configs}")
    configs = [ExperimentConfig.load(f) for f in files]
    for c in configs:
        c.validate()
    result = run_grid(configs)
    out = Path(args.out) if args.out else Path(args.configs) / "grid.json"
    out.write_text(json.dumps(result.to_json(), indent=2) + "\n", encoding="utf-8")
    print(result.table())
    failed = [r.name for r in result.rows if r.status != "ok"]
    return EXIT_RUNTIME if failed and len(failed) == len(result.rows) else EXIT_OK


def cmd_significance(args) -> int:
    from .metrics import z_test_proportions

    _print_json(z_test_proportions(args.k1, args.n1, args.k2, args.n2).to_json())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crossalign", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="generate the synthetic parallel corpus")
    p.add_argument("--spec", help="cipher spec JSON (default: built-in benchmark)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--per-intent", type=int, default=None)
    p.add_argument("--noise", type=float, default=0.1, help="only for the built-in spec")
    p.set_defaults(fn=cmd_gen_corpus)

    p = sub.add_parser("grid-configs", help="write the loss-combination grid for a corpus dir")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_grid_configs)

    p = sub.add_parser("train", help="train one configuration")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a tagged corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("grid", help="train every config in a directory and rank them")
    p.add_argument("--configs", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_grid)

    p = sub.add_parser("significance", help="two-proportion z-test")
    for name in ("k1", "n1", "k2", "n2"):
        p.add_argument(f"--{name}", type=int, required=True)
    p.set_defaults(fn=cmd_significance)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (ValueError, KeyError, FileNotFoundError, CorpusError, TagError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # anything else happened while running
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
