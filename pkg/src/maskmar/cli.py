"""Command-line entry point: dataset simulation, training, baselines, evaluation and gradient checks.

Every stage reads and writes under one output directory:

    <out>/dataset    simulate
    <out>/models     train-pc, train-sc
    <out>/baseline   baseline
    <out>/report     eval
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
import warnings
from pathlib import Path

from maskmar.errors import ConfigError, NumericalError, QualityWarning, UsageError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

log = logging.getLogger("maskmar")


def _seed(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be in [0, 2**64), got {v}")
    return v


def _methods(text: str) -> tuple[str, ...]:
    return tuple(m.strip() for m in text.split(",") if m.strip())


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI experiment config (defaults are used when omitted)")
    common.add_argument("--seed", type=_seed, help="override [experiment] seed")
    common.add_argument("--out", type=Path, help="output root (defaults to [experiment] output)")
    common.add_argument("--method", type=_methods, help="comma-separated methods for baseline and eval")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(prog="maskmar", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("simulate", "render phantoms and implants, write training and held-out shards"),
        ("train-pc", "train the projection-completion model"),
        ("train-sc", "train the sinogram-correction model on PC-completed data"),
        ("baseline", "complete held-out cases with LI and NMAR"),
        ("eval", "evaluate methods on held-out cases; writes CSV tables and figures"),
        ("gradcheck", "finite-difference check of every differentiable op"),
    ):
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


def _progress(label: str, total: int):
    every = max(total // 10, 1)
    t0 = time.perf_counter()

    def report(it, row):
        if (it + 1) % every == 0 or it + 1 == total:
            log.info(
                "%s %d/%d  loss_d %.4f  loss_g_adv %.4f  content %.5f  (%.0fs)",
                label, it + 1, total, row[1], row[2], row[3], time.perf_counter() - t0,
            )

    return report


def _run(args) -> int:
    from maskmar.harness import Dataset, build_dataset, load_config, run_baseline, run_experiment
    from maskmar.harness.experiment import run_train_pc, run_train_sc

    if args.command == "gradcheck":
        from maskmar.verify import format_results, run_suite

        results = run_suite(args.seed or 0)
        print(format_results(results))
        return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERICAL

    cfg = load_config(args.config).with_overrides(seed=args.seed, output=args.out)
    if args.method is not None and args.command not in ("baseline", "eval"):
        raise UsageError("--method applies to baseline and eval only")
    out = Path(cfg.output)
    dataset_dir = out / "dataset"

    if args.command == "simulate":
        ds = build_dataset(cfg, dataset_dir)
        print(f"wrote {len(ds.pc_samples)} training samples and {len(ds.test_cases)} held-out cases to {dataset_dir}")
    elif args.command in ("train-pc", "train-sc"):
        ds = Dataset(dataset_dir)
        stage = args.command.split("-")[1]
        runner = run_train_pc if stage == "pc" else run_train_sc
        iters = getattr(cfg, stage).iterations
        res = runner(cfg, ds, out, progress=_progress(stage.upper(), iters))
        print(
            f"{stage.upper()}: {res.bundle.iterations} iterations, masked L1 "
            f"{res.initial_masked_l1:.5f} -> {res.final_masked_l1:.5f}; saved to {out / 'models' / stage}"
        )
    elif args.command == "baseline":
        written = run_baseline(cfg, dataset_dir, out / "baseline", args.method or ("LI", "NMAR"))
        print(f"wrote {len(written)} completed sinogram stacks to {out / 'baseline'}")
    elif args.command == "eval":
        cfg = cfg.with_overrides(methods=args.method)
        with warnings.catch_warnings():
            warnings.simplefilter("always", QualityWarning)
            rep = run_experiment(cfg, dataset_dir, out, out / "report")
        print((out / "report" / "summary.txt").read_text(), end="")
        print(f"report written to {out / 'report'}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr
    )
    logging.captureWarnings(True)
    try:
        return _run(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
