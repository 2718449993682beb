"""Command line entry point: ``topicdiv run | stage NAME | clean``.

Exit codes: 0 success, 1 usage or configuration error, 2 stage failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import pipeline

EXIT_OK, EXIT_USAGE, EXIT_STAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; reserve 2 for stage failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="pipeline INI file")
    common.add_argument("--force", action="store_true", help="rerun stages even when their inputs are unchanged")
    common.add_argument("--seed", type=int, default=None, help="override [run] seed")
    common.add_argument("--jobs", type=int, default=None, help="worker threads for inference and placebo reps")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = _Parser(prog="topicdiv", description="Topic diversity pipeline")
    sub = ap.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    sub.add_parser("run", parents=[common], help="run all configured stages in order")
    st = sub.add_parser("stage", parents=[common], help="run a single stage")
    st.add_argument("name", choices=pipeline.STAGES)
    sub.add_parser("clean", parents=[common], help="delete artifacts, stage state and the run log")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.jobs is not None and args.jobs < 1:
        print("topicdiv: error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = pipeline.load_config(args.config, seed=args.seed, jobs=args.jobs, check_paths=False)
        if args.verb == "clean":
            for p in pipeline.clean(cfg):
                print(f"removed {p}")
            return EXIT_OK
        stages = [args.name] if args.verb == "stage" else cfg.stages
        pipeline.check_stage_paths(cfg, stages)
    except pipeline.ConfigError as exc:
        print(f"topicdiv: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        outcomes = pipeline.run_pipeline(cfg, stages, force=args.force)
    except pipeline.StageError as exc:
        print(f"topicdiv: {exc}", file=sys.stderr)
        return EXIT_STAGE
    for o in outcomes:
        print(f"{o.stage:<10} {o.status:<7} {o.duration_s:8.2f}s")
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
