"""Command-line entry point.

Exit codes: 0 ok, 1 usage, 2 data error, 3 internal error.  Errors are
printed to stderr as a single JSON object.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__, pipeline
from .errors import DataError
from .features import read_features_csv

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _range(text: str):
    """``0.6`` or ``0.5:0.9`` (inclusive range)."""
    if ":" in text:
        lo, hi = text.split(":", 1)
        return (float(lo), float(hi))
    return float(text)


def _int_range(text: str):
    if ":" in text:
        lo, hi = text.split(":", 1)
        return (int(lo), int(hi))
    return int(text)


def _common(p: argparse.ArgumentParser, inputs: bool = True) -> None:
    g = p.add_argument_group("pipeline settings (override the config file)")
    g.add_argument("--config", help="key = value settings file")
    g.add_argument("--out", dest="output_dir", help=f"output directory (default ${pipeline.OUTPUT_ENV})")
    g.add_argument("--seed", type=int)
    if not inputs:
        return
    p.add_argument("inputs", nargs="*", help="event logs (.csv/.jsonl) or archives (*.paths.jsonl)")
    g.add_argument("--sample-fraction", type=float)
    g.add_argument("--policy", choices=("lenient", "strict"))
    g.add_argument("--registrations", help="CSV with user_id,registration_timestamp")
    g.add_argument("--window-start")
    g.add_argument("--window-end")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="forumpaths", description="Post/reply path analysis of forum event logs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("ingest", help="event logs to per-forum path archives")
    _common(p)

    p = sub.add_parser("features", help="six-feature summary per forum")
    _common(p)
    p.add_argument("--counts", help="forum,users,posts,replies table (size, length, base only)")
    p.add_argument("--influence", action="store_true", help="also write per-user slope influence")

    p = sub.add_parser("model-fit", help="KS fit of coin toss and sticking models")
    _common(p)
    p.add_argument("--model", choices=("coin", "sticking", "both"), default="both")
    p.add_argument("--p-harsh", type=float, help="fixed value; grid search when omitted")
    p.add_argument("--p-harsh-grid", help="comma-separated grid")
    p.add_argument("--min-length-postruns", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--pvalue", dest="pvalue_method", choices=("permutation", "asymptotic"))
    p.add_argument("--permutations", type=int)
    p.add_argument("--replicates", type=int)

    p = sub.add_parser("deadzone", help="KDE density and dead-zone outliers")
    _common(p)
    p.add_argument("--kde-bandwidth", type=float)
    p.add_argument("--deadzone-percentile", type=float)

    p = sub.add_parser("timing", help="pooled inter-event times and power-law fit")
    _common(p)
    p.add_argument("--min-events", dest="min_events_timing", type=int)
    p.add_argument("--bins-per-decade", type=int)

    p = sub.add_parser("viz", help="superimposed-path density plot")
    _common(p)
    p.add_argument("--linear-scale", action="store_const", const=False, dest="log_scale")

    p = sub.add_parser("cluster", help="hierarchical clustering of forum features")
    _common(p, inputs=False)
    p.add_argument("--features", required=True, help="features CSV")
    p.add_argument("--mode", dest="normalization", choices=("by_stddev", "by_variance"))
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--linkage", choices=("ward", "single", "complete", "average"), default="ward")
    p.add_argument("--drop-offset", action="store_true", help="baseline-only feature set")

    p = sub.add_parser("synth", help="write a seeded synthetic archive")
    _common(p, inputs=False)
    p.add_argument("--forum", default="synthetic")
    p.add_argument("--users", type=int, default=200)
    p.add_argument("--length", type=_int_range, default=100, help="L or lo:hi")
    p.add_argument("--p-post", type=_range, default=0.75, help="p or lo:hi")
    p.add_argument("--p-harsh", type=float, help="sticking model; coin toss when omitted")
    p.add_argument("--timing-exponent", type=float, default=-1.7)

    p = sub.add_parser("report", help="full pipeline over a directory of forums")
    _common(p, inputs=False)
    p.add_argument("input_dir")
    p.add_argument("--sample-fraction", type=float)
    p.add_argument("--policy", choices=("lenient", "strict"))
    p.add_argument("--mode", dest="normalization", choices=("by_stddev", "by_variance"))
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--jobs", type=int, default=1, help="forums processed in parallel")
    return parser


_SETTING_KEYS = {
    "inputs", "output_dir", "seed", "sample_fraction", "policy", "registrations",
    "window_start", "window_end", "p_harsh_grid", "min_length_postruns", "alpha",
    "pvalue_method", "permutations", "replicates", "kde_bandwidth",
    "deadzone_percentile", "min_events_timing", "bins_per_decade", "log_scale",
    "normalization",
}


def _config(args: argparse.Namespace) -> pipeline.PipelineConfig:
    file_values = {}
    if getattr(args, "config", None):
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot read config file: {exc}") from None
        file_values = pipeline.parse_config_text(text)
    overrides = {k: v for k, v in vars(args).items() if k in _SETTING_KEYS and v not in (None, [])}
    return pipeline.make_config(file_values, overrides)


def run(args: argparse.Namespace) -> dict:
    cfg = _config(args)
    cmd = args.command
    if cmd in ("ingest", "features", "model-fit", "deadzone", "timing", "viz"):
        need_inputs = not (cmd == "features" and args.counts)
        loaded = pipeline.load_inputs(cfg) if cfg.inputs or need_inputs else None
    if cmd == "ingest":
        return pipeline.stage_ingest(cfg, loaded)
    if cmd == "features":
        counts = Path(args.counts).read_text(encoding="utf-8") if args.counts else None
        return pipeline.stage_features(cfg, loaded, counts, args.influence)
    if cmd == "model-fit":
        return pipeline.stage_model_fit(cfg, loaded, args.model, args.p_harsh)
    if cmd in ("deadzone", "timing", "viz"):
        stage = {
            "deadzone": pipeline.forum_deadzone,
            "timing": pipeline.forum_timing,
            "viz": pipeline.forum_viz,
        }[cmd]
        out = {}
        for f in loaded.forums:
            out.update(stage(cfg, f.archive))
        return out
    if cmd == "cluster":
        with open(args.features, encoding="utf-8") as fh:
            table = read_features_csv(fh)
        return pipeline.stage_cluster(cfg, table, args.k, args.linkage, args.drop_offset)
    if cmd == "synth":
        return pipeline.stage_synth(
            cfg, args.forum, args.users, args.length, args.p_post, args.p_harsh,
            args.timing_exponent,
        )
    if cmd == "report":
        return pipeline.stage_report(cfg, args.input_dir, args.k, args.jobs)
    raise UsageError(f"unknown command {cmd!r}")


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message, "exit_code": code}), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        outputs = run(args)
        cfg_out = _config(args).output_dir
        written = pipeline.commit(outputs, cfg_out)
    except UsageError as exc:
        return _fail("usage", str(exc), EXIT_USAGE)
    except (DataError, FileNotFoundError, UnicodeDecodeError) as exc:
        return _fail("data", str(exc), EXIT_DATA)
    except ValueError as exc:
        return _fail("usage", str(exc), EXIT_USAGE)
    except Exception as exc:  # noqa: BLE001
        return _fail("internal", f"{type(exc).__name__}: {exc}", EXIT_INTERNAL)
    print(json.dumps({"status": "ok", "command": args.command, "written": written}))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
