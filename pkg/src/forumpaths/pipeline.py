"""Pipeline configuration, input loading and artifact assembly.

Every stage returns a mapping of relative file name to file content.  The
caller writes the mapping only once the whole stage has succeeded, so a
failing stage leaves nothing behind.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import os
import shutil
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import cluster, deadzone, features, models, paths, timing, viz
from .errors import DataError
from .ingest import (
    RawEvent,
    load_registrations,
    parse_event_log,
    resolve_and_validate,
    sample_users,
    scope_registration,
)
from .synth import synthetic_archive

ARCHIVE_SUFFIX = ".paths.jsonl"
OUTPUT_ENV = "FORUMPATHS_OUTPUT_DIR"


@dataclass
class PipelineConfig:
    inputs: list[str] = field(default_factory=list)
    sample_fraction: float = 0.3
    seed: int = 0
    min_length_pearson: int = 10
    min_length_postruns: int = 20
    alpha: float = 0.05
    kde_bandwidth: float = 2.0
    deadzone_percentile: float = 5.0
    p_harsh_grid: tuple[float, ...] = models.DEFAULT_P_HARSH_GRID
    normalization: str = "by_stddev"
    output_dir: str = field(default_factory=lambda: os.environ.get(OUTPUT_ENV, "forumpaths-out"))
    policy: str = "lenient"
    min_events_timing: int = 10
    bins_per_decade: int = 10
    pvalue_method: str = "permutation"
    permutations: int = 199
    replicates: int = 1
    log_scale: bool = True
    registrations: str | None = None
    window_start: str | None = None
    window_end: str | None = None


def _coerce(name: str, value):
    f = {f.name: f for f in dataclasses.fields(PipelineConfig)}[name]
    default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
    if isinstance(value, str):
        text = value.strip()
        if name == "p_harsh_grid":
            return tuple(float(v) for v in text.split(",") if v.strip())
        if name == "inputs":
            return [v.strip() for v in text.split(",") if v.strip()]
        if isinstance(default, bool):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"config key {name!r}: expected a boolean, got {value!r}")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        return text
    return value


def parse_config_text(text: str) -> dict:
    """``key = value`` lines; ``#`` starts a comment."""
    known = {f.name for f in dataclasses.fields(PipelineConfig)}
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        out[key] = _coerce(key, value)
    return out


def make_config(file_values: dict | None = None, overrides: dict | None = None) -> PipelineConfig:
    """Defaults, then config-file values, then explicit overrides."""
    cfg = PipelineConfig()
    for source in (file_values or {}, overrides or {}):
        for key, value in source.items():
            if value is not None:
                setattr(cfg, key, _coerce(key, value))
    if not 0.0 < cfg.sample_fraction <= 1.0:
        raise ValueError("sample_fraction must lie in (0, 1]")
    if cfg.normalization not in cluster.MODES:
        raise ValueError(f"normalization must be one of {cluster.MODES}")
    return cfg


@dataclass
class ForumInput:
    archive: paths.ForumArchive
    events: list[RawEvent] | None = None


@dataclass
class LoadResult:
    forums: list[ForumInput]
    report: dict


def _window(cfg: PipelineConfig):
    from .ingest import parse_timestamp

    if cfg.window_start is None and cfg.window_end is None:
        return None
    lo = parse_timestamp(cfg.window_start) if cfg.window_start else -(2**62)
    hi = parse_timestamp(cfg.window_end) if cfg.window_end else 2**62
    return lo, hi


def _forum_seed(seed: int, forum: str) -> int:
    return int(models.SeededRng(seed).generator("sample", forum).integers(2**62))


def is_archive(path: Path) -> bool:
    return path.name.endswith(ARCHIVE_SUFFIX)


def log_format(path: Path) -> str | None:
    if is_archive(path):
        return None
    suffix = path.suffix.lower()
    if suffix == ".csv":
        return "csv"
    if suffix in (".jsonl", ".ndjson"):
        return "jsonl"
    return None


def load_inputs(cfg: PipelineConfig, inputs: Sequence[str] | None = None) -> LoadResult:
    """Archives are used as is; event logs go through ingestion and sampling."""
    inputs = list(cfg.inputs if inputs is None else inputs)
    if not inputs:
        raise DataError("no input files given")
    registrations = None
    if cfg.registrations:
        registrations = load_registrations(Path(cfg.registrations).read_bytes())
    window = _window(cfg)

    report = {"files": [], "parse_errors": [], "warnings": [], "forums": {}}
    forums: list[ForumInput] = []
    raw_events: list[RawEvent] = []
    for name in inputs:
        p = Path(name)
        if not p.is_file():
            raise DataError(f"input file not found: {name}")
        report["files"].append(str(p))
        if is_archive(p):
            forum = p.name[: -len(ARCHIVE_SUFFIX)]
            with p.open(encoding="utf-8") as fh:
                forums.append(ForumInput(paths.read_archive_jsonl(fh, forum)))
            continue
        fmt = log_format(p)
        if fmt is None:
            raise DataError(f"cannot tell the format of {name} (use .csv, .jsonl or {ARCHIVE_SUFFIX})")
        parsed = parse_event_log(p.read_bytes(), fmt)
        report["parse_errors"] += [
            {"file": str(p), "line": e.line, "message": e.message} for e in parsed.errors
        ]
        raw_events += parsed.events

    if raw_events:
        validated = resolve_and_validate(raw_events, cfg.policy)
        report["warnings"] += validated.warnings
        for forum, events in validated.forums.items():
            t0, retained = scope_registration(
                events, registrations, window, strict=cfg.policy == "strict"
            )
            sampled = sample_users(retained, cfg.sample_fraction, _forum_seed(cfg.seed, forum)) if retained else set()
            archive = paths.build_archive(forum, events, t0, sampled)
            report["forums"][forum] = {
                "events": len(events),
                "users_posting": len({e.author_id for e in events}),
                "users_in_window": len(retained),
                "users_sampled": len(sampled),
            }
            forums.append(ForumInput(archive, events))
    ids = [f.archive.forum_id for f in forums]
    if len(set(ids)) != len(ids):
        raise DataError("the same forum appears in more than one input")
    forums.sort(key=lambda f: f.archive.forum_id)
    return LoadResult(forums, report)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def archive_text(archive: paths.ForumArchive) -> str:
    buf = io.StringIO()
    paths.write_archive_jsonl(archive, buf)
    return buf.getvalue()


# -- stages -----------------------------------------------------------------


def stage_ingest(cfg: PipelineConfig, loaded: LoadResult) -> dict[str, str]:
    out = {f"{f.archive.forum_id}{ARCHIVE_SUFFIX}": archive_text(f.archive) for f in loaded.forums}
    out["ingest_report.json"] = _json(loaded.report)
    return out


def stage_features(
    cfg: PipelineConfig,
    loaded: LoadResult | None = None,
    counts_csv: str | None = None,
    influence: bool = False,
) -> dict[str, str]:
    rows = []
    out = {}
    if counts_csv is not None:
        rows += features.read_counts_csv(io.StringIO(counts_csv))
    for f in loaded.forums if loaded else []:
        rows.append(features.compute_forum_features(f.archive))
        if influence:
            infl = features.slope_influences(f.archive)
            out[f"{f.archive.forum_id}.influence.csv"] = _csv(
                ["user_id", "slope_influence"], [[u, f"{v:.9f}"] for u, v in infl.items()]
            )
    if not rows:
        raise DataError("no forums to summarize")
    out["features.csv"] = features.features_csv_text(rows)
    return out


def stage_model_fit(
    cfg: PipelineConfig,
    loaded: LoadResult,
    model: str = "both",
    p_harsh: float | None = None,
) -> dict[str, str]:
    out = {}
    common = dict(
        min_length=cfg.min_length_postruns,
        alpha=cfg.alpha,
        replicates=cfg.replicates,
        rng=cfg.seed,
        pvalue=cfg.pvalue_method,
        permutations=cfg.permutations,
    )
    for f in loaded.forums:
        forum = f.archive.forum_id
        summary = {"forum": forum}
        coin = stick = None
        if model in ("coin", "both"):
            coin = models.evaluate_model_fit(f.archive, "coin", **common)
            out[f"{forum}.modelfit_coin.csv"] = coin.to_csv()
            summary["coin"] = coin.summary()
        if model in ("sticking", "both"):
            if p_harsh is None:
                search = models.search_p_harsh(
                    f.archive, grid=cfg.p_harsh_grid, **{k: v for k, v in common.items() if k != "alpha"},
                    alpha=cfg.alpha,
                )
                stick = search.report
                summary["p_harsh_scores"] = {f"{k:.2f}": v for k, v in search.scores.items()}
            else:
                stick = models.evaluate_model_fit(f.archive, "sticking", p_harsh=p_harsh, **common)
            out[f"{forum}.modelfit_sticking.csv"] = stick.to_csv()
            summary["sticking"] = stick.summary()
        if coin is not None and stick is not None:
            summary["comparison"] = models.comparison_row(forum, coin, stick)
        out[f"{forum}.modelfit.json"] = _json(summary)
    return out


def forum_deadzone(cfg: PipelineConfig, archive: paths.ForumArchive) -> dict[str, str]:
    forum = archive.forum_id
    pts = deadzone.archive_points(archive)
    grid = deadzone.estimate_density(pts, cfg.kde_bandwidth)
    result = deadzone.compute_dead_zone(grid, pts, cfg.deadzone_percentile)
    m = grid.extent
    xs, ys = np.meshgrid(np.arange(m + 1), np.arange(m + 1), indexing="ij")
    rows = [
        f"{x},{y},{v:.9e},{int(z)}"
        for x, y, v, z in zip(xs.ravel(), ys.ravel(), grid.values.ravel(), result.mask.ravel())
    ]
    flagged = deadzone.flag_outlier_users(archive, result)
    return {
        f"{forum}.density.csv": "x,y,density,in_dead_zone\n" + "".join(r + "\n" for r in rows),
        f"{forum}.outliers.csv": _csv(
            ["user_id", "x", "y"], [[u, x, y] for u, pts_ in flagged.items() for x, y in pts_]
        ),
        f"{forum}.deadzone.json": _json(
            {
                "forum": forum,
                "extent": m,
                "bandwidth": cfg.kde_bandwidth,
                "percentile": cfg.deadzone_percentile,
                "threshold": result.threshold,
                "observed_points": int(len(pts)),
                "outlier_points": int(len(result.outliers)),
                "masked_lattice_points": int(result.mask.sum()),
                "users_with_outliers": sum(1 for v in flagged.values() if v),
            }
        ),
    }


def forum_timing(cfg: PipelineConfig, archive: paths.ForumArchive) -> dict[str, str]:
    forum = archive.forum_id
    pooled = timing.normalize_and_pool(archive, cfg.min_events_timing)
    out = {
        f"{forum}.deltas.csv": "normalized_delta\n" + "".join(f"{v:.9g}\n" for v in pooled)
    }
    try:
        fit = timing.fit_power_law(pooled, cfg.bins_per_decade)
        summary = {"status": "ok", **fit.to_dict()}
    except DataError as exc:
        # too little data for a fit is a reportable outcome, not a failure
        summary = {"status": "insufficient_data", "reason": str(exc)}
    summary.update(forum=forum, samples=int(pooled.size), min_events=cfg.min_events_timing)
    out[f"{forum}.powerlaw.json"] = _json(summary)
    return out


def forum_viz(
    cfg: PipelineConfig, archive: paths.ForumArchive, feats: features.ForumFeatures | None = None
) -> dict[str, str]:
    forum = archive.forum_id
    feats = feats or features.compute_forum_features(archive)
    grid = viz.path_density_grid(archive)
    return {
        f"{forum}.paths.svg": viz.render_forum_plot(grid, feats, log_scale=cfg.log_scale),
        f"{forum}.grid.csv": grid.to_csv(),
    }


def stage_cluster(
    cfg: PipelineConfig,
    table: dict,
    k: int = 2,
    linkage: str = "ward",
    drop_offset: bool = False,
) -> dict[str, str]:
    columns = cluster.BASELINE_ONLY_COLUMNS if drop_offset else cluster.FEATURE_COLUMNS
    matrix = cluster.normalize_feature_matrix(table, cfg.normalization, columns)
    dendro = cluster.ward_clustering(matrix, method=linkage)
    groups = cluster.cut_dendrogram(dendro, k)
    return {
        "partition.csv": cluster.partition_csv(groups),
        "dendrogram.json": dendro.to_json() + "\n",
        "dendrogram.nwk": dendro.to_newick() + "\n",
        "dendrogram.svg": viz.render_dendrogram(dendro),
    }


def stage_synth(
    cfg: PipelineConfig,
    forum: str,
    n_users: int,
    length,
    p_post,
    p_harsh: float | None,
    timing_exponent: float,
) -> dict[str, str]:
    archive = synthetic_archive(
        forum, n_users, length, p_post, p_harsh, timing_exponent, seed=cfg.seed
    )
    return {f"{forum}{ARCHIVE_SUFFIX}": archive_text(archive)}


def _forum_report(args) -> tuple[dict[str, str], features.ForumFeatures]:
    cfg, f = args
    archive = f.archive
    feats = features.compute_forum_features(archive)
    out = {}
    out.update(forum_deadzone(cfg, archive))
    out.update(forum_timing(cfg, archive))
    out.update(forum_viz(cfg, archive, feats))
    out[f"{archive.forum_id}.correlations.json"] = _json(
        paths.correlation_report(archive, f.events, cfg.min_length_pearson)
    )
    return out, feats


def stage_report(
    cfg: PipelineConfig, input_dir: str, k: int = 2, jobs: int = 1
) -> dict[str, str]:
    d = Path(input_dir)
    if not d.is_dir():
        raise DataError(f"input directory not found: {input_dir}")
    files = sorted(
        str(p) for p in d.iterdir() if p.is_file() and (is_archive(p) or log_format(p))
    )
    if not files:
        raise DataError(f"no event logs or archives in {input_dir}")
    loaded = load_inputs(cfg, files)
    if not loaded.forums:
        raise DataError(f"no forums found in {input_dir}")
    for f in loaded.forums:
        if len(f.archive) == 0:
            raise DataError(f"forum {f.archive.forum_id!r} has no users after sampling")

    out = stage_ingest(cfg, loaded)
    work = [(cfg, f) for f in loaded.forums]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_forum_report, work))
    else:
        results = [_forum_report(w) for w in work]
    rows = []
    for artifacts, feats in results:
        out.update(artifacts)
        rows.append(feats)
    out["features.csv"] = features.features_csv_text(rows)
    summary = {"forums": [r.forum for r in rows], "clustering": None}
    if len(rows) >= max(2, k):
        out.update(stage_cluster(cfg, features.as_table(rows), k=k))
        summary["clustering"] = {"k": k, "mode": cfg.normalization}
    else:
        summary["clustering_skipped"] = f"need at least {max(2, k)} forums"
    out["report.json"] = _json(summary)
    return out


# -- output -----------------------------------------------------------------


def commit(outputs: dict[str, str], out_dir: str) -> list[str]:
    """Write all artifacts via a staging directory, then rename into place."""
    target = Path(out_dir)
    target.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=".staging-", dir=target))
    written = []
    try:
        for name, text in outputs.items():
            (staging / name).write_text(text, encoding="utf-8")
        for name in outputs:
            os.replace(staging / name, target / name)
            written.append(str(target / name))
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    return written
