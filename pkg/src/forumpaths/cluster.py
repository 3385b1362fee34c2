"""Feature normalization and agglomerative clustering of forums."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .errors import DataError

FEATURE_COLUMNS = ("size", "length", "base", "offset", "spread")
BASELINE_ONLY_COLUMNS = ("size", "length", "base", "spread")
MODES = ("by_stddev", "by_variance")
LINKAGES = ("ward", "single", "complete", "average")


@dataclass(frozen=True)
class FeatureMatrix:
    labels: tuple[str, ...]
    columns: tuple[str, ...]
    values: np.ndarray
    mode: str


def _dispersion(col: np.ndarray, mode: str) -> float:
    # sample statistics (ddof = 1)
    return float(np.var(col, ddof=1) if mode == "by_variance" else np.std(col, ddof=1))


def normalize_feature_matrix(
    table: Mapping[str, Mapping[str, float]],
    mode: str = "by_stddev",
    columns: Sequence[str] = FEATURE_COLUMNS,
) -> FeatureMatrix:
    """Scale feature columns without centering them.

    Size, length and spread are divided by their own dispersion; base and
    offset share the dispersion of base so their relative scale is kept.
    """
    if mode not in MODES:
        raise ValueError(f"unknown normalization mode {mode!r}; expected one of {MODES}")
    columns = tuple(columns)
    unknown = set(columns) - set(FEATURE_COLUMNS)
    if unknown:
        raise ValueError(f"columns not allowed in clustering: {sorted(unknown)}")
    if len(table) < 2:
        raise DataError("need at least two forums to normalize")
    labels = tuple(table)
    need = set(columns) | ({"base"} if "offset" in columns else set())
    raw = {}
    for c in need:
        try:
            raw[c] = np.array([float(table[f][c]) for f in labels])
        except KeyError as exc:
            raise DataError(f"feature {exc.args[0]!r} missing for some forum") from None
    disp = {}
    for c in need:
        disp[c] = _dispersion(raw[c], mode)
        if disp[c] == 0.0:
            raise DataError(f"feature {c!r} has zero dispersion")
    scale = {c: disp["base"] if c == "offset" else disp[c] for c in columns}
    values = np.column_stack([raw[c] / scale[c] for c in columns])
    return FeatureMatrix(labels, columns, values, mode)


class Merge(NamedTuple):
    a: int
    b: int
    height: float
    size: int


@dataclass(frozen=True)
class Dendrogram:
    """Merge history in the usual linkage-matrix convention.

    Leaves are ``0..n-1``; merge ``i`` creates cluster ``n + i``.
    """

    labels: tuple[str, ...]
    merges: tuple[Merge, ...]

    @property
    def n_leaves(self) -> int:
        return len(self.labels)

    def linkage_matrix(self) -> np.ndarray:
        return np.array([[m.a, m.b, m.height, m.size] for m in self.merges], dtype=float)

    def members(self, cluster: int) -> list[int]:
        n = self.n_leaves
        if cluster < n:
            return [cluster]
        m = self.merges[cluster - n]
        return self.members(m.a) + self.members(m.b)

    def leaf_order(self) -> list[int]:
        if not self.merges:
            return list(range(self.n_leaves))
        return self.members(self.n_leaves + len(self.merges) - 1)

    def to_json(self) -> str:
        return json.dumps(
            {
                "labels": list(self.labels),
                "merges": [
                    {"a": m.a, "b": m.b, "height": m.height, "size": m.size}
                    for m in self.merges
                ],
            },
            indent=2,
        )

    def to_newick(self) -> str:
        n = self.n_leaves

        def height(c: int) -> float:
            return 0.0 if c < n else self.merges[c - n].height

        def render(c: int) -> str:
            if c < n:
                return _newick_label(self.labels[c])
            m = self.merges[c - n]
            parts = [f"{render(x)}:{m.height - height(x):.6g}" for x in (m.a, m.b)]
            return "(" + ",".join(parts) + ")"

        if not self.merges:
            return _newick_label(self.labels[0]) + ";"
        return render(n + len(self.merges) - 1) + ";"


def _newick_label(label: str) -> str:
    if any(ch in label for ch in " ()[]':;,"):
        return "'" + label.replace("'", "''") + "'"
    return label


def _lance_williams(method, d_ki, d_kj, d_ij, n_i, n_j, n_k):
    if method == "ward":
        t = n_i + n_j + n_k
        sq = ((n_i + n_k) * d_ki**2 + (n_j + n_k) * d_kj**2 - n_k * d_ij**2) / t
        return np.sqrt(np.maximum(sq, 0.0))
    if method == "single":
        return np.minimum(d_ki, d_kj)
    if method == "complete":
        return np.maximum(d_ki, d_kj)
    return (n_i * d_ki + n_j * d_kj) / (n_i + n_j)


def ward_clustering(
    matrix: FeatureMatrix | np.ndarray,
    labels: Sequence[str] | None = None,
    method: str = "ward",
) -> Dendrogram:
    """Agglomerative clustering with Lance-Williams distance updates.

    Heights follow the common convention where the Ward distance between two
    singletons equals their Euclidean distance.  Among equal minimal
    distances the pair with the smallest ``(min id, max id)`` merges first.
    """
    if method not in LINKAGES:
        raise ValueError(f"unknown linkage {method!r}; expected one of {LINKAGES}")
    if isinstance(matrix, FeatureMatrix):
        x = matrix.values
        labels = matrix.labels if labels is None else labels
    else:
        x = np.asarray(matrix, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
    n = x.shape[0]
    if n < 2:
        raise DataError("clustering needs at least two rows")
    labels = tuple(str(i) for i in range(n)) if labels is None else tuple(labels)
    if len(labels) != n:
        raise ValueError("label count does not match row count")

    diff = x[:, None, :] - x[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    active = list(range(n))  # slot -> cluster id
    sizes = [1] * n
    merges = []
    for step in range(n - 1):
        best = None
        m = len(active)
        for i in range(m):
            for j in range(i + 1, m):
                ci, cj = sorted((active[i], active[j]))
                key = (dist[i, j], ci, cj)
                if best is None or key < best[0]:
                    best = (key, i, j)
        (d_ij, ci, cj), i, j = best
        n_i, n_j = sizes[i], sizes[j]
        others = [k for k in range(m) if k not in (i, j)]
        new_row = np.array(
            [
                _lance_williams(method, dist[k, i], dist[k, j], d_ij, n_i, n_j, sizes[k])
                for k in others
            ]
        )
        merges.append(Merge(ci, cj, float(d_ij), n_i + n_j))
        keep = others
        dist = dist[np.ix_(keep, keep)]
        dist = np.pad(dist, ((0, 1), (0, 1)))
        if others:
            dist[-1, :-1] = new_row
            dist[:-1, -1] = new_row
        active = [active[k] for k in keep] + [n + step]
        sizes = [sizes[k] for k in keep] + [n_i + n_j]
    return Dendrogram(labels, tuple(merges))


def cut_dendrogram(d: Dendrogram, k: int) -> list[list[str]]:
    """Partition after the first ``n - k`` merges.

    Groups are ordered by their first leaf index and members by leaf index.
    """
    n = d.n_leaves
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    clusters = {i: [i] for i in range(n)}
    for step, m in enumerate(d.merges[: n - k]):
        merged = clusters.pop(m.a) + clusters.pop(m.b)
        clusters[n + step] = merged
    groups = sorted(sorted(g) for g in clusters.values())
    return [[d.labels[i] for i in g] for g in groups]


def partition_csv(groups: Sequence[Sequence[str]]) -> str:
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["forum", "cluster_id"])
    for cid, group in enumerate(groups, start=1):
        for label in group:
            w.writerow([label, cid])
    return buf.getvalue()
