"""Generative path models and their evaluation on post-run distributions.

Two generators are provided.  The coin toss model emits ``p`` first and then
i.i.d. symbols with ``P(p) = p_post``.  The sticking model pulls the running
proportion of posts back toward ``p_post``: whenever the proportion is below
target the next symbol is ``p`` with probability ``p_harsh``, above target
with probability ``1 - p_harsh``, and on target with probability 1/2.

A user passes a model when a two-sample KS test between the post runs of the
real path and of a synthetic path of the same length does not reject at
level ``alpha``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import DataError
from .paths import ForumArchive, UserPath, post_runs

RNG_ALGORITHM = "numpy-PCG64-seedsequence/1"
DEFAULT_P_HARSH_GRID = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))
MODELS = ("coin", "sticking")
PVALUE_METHODS = ("permutation", "asymptotic")


def _key_entropy(key) -> int:
    if isinstance(key, (int, np.integer)) and not isinstance(key, bool) and key >= 0:
        return int(key)
    digest = hashlib.sha256(repr(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class SeededRng:
    """Named, versioned source of reproducible generators.

    Streams are derived from the seed plus any number of keys, so a user's
    stream depends only on ``(seed, keys)`` and not on evaluation order.
    """

    seed: int
    algorithm: str = RNG_ALGORITHM

    def __post_init__(self):
        if self.algorithm != RNG_ALGORITHM:
            raise ValueError(f"unsupported RNG algorithm {self.algorithm!r}")

    def generator(self, *keys) -> np.random.Generator:
        entropy = [_key_entropy(self.seed)] + [_key_entropy(k) for k in keys]
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def _as_seeded(rng) -> SeededRng:
    if isinstance(rng, SeededRng):
        return rng
    return SeededRng(int(rng))


@dataclass(frozen=True)
class UserModelParams:
    p_post: float
    path_length: int


def estimate_p_post(path: UserPath | str) -> UserModelParams:
    symbols = path if isinstance(path, str) else path.symbols
    if not symbols:
        raise DataError("cannot estimate p_post from an empty path")
    return UserModelParams(symbols.count("p") / len(symbols), len(symbols))


def _check_args(length: int, p_post: float, p_harsh: float | None = None):
    if length < 1:
        raise ValueError(f"path length must be >= 1, got {length}")
    if not 0.0 <= p_post <= 1.0:
        raise ValueError(f"p_post must lie in [0, 1], got {p_post}")
    if p_harsh is not None and not 0.0 <= p_harsh <= 1.0:
        raise ValueError(f"p_harsh must lie in [0, 1], got {p_harsh}")


def coin_toss_batch(
    n: int, length: int, p_post: float, rng: np.random.Generator
) -> np.ndarray:
    """``(n, length)`` boolean array, True meaning ``p``."""
    _check_args(length, p_post)
    out = np.empty((n, length), dtype=bool)
    out[:, 0] = True
    out[:, 1:] = rng.random((n, length - 1)) < p_post
    return out


def sticking_batch(
    n: int, length: int, p_post: float, p_harsh: float, rng: np.random.Generator
) -> np.ndarray:
    _check_args(length, p_post, p_harsh)
    out = np.empty((n, length), dtype=bool)
    out[:, 0] = True
    n_posts = np.ones(n)
    for i in range(1, length):
        prop = n_posts / i
        p_curr = np.where(
            p_post > prop, p_harsh, np.where(p_post < prop, 1.0 - p_harsh, 0.5)
        )
        step = rng.random(n) < p_curr
        out[:, i] = step
        n_posts += step
    return out


def to_symbols(row: np.ndarray) -> str:
    return "".join("p" if v else "r" for v in row)


def generate_coin_toss(length: int, p_post: float, rng: np.random.Generator) -> str:
    return to_symbols(coin_toss_batch(1, length, p_post, rng)[0])


def generate_sticking(
    length: int, p_post: float, p_harsh: float, rng: np.random.Generator
) -> str:
    return to_symbols(sticking_batch(1, length, p_post, p_harsh, rng)[0])


class KSResult(NamedTuple):
    statistic: float
    pvalue: float


def kolmogorov_sf(x: float) -> float:
    """P(K > x) for the limiting Kolmogorov distribution."""
    if x <= 0.0:
        return 1.0
    if x < 0.3:
        # alternating series converges slowly here; use the theta-function dual
        # P(K <= x) = sqrt(2 pi)/x * sum exp(-(2k-1)^2 pi^2 / (8 x^2))
        s = 0.0
        for k in range(1, 50):
            term = math.exp(-((2 * k - 1) ** 2) * math.pi**2 / (8.0 * x * x))
            s += term
            if term < 1e-300:
                break
        return 1.0 - math.sqrt(2.0 * math.pi) / x * s
    total = 0.0
    for k in range(1, 101):
        term = math.exp(-2.0 * k * k * x * x)
        total += term if k % 2 else -term
        if term < 1e-17:
            break
    return min(1.0, max(0.0, 2.0 * total))


def _ks_statistic(a: np.ndarray, b: np.ndarray) -> float:
    a = np.sort(a)
    b = np.sort(b)
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_two_sample(a: Iterable[float], b: Iterable[float]) -> KSResult:
    """Two-sample KS statistic with the asymptotic two-sided p-value.

    The p-value treats the data as continuous; with heavy ties (such as
    integer run lengths) it is conservative.
    """
    a = np.asarray(list(a), dtype=float)
    b = np.asarray(list(b), dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("KS test needs two nonempty samples")
    d = _ks_statistic(a, b)
    en = a.size * b.size / (a.size + b.size)
    return KSResult(d, kolmogorov_sf(math.sqrt(en) * d))


def ks_permutation_test(
    a: Iterable[float],
    b: Iterable[float],
    rng: np.random.Generator,
    permutations: int = 199,
) -> KSResult:
    """KS statistic with a randomized permutation p-value.

    The reference distribution of D is built by reassigning the pooled sample
    to groups of the original sizes.  Permuted statistics that tie the
    observed one are counted with a uniform random weight, which keeps the
    test at its nominal size despite the discreteness of D.
    """
    a = np.asarray(list(a), dtype=float)
    b = np.asarray(list(b), dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("KS test needs two nonempty samples")
    if permutations < 1:
        raise ValueError("permutations must be >= 1")
    pooled = np.concatenate([a, b])
    values, codes = np.unique(pooled, return_inverse=True)
    n, m, total = a.size, b.size, pooled.size
    onehot = np.zeros((total, values.size))
    onehot[np.arange(total), codes] = 1.0
    total_cum = np.cumsum(onehot.sum(axis=0))

    def stat(in_a: np.ndarray) -> np.ndarray:
        cum_a = np.cumsum(in_a.astype(float) @ onehot, axis=-1)
        return np.max(np.abs(cum_a / n - (total_cum - cum_a) / m), axis=-1)

    observed_mask = np.zeros(total, dtype=bool)
    observed_mask[:n] = True
    d_obs = float(stat(observed_mask))
    order = np.argsort(rng.random((permutations, total)), axis=1)
    masks = np.zeros((permutations, total), dtype=bool)
    np.put_along_axis(masks, order[:, :n], True, axis=1)
    d_perm = stat(masks)
    tol = 1e-12
    greater = int(np.sum(d_perm > d_obs + tol))
    ties = int(np.sum(np.abs(d_perm - d_obs) <= tol))
    pvalue = (greater + rng.random() * (ties + 1)) / (permutations + 1)
    return KSResult(d_obs, float(pvalue))


@dataclass(frozen=True)
class UserFit:
    user_id: str
    p_post: float
    length: int
    ks_statistic: float
    p_value: float
    passed: bool


@dataclass
class ModelFitReport:
    model: str
    alpha: float
    p_harsh: float | None = None
    rows: list[UserFit] = field(default_factory=list)
    min_length: int = 20
    replicates: int = 1
    pvalue_method: str = "permutation"

    @property
    def users_tested(self) -> int:
        return len(self.rows)

    @property
    def users_passed(self) -> int:
        return sum(r.passed for r in self.rows)

    def summary(self) -> dict:
        return {
            "model": self.model,
            "users_tested": self.users_tested,
            "users_passed": self.users_passed,
            "p_harsh": self.p_harsh,
            "alpha": self.alpha,
            "min_length": self.min_length,
            "replicates": self.replicates,
            "pvalue_method": self.pvalue_method,
        }

    def to_csv(self) -> str:
        buf = io.StringIO(newline="")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["user_id", "p_post", "length", "ks_statistic", "p_value", "passed"])
        for r in self.rows:
            w.writerow(
                [r.user_id, f"{r.p_post:.6f}", r.length, f"{r.ks_statistic:.6f}",
                 f"{r.p_value:.6f}", int(r.passed)]
            )
        return buf.getvalue()


def comparison_row(dataset: str, coin: ModelFitReport, sticking: ModelFitReport) -> dict:
    """Dataset summary in the layout of a model-comparison table."""
    if coin.users_tested != sticking.users_tested:
        raise ValueError("coin and sticking reports cover different users")
    return {
        "dataset": dataset,
        "users_tested": coin.users_tested,
        "users_passed_coin": coin.users_passed,
        "users_passed_sticking": sticking.users_passed,
        "p_harsh": sticking.p_harsh,
    }


def evaluate_model_fit(
    archive: ForumArchive,
    model: str,
    min_length: int = 20,
    alpha: float = 0.05,
    p_harsh: float | None = None,
    replicates: int = 1,
    rng: SeededRng | int = 0,
    pvalue: str = "permutation",
    permutations: int = 199,
) -> ModelFitReport:
    """Test each user with path length ``>= min_length`` against a model.

    With several replicates, the reported statistic and p-value are the lower
    medians across replicates, so ``passed`` is a strict majority vote.
    """
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}; expected one of {MODELS}")
    if model == "sticking" and p_harsh is None:
        raise ValueError("the sticking model needs p_harsh")
    if pvalue not in PVALUE_METHODS:
        raise ValueError(f"unknown p-value method {pvalue!r}")
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    if len(archive) == 0:
        raise DataError("archive is empty")
    seeded = _as_seeded(rng)
    harsh_key = "none" if model == "coin" else f"{p_harsh:.6f}"

    report = ModelFitReport(
        model, alpha, p_harsh if model == "sticking" else None,
        min_length=min_length, replicates=replicates, pvalue_method=pvalue,
    )
    for user in sorted(archive.users):
        path = archive.path(user)
        if path.length < min_length:
            continue
        params = estimate_p_post(path)
        gen = seeded.generator("model-fit", model, harsh_key, user)
        if model == "coin":
            synth = coin_toss_batch(replicates, params.path_length, params.p_post, gen)
        else:
            synth = sticking_batch(
                replicates, params.path_length, params.p_post, p_harsh, gen
            )
        observed = post_runs(path)
        results = []
        for row in synth:
            runs = post_runs(to_symbols(row))
            if pvalue == "asymptotic":
                results.append(ks_two_sample(observed, runs))
            else:
                results.append(ks_permutation_test(observed, runs, gen, permutations))
        k = (len(results) - 1) // 2
        d = sorted(r.statistic for r in results)[k]
        p = sorted(r.pvalue for r in results)[k]
        report.rows.append(
            UserFit(user, params.p_post, params.path_length, d, p, p >= alpha)
        )
    return report


class GridSearchResult(NamedTuple):
    best: float
    report: ModelFitReport
    scores: dict


def search_p_harsh(
    archive: ForumArchive,
    grid: Sequence[float] = DEFAULT_P_HARSH_GRID,
    alpha: float = 0.05,
    rng: SeededRng | int = 0,
    **kwargs,
) -> GridSearchResult:
    """Grid value of ``p_harsh`` that maximizes the number of passing users.

    Ties go to the smallest value.  Each grid value draws its synthetic paths
    from its own derived stream.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("p_harsh grid is empty")
    best = None
    scores = {}
    for value in sorted(grid):
        report = evaluate_model_fit(
            archive, "sticking", alpha=alpha, p_harsh=value, rng=rng, **kwargs
        )
        scores[value] = report.users_passed
        if best is None or report.users_passed > best.users_passed:
            best = report
    return GridSearchResult(best.p_harsh, best, scores)
