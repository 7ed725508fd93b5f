"""Anisotropy and ranking-stability diagnostics over a models x dimensions matrix."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import kolmogorov
from scipy.stats import rankdata

from . import kernels
from .core import ScoreMatrix, WeightScheme, validate_scheme
from .errors import (
    DegenerateMatrix,
    EmptyInput,
    EmptyVector,
    LengthMismatch,
    MissingRank,
    OutOfRange,
    SchemeDimensionMismatch,
    ShapeMismatch,
    TooFewModels,
    ZeroVariance,
)

log = logging.getLogger(__name__)

BETA_FLOOR = 0.05
CI_EPSILON = 0.1
GAP_THRESHOLD = 0.15


# --- difficulty-adjusted normalisation ----------------------------------------

def anchor_difficulty(raw, model_ids: Sequence[str] | None = None, top_n: int = 10) -> np.ndarray:
    """Per-dimension mean raw score of the ``top_n`` models by overall mean.

    Anchors are picked once, globally; ties go to the smaller model id.
    Results are floored at 0.05.
    """
    raw = np.asarray(raw, dtype=np.float64)
    M = raw.shape[0]
    if M < top_n:
        raise TooFewModels(f"need at least {top_n} models, got {M}")
    ids = list(model_ids) if model_ids is not None else [f"{i:09d}" for i in range(M)]
    means = raw.mean(axis=1)
    order = sorted(range(M), key=lambda i: (-means[i], ids[i]))
    top = raw[order[:top_n]]
    beta = np.array([math.fsum(col) / top_n for col in top.T], dtype=np.float64)
    return np.maximum(beta, BETA_FLOOR)


def normalize_scores(raw, beta) -> np.ndarray:
    raw = np.asarray(raw, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if raw.ndim != 2 or beta.shape != (raw.shape[1],):
        raise ShapeMismatch(f"raw {raw.shape} vs difficulty {beta.shape}")
    return np.minimum(raw / beta, 1.0)


def build_score_matrix(model_ids, dimension_ids, raw, top_n: int = 10) -> ScoreMatrix:
    """Anchor-normalised matrix; uses every model as anchor when fewer than ``top_n``."""
    raw = np.asarray(raw, dtype=np.float64)
    beta = anchor_difficulty(raw, model_ids, min(top_n, raw.shape[0]))
    return ScoreMatrix(model_ids, dimension_ids, raw, normalize_scores(raw, beta), beta)


# --- correlation ----------------------------------------------------------------

def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatch(f"shapes {x.shape} and {y.shape}")
    if x.shape[0] < 2:
        raise LengthMismatch("need at least two observations")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise ZeroVariance("correlation undefined for a constant vector")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0 or syy == 0:
        raise ZeroVariance("correlation undefined for a constant vector")
    return max(-1.0, min(1.0, float(np.dot(dx, dy)) / math.sqrt(sxx * syy)))


def spearman(x, y) -> float:
    """Pearson correlation of average ranks."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise LengthMismatch(f"shapes {x.shape} and {y.shape}")
    return pearson(rankdata(x), rankdata(y))


def correlation_matrix(scores) -> np.ndarray:
    """Pairwise Pearson correlation of dimension columns; NaN where undefined."""
    s = np.asarray(scores, dtype=np.float64)
    K = s.shape[1]
    out = np.full((K, K), np.nan)
    for i in range(K):
        for j in range(i, K):
            try:
                out[i, j] = out[j, i] = pearson(s[:, i], s[:, j])
            except ZeroVariance:
                pass
    return out


def anisotropy_index(scores) -> float:
    """One minus the mean pairwise Pearson correlation between dimension columns.

    Constant columns have no defined correlation and are left out.
    """
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] < 2 or s.shape[1] < 2:
        raise DegenerateMatrix(f"need >= 2 models and >= 2 dimensions, got {s.shape}")
    varying = [k for k in range(s.shape[1]) if np.ptp(s[:, k]) > 0]
    if len(varying) < s.shape[1]:
        log.warning("anisotropy: skipping %d constant dimension(s)", s.shape[1] - len(varying))
    if len(varying) < 2:
        raise DegenerateMatrix("fewer than two non-constant dimensions")
    rhos = [pearson(s[:, varying[a]], s[:, varying[b]])
            for a in range(len(varying)) for b in range(a + 1, len(varying))]
    return 1.0 - math.fsum(rhos) / len(rhos)


# --- per-model dispersion -------------------------------------------------------------

def capability_inconsistency(s_m, epsilon: float = CI_EPSILON) -> float:
    s = np.asarray(s_m, dtype=np.float64)
    if s.size == 0:
        raise EmptyVector("empty score vector")
    if np.ptp(s) == 0:
        return 0.0
    mean = math.fsum(s) / s.size
    sd = math.sqrt(math.fsum((s - mean) ** 2) / s.size)
    return sd / (mean + epsilon)


def dgs(s_m) -> float:
    s = np.asarray(s_m, dtype=np.float64)
    if s.size == 0:
        raise EmptyVector("empty score vector")
    return float(s.max() - s.min())


# --- rankings ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RankedModel:
    rank: int
    model_id: str
    overall: float


def scheme_vector(scheme: WeightScheme, dimension_ids: Sequence[str]) -> np.ndarray:
    unknown = set(scheme.weights) - set(dimension_ids)
    if unknown:
        raise SchemeDimensionMismatch(f"scheme {scheme.name!r} weights unknown dimensions {sorted(unknown)}")
    validate_scheme(scheme, dimension_ids)
    return np.array([scheme.weights.get(d, 0.0) for d in dimension_ids], dtype=np.float64)


def rank_under_scheme(s, model_ids: Sequence[str], dimension_ids: Sequence[str], scheme: WeightScheme) -> list[RankedModel]:
    """Models ordered by weighted overall score; rank 1 is best, ties by model id."""
    s = np.asarray(s, dtype=np.float64)
    if s.shape != (len(model_ids), len(dimension_ids)):
        raise ShapeMismatch(f"matrix {s.shape} vs {len(model_ids)} models x {len(dimension_ids)} dimensions")
    w = scheme_vector(scheme, dimension_ids)
    overall = [math.fsum(row * w) for row in s]
    order = sorted(range(len(model_ids)), key=lambda i: (-overall[i], model_ids[i]))
    return [RankedModel(r + 1, model_ids[i], overall[i]) for r, i in enumerate(order)]


@dataclass(frozen=True)
class RankTrajectory:
    model_id: str
    ranks: Mapping[str, int]
    rsa: int = field(init=False)

    def __post_init__(self):
        vals = list(self.ranks.values())
        if any(r < 1 for r in vals):
            raise OutOfRange("ranks are 1-based")
        object.__setattr__(self, "rsa", max(vals) - min(vals) if vals else 0)


@dataclass(frozen=True)
class StabilityReport:
    mean_rsa: float
    share_rsa_ge_10: float
    share_rsa_ge_20: float
    bootstrap_ci: tuple
    ks: tuple | None = None

    def to_dict(self):
        return {"mean_rsa": self.mean_rsa, "share_rsa_ge_10": self.share_rsa_ge_10,
                "share_rsa_ge_20": self.share_rsa_ge_20, "bootstrap_ci": list(self.bootstrap_ci),
                "ks": list(self.ks) if self.ks is not None else None}


def rsa(rankings: Mapping[str, Sequence[RankedModel]], iters: int = 1000, seed: int = 0):
    """Per-model rank trajectories and a stability summary.

    ``rankings`` maps scheme name to that scheme's ranking. The summary's
    bootstrap interval is the 95% percentile interval of mean RSA.
    """
    if not rankings:
        raise EmptyInput("no rankings")
    by_scheme = {name: {r.model_id: r.rank for r in ranked} for name, ranked in rankings.items()}
    models = sorted(set().union(*by_scheme.values()))
    trajectories = []
    for m in models:
        ranks = {}
        for name, table in by_scheme.items():
            if m not in table:
                raise MissingRank(m, name)
            ranks[name] = table[m]
        trajectories.append(RankTrajectory(m, ranks))
    values = np.array([t.rsa for t in trajectories], dtype=np.float64)
    if len(values) >= 2:
        boot = paired_bootstrap(values, values, iters, seed)
        ci = boot.mean_a
    else:
        ci = (float(values.mean()), float(values.mean()))
    report = StabilityReport(
        mean_rsa=float(values.mean()),
        share_rsa_ge_10=float(np.mean(values >= 10)),
        share_rsa_ge_20=float(np.mean(values >= 20)),
        bootstrap_ci=ci,
    )
    return trajectories, report


# --- significance ------------------------------------------------------------------------

@dataclass(frozen=True)
class BootstrapResult:
    mean_a: tuple
    mean_b: tuple
    diff: tuple
    iters: int

    def to_dict(self):
        return {"mean_a": list(self.mean_a), "mean_b": list(self.mean_b),
                "diff": list(self.diff), "iters": self.iters}


def _interval(x) -> tuple:
    lo, hi = np.percentile(x, [2.5, 97.5])
    return float(lo), float(hi)


def paired_bootstrap(rsa_a, rsa_b, iters: int = 1000, seed: int = 0) -> BootstrapResult:
    """95% percentile intervals of mean(a), mean(b) and mean(a - b).

    Model indices are resampled jointly so pairs stay together. Iteration
    ``i`` draws from a stream keyed by ``seed + i``.
    """
    a = np.asarray(rsa_a, dtype=np.float64)
    b = np.asarray(rsa_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatch(f"paired vectors differ: {a.shape} vs {b.shape}")
    if a.shape[0] < 2:
        raise LengthMismatch("need at least two pairs")
    ma, mb, md = kernels.bootstrap_means(a, b, int(iters), np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
    return BootstrapResult(_interval(ma), _interval(mb), _interval(md), int(iters))


def ks_statistic(xs, ys) -> tuple[float, float]:
    """Two-sample KS distance and its asymptotic p-value."""
    x = np.sort(np.asarray(xs, dtype=np.float64))
    y = np.sort(np.asarray(ys, dtype=np.float64))
    if x.size == 0 or y.size == 0:
        raise EmptyInput("KS needs two nonempty samples")
    d = float(kernels.ks_d(x, y))
    ne = x.size * y.size / (x.size + y.size)
    return d, float(kolmogorov(math.sqrt(ne) * d))


@dataclass(frozen=True)
class GapResult:
    gap: float
    flagged: bool
    reported: float


def generalization_gap(public_score: float, private_score: float) -> GapResult:
    """Public/private gap; flagged gaps report the lower of the two scores."""
    for v in (public_score, private_score):
        if not 0.0 <= v <= 1.0:
            raise OutOfRange(f"score {v} outside [0, 1]")
    gap = abs(public_score - private_score)
    flagged = gap > GAP_THRESHOLD
    reported = min(public_score, private_score) if flagged else public_score
    return GapResult(gap, flagged, reported)


# --- report --------------------------------------------------------------------------------

def rankings_for(matrix: ScoreMatrix, schemes: Sequence[WeightScheme]) -> dict[str, list[RankedModel]]:
    return {sc.name: rank_under_scheme(matrix.normalized, matrix.model_ids, matrix.dimension_ids, sc)
            for sc in schemes}


def analysis_report(matrix: ScoreMatrix, schemes: Sequence[WeightScheme], seed: int = 0, iters: int = 1000) -> dict:
    """JSON-ready report: anisotropy, per-model CI/DGS, RSA, stability, correlations."""
    try:
        aniso = anisotropy_index(matrix.normalized)
    except DegenerateMatrix as exc:
        log.warning("anisotropy index undefined: %s", exc)
        aniso = None
    rankings = rankings_for(matrix, schemes)
    trajectories, stability = rsa(rankings, iters, seed)
    corr = correlation_matrix(matrix.normalized) if matrix.normalized.shape[0] >= 2 else None
    return {
        "anisotropy": {"index": aniso, "dimensions": list(matrix.dimension_ids)},
        "ci_per_model": {
            m: {"ci": capability_inconsistency(row), "dgs": dgs(row)}
            for m, row in zip(matrix.model_ids, matrix.normalized)
        },
        "rsa": {t.model_id: {"rsa": t.rsa, "ranks": dict(t.ranks)} for t in trajectories},
        "stability": stability.to_dict(),
        "correlations": None if corr is None else [[None if np.isnan(v) else float(v) for v in row] for row in corr],
        "difficulty": dict(zip(matrix.dimension_ids, matrix.difficulty.tolist())),
    }
