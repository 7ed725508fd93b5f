"""Synthetic populations and cohorts, and the dynamic-vs-full-set control experiment."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .analytics import build_score_matrix, ks_statistic, paired_bootstrap, rankings_for, rsa, spearman
from .core import CapabilityCell, DEFAULT_DIMENSIONS, GoldAnswer, Sample, WeightScheme, build_strata, default_schemes
from .errors import ZeroVariance
from .oracle import SyntheticProfile, SyntheticResponder, hint_scorer
from .scheduler import EvaluationRun, SchedulerConfig, run_evaluation

log = logging.getLogger(__name__)

_OPTIONS = "ABCD"


def synthetic_population(dimensions: Sequence[str] = DEFAULT_DIMENSIONS, per_stratum: int | Mapping[str, int] = 2000,
                         costs: Mapping[str, float] | None = None, seed: int = 0) -> list[Sample]:
    """Multiple-choice samples, ``per_stratum`` per dimension, ids ``<dim>-<index>``."""
    rng = np.random.default_rng(seed)
    samples = []
    for dim in dimensions:
        n = per_stratum[dim] if isinstance(per_stratum, Mapping) else per_stratum
        cost = (costs or {}).get(dim, 1.0)
        answers = rng.integers(0, len(_OPTIONS), size=n)
        for i in range(n):
            samples.append(Sample(
                id=f"{dim}-{i:06d}",
                cell=CapabilityCell("synthetic", dim),
                task_type="multiple_choice",
                prompt=f"[{dim}] synthetic item {i}",
                constraints="Answer with a single option letter.",
                gold=GoldAnswer.string(_OPTIONS[answers[i]]),
                unit_cost=cost,
            ))
    return samples


def _model_seed(seed: int, i: int) -> int:
    return int(kernels.stream_key(seed, i))


def anisotropic_cohort(size: int, dimensions: Sequence[str] = DEFAULT_DIMENSIONS, seed: int = 0,
                       low: float = 0.3, high: float = 0.9, prefix: str = "aniso") -> list[SyntheticProfile]:
    """Independent per-dimension abilities drawn uniformly from [low, high]."""
    rng = np.random.default_rng([seed, 1])
    abil = rng.uniform(low, high, size=(size, len(dimensions)))
    return [SyntheticProfile(f"{prefix}-{i:03d}", dict(zip(dimensions, map(float, abil[i]))), seed=_model_seed(seed, i))
            for i in range(size)]


def isotropic_cohort(size: int, dimensions: Sequence[str] = DEFAULT_DIMENSIONS, seed: int = 0,
                     low: float = 0.3, high: float = 0.9, prefix: str = "iso") -> list[SyntheticProfile]:
    """One latent ability per model; every dimension is an increasing function of it."""
    rng = np.random.default_rng([seed, 2])
    theta = rng.uniform(0.0, 1.0, size=size)
    shape = rng.uniform(0.7, 1.4, size=len(dimensions))
    abil = low + (high - low) * theta[:, None] ** shape[None, :]
    return [SyntheticProfile(f"{prefix}-{i:03d}", dict(zip(dimensions, map(float, abil[i]))), seed=_model_seed(seed, i))
            for i in range(size)]


def evaluate_profile(profile: SyntheticProfile, dataset, strata, config: SchedulerConfig) -> EvaluationRun:
    return run_evaluation(profile.model_id, dataset, strata, config, SyntheticResponder(profile), hint_scorer)


@dataclass(frozen=True)
class ControlResult:
    report: dict
    dynamic: tuple
    full_set: tuple


def _rsa_values(runs, dimension_ids, schemes, seed, iters):
    raw = np.array([[r.per_stratum[d].mean for d in dimension_ids] for r in runs])
    matrix = build_score_matrix([r.model_id for r in runs], dimension_ids, raw)
    trajectories, stability = rsa(rankings_for(matrix, schemes), iters, seed)
    by_model = {t.model_id: t.rsa for t in trajectories}
    return np.array([by_model[r.model_id] for r in runs], dtype=np.float64), stability


def run_control(profiles: Sequence[SyntheticProfile], dataset: Sequence[Sample], config: SchedulerConfig,
                schemes: Sequence[WeightScheme] | None = None, dimensions: Sequence[str] | None = None,
                workers: int = 1, iters: int = 1000) -> ControlResult:
    """Evaluate every profile in dynamic and full-set mode and compare the two.

    Models run concurrently on ``workers`` threads; results are collected in
    profile order, so the report does not depend on ``workers``.
    """
    schemes = list(schemes) if schemes is not None else default_schemes()
    strata = build_strata(dataset, dimensions)
    dims = [st.id for st in strata]
    dyn_cfg = replace(config, mode="dynamic")
    full_cfg = replace(config, mode="full_set")

    def both(p):
        return evaluate_profile(p, dataset, strata, dyn_cfg), evaluate_profile(p, dataset, strata, full_cfg)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            pairs = list(pool.map(both, profiles))
    else:
        pairs = [both(p) for p in profiles]
    dynamic = tuple(d for d, _ in pairs)
    full = tuple(f for _, f in pairs)

    seed = config.rng_seed
    rsa_dyn, stab_dyn = _rsa_values(dynamic, dims, schemes, seed, iters)
    rsa_full, stab_full = _rsa_values(full, dims, schemes, seed, iters)
    mu_dyn = np.array([r.estimate()[0] for r in dynamic])
    mu_full = np.array([r.estimate()[0] for r in full])
    warnings = []
    try:
        rho = spearman(mu_dyn, mu_full)
    except ZeroVariance:
        rho = None
        warnings.append("spearman undefined: overall scores have zero variance")
        log.warning(warnings[-1])
    boot = paired_bootstrap(rsa_dyn, rsa_full, iters, seed) if len(profiles) >= 2 else None
    D, p = ks_statistic(rsa_dyn, rsa_full)
    ratios = np.array([r.total_cost / f.total_cost for r, f in zip(dynamic, full)])
    report = {
        "cohort_size": len(profiles),
        "seed": seed,
        "dimensions": dims,
        "schemes": [s.to_dict() for s in schemes],
        "scheduler": dyn_cfg.to_dict(),
        "dynamic": {"mean_rsa": float(rsa_dyn.mean()), "stability": stab_dyn.to_dict(),
                    "mean_cost_ratio": float(ratios.mean())},
        "full_set": {"mean_rsa": float(rsa_full.mean()), "stability": stab_full.to_dict()},
        "delta_rsa": float(rsa_full.mean() - rsa_dyn.mean()),
        "spearman_rho": rho,
        "degenerate": rho is None,
        "warnings": warnings,
        "paired_bootstrap": boot.to_dict() if boot is not None else None,
        "ks": {"D": D, "p": p},
        "per_model": [
            {"model_id": d.model_id, "mu_dynamic": float(md), "mu_full_set": float(mf),
             "cost_ratio": float(cr), "rsa_dynamic": int(a), "rsa_full_set": int(b)}
            for d, md, mf, cr, a, b in zip(dynamic, mu_dyn, mu_full, ratios, rsa_dyn, rsa_full)
        ],
    }
    return ControlResult(report, dynamic, full)
