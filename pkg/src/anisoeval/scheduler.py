"""Two-stage stratified sequential sampler.

Stage 1 draws a pilot from every stratum to estimate its standard deviation.
Stage 2 runs in rounds: the round's sample count is split across the strata
that have not stopped using Neyman allocation (weight x stddev / sqrt(cost)),
and a stratum stops once its Hoeffding-Serfling half-width drops below its
target. Sampling is without replacement along a per-stratum permutation that
is fixed at the start of the run, so a run is a pure function of
``(dataset, responder, scorer, config)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, NamedTuple, Sequence

import numpy as np

from .core import Sample, Stratum, StratumAccumulator, dumps_line, group_by_dimension, stable_hash64
from .errors import (
    BudgetTooSmallForPilot,
    DimensionMismatch,
    EmptyStratum,
    InvalidRange,
    NonPositiveCost,
    ResponderFailure,
    ValidationError,
)

MODES = ("dynamic", "full_set")
STOP_REASONS = ("converged", "budget_exhausted", "population_exhausted")
MAX_ATTEMPTS = 3


@dataclass(frozen=True)
class SchedulerConfig:
    pilot_fraction: float = 0.05
    alpha: float = 0.05
    delta: float = 0.01
    per_stratum_delta: Mapping[str, float] | None = None
    budget: float | None = None
    batch_fraction: float = 0.01
    rng_seed: int = 0
    mode: str = "dynamic"
    max_attempts: int = MAX_ATTEMPTS

    def __post_init__(self):
        if not 0 < self.pilot_fraction <= 1:
            raise ValidationError("pilot_fraction must be in (0, 1]")
        if not 0 < self.alpha < 1:
            raise ValidationError("alpha must be in (0, 1)")
        if not self.delta > 0:
            raise ValidationError("delta must be > 0")
        if not 0 < self.batch_fraction <= 1:
            raise ValidationError("batch_fraction must be in (0, 1]")
        if self.budget is not None and self.budget < 0:
            raise ValidationError("budget must be >= 0")
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}")
        if self.max_attempts < 1:
            raise ValidationError("max_attempts must be >= 1")
        for k, v in (self.per_stratum_delta or {}).items():
            if not v > 0:
                raise ValidationError(f"per-stratum delta for {k!r} must be > 0")

    def delta_for(self, stratum_id: str) -> float:
        return (self.per_stratum_delta or {}).get(stratum_id, self.delta)

    def to_dict(self) -> dict:
        d = {
            "pilot_fraction": self.pilot_fraction,
            "alpha": self.alpha,
            "delta": self.delta,
            "batch_fraction": self.batch_fraction,
            "rng_seed": self.rng_seed,
            "mode": self.mode,
            "max_attempts": self.max_attempts,
        }
        if self.per_stratum_delta:
            d["per_stratum_delta"] = dict(self.per_stratum_delta)
        if self.budget is not None:
            d["budget"] = self.budget
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "SchedulerConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ValidationError(f"unknown scheduler config fields: {sorted(extra)}")
        return cls(**d)


# --- allocation and stopping --------------------------------------------------

def _largest_remainder(quotas: np.ndarray, total: int) -> np.ndarray:
    base = np.floor(quotas).astype(np.int64)
    short = int(total - base.sum())
    if short > 0:
        frac = quotas - base
        # stable sort: ties go to the lower index
        order = np.argsort(-frac, kind="stable")
        base[order[:short]] += 1
    return base


def neyman_allocation(weights, stddevs, costs, total: int, capacity=None) -> np.ndarray:
    """Integer allocation of ``total`` draws proportional to W_h S_h / sqrt(c_h).

    ``capacity`` caps each stratum (remaining population); surplus from capped
    strata is re-spread over the others. When every uncapped stratum has zero
    standard deviation the split falls back to proportional-to-weight.
    """
    w = np.asarray(weights, dtype=np.float64)
    s = np.asarray(stddevs, dtype=np.float64)
    c = np.asarray(costs, dtype=np.float64)
    if not (w.shape == s.shape == c.shape) or w.ndim != 1:
        raise DimensionMismatch(f"weights/stddevs/costs shapes differ: {w.shape}, {s.shape}, {c.shape}")
    if np.any(c <= 0):
        raise NonPositiveCost("all costs must be > 0")
    if np.any(s < 0) or np.any(w < 0):
        raise ValidationError("weights and stddevs must be >= 0")
    total = int(total)
    if total < 0:
        raise ValidationError("total must be >= 0")
    H = w.shape[0]
    cap = np.full(H, np.iinfo(np.int64).max, dtype=np.int64) if capacity is None else np.asarray(capacity, dtype=np.int64)
    if cap.shape != w.shape:
        raise DimensionMismatch("capacity shape differs from weights")
    if H == 0:
        return np.zeros(0, dtype=np.int64)
    if capacity is not None and total >= int(cap.sum()):
        return cap.copy()

    score = w * s / np.sqrt(c)
    alloc = np.zeros(H, dtype=np.int64)
    free = cap > 0
    remaining = total
    while True:
        idx = np.flatnonzero(free)
        share = score[idx]
        if share.sum() <= 0:
            share = w[idx]
        if share.sum() <= 0:
            share = np.ones(idx.shape[0])
        quotas = remaining * share / share.sum()
        over = quotas >= cap[idx]
        if not over.any():
            alloc[idx] = _largest_remainder(quotas, remaining)
            return alloc
        hit = idx[over]
        alloc[hit] = cap[hit]
        remaining -= int(cap[hit].sum())
        free[hit] = False


def hs_halfwidth(n: int, N: int, alpha: float) -> float:
    """Half-width t with 2 exp(-2 n t^2 / (1 - (n-1)/N)) = alpha."""
    if not (1 <= n <= N):
        raise InvalidRange(f"need 1 <= n <= N, got n={n}, N={N}")
    if not 0 < alpha < 1:
        raise InvalidRange(f"alpha must be in (0, 1), got {alpha}")
    # (N - n + 1)/N is the finite-population factor with an exact numerator
    return math.sqrt((N - n + 1) * math.log(2.0 / alpha) / (2.0 * n * N))


def should_stop(acc: StratumAccumulator, N_h: int, config: SchedulerConfig, delta_h: float, n_strata: int = 1) -> bool:
    n = acc.n
    if n == N_h:
        return True
    if n < 2:
        return False
    return hs_halfwidth(n, N_h, config.alpha / n_strata) < delta_h


def pilot_allocation(strata: Sequence[Stratum], config: SchedulerConfig) -> np.ndarray:
    if not strata:
        raise ValidationError("no strata")
    out = []
    for st in strata:
        n0 = max(2, math.ceil(round(config.pilot_fraction * st.population_size, 9)))
        out.append(min(n0, st.population_size))
    return np.array(out, dtype=np.int64)


def stratified_estimate(per_stratum: Mapping[str, StratumAccumulator], strata: Sequence[Stratum], alpha: float) -> tuple[float, float]:
    """Weighted mean and the union-bound half-width sum_h W_h t_h."""
    H = len(strata)
    terms, widths = [], []
    for st in strata:
        acc = per_stratum.get(st.id)
        if acc is None or acc.n == 0:
            raise EmptyStratum(st.id)
        terms.append(st.weight * acc.mean)
        widths.append(st.weight * hs_halfwidth(acc.n, st.population_size, alpha / H))
    mu = min(1.0, max(0.0, math.fsum(terms)))
    return mu, math.fsum(widths)


# --- run ----------------------------------------------------------------------

class RunRecord(NamedTuple):
    sample_id: str
    stratum: str
    perm_index: int
    raw_output: str
    score: float
    scorer_tier: str
    latency_ms: float
    cost: float
    attempts: int = 1
    failed: bool = False

    def to_dict(self) -> dict:
        return {"type": "record", **self._asdict()}


@dataclass(frozen=True)
class EvaluationRun:
    model_id: str
    seed: int
    mode: str
    alpha: float
    strata: tuple
    per_stratum: Mapping[str, StratumAccumulator]
    stopped_reason: Mapping[str, str]
    records: tuple
    total_cost: float = field(init=False)
    full_cost: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "strata", tuple(self.strata))
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "total_cost", math.fsum(r.cost for r in self.records))

    def estimate(self) -> tuple[float, float]:
        return stratified_estimate(self.per_stratum, self.strata, self.alpha)

    def stratum_means(self) -> dict[str, float]:
        return {st.id: self.per_stratum[st.id].mean for st in self.strata}

    def halfwidths(self) -> dict[str, float]:
        H = len(self.strata)
        return {st.id: hs_halfwidth(self.per_stratum[st.id].n, st.population_size, self.alpha / H)
                for st in self.strata}

    @property
    def cost_ratio(self) -> float:
        return self.total_cost / self.full_cost if self.full_cost > 0 else float("nan")

    def summary(self) -> dict:
        mu, hw = self.estimate()
        widths = self.halfwidths()
        per = {}
        for st in self.strata:
            acc = self.per_stratum[st.id]
            per[st.id] = {"n": acc.n, "sum": acc.sum, "sum_sq": acc.sum_sq, "mean": acc.mean,
                          "halfwidth": widths[st.id], "stopped_reason": self.stopped_reason[st.id]}
        return {
            "type": "summary",
            "model_id": self.model_id,
            "seed": self.seed,
            "mode": self.mode,
            "alpha": self.alpha,
            "strata": [st.to_dict() for st in self.strata],
            "per_stratum": per,
            "mu_hat": mu,
            "halfwidth": hw,
            "total_cost": self.total_cost,
            "full_cost": self.full_cost,
            "cost_ratio": self.cost_ratio,
        }

    def to_jsonl(self) -> str:
        lines = [dumps_line(r.to_dict()) for r in self.records]
        lines.append(dumps_line(self.summary()))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "EvaluationRun":
        records, summary = [], None
        for line in text.splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            kind = obj.pop("type")
            if kind == "record":
                records.append(RunRecord(**obj))
            elif kind == "summary":
                summary = obj
        if summary is None:
            raise ValidationError("run file has no summary line")
        strata = [Stratum.from_dict(d) for d in summary["strata"]]
        scores: dict[str, dict] = {st.id: {} for st in strata}
        for r in records:
            scores[r.stratum][r.sample_id] = r.score
        return cls(
            model_id=summary["model_id"],
            seed=summary["seed"],
            mode=summary["mode"],
            alpha=summary["alpha"],
            strata=strata,
            per_stratum={k: StratumAccumulator(v) for k, v in scores.items()},
            stopped_reason={k: v["stopped_reason"] for k, v in summary["per_stratum"].items()},
            records=records,
            full_cost=summary["full_cost"],
        )

    def run_filename(self) -> str:
        return f"{self.model_id}.{self.seed}.run.jsonl"


def stratum_permutation(seed: int, stratum_id: str, size: int) -> np.ndarray:
    rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, stable_hash64(stratum_id)])
    return rng.permutation(size)


def _respond_batch(responder, samples: Sequence[Sample]) -> list:
    """Call a responder on a batch; failures are returned in place, not raised."""
    batch = getattr(responder, "respond_batch", None)
    if batch is not None:
        return list(batch(samples))
    single = getattr(responder, "respond", responder)
    out = []
    for s in samples:
        try:
            out.append(single(s))
        except ResponderFailure as exc:
            out.append(exc)
    return out


def _evaluate(samples, perm_idx, stratum_id, responder, scorer, max_attempts) -> list[RunRecord]:
    results = _respond_batch(responder, samples)
    attempts = [1] * len(samples)
    for _ in range(max_attempts - 1):
        retry = [i for i, r in enumerate(results) if isinstance(r, ResponderFailure)]
        if not retry:
            break
        again = _respond_batch(responder, [samples[i] for i in retry])
        for i, r in zip(retry, again):
            results[i] = r
            attempts[i] += 1
    records = []
    for s, p, r, a in zip(samples, perm_idx, results, attempts):
        if isinstance(r, ResponderFailure):
            records.append(RunRecord(s.id, stratum_id, int(p), "", 0.0, "failed", 0.0, s.unit_cost, a, True))
            continue
        rec = scorer(s, r)
        records.append(RunRecord(s.id, stratum_id, int(p), r.output, float(rec.score), rec.tier,
                                 float(r.latency_ms), s.unit_cost, a, False))
    return records


def run_evaluation(
    model_id: str,
    dataset: Sequence[Sample],
    strata: Sequence[Stratum],
    config: SchedulerConfig,
    responder: Any,
    scorer: Callable,
) -> EvaluationRun:
    """Evaluate one model, returning every drawn record and per-stratum statistics.

    ``responder`` is either a callable ``sample -> Response`` (raising
    :class:`ResponderFailure`) or an object with ``respond``/``respond_batch``.
    ``scorer(sample, response)`` returns an object with ``score`` and ``tier``.
    A sample whose response fails ``config.max_attempts`` times is recorded
    with score 0 and ``failed=True``.
    """
    if responder is None or scorer is None:
        raise ValidationError("responder and scorer are required")
    groups = group_by_dimension(dataset)
    H = len(strata)
    pops, perms = [], []
    for st in strata:
        members = groups.get(st.id, [])
        if len(members) != st.population_size:
            raise DimensionMismatch(f"stratum {st.id!r}: {len(members)} samples, expected {st.population_size}")
        pops.append(members)
        perms.append(stratum_permutation(config.rng_seed, st.id, st.population_size))
    full_cost = math.fsum(s.unit_cost for members in pops for s in members)

    drawn = [0] * H
    accs = [StratumAccumulator() for _ in range(H)]
    records: list[list[RunRecord]] = [[] for _ in range(H)]
    reasons: dict[str, str] = {}

    def draw(h, k):
        idx = perms[h][drawn[h]:drawn[h] + k]
        batch = [pops[h][i] for i in idx]
        recs = _evaluate(batch, range(drawn[h], drawn[h] + k), strata[h].id, responder, scorer, config.max_attempts)
        drawn[h] += k
        records[h].extend(recs)
        accs[h] = accs[h].extend((r.sample_id for r in recs), (r.score for r in recs))

    def next_costs(h, k):
        return [pops[h][i].unit_cost for i in perms[h][drawn[h]:drawn[h] + k]]

    if config.mode == "full_set":
        for h, st in enumerate(strata):
            draw(h, st.population_size)
            reasons[st.id] = "population_exhausted"
    else:
        pilot = pilot_allocation(strata, config)
        spent = math.fsum(c for h in range(H) for c in next_costs(h, int(pilot[h])))
        if config.budget is not None and spent > config.budget:
            raise BudgetTooSmallForPilot(config.budget, spent)
        for h in range(H):
            draw(h, int(pilot[h]))
        weights = np.array([st.weight for st in strata])
        costs = np.array([st.unit_cost for st in strata])
        batch_sizes = np.array([max(1, math.floor(config.batch_fraction * st.population_size)) for st in strata])
        active = np.ones(H, dtype=bool)
        while True:
            for h in np.flatnonzero(active):
                st = strata[h]
                if should_stop(accs[h], st.population_size, config, config.delta_for(st.id), H):
                    active[h] = False
                    n = accs[h].n
                    converged = n >= 2 and hs_halfwidth(n, st.population_size, config.alpha / H) < config.delta_for(st.id)
                    reasons[st.id] = "converged" if converged else "population_exhausted"
            idx = np.flatnonzero(active)
            if idx.size == 0:
                break
            total = int(batch_sizes[idx].sum())
            if config.budget is not None:
                affordable = math.floor((config.budget - spent) / costs[idx].mean())
                total = max(1, min(total, affordable))
            stds = np.array([accs[h].std if accs[h].n >= 2 else 0.0 for h in idx])
            capacity = np.array([strata[h].population_size - drawn[h] for h in idx])
            alloc = neyman_allocation(weights[idx], stds, costs[idx], total, capacity)
            exhausted = False
            for h, k in zip(idx, alloc):
                k = int(k)
                if k == 0:
                    continue
                if config.budget is not None:
                    fit = 0
                    for c in next_costs(h, k):
                        if spent + c > config.budget:
                            exhausted = True
                            break
                        spent += c
                        fit += 1
                    k = fit
                if k:
                    draw(h, k)
                if exhausted:
                    break
            if exhausted:
                for h in np.flatnonzero(active):
                    reasons[strata[h].id] = "budget_exhausted"
                break

    all_records = [r for h in range(H) for r in sorted(records[h], key=lambda r: r.perm_index)]
    return EvaluationRun(
        model_id=model_id,
        seed=config.rng_seed,
        mode=config.mode,
        alpha=config.alpha,
        strata=strata,
        per_stratum={st.id: accs[h] for h, st in enumerate(strata)},
        stopped_reason={st.id: reasons[st.id] for st in strata},
        records=all_records,
        full_cost=full_cost,
    )
