import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from anisoeval.core import Stratum, StratumAccumulator, build_strata
from anisoeval.errors import (
    BudgetTooSmallForPilot, DimensionMismatch, EmptyStratum, InvalidRange, NonPositiveCost, ResponderFailure,
    ValidationError,
)
from anisoeval.oracle import Response, SyntheticProfile, SyntheticResponder, full_set_oracle, hint_scorer
from anisoeval.scheduler import (
    EvaluationRun, SchedulerConfig, hs_halfwidth, neyman_allocation, pilot_allocation, run_evaluation,
    should_stop, stratified_estimate,
)

from conftest import population


def variance_of(alloc, W, S):
    return sum(w * w * s * s / n for w, s, n in zip(W, S, alloc) if w * s > 0)


def brute_force_best(W, S, total):
    """Exhaustive minimum of sum W^2 S^2 / n over integer n >= 1 summing to total."""
    H = len(W)
    best = math.inf
    for head in itertools.product(range(1, total), repeat=H - 1):
        last = total - sum(head)
        if last < 1:
            continue
        best = min(best, variance_of((*head, last), W, S))
    return best


# --- Neyman ---

def test_neyman_proportional_to_stddev():
    assert neyman_allocation([0.5, 0.5], [0.2, 0.4], [1, 1], 30).tolist() == [10, 20]


def test_neyman_inverse_sqrt_cost():
    assert neyman_allocation([0.5, 0.5], [0.3, 0.3], [1, 4], 30).tolist() == [20, 10]


def test_neyman_three_strata_matches_brute_force():
    W, S = (0.6, 0.3, 0.1), (0.1, 0.5, 0.25)
    alloc = neyman_allocation(W, S, [1, 1, 1], 100)
    # quotas 25.53, 63.83, 10.64 -> floors 25, 63, 10, then two remainders go to 63.83 and 10.64
    assert alloc.tolist() == [25, 64, 11]
    assert variance_of(alloc, W, S) == pytest.approx(brute_force_best(W, S, 100), abs=1e-15)
    assert variance_of(alloc, W, S) == pytest.approx(0.0005523806818181819, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0.01, 1), st.floats(0, 1), st.floats(0.1, 10)), min_size=1, max_size=6),
       st.integers(0, 500))
def test_neyman_sums_to_total(rows, total):
    W, S, c = zip(*rows)
    alloc = neyman_allocation(W, S, c, total)
    assert alloc.sum() == total and alloc.min() >= 0


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0.01, 1), st.floats(0, 1), st.integers(0, 50)), min_size=1, max_size=6),
       st.integers(0, 300))
def test_neyman_respects_capacity(rows, total):
    W, S, cap = zip(*rows)
    alloc = neyman_allocation(W, S, [1.0] * len(W), total, cap)
    assert np.all(alloc <= np.array(cap))
    assert alloc.sum() == min(total, sum(cap))


def test_neyman_zero_variance_falls_back_to_weights():
    assert neyman_allocation([0.75, 0.25], [0, 0], [1, 1], 8).tolist() == [6, 2]


def test_neyman_monotone_in_stddev():
    base = neyman_allocation([0.5, 0.5], [0.2, 0.2], [1, 1], 100)
    more = neyman_allocation([0.5, 0.5], [0.3, 0.2], [1, 1], 100)
    assert more[0] > base[0]


def test_neyman_errors():
    with pytest.raises(DimensionMismatch):
        neyman_allocation([1.0], [0.1, 0.2], [1, 1], 5)
    with pytest.raises(NonPositiveCost):
        neyman_allocation([1.0], [0.1], [0], 5)


# --- Hoeffding-Serfling ---

def test_halfwidth_census():
    for N, a in [(1, 0.05), (100, 0.05), (2000, 0.0025)]:
        assert hs_halfwidth(N, N, a) == math.sqrt(math.log(2 / a) / (2 * N * N))


def test_halfwidth_single_draw_large_population():
    assert hs_halfwidth(1, 10**12, 0.05) == pytest.approx(math.sqrt(math.log(40) / 2), rel=1e-9)


def test_halfwidth_preconditions():
    with pytest.raises(InvalidRange):
        hs_halfwidth(5, 10, 2.0)
    with pytest.raises(InvalidRange):
        hs_halfwidth(0, 10, 0.05)
    with pytest.raises(InvalidRange):
        hs_halfwidth(11, 10, 0.05)


@given(st.integers(2, 5000), st.floats(0.001, 0.5))
def test_halfwidth_decreasing_in_n(N, alpha):
    ts = [hs_halfwidth(n, N, alpha) for n in range(1, N + 1, max(1, N // 50))]
    assert all(a > b for a, b in zip(ts, ts[1:]))


def test_should_stop():
    cfg = SchedulerConfig(alpha=0.0025, delta=0.01)
    ones = StratumAccumulator({"a": 1.0, "b": 1.0})
    assert not should_stop(ones, 10_000, cfg, 0.01)
    assert should_stop(StratumAccumulator({"a": 1.0}), 1, cfg, 0.01)
    # constant scores do not shortcut the bound
    acc = StratumAccumulator({f"s{i}": 1.0 for i in range(100)})
    assert acc.std == 0 and not should_stop(acc, 10_000, cfg, 0.01)


def test_pilot_sizes():
    cfg = SchedulerConfig()
    strata = [Stratum("a", 1000, 0.5, 1), Stratum("b", 10, 0.25, 1), Stratum("c", 1, 0.25, 1)]
    assert pilot_allocation(strata, cfg).tolist() == [50, 2, 1]


# --- estimate ---

def test_stratified_estimate_weighted_mean():
    strata = [Stratum("a", 10, 0.5, 1), Stratum("b", 10, 0.5, 1)]
    accs = {"a": StratumAccumulator({f"a{i}": float(i < 4) for i in range(5)}),
            "b": StratumAccumulator({f"b{i}": float(i < 3) for i in range(5)})}
    mu, hw = stratified_estimate(accs, strata, 0.05)
    assert mu == pytest.approx(0.7, abs=1e-15)
    assert hw == pytest.approx(0.5 * hs_halfwidth(5, 10, 0.025) * 2, rel=1e-15)


def test_stratified_estimate_single_stratum():
    acc = StratumAccumulator({"a": 1.0, "b": 0.0, "c": 1.0})
    mu, hw = stratified_estimate({"x": acc}, [Stratum("x", 7, 1.0, 1)], 0.05)
    assert mu == acc.mean and hw == hs_halfwidth(3, 7, 0.05)


def test_stratified_estimate_empty_stratum():
    with pytest.raises(EmptyStratum):
        stratified_estimate({}, [Stratum("x", 7, 1.0, 1)], 0.05)


def test_census_estimate_matches_brute_force():
    data = population({"a": 5, "b": 10, "c": 15})
    strata = build_strata(data)
    prof = SyntheticProfile("m", {"a": 0.3, "b": 0.6, "c": 0.8}, grading="graded", seed=4)
    run = run_evaluation("m", data, strata, SchedulerConfig(mode="full_set"), SyntheticResponder(prof), hint_scorer)
    scores = {r.sample_id: r.score for r in run.records}
    exact = math.fsum(scores.values()) / len(scores)
    mu, hw = run.estimate()
    assert mu == pytest.approx(exact, abs=1e-12)
    want = math.fsum(s.weight * math.sqrt(math.log(2 * 3 / 0.05) / (2 * s.population_size ** 2)) for s in strata)
    assert hw == pytest.approx(want, abs=1e-15)


# --- run_evaluation ---

def constant_profile(dims, value=1.0):
    return SyntheticProfile("const", {d: value for d in dims})


def test_constant_model_stops_exactly_at_bound():
    data = population({"a": 500, "b": 500})
    strata = build_strata(data)
    cfg = SchedulerConfig(alpha=0.05, delta=0.05, batch_fraction=0.001)
    run = run_evaluation("c", data, strata, cfg, SyntheticResponder(constant_profile("ab")), hint_scorer)
    n_star = next(n for n in range(2, 501) if hs_halfwidth(n, 500, 0.025) < 0.05)
    for stratum in strata:
        assert run.per_stratum[stratum.id].n == n_star
        assert run.per_stratum[stratum.id].mean == 1.0
        assert run.stopped_reason[stratum.id] == "converged"
    assert run.total_cost < run.full_cost


def test_full_set_is_census():
    data = population({"a": 40, "b": 25}, costs={"a": 1.5, "b": 0.5})
    strata = build_strata(data)
    prof = SyntheticProfile("m", {"a": 0.4, "b": 0.9}, seed=11)
    run = run_evaluation("m", data, strata, SchedulerConfig(mode="full_set"), SyntheticResponder(prof), hint_scorer)
    assert run.total_cost == 40 * 1.5 + 25 * 0.5 == run.full_cost
    assert run.cost_ratio == 1.0
    exact = full_set_oracle(prof, data)
    assert run.stratum_means() == pytest.approx(exact, abs=1e-15)


def test_run_is_deterministic_and_without_replacement():
    data = population({"a": 300, "b": 200, "c": 100})
    strata = build_strata(data)
    prof = SyntheticProfile("m", {"a": 0.5, "b": 0.7, "c": 0.2}, seed=3)
    cfg = SchedulerConfig(delta=0.08, rng_seed=42)
    r1 = run_evaluation("m", data, strata, cfg, SyntheticResponder(prof), hint_scorer)
    r2 = run_evaluation("m", data, strata, cfg, SyntheticResponder(prof), hint_scorer)
    assert r1.to_jsonl() == r2.to_jsonl()
    ids = [r.sample_id for r in r1.records]
    assert len(ids) == len(set(ids))
    r3 = run_evaluation("m", data, strata, SchedulerConfig(delta=0.08, rng_seed=43), SyntheticResponder(prof), hint_scorer)
    assert [r.sample_id for r in r3.records] != ids


def test_run_jsonl_roundtrip():
    data = population({"a": 100, "b": 50})
    strata = build_strata(data)
    prof = SyntheticProfile("m", {"a": 0.5, "b": 0.7}, seed=3)
    run = run_evaluation("m", data, strata, SchedulerConfig(delta=0.1), SyntheticResponder(prof), hint_scorer)
    back = EvaluationRun.from_jsonl(run.to_jsonl())
    assert back.to_jsonl() == run.to_jsonl()
    assert back.estimate() == run.estimate()


def test_budget_is_never_exceeded():
    data = population({"a": 400, "b": 400}, costs={"a": 1.0, "b": 3.0})
    strata = build_strata(data)
    prof = SyntheticProfile("m", {"a": 0.5, "b": 0.5}, seed=1)
    cfg = SchedulerConfig(delta=0.01, budget=300.0)
    run = run_evaluation("m", data, strata, cfg, SyntheticResponder(prof), hint_scorer)
    assert run.total_cost <= 300.0
    assert set(run.stopped_reason.values()) == {"budget_exhausted"}


def test_budget_below_pilot():
    data = population({"a": 400, "b": 400})
    with pytest.raises(BudgetTooSmallForPilot):
        run_evaluation("m", data, build_strata(data), SchedulerConfig(budget=10.0),
                       SyntheticResponder(constant_profile("ab")), hint_scorer)


def test_population_mismatch_rejected():
    data = population({"a": 10})
    with pytest.raises(DimensionMismatch):
        run_evaluation("m", data, [Stratum("a", 11, 1.0, 1.0)], SchedulerConfig(),
                       SyntheticResponder(constant_profile("a")), hint_scorer)


class Flaky:
    """Fails the first ``k`` attempts for every sample."""

    def __init__(self, k):
        self.k = k
        self.calls = {}

    def __call__(self, sample):
        c = self.calls[sample.id] = self.calls.get(sample.id, 0) + 1
        if c <= self.k:
            raise ResponderFailure(sample.id, "transient")
        return Response("A", score_hint=1.0)


def test_transient_failures_are_retried():
    data = population({"a": 20})
    flaky = Flaky(2)
    run = run_evaluation("m", data, build_strata(data), SchedulerConfig(mode="full_set"), flaky, hint_scorer)
    assert all(r.attempts == 3 and not r.failed and r.score == 1.0 for r in run.records)


def test_persistent_failures_score_zero():
    data = population({"a": 20})
    flaky = Flaky(5)
    run = run_evaluation("m", data, build_strata(data), SchedulerConfig(mode="full_set"), flaky, hint_scorer)
    assert all(r.failed and r.score == 0.0 and r.attempts == 3 for r in run.records)
    assert all(c == 3 for c in flaky.calls.values())


def test_config_validation_and_roundtrip():
    cfg = SchedulerConfig(alpha=0.01, per_stratum_delta={"a": 0.02}, budget=10.0)
    assert SchedulerConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.delta_for("a") == 0.02 and cfg.delta_for("b") == cfg.delta
    for bad in ({"alpha": 1.0}, {"delta": 0}, {"mode": "fast"}, {"bogus": 1}):
        with pytest.raises(ValidationError):
            SchedulerConfig.from_dict(bad)
