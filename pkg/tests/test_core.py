import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from anisoeval.core import (
    DEFAULT_DIMENSIONS, GoldAnswer, ModelDescriptor, ScoreMatrix, Stratum, StratumAccumulator, WeightScheme,
    build_strata, default_schemes, matrix_from_csv, matrix_to_csv, read_samples, stable_hash64, validate_scheme,
    with_tier, write_samples,
)
from anisoeval.errors import (
    DuplicateId, EmptyDataset, NonPositiveCost, ParseError, UnknownDimension, ValidationError, WeightSumInvalid,
)

from conftest import make_sample, population


# --- build_strata ---

def test_strata_weights_two_dimensions():
    strata = build_strata(population({"law": 60, "agent": 40}))
    w = {s.id: s.weight for s in strata}
    assert w == {"agent": 0.4, "law": 0.6}


def test_single_stratum():
    (s,) = build_strata(population({"law": 100}))
    assert s.weight == 1.0 and s.population_size == 100


def test_published_column_totals():
    # four named columns plus the remainder that brings the total to 207,843
    sizes = {"education": 59_400, "medical": 59_750, "finance": 41_933, "law": 14_888, "agent": 31_872}
    strata = {s.id: s for s in build_strata(population(sizes))}
    assert sum(s.population_size for s in strata.values()) == 207_843
    for dim, want in [("education", 0.2858), ("medical", 0.2875), ("finance", 0.2017), ("law", 0.0716)]:
        assert strata[dim].weight == pytest.approx(want, abs=1e-4)


def test_strata_follow_configured_order_and_costs():
    data = population({"law": 3, "agent": 2}, costs={"law": 2.0, "agent": 0.5})
    strata = build_strata(data, ["law", "agent", "finance"])
    assert [s.id for s in strata] == ["law", "agent"]
    assert strata[0].unit_cost == 2.0 and strata[1].unit_cost == 0.5


def test_strata_errors():
    with pytest.raises(EmptyDataset):
        build_strata([])
    with pytest.raises(UnknownDimension):
        build_strata(population({"law": 2}), ["agent"])
    with pytest.raises(NonPositiveCost):
        Stratum("x", 10, 1.0, 0.0)


@given(st.dictionaries(st.sampled_from(DEFAULT_DIMENSIONS), st.integers(1, 30), min_size=1))
def test_strata_weights_sum_to_one(sizes):
    strata = build_strata(population(sizes))
    assert math.fsum(s.weight for s in strata) == pytest.approx(1.0, abs=1e-12)
    assert sum(s.population_size for s in strata) == sum(sizes.values())


# --- schemes ---

def test_uniform_scheme_over_22_dimensions():
    dims = [f"d{k}" for k in range(22)]
    validate_scheme(WeightScheme("uniform", {d: 1 / 22 for d in dims}), dims)


def test_scheme_sum_invalid():
    with pytest.raises(WeightSumInvalid):
        validate_scheme(WeightScheme("bad", {"a": 0.5, "b": 0.48}), ["a", "b"])


def test_scheme_negative_and_unknown():
    with pytest.raises(ValidationError):
        validate_scheme(WeightScheme("neg", {"a": 1.5, "b": -0.5}), ["a", "b"])
    with pytest.raises(UnknownDimension):
        validate_scheme(WeightScheme("x", {"zz": 1.0}), ["a"])


def test_default_schemes_valid_with_headline_weights():
    schemes = {s.name: s for s in default_schemes()}
    for s in schemes.values():
        validate_scheme(s, DEFAULT_DIMENSIONS)
    g = schemes["general_heavy"].weights
    assert g["language"] == 0.40 and g["reasoning"] == 0.20
    p = schemes["professional_heavy"].weights
    assert math.fsum(p[d] for d in ("education", "medical", "finance", "law")) == pytest.approx(0.60)
    r = schemes["reasoning_heavy"].weights
    assert r["reasoning"] == 0.50 and r["agent"] == 0.20


# --- accumulator ---

@given(st.lists(st.floats(0, 1), min_size=2, max_size=60))
def test_accumulator_matches_numpy(scores):
    acc = StratumAccumulator({f"s{i}": x for i, x in enumerate(scores)})
    assert acc.n == len(scores)
    assert acc.mean == pytest.approx(np.mean(scores), abs=1e-12)
    assert acc.variance == pytest.approx(np.var(scores, ddof=1), abs=1e-12)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=40), st.randoms())
def test_accumulator_order_independent(scores, rnd):
    ids = [f"s{i}" for i in range(len(scores))]
    a = StratumAccumulator(dict(zip(ids, scores)))
    pairs = list(zip(ids, scores))
    rnd.shuffle(pairs)
    half = len(pairs) // 2
    b = StratumAccumulator(dict(pairs[:half])).merge(StratumAccumulator(dict(pairs[half:])))
    assert (a.n, a.sum, a.sum_sq) == (b.n, b.sum, b.sum_sq)


def test_accumulator_rejects_redraw_and_roundtrips():
    acc = StratumAccumulator().extend(["a", "b"], [1.0, 0.0])
    with pytest.raises(ValidationError):
        acc.extend(["a"], [1.0])
    assert StratumAccumulator.from_dict(json.loads(json.dumps(acc.to_dict()))) == acc


# --- samples and persistence ---

def test_sample_roundtrip(tmp_path):
    samples = [
        make_sample("a", gold=GoldAnswer.numeric(0.75), metadata={"difficulty": 0.3}),
        make_sample("b", gold=GoldAnswer("labels", ["A", "C"])),
        make_sample("c", gold=GoldAnswer("tool_trace", [{"tool": "search", "args": {"q": "x"}}])),
        make_sample("d", gold=GoldAnswer.string("北京", semantic=True), created_at="2025-01-02T03:04:05Z"),
    ]
    path = tmp_path / "d.jsonl"
    write_samples(samples, path)
    assert read_samples(path) == samples
    assert samples[0].difficulty == 0.3


def test_public_write_drops_private(tmp_path):
    samples = [make_sample("a"), with_tier(make_sample("b"), "private")]
    path = tmp_path / "d.jsonl"
    assert write_samples(samples, path, public=True) == 1
    assert [s.id for s in read_samples(path)] == ["a"]


def test_duplicate_id_reports_line(tmp_path):
    path = tmp_path / "d.jsonl"
    write_samples([make_sample("a"), make_sample("b"), make_sample("a")], path)
    with pytest.raises(DuplicateId) as exc:
        read_samples(path)
    assert exc.value.line == 3 and exc.value.sample_id == "a"


def test_parse_error_reports_line(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text(json.dumps(make_sample("a").to_dict()) + "\n{not json\n", encoding="utf-8")
    with pytest.raises(ParseError) as exc:
        read_samples(path)
    assert exc.value.line == 2


def test_sample_validation():
    with pytest.raises(ValidationError):
        make_sample("")
    with pytest.raises(ValidationError):
        make_sample("x", cost=-1.0)
    with pytest.raises(ValidationError):
        make_sample("x", created_at="yesterday")
    with pytest.raises(ValidationError):
        GoldAnswer("essay", "x")
    with pytest.raises(ValidationError):
        GoldAnswer.numeric(float("nan"))


def test_dimension_override_from_metadata():
    s = make_sample("x", dim="law", metadata={"dimension": "finance"})
    assert s.dimension == "finance"


def test_stable_hash_is_fixed():
    assert stable_hash64("abc") == stable_hash64("abc")
    assert stable_hash64("abc") != stable_hash64("abd")
    assert 0 <= stable_hash64("") < 2**64


def test_model_descriptor_exactly_one_source():
    ModelDescriptor("m", endpoint="http://x")
    ModelDescriptor("m", seed=1)
    with pytest.raises(ValidationError):
        ModelDescriptor("m")
    with pytest.raises(ValidationError):
        ModelDescriptor("m", endpoint="http://x", seed=1)


def test_score_matrix_checks_and_csv():
    raw = np.array([[0.5, 0.25], [1.0, 0.0]])
    m = ScoreMatrix(["a", "b"], ["x", "y"], raw, raw, np.array([0.5, 0.5]))
    assert ScoreMatrix.from_dict(json.loads(json.dumps(m.to_dict()))) == m
    ids, dims, vals = matrix_from_csv(matrix_to_csv(m.model_ids, m.dimension_ids, raw))
    assert ids == ["a", "b"] and dims == ["x", "y"] and np.array_equal(vals, raw)
    with pytest.raises(ValidationError):
        ScoreMatrix(["a"], ["x", "y"], raw, raw, np.array([0.5, 0.5]))
    with pytest.raises(ValidationError):
        ScoreMatrix(["a", "b"], ["x", "y"], raw * 2, raw, np.array([0.5, 0.5]))
