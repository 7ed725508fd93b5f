"""Domain types shared by every other module.

All types are frozen dataclasses. Samples are stratified by *dimension*,
which is ``metadata["dimension"]`` when present and the cell's capability
otherwise; sub-task ids live in ``metadata`` as well.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field, replace
from datetime import datetime
from functools import cached_property
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DuplicateId,
    EmptyDataset,
    NegativeWeight,
    NonPositiveCost,
    ParseError,
    ShapeMismatch,
    UnknownDimension,
    ValidationError,
    WeightSumInvalid,
)

WEIGHT_TOL = 1e-9

SOURCE_TIERS = ("fresh", "refined", "private")
MODEL_CATEGORIES = ("commercial", "open_source", "multi_agent")
GOLD_KINDS = ("string", "numeric", "labels", "tool_trace")

#: The seven capability dimensions the default weight schemes are written over.
DEFAULT_DIMENSIONS = ("education", "medical", "finance", "law", "reasoning", "language", "agent")


def stable_hash64(text: str) -> int:
    """64-bit hash of a string that is stable across processes and platforms."""
    return int.from_bytes(hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest(), "little")


@dataclass(frozen=True)
class CapabilityCell:
    domain: str
    capability: str

    def __post_init__(self):
        if not self.domain or not self.capability:
            raise ValidationError("capability cell needs nonempty domain and capability")


@dataclass(frozen=True)
class GoldAnswer:
    """Tagged union of reference answers.

    ``kind`` is one of ``string``, ``numeric``, ``labels`` (any listed label is
    correct) or ``tool_trace`` (sequence of ``{"tool", "args"}`` steps).
    String golds with ``semantic=True`` are scored through the similarity
    cascade instead of exact matching.
    """

    kind: str
    value: Any
    semantic: bool = False

    def __post_init__(self):
        if self.kind not in GOLD_KINDS:
            raise ValidationError(f"unknown gold kind {self.kind!r}")
        if self.kind == "numeric":
            v = float(self.value)
            if not math.isfinite(v):
                raise ValidationError("numeric gold must be finite")
            object.__setattr__(self, "value", v)
        elif self.kind == "labels":
            object.__setattr__(self, "value", tuple(str(x) for x in self.value))
        elif self.kind == "tool_trace":
            steps = tuple(
                {"tool": str(s["tool"]), "args": dict(s.get("args") or {})} if isinstance(s, Mapping)
                else {"tool": str(s[0]), "args": dict(s[1] or {})}
                for s in self.value
            )
            object.__setattr__(self, "value", steps)
        else:
            object.__setattr__(self, "value", str(self.value))

    @classmethod
    def string(cls, text, semantic=False):
        return cls("string", text, semantic)

    @classmethod
    def numeric(cls, x):
        return cls("numeric", x)

    def to_dict(self):
        value = list(self.value) if self.kind in ("labels", "tool_trace") else self.value
        d = {"kind": self.kind, "value": value}
        if self.semantic:
            d["semantic"] = True
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], d["value"], bool(d.get("semantic", False)))


def _check_timestamp(ts: str):
    if not ts:
        return
    try:
        datetime.fromisoformat(ts.replace("Z", "+00:00"))
    except ValueError as exc:
        raise ValidationError(f"created_at is not ISO-8601: {ts!r}") from exc


@dataclass(frozen=True)
class Sample:
    id: str
    cell: CapabilityCell
    task_type: str
    prompt: str
    constraints: str
    gold: GoldAnswer
    unit_cost: float = 1.0
    source_tier: str = "fresh"
    created_at: str = ""
    metadata: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.id:
            raise ValidationError("sample id must be nonempty")
        if not (self.unit_cost >= 0 and math.isfinite(self.unit_cost)):
            raise ValidationError(f"sample {self.id!r}: unit_cost must be finite and >= 0")
        if self.source_tier not in SOURCE_TIERS:
            raise ValidationError(f"sample {self.id!r}: bad source_tier {self.source_tier!r}")
        _check_timestamp(self.created_at)

    @property
    def dimension(self) -> str:
        return self.metadata.get("dimension", self.cell.capability)

    @property
    def difficulty(self) -> float:
        return float(self.metadata.get("difficulty", 0.0))

    @cached_property
    def key(self) -> int:
        return stable_hash64(self.id)

    def to_dict(self) -> dict:
        d = {
            "id": self.id,
            "cell": {"domain": self.cell.domain, "capability": self.cell.capability},
            "task_type": self.task_type,
            "prompt": self.prompt,
            "constraints": self.constraints,
            "gold": self.gold.to_dict(),
            "unit_cost": self.unit_cost,
            "source_tier": self.source_tier,
            "created_at": self.created_at,
        }
        if self.metadata:
            d["metadata"] = dict(self.metadata)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "Sample":
        return cls(
            id=str(d["id"]),
            cell=CapabilityCell(**d["cell"]),
            task_type=d.get("task_type", ""),
            prompt=d.get("prompt", ""),
            constraints=d.get("constraints", ""),
            gold=GoldAnswer.from_dict(d["gold"]),
            unit_cost=float(d.get("unit_cost", 1.0)),
            source_tier=d.get("source_tier", "fresh"),
            created_at=d.get("created_at", ""),
            metadata=dict(d.get("metadata") or {}),
        )


@dataclass(frozen=True)
class Stratum:
    id: str
    population_size: int
    weight: float
    unit_cost: float

    def __post_init__(self):
        if self.population_size < 1:
            raise ValidationError(f"stratum {self.id!r}: population must be positive")
        if not 0 < self.weight <= 1:
            raise ValidationError(f"stratum {self.id!r}: weight must be in (0, 1]")
        if not self.unit_cost > 0:
            raise NonPositiveCost(f"stratum {self.id!r}: mean unit cost must be > 0")

    def to_dict(self):
        return {"id": self.id, "population_size": self.population_size,
                "weight": self.weight, "unit_cost": self.unit_cost}

    @classmethod
    def from_dict(cls, d):
        return cls(d["id"], int(d["population_size"]), float(d["weight"]), float(d["unit_cost"]))


def group_by_dimension(dataset: Iterable[Sample]) -> dict[str, list[Sample]]:
    groups: dict[str, list[Sample]] = {}
    for s in dataset:
        groups.setdefault(s.dimension, []).append(s)
    return groups


def build_strata(dataset: Sequence[Sample], dimensions: Sequence[str] | None = None) -> list[Stratum]:
    """One stratum per dimension present in ``dataset``.

    Strata follow the order of ``dimensions`` when given (unknown sample
    dimensions are rejected), otherwise sorted dimension id order.
    """
    if not dataset:
        raise EmptyDataset("dataset is empty")
    if dimensions is not None:
        allowed = set(dimensions)
        for s in dataset:
            if s.dimension not in allowed:
                raise UnknownDimension(s.id, s.dimension)
    groups = group_by_dimension(dataset)
    order = [d for d in dimensions if d in groups] if dimensions is not None else sorted(groups)
    total = len(dataset)
    return [
        Stratum(
            id=d,
            population_size=len(groups[d]),
            weight=len(groups[d]) / total,
            unit_cost=math.fsum(s.unit_cost for s in groups[d]) / len(groups[d]),
        )
        for d in order
    ]


@dataclass(frozen=True)
class StratumAccumulator:
    """Sufficient statistics for one stratum, keyed by drawn sample id.

    Sums are computed with :func:`math.fsum`, which rounds the exact sum once,
    so the statistics do not depend on the order samples were folded in.
    """

    scores: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        vals = list(self.scores.values())
        object.__setattr__(self, "n", len(vals))
        object.__setattr__(self, "sum", math.fsum(vals))
        object.__setattr__(self, "sum_sq", math.fsum(v * v for v in vals))

    @property
    def drawn_ids(self) -> frozenset:
        return frozenset(self.scores)

    @property
    def mean(self) -> float:
        if self.n == 0:
            raise ValidationError("mean of an empty accumulator")
        return self.sum / self.n

    @property
    def variance(self) -> float:
        """Sample variance S^2 (divisor n - 1); needs n >= 2."""
        if self.n < 2:
            raise ValidationError("variance needs n >= 2")
        m = self.sum / self.n
        return max(0.0, (self.sum_sq - self.n * m * m) / (self.n - 1))

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    def extend(self, ids: Iterable[str], scores: Iterable[float]) -> "StratumAccumulator":
        merged = dict(self.scores)
        for i, v in zip(ids, scores):
            if i in merged:
                raise ValidationError(f"sample {i!r} drawn twice")
            merged[i] = float(v)
        return StratumAccumulator(merged)

    def merge(self, other: "StratumAccumulator") -> "StratumAccumulator":
        return self.extend(other.scores.keys(), other.scores.values())

    def to_dict(self):
        ids = sorted(self.scores)
        return {"n": self.n, "sum": self.sum, "sum_sq": self.sum_sq,
                "drawn_ids": ids, "scores": [self.scores[i] for i in ids]}

    @classmethod
    def from_dict(cls, d):
        acc = cls(dict(zip(d["drawn_ids"], map(float, d["scores"]))))
        if acc.n != d.get("n", acc.n):
            raise ValidationError("accumulator n does not match drawn ids")
        return acc


@dataclass(frozen=True)
class ModelDescriptor:
    id: str
    category: str = "commercial"
    endpoint: str | None = None
    price_per_1k_tokens: float | None = None
    seed: int | None = None
    provider: str | None = None
    max_inflight: int = 4

    def __post_init__(self):
        if self.category not in MODEL_CATEGORIES:
            raise ValidationError(f"model {self.id!r}: unknown category {self.category!r}")
        if (self.endpoint is None) == (self.seed is None):
            raise ValidationError(f"model {self.id!r}: exactly one of endpoint / seed must be set")
        if self.price_per_1k_tokens is not None and self.price_per_1k_tokens < 0:
            raise ValidationError(f"model {self.id!r}: negative price")

    def to_dict(self):
        return {k: v for k, v in self.__dict__.items() if v is not None}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class WeightScheme:
    name: str
    weights: Mapping[str, float]

    def to_dict(self):
        return {"name": self.name, "weights": dict(self.weights)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["name"], {k: float(v) for k, v in d["weights"].items()})


def validate_scheme(scheme: WeightScheme, dimensions: Sequence[str]) -> None:
    known = set(dimensions)
    for dim, w in scheme.weights.items():
        if dim not in known:
            raise UnknownDimension(f"scheme {scheme.name!r}", dim)
        if w < 0:
            raise NegativeWeight(dim)
        if w > 1:
            raise ValidationError(f"scheme {scheme.name!r}: weight on {dim!r} exceeds 1")
    total = math.fsum(scheme.weights.values())
    if abs(total - 1.0) > WEIGHT_TOL:
        raise WeightSumInvalid(total)


def default_schemes() -> list[WeightScheme]:
    """The three reweighting schemes used for rank-stability analysis."""
    general = {"language": 0.40, "reasoning": 0.20}
    general.update({d: 0.08 for d in ("education", "medical", "finance", "law", "agent")})
    professional = {d: 0.15 for d in ("education", "medical", "finance", "law")}
    professional.update({d: 0.40 / 3 for d in ("reasoning", "language", "agent")})
    reasoning = {"reasoning": 0.50, "agent": 0.20}
    reasoning.update({d: 0.06 for d in ("education", "medical", "finance", "law", "language")})
    return [
        WeightScheme("general_heavy", {d: general[d] for d in DEFAULT_DIMENSIONS}),
        WeightScheme("professional_heavy", {d: professional[d] for d in DEFAULT_DIMENSIONS}),
        WeightScheme("reasoning_heavy", {d: reasoning[d] for d in DEFAULT_DIMENSIONS}),
    ]


@dataclass(frozen=True)
class ScoreMatrix:
    model_ids: tuple
    dimension_ids: tuple
    raw: np.ndarray
    normalized: np.ndarray
    difficulty: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "model_ids", tuple(self.model_ids))
        object.__setattr__(self, "dimension_ids", tuple(self.dimension_ids))
        shape = (len(self.model_ids), len(self.dimension_ids))
        for name in ("raw", "normalized"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != shape:
                raise ShapeMismatch(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)) or arr.min(initial=0.0) < 0 or arr.max(initial=0.0) > 1:
                raise ValidationError(f"{name} entries must be finite and in [0, 1]")
            object.__setattr__(self, name, arr)
        beta = np.asarray(self.difficulty, dtype=np.float64)
        if beta.shape != (shape[1],):
            raise ShapeMismatch(f"difficulty has shape {beta.shape}, expected {(shape[1],)}")
        if np.any(beta <= 0) or np.any(beta > 1):
            raise ValidationError("difficulty entries must be in (0, 1]")
        object.__setattr__(self, "difficulty", beta)

    def __eq__(self, other):
        if not isinstance(other, ScoreMatrix):
            return NotImplemented
        return (self.model_ids == other.model_ids and self.dimension_ids == other.dimension_ids
                and np.array_equal(self.raw, other.raw)
                and np.array_equal(self.normalized, other.normalized)
                and np.array_equal(self.difficulty, other.difficulty))

    __hash__ = None

    def to_dict(self):
        return {"model_ids": list(self.model_ids), "dimension_ids": list(self.dimension_ids),
                "raw": self.raw.tolist(), "normalized": self.normalized.tolist(),
                "difficulty": self.difficulty.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["model_ids"], d["dimension_ids"], np.array(d["raw"], dtype=np.float64),
                   np.array(d["normalized"], dtype=np.float64), np.array(d["difficulty"], dtype=np.float64))


def matrix_to_csv(model_ids: Sequence[str], dimension_ids: Sequence[str], values) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model_id", *dimension_ids])
    for mid, row in zip(model_ids, np.asarray(values, dtype=np.float64)):
        w.writerow([mid, *(repr(float(x)) for x in row)])
    return buf.getvalue()


def matrix_from_csv(text: str):
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], rows[1:]
    if not header or header[0] != "model_id":
        raise ValidationError("matrix CSV must start with a model_id column")
    model_ids = [r[0] for r in body]
    values = np.array([[float(x) for x in r[1:]] for r in body], dtype=np.float64).reshape(len(body), len(header) - 1)
    return model_ids, header[1:], values


# --- JSON-Lines datasets ----------------------------------------------------

def dumps_line(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def read_samples(path) -> list[Sample]:
    samples: list[Sample] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                s = Sample.from_dict(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(lineno, exc) from exc
            if s.id in seen:
                raise DuplicateId(s.id, lineno)
            seen.add(s.id)
            samples.append(s)
    return samples


def write_samples(samples: Iterable[Sample], path, public: bool = False) -> int:
    """Write samples as JSON-Lines; ``public=True`` drops private-tier samples."""
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in samples:
            if public and s.source_tier == "private":
                continue
            fh.write(dumps_line(s.to_dict()) + "\n")
            n += 1
    return n


def with_tier(sample: Sample, tier: str) -> Sample:
    return replace(sample, source_tier=tier)


__all__ = [
    "CapabilityCell", "GoldAnswer", "Sample", "Stratum", "StratumAccumulator", "ModelDescriptor",
    "WeightScheme", "ScoreMatrix", "build_strata", "validate_scheme", "default_schemes",
    "read_samples", "write_samples", "group_by_dimension", "stable_hash64", "DEFAULT_DIMENSIONS",
    "matrix_to_csv", "matrix_from_csv",
]
