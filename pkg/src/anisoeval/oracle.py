"""Model responders.

:class:`SyntheticResponder` simulates a model with known per-dimension
ability. Each draw is a pure function of ``(profile.seed, sample.id)`` via the
counter-based hash in :mod:`anisoeval.kernels`, so results do not depend on
batch composition, call order or worker placement.

:class:`EndpointResponder` talks to an OpenAI-style chat-completions endpoint.
"""

from __future__ import annotations

import json
import math
import os
import re
import socket
import threading
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.special import betaincinv

from . import kernels
from .core import ModelDescriptor, Sample, group_by_dimension
from .errors import HttpStatus, MalformedResponse, ResponderFailure, Timeout, UnknownDimension, ValidationError
from .scoring import ScoreRecord

WRONG_ANSWER = "[synthetic: incorrect]"
_DRAW_STREAM = 0x5EED


@dataclass(frozen=True)
class Response:
    output: str
    score_hint: float | None = None
    latency_ms: float = 0.0


@dataclass(frozen=True)
class SyntheticProfile:
    model_id: str
    ability: Mapping[str, float]
    difficulty_sensitivity: float = 0.0
    grading: str = "binary"
    concentration: float = 10.0
    seed: int = 0
    category: str = "commercial"

    def __post_init__(self):
        for k, a in self.ability.items():
            if not 0.0 <= a <= 1.0:
                raise ValidationError(f"{self.model_id}: ability for {k!r} outside [0, 1]")
        if not (self.difficulty_sensitivity >= 0 and math.isfinite(self.difficulty_sensitivity)):
            raise ValidationError(f"{self.model_id}: difficulty_sensitivity must be finite and >= 0")
        if self.grading not in ("binary", "graded"):
            raise ValidationError(f"{self.model_id}: grading must be binary or graded")
        if not (self.concentration > 0 and math.isfinite(self.concentration)):
            raise ValidationError(f"{self.model_id}: concentration must be finite and > 0")

    def to_dict(self):
        return {"model_id": self.model_id, "ability": dict(self.ability),
                "difficulty_sensitivity": self.difficulty_sensitivity, "grading": self.grading,
                "concentration": self.concentration, "seed": self.seed, "category": self.category}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _gold_text(sample: Sample) -> str:
    g = sample.gold
    if g.kind == "numeric":
        return repr(g.value)
    if g.kind == "labels":
        return g.value[0] if g.value else ""
    if g.kind == "tool_trace":
        return json.dumps(list(g.value), ensure_ascii=False)
    return g.value


def success_probability(profile: SyntheticProfile, sample: Sample) -> float:
    try:
        a = profile.ability[sample.dimension]
    except KeyError:
        raise UnknownDimension(sample.id, sample.dimension) from None
    return min(1.0, max(0.0, a - profile.difficulty_sensitivity * sample.difficulty))


def synthetic_scores(profile: SyntheticProfile, samples: Sequence[Sample]) -> np.ndarray:
    """Vectorised score draws for a batch of samples."""
    p = np.array([success_probability(profile, s) for s in samples], dtype=np.float64)
    keys = np.array([s.key for s in samples], dtype=np.uint64)
    u = kernels.hash_uniform(keys, kernels.stream_key(profile.seed, _DRAW_STREAM))
    if profile.grading == "binary":
        return (u < p).astype(np.float64)
    nu = profile.concentration
    out = p.copy()
    inner = (p > 0) & (p < 1)
    out[inner] = betaincinv(p[inner] * nu, (1 - p[inner]) * nu, u[inner])
    return np.clip(out, 0.0, 1.0)


def synthetic_respond(profile: SyntheticProfile, sample: Sample) -> tuple[str, float]:
    """``(output, score_hint)`` for one sample."""
    r = SyntheticResponder(profile).respond(sample)
    return r.output, r.score_hint


class SyntheticResponder:
    def __init__(self, profile: SyntheticProfile):
        self.profile = profile

    def respond_batch(self, samples: Sequence[Sample]) -> list[Response]:
        if not samples:
            return []
        scores = synthetic_scores(self.profile, samples)
        out = []
        for s, x in zip(samples, scores.tolist()):
            if self.profile.grading == "binary":
                text = _gold_text(s) if x == 1.0 else WRONG_ANSWER
            else:
                text = repr(x)
            out.append(Response(text, x, 0.0))
        return out

    def respond(self, sample: Sample) -> Response:
        return self.respond_batch([sample])[0]

    __call__ = respond


def hint_scorer(sample: Sample, response) -> ScoreRecord:
    """Score a synthetic response by its ground-truth hint."""
    return ScoreRecord(sample.id, float(response.score_hint), "synthetic_hint")


def full_set_oracle(profile: SyntheticProfile, dataset: Sequence[Sample], scorer: Callable = hint_scorer) -> dict[str, float]:
    """Exact per-dimension means from scoring every sample once."""
    responder = SyntheticResponder(profile)
    means = {}
    for dim, members in group_by_dimension(dataset).items():
        responses = responder.respond_batch(members)
        means[dim] = math.fsum(scorer(s, r).score for s, r in zip(members, responses)) / len(members)
    return means


# --- HTTP endpoints ---------------------------------------------------------------

THINK_PATTERN = r"<think>.*?</think>"


def strip_think(text: str, pattern: str = THINK_PATTERN) -> str:
    return re.sub(pattern, "", text, flags=re.DOTALL).strip()


@dataclass(frozen=True)
class EndpointRequest:
    model: str
    messages: tuple
    max_tokens: int = 1024
    temperature: float = 0.0

    def to_json(self) -> dict:
        return {"model": self.model, "messages": [dict(m) for m in self.messages],
                "max_tokens": self.max_tokens, "temperature": self.temperature}


@dataclass(frozen=True)
class EndpointResponse:
    content: str
    prompt_tokens: int | None = None
    completion_tokens: int | None = None
    end_to_end_latency_ms: float = 0.0
    output: str = field(default="", repr=False)
    score_hint = None

    def __post_init__(self):
        if not self.output:
            object.__setattr__(self, "output", self.content)

    @property
    def latency_ms(self) -> float:
        return self.end_to_end_latency_ms


def default_template(sample: Sample) -> tuple:
    """Pass-through prompt template: one user turn of prompt plus constraints."""
    text = sample.prompt if not sample.constraints else f"{sample.prompt}\n\n{sample.constraints}"
    return ({"role": "user", "content": text},)


def api_key_var(descriptor: ModelDescriptor) -> str:
    provider = re.sub(r"[^A-Za-z0-9]", "_", descriptor.provider or "default").upper()
    return f"RELE_API_KEY_{provider}"


_inflight: dict[str, threading.BoundedSemaphore] = {}
_inflight_lock = threading.Lock()


def _provider_slots(descriptor: ModelDescriptor) -> threading.BoundedSemaphore:
    key = descriptor.provider or "default"
    with _inflight_lock:
        if key not in _inflight:
            _inflight[key] = threading.BoundedSemaphore(descriptor.max_inflight)
        return _inflight[key]


def endpoint_respond(descriptor: ModelDescriptor, sample: Sample, timeout_ms: float = 60_000,
                     template: Callable = default_template, max_tokens: int = 1024) -> EndpointResponse:
    """One chat-completion round trip; latency covers send through last byte."""
    if not descriptor.endpoint:
        raise ValidationError(f"model {descriptor.id!r} has no endpoint")
    var = api_key_var(descriptor)
    token = os.environ.get(var)
    if not token:
        raise ResponderFailure(sample.id, f"missing API key in ${var}")
    req = EndpointRequest(descriptor.id, template(sample), max_tokens, 0.0)
    body = json.dumps(req.to_json(), ensure_ascii=False).encode("utf-8")
    http_req = urllib.request.Request(
        descriptor.endpoint, data=body, method="POST",
        headers={"Content-Type": "application/json", "Authorization": f"Bearer {token}"},
    )
    with _provider_slots(descriptor):
        start = time.perf_counter()
        try:
            with urllib.request.urlopen(http_req, timeout=timeout_ms / 1000.0) as resp:
                payload = resp.read()
        except urllib.error.HTTPError as exc:
            raise HttpStatus(sample.id, exc.code) from exc
        except (socket.timeout, TimeoutError) as exc:
            raise Timeout(sample.id, "request timed out") from exc
        except urllib.error.URLError as exc:
            if isinstance(exc.reason, (socket.timeout, TimeoutError)):
                raise Timeout(sample.id, "request timed out") from exc
            raise ResponderFailure(sample.id, str(exc.reason)) from exc
        latency = (time.perf_counter() - start) * 1000.0
    try:
        data = json.loads(payload)
        content = data["choices"][0]["message"]["content"]
        if not isinstance(content, str):
            raise TypeError("content is not a string")
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise MalformedResponse(sample.id, f"unexpected response body: {exc}") from exc
    usage = data.get("usage") or {}
    return EndpointResponse(content, usage.get("prompt_tokens"), usage.get("completion_tokens"), latency)


class EndpointResponder:
    """Concurrent endpoint client with ``<think>`` spans stripped before scoring."""

    def __init__(self, descriptor: ModelDescriptor, timeout_ms: float = 60_000,
                 template: Callable = default_template, think_pattern: str | None = THINK_PATTERN):
        self.descriptor = descriptor
        self.timeout_ms = timeout_ms
        self.template = template
        self.think_pattern = think_pattern

    def respond(self, sample: Sample) -> EndpointResponse:
        r = endpoint_respond(self.descriptor, sample, self.timeout_ms, self.template)
        if self.think_pattern:
            r = EndpointResponse(r.content, r.prompt_tokens, r.completion_tokens,
                                 r.end_to_end_latency_ms, strip_think(r.content, self.think_pattern))
        return r

    def _safe(self, sample):
        try:
            return self.respond(sample)
        except ResponderFailure as exc:
            return exc

    def respond_batch(self, samples: Sequence[Sample]) -> list:
        with ThreadPoolExecutor(max_workers=max(1, self.descriptor.max_inflight)) as pool:
            return list(pool.map(self._safe, samples))
