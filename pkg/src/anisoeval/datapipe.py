"""Dataset ingestion, decontamination and Private Anchor Set isolation."""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import kernels
from .core import Sample, stable_hash64, with_tier
from .errors import EmbedderFailure, IndexNotBuilt, SizeTooLarge, ValidationError

log = logging.getLogger(__name__)

NGRAM_SIZE = 13
SEMANTIC_THRESHOLD = 0.85
EMBED_DIM = 4096

# Han (incl. extensions and compatibility), kana and Hangul syllables
_CJK = "\u3040-\u30ff\u3400-\u4dbf\u4e00-\u9fff\uac00-\ud7af\uf900-\ufaff\U00020000-\U0002fa1f"
# ASCII alphanumerics and Latin-1 / Latin Extended-A/B letters (minus the x and / signs)
_LATIN = "0-9A-Za-z\u00c0-\u00d6\u00d8-\u00f6\u00f8-\u024f"
_TOKEN_RE = re.compile(f"[{_CJK}]|[{_LATIN}]+")


def tokenize(text: str) -> list[str]:
    """CJK characters are single tokens, Latin letter/digit runs are one token each."""
    return [t.casefold() for t in _TOKEN_RE.findall(text)]


@lru_cache(maxsize=1 << 18)
def _token_id(token: str) -> int:
    return stable_hash64(token)


def token_ids(tokens: Sequence[str]) -> np.ndarray:
    return np.fromiter((_token_id(t) for t in tokens), dtype=np.uint64, count=len(tokens))


@dataclass(frozen=True)
class ContaminationFlag:
    sample_id: str
    reason: str
    evidence: object
    corpus_doc_id: str

    def __post_init__(self):
        if self.reason == "semantic_overlap":
            if not float(self.evidence) > SEMANTIC_THRESHOLD:
                raise ValidationError("semantic flags need similarity above the threshold")
        elif self.reason != "ngram_overlap":
            raise ValidationError(f"unknown flag reason {self.reason!r}")

    def to_dict(self):
        return {"sample_id": self.sample_id, "reason": self.reason,
                "evidence": self.evidence, "corpus_doc_id": self.corpus_doc_id}


class NgramIndex:
    """Exact index of every ``n``-token window in a corpus.

    Windows are keyed by a 64-bit polynomial hash; hash hits are verified
    against the stored tokens, so lookups have no false positives.
    """

    def __init__(self, n: int = NGRAM_SIZE):
        self.n = n
        self._table: dict[int, list[tuple[int, int]]] = {}
        self._docs: list[tuple[str, list[str]]] = []

    def __len__(self):
        return len(self._docs)

    def add(self, doc_id: str, text: str) -> None:
        tokens = tokenize(text)
        d = len(self._docs)
        self._docs.append((doc_id, tokens))
        hashes = kernels.window_hashes(token_ids(tokens), self.n)
        for start, h in enumerate(hashes.tolist()):
            self._table.setdefault(h, []).append((d, start))

    @classmethod
    def build(cls, docs: Iterable[tuple[str, str]], n: int = NGRAM_SIZE) -> "NgramIndex":
        index = cls(n)
        for doc_id, text in docs:
            index.add(doc_id, text)
        return index

    def matches(self, tokens: Sequence[str]) -> list[tuple[int, str]]:
        """``(window start, first matching doc id)`` for every window found in the corpus."""
        hits = []
        hashes = kernels.window_hashes(token_ids(tokens), self.n)
        for i, h in enumerate(hashes.tolist()):
            for d, start in self._table.get(h, ()):
                doc_id, doc_tokens = self._docs[d]
                if doc_tokens[start:start + self.n] == list(tokens[i:i + self.n]):
                    hits.append((i, doc_id))
                    break
        return hits


def ngram_flag(sample: Sample, corpus_index: NgramIndex | None, n: int = NGRAM_SIZE) -> list[ContaminationFlag]:
    if corpus_index is None:
        raise IndexNotBuilt("n-gram index has not been built")
    if corpus_index.n != n:
        raise ValidationError(f"index holds {corpus_index.n}-grams, asked for {n}")
    tokens = tokenize(sample.prompt)
    if len(tokens) < n:
        return []
    return [ContaminationFlag(sample.id, "ngram_overlap", " ".join(tokens[i:i + n]), doc_id)
            for i, doc_id in corpus_index.matches(tokens)]


# --- semantic overlap -------------------------------------------------------------

def hashed_trigram_embedding(text: str, dim: int = EMBED_DIM) -> np.ndarray:
    """Bag of hashed character trigrams, L2-normalised (zero vector for empty text)."""
    norm = " ".join(text.casefold().split())
    grams = [norm[i:i + 3] for i in range(len(norm) - 2)] or ([norm] if norm else [])
    vec = np.zeros(dim, dtype=np.float64)
    for g, c in Counter(grams).items():
        vec[_token_id(g) % dim] += c
    n = np.linalg.norm(vec)
    return vec / n if n > 0 else vec


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


class SemanticIndex:
    """Precomputed unit vectors of corpus documents."""

    def __init__(self, embedder_fn: Callable[[str], np.ndarray], docs: Iterable[tuple[str, str]]):
        ids, vecs = [], []
        for doc_id, text in docs:
            ids.append(doc_id)
            vecs.append(_embed(embedder_fn, text))
        self.doc_ids = ids
        # float32 halves memory; cosine error stays far below threshold resolution
        self.vectors = np.vstack(vecs).astype(np.float32) if vecs else np.zeros((0, 0), dtype=np.float32)

    def __len__(self):
        return len(self.doc_ids)

    def best(self, vec: np.ndarray) -> tuple[float, str | None]:
        if not self.doc_ids:
            return 0.0, None
        sims = self.vectors @ vec.astype(np.float32)
        k = int(np.argmax(sims))
        return float(sims[k]), self.doc_ids[k]


def _embed(embedder_fn, text) -> np.ndarray:
    try:
        v = np.asarray(embedder_fn(text), dtype=np.float64)
    except Exception as exc:
        raise EmbedderFailure(str(exc)) from exc
    n = np.linalg.norm(v)
    if not np.isfinite(n):
        raise EmbedderFailure("embedding is not finite")
    return v / n if n > 0 else v


def semantic_flag(sample: Sample, embedder_fn, corpus_index: SemanticIndex | None,
                  threshold: float = SEMANTIC_THRESHOLD) -> ContaminationFlag | None:
    if corpus_index is None:
        raise IndexNotBuilt("semantic index has not been built")
    sim, doc_id = corpus_index.best(_embed(embedder_fn, sample.prompt))
    if doc_id is not None and sim > threshold:
        return ContaminationFlag(sample.id, "semantic_overlap", sim, doc_id)
    return None


def decontaminate(dataset: Sequence[Sample], ngram_index: NgramIndex | None = None,
                  semantic_index: SemanticIndex | None = None, embedder_fn=hashed_trigram_embedding,
                  threshold: float = SEMANTIC_THRESHOLD):
    """Split ``dataset`` into (active samples, flags).

    Any flag discards the sample. One flag is reported per discarded sample:
    the first verbatim n-gram hit, else the semantic match.
    """
    active, flags = [], []
    for s in dataset:
        found = ngram_flag(s, ngram_index) if ngram_index is not None else []
        if not found and semantic_index is not None:
            f = semantic_flag(s, embedder_fn, semantic_index, threshold)
            if f is not None:
                found.append(f)
        if found:
            flags.append(found[0])
        else:
            active.append(s)
    if flags:
        log.info("decontamination discarded %d of %d samples", len(dataset) - len(active), len(dataset))
    return active, flags


def load_corpus(path) -> list[tuple[str, str]]:
    """Corpus documents from a directory of ``.txt``/``.jsonl`` files or one ``.jsonl`` file."""
    path = Path(path)
    files = sorted(p for p in path.rglob("*") if p.is_file()) if path.is_dir() else [path]
    docs = []
    for f in files:
        if f.suffix == ".jsonl":
            with open(f, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        obj = json.loads(line)
                        docs.append((str(obj["doc_id"]), obj["text"]))
        elif f.suffix == ".txt":
            rel = f.relative_to(path).as_posix() if path.is_dir() else f.name
            docs.append((rel, f.read_text(encoding="utf-8")))
    return docs


# --- private anchor set -----------------------------------------------------------

def split_private_anchor(dataset: Sequence[Sample], size: int, seed: int) -> tuple[list[Sample], list[Sample]]:
    """Seeded split into (public, private); private samples are re-tiered ``private``."""
    if size < 0 or size > len(dataset):
        raise SizeTooLarge(f"cannot draw {size} anchors from {len(dataset)} samples")
    chosen = set(np.random.default_rng(seed).choice(len(dataset), size=size, replace=False).tolist())
    public, private = [], []
    for i, s in enumerate(dataset):
        if i in chosen:
            private.append(with_tier(s, "private"))
        else:
            public.append(s)
    return public, private


def dataset_stats(dataset: Sequence[Sample]) -> dict:
    cells = Counter((s.cell.domain, s.cell.capability) for s in dataset)
    return {
        "samples": len(dataset),
        "by_dimension": dict(sorted(Counter(s.dimension for s in dataset).items())),
        "by_tier": dict(sorted(Counter(s.source_tier for s in dataset).items())),
        "by_cell": {f"{d}|{c}": n for (d, c), n in sorted(cells.items())},
        "total_cost": float(sum(s.unit_cost for s in dataset)),
    }
