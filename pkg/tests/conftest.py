import numpy as np
import pytest

from anisoeval.core import CapabilityCell, GoldAnswer, Sample


def make_sample(sid, dim="reasoning", gold=None, cost=1.0, prompt=None, **kw):
    return Sample(
        id=sid,
        cell=CapabilityCell("general", dim),
        task_type="qa",
        prompt=prompt if prompt is not None else f"question {sid}",
        constraints="",
        gold=gold if gold is not None else GoldAnswer.string("A"),
        unit_cost=cost,
        **kw,
    )


def population(sizes, costs=None):
    """``{dim: N}`` -> samples with ids ``<dim>-<i>``."""
    out = []
    for dim, n in sizes.items():
        c = (costs or {}).get(dim, 1.0)
        out.extend(make_sample(f"{dim}-{i:05d}", dim, cost=c) for i in range(n))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_words(rng, count, length=7):
    letters = np.array(list("abcdefghijklmnopqrstuvwxyz"))
    words = {"".join(rng.choice(letters, size=length)) for _ in range(count)}
    return sorted(words)


def planted_ngram_fixture(seed=0, n_clean=5000, n_planted=50, n_near=50, n_docs=400, doc_len=120, n=13):
    """Corpus plus samples with known verbatim overlaps.

    Returns ``(docs, samples, truth)``. ``truth`` is the set of sample ids
    carrying an ``n``-token copy of some document. Another ``n_near`` clean
    samples carry an ``n - 1`` token copy, with flanking words chosen so the
    overlap cannot extend.
    """
    rng = np.random.default_rng(seed)
    vocab = random_words(rng, 40_000)
    pick = lambda k: [vocab[i] for i in rng.integers(0, len(vocab), size=k)]
    docs = [(f"doc-{d:04d}", pick(doc_len)) for d in range(n_docs)]

    def excerpt(length):
        doc_id, words = docs[int(rng.integers(0, n_docs))]
        start = int(rng.integers(1, doc_len - length - 1))
        before, after = words[start - 1], words[start + length]
        chunk = words[start:start + length]
        while True:
            a, b = pick(2)
            if a != before and b != after:
                return [a, *chunk, b]

    samples, truth = [], set()
    for i in range(n_clean):
        words = pick(int(rng.integers(8, 30)))
        if i < n_planted:
            words = pick(3) + excerpt(n) + pick(3)
            truth.add(f"s{i:05d}")
        elif i < n_planted + n_near:
            words = pick(3) + excerpt(n - 1) + pick(3)
        samples.append(make_sample(f"s{i:05d}", prompt=" ".join(words)))
    return [(d, " ".join(w)) for d, w in docs], samples, truth


ACCEPTANCE_LINES = []


def record_acceptance(criterion, passed, detail):
    line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
