"""Few-shot example selection, prompt assembly, and multi-task mixing.

Selection is deterministic end to end: the random path uses a seeded
MT19937 Fisher-Yates permutation, and the similarity path uses a
bag-of-words TF-IDF embedding with cosine ranking and index-order tie
breaks. Real sentence embeddings can be supplied from a file instead; the
selection mechanism (cosine top-k) is identical either way.
"""

from __future__ import annotations

import json
import math
import random
from collections import Counter
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

from .corpus import TokenBudget, keep_units, removable_unit_count
from .knowledge import Record
from .linearize import CONTEXT_JOIN, LinearizationConfig, assemble_input, linearize_knowledge

PRNG_FAMILY = "mt19937-fisher-yates"

EXAMPLE_JOIN = "\n\n"
TARGET_JOIN = "\n"


class PromptBudgetError(ValueError):
    """The prompt cannot fit the budget even at one truncated example."""


@dataclass(frozen=True)
class EmbeddingProvider:
    """Where example/query embeddings come from.

    ``bag_of_words_tfidf`` (default) derives deterministic sparse vectors
    from the embedded texts themselves; ``external_file`` loads a
    {id: vector} table (JSON object or JSONL lines of {"id", "vector"}).
    """

    strategy: str = "bag_of_words_tfidf"
    path: str | None = None

    def __post_init__(self) -> None:
        if self.strategy not in ("bag_of_words_tfidf", "external_file"):
            raise ValueError(f"unknown embedding strategy {self.strategy!r}")
        if self.strategy == "external_file" and not self.path:
            raise ValueError("external_file embeddings require a path")


def embedding_text(record: Record) -> str:
    """Text embedded for similarity: the request when present, else the
    linearized structured input."""
    if record.request:
        return record.request
    return linearize_knowledge(record.knowledge)


def _tfidf_vectors(texts: Sequence[str]) -> list[dict[str, float]]:
    """L2-normalised TF-IDF bag-of-words vectors, idf fitted on ``texts``.

    idf(t) = ln((1 + N) / (1 + df(t))) + 1, the smoothed variant, so no
    term weight is ever zero for an in-vocabulary term.
    """
    tokenized = [text.lower().split() for text in texts]
    df: Counter[str] = Counter()
    for tokens in tokenized:
        df.update(set(tokens))
    n = len(texts)
    idf = {t: math.log((1 + n) / (1 + d)) + 1.0 for t, d in df.items()}
    vectors = []
    for tokens in tokenized:
        tf = Counter(tokens)
        vec = {t: c * idf[t] for t, c in tf.items()}
        norm = math.sqrt(sum(w * w for w in vec.values()))
        if norm > 0:
            vec = {t: w / norm for t, w in vec.items()}
        vectors.append(vec)
    return vectors


def _cosine(a: Mapping[str, float] | Sequence[float], b: Mapping[str, float] | Sequence[float]) -> float:
    if isinstance(a, Mapping) and isinstance(b, Mapping):
        if len(b) < len(a):
            a, b = b, a
        num = sum(w * b.get(t, 0.0) for t, w in a.items())
        na = math.sqrt(sum(w * w for w in a.values()))
        nb = math.sqrt(sum(w * w for w in b.values()))
    else:
        num = sum(x * y for x, y in zip(a, b))  # type: ignore[arg-type]
        na = math.sqrt(sum(x * x for x in a))  # type: ignore[misc]
        nb = math.sqrt(sum(x * x for x in b))  # type: ignore[misc]
    if na == 0.0 or nb == 0.0:
        return 0.0
    return num / (na * nb)


def _load_external_vectors(path: str) -> dict[str, list[float]]:
    """Load {id: vector}, accepting one JSON object or JSONL {id, vector} rows."""
    with open(path, encoding="utf-8") as f:
        text = f.read().strip()
    try:
        data = json.loads(text)
        if isinstance(data, dict) and "id" not in data:
            return {str(k): [float(x) for x in v] for k, v in data.items()}
    except json.JSONDecodeError:
        pass
    vectors: dict[str, list[float]] = {}
    for line in text.splitlines():
        line = line.strip()
        if line:
            row = json.loads(line)
            vectors[str(row["id"])] = [float(x) for x in row["vector"]]
    return vectors


def select_random(train: Sequence[Record], k: int, seed: int) -> list[Record]:
    """k distinct records drawn by a seeded pseudo-random permutation.

    The same seed yields the same selection, and the k-selection is a prefix
    of the (k+1)-selection under that seed.
    """
    if k < 0 or k > len(train):
        raise ValueError(f"cannot select {k} of {len(train)} records")
    indices = list(range(len(train)))
    random.Random(seed).shuffle(indices)
    return [train[i] for i in indices[:k]]


def select_similar(
    train: Sequence[Record],
    query: Record,
    k: int,
    provider: EmbeddingProvider | None = None,
) -> list[Record]:
    """Top-k training records by descending cosine similarity to the query.

    Ties break by ascending training-set index, so the output ordering is a
    total order and reruns yield identical lists. Under the external-file
    provider an all-zero embedding raises ValueError.
    """
    provider = provider or EmbeddingProvider()
    if k < 0 or k > len(train):
        raise ValueError(f"cannot select {k} of {len(train)} records")
    if provider.strategy == "bag_of_words_tfidf":
        vectors = _tfidf_vectors([embedding_text(r) for r in train] + [embedding_text(query)])
        train_vecs: Sequence = vectors[:-1]
        query_vec = vectors[-1]
    else:
        assert provider.path is not None
        table = _load_external_vectors(provider.path)
        vecs = []
        dim: int | None = None
        for record in list(train) + [query]:
            if record.id not in table:
                raise ValueError(f"no embedding for record id {record.id!r}")
            vec = table[record.id]
            if not any(vec):
                raise ValueError(f"zero embedding vector for record id {record.id!r}")
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise ValueError(
                    f"embedding for {record.id!r} has dimension {len(vec)}, expected {dim}"
                )
            vecs.append(vec)
        train_vecs, query_vec = vecs[:-1], vecs[-1]
    ranked = sorted(
        range(len(train)), key=lambda i: (-_cosine(train_vecs[i], query_vec), i)
    )
    return [train[i] for i in ranked[:k]]


def render_example_input(
    record: Record,
    cfg: LinearizationConfig | None = None,
    template: str | None = None,
) -> str:
    """The input portion of one prompt block.

    Without a template this is the assembled input sequence. A template may
    reference {input}, {request}, {knowledge}, and {context} to produce
    task-specific prompt phrasing.
    """
    cfg = cfg or LinearizationConfig()
    knowledge_text = linearize_knowledge(record.knowledge)
    assembled = assemble_input(record.request, knowledge_text, record.context, cfg)
    if template is None:
        return assembled
    return (
        template.replace("{input}", assembled)
        .replace("{request}", record.request or "")
        .replace("{knowledge}", knowledge_text)
        .replace("{context}", CONTEXT_JOIN.join(record.context))
    )


def build_prompt(
    examples: Sequence[Record],
    query: Record,
    budget: TokenBudget,
    cfg: LinearizationConfig | None = None,
    template: str | None = None,
    example_order: str = "given",
) -> str:
    """Assemble a few-shot prompt that fits the token budget.

    Each example renders as its input, a newline, and its target; examples
    join with blank lines and the query input comes last. Trailing examples
    are dropped until the prompt fits; when even a single example overflows,
    that example's knowledge is truncated unit by unit so exactly one
    (possibly truncated) example remains. Raises PromptBudgetError when the
    query alone, or the query plus one irreducible example, cannot fit.

    ``example_order`` controls only the rendering order of the surviving
    examples: "given" keeps the input order, "reversed" flips it so the
    first (e.g. most similar) example lands adjacent to the query. Dropping
    always removes from the end of the *given* sequence; the token count of
    the joined prompt does not depend on block order.
    """
    if not examples:
        raise ValueError("build_prompt requires at least one example")
    if example_order not in ("given", "reversed"):
        raise ValueError(f"unknown example order {example_order!r}")
    cfg = cfg or LinearizationConfig()
    query_text = render_example_input(query, cfg, template)
    if not budget.fits(query_text):
        raise PromptBudgetError(
            f"query alone exceeds the budget of {budget.max_tokens} tokens"
        )

    def example_block(record: Record) -> str:
        return render_example_input(record, cfg, template) + TARGET_JOIN + record.target

    def prompt_for(blocks: Sequence[str]) -> str:
        ordered = list(blocks) if example_order == "given" else list(reversed(blocks))
        return EXAMPLE_JOIN.join(ordered + [query_text])

    blocks = [example_block(r) for r in examples]
    for m in range(len(blocks), 0, -1):
        candidate = prompt_for(blocks[:m])
        if budget.fits(candidate):
            return candidate

    first = examples[0]
    for n in range(removable_unit_count(first.knowledge) - 1, 0, -1):
        assert first.knowledge is not None
        truncated = replace(first, knowledge=keep_units(first.knowledge, n))
        candidate = prompt_for([example_block(truncated)])
        if budget.fits(candidate):
            return candidate
    raise PromptBudgetError(
        "prompt cannot fit the budget even with one irreducibly truncated example"
    )


# ---------------------------------------------------------------------------
# Temperature mixing


@dataclass(frozen=True)
class MixtureSpec:
    """Per-task training-set sizes and the mixing temperature (default 2)."""

    sizes: tuple[int, ...]
    temperature: float = 2.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "sizes", tuple(int(n) for n in self.sizes))
        if not self.sizes:
            raise ValueError("a mixture needs at least one task")
        if any(n <= 0 for n in self.sizes):
            raise ValueError("task sizes must be positive")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")


def temperature_weights(spec: MixtureSpec) -> list[float]:
    """Sampling proportions p_i = n_i^(1/T) / sum_j n_j^(1/T).

    At T=1 this is plain size-proportional sampling; as T grows the
    distribution flattens toward uniform. Scale-invariant in the sizes.
    """
    scaled = [n ** (1.0 / spec.temperature) for n in spec.sizes]
    total = sum(scaled)
    return [s / total for s in scaled]


def sample_schedule(weights: Sequence[float], steps: int, seed: int) -> list[int]:
    """Seeded categorical draws over task indices, one per step."""
    if steps < 0:
        raise ValueError("steps must be non-negative")
    if not weights:
        raise ValueError("weights must be non-empty")
    if any(w < 0 for w in weights):
        raise ValueError("weights must be non-negative")
    if abs(sum(weights) - 1.0) > 1e-9:
        raise ValueError(f"weights must sum to 1, got {sum(weights)!r}")
    cumulative = []
    acc = 0.0
    for w in weights:
        acc += w
        cumulative.append(acc)
    cumulative[-1] = 1.0
    rng = random.Random(seed)
    schedule = []
    for _ in range(steps):
        x = rng.random()
        lo = 0
        hi = len(cumulative) - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if x < cumulative[mid]:
                hi = mid
            else:
                lo = mid + 1
        schedule.append(lo)
    return schedule
