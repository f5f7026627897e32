"""Translation-assisted dataset generation: maximal-marginal-relevance
selection of few-shot exemplars and guideline-constrained record translation.

Similarity is cosine over character-trigram frequency profiles of the English
source text: deterministic, dependency-free, and pluggable behind a named
identifier. Selection is greedy, maximizing
``lambda * sim(candidate, query) - (1 - lambda) * max(sim(candidate, s) for s
in selected)`` with ties broken by pool order.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .llm import ChatRequest, DEFAULT_MAX_OUTPUT_TOKENS, DEFAULT_TEMPERATURE, LLMGateway
from .prompts import DATASET_PRE_TRANSLATION


class CurationError(Exception):
    """Raised for invalid curation inputs or failed draft generation."""


@dataclass(frozen=True)
class Exemplar:
    """An aligned English/Urdu demonstration pair."""

    source_text: str
    target_text: str
    source_dataset: str = "other"

    def __post_init__(self) -> None:
        if not self.source_text or not self.target_text:
            raise CurationError("exemplar texts must be non-empty")


def trigram_profile(text: str) -> Counter:
    """Character-trigram frequency profile over casefolded, space-collapsed text."""
    normalized = " ".join(text.split()).casefold()
    return Counter(normalized[i : i + 3] for i in range(len(normalized) - 2))


def trigram_cosine(a: str, b: str) -> float:
    """Cosine similarity between trigram profiles; 0 when either is empty."""
    profile_a, profile_b = trigram_profile(a), trigram_profile(b)
    if not profile_a or not profile_b:
        return 0.0
    dot = sum(count * profile_b.get(gram, 0) for gram, count in profile_a.items())
    norm_a = math.sqrt(sum(c * c for c in profile_a.values()))
    norm_b = math.sqrt(sum(c * c for c in profile_b.values()))
    return dot / (norm_a * norm_b)


SIMILARITY_FUNCTIONS = {"char-trigram-cosine": trigram_cosine}
DEFAULT_SIMILARITY = "char-trigram-cosine"
DEFAULT_LAMBDA = 0.5
DEFAULT_K = 5


@dataclass
class ExemplarPool:
    """A pool of exemplars plus the similarity function used to rank them."""

    exemplars: list[Exemplar] = field(default_factory=list)
    similarity: str = DEFAULT_SIMILARITY

    def __post_init__(self) -> None:
        if self.similarity not in SIMILARITY_FUNCTIONS:
            raise CurationError(f"unknown similarity function {self.similarity!r}")

    @classmethod
    def from_file(cls, path: str | Path, similarity: str = DEFAULT_SIMILARITY) -> "ExemplarPool":
        """Load a pool from a JSONL file of
        {"source_text": ..., "target_text": ..., "source": ...} lines."""
        exemplars = []
        path = Path(path)
        with path.open("r", encoding="utf-8") as handle:
            for line_no, line in enumerate(handle, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    row = json.loads(line)
                    exemplars.append(
                        Exemplar(
                            source_text=row["source_text"],
                            target_text=row["target_text"],
                            source_dataset=row.get("source", "other"),
                        )
                    )
                except (ValueError, KeyError) as exc:
                    raise CurationError(f"{path}:{line_no}: bad exemplar: {exc}") from exc
        return cls(exemplars=exemplars, similarity=similarity)


def mmr_select(
    pool: ExemplarPool,
    query: str,
    k: int,
    lambda_: float = DEFAULT_LAMBDA,
) -> list[Exemplar]:
    """Greedy maximal-marginal-relevance selection of k exemplars.

    At lambda 1 this reduces to top-k by relevance; lower lambdas penalize
    redundancy with already-selected exemplars. Ties break toward the earlier
    pool position, and the result preserves selection order.
    """
    if not 0.0 <= lambda_ <= 1.0:
        raise ValueError("lambda must be in [0, 1]")
    if not 1 <= k <= len(pool.exemplars):
        raise ValueError(f"k must be in [1, {len(pool.exemplars)}], got {k}")
    sim = SIMILARITY_FUNCTIONS[pool.similarity]
    relevance = [sim(exemplar.source_text, query) for exemplar in pool.exemplars]
    selected: list[int] = []
    remaining = list(range(len(pool.exemplars)))
    while len(selected) < k:
        best_index = None
        best_score = -math.inf
        for i in remaining:
            redundancy = (
                max(sim(pool.exemplars[i].source_text, pool.exemplars[j].source_text) for j in selected)
                if selected
                else 0.0
            )
            mmr = lambda_ * relevance[i] - (1 - lambda_) * redundancy
            if mmr > best_score:
                best_score = mmr
                best_index = i
        selected.append(best_index)
        remaining.remove(best_index)
    return [pool.exemplars[i] for i in selected]


def format_exemplars(exemplars: list[Exemplar]) -> str:
    """Render exemplars as demonstration blocks for the pre-translation prompt.

    Empty input renders to the empty string, leaving a guidelines-only prompt.
    """
    blocks = [
        f"Text: {exemplar.source_text}\nUrdu: {exemplar.target_text}\n\n"
        for exemplar in exemplars
    ]
    return "".join(blocks)


def translate_record(
    text: str,
    exemplars: list[Exemplar],
    gateway: LLMGateway,
    model_id: str,
    temperature: float = DEFAULT_TEMPERATURE,
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS,
) -> str:
    """Draft an Urdu translation of one English record.

    The draft is review input for human annotators, never auto-published.
    Raises :class:`CurationError` on empty model output.
    """
    prompt = DATASET_PRE_TRANSLATION.render(exemplars=format_exemplars(exemplars), input=text)
    response = gateway.complete(
        ChatRequest(
            model_id=model_id,
            user_text=prompt,
            temperature=temperature,
            max_output_tokens=max_output_tokens,
            tag=DATASET_PRE_TRANSLATION.name,
        )
    )
    draft = response.text.strip()
    if not draft:
        raise CurationError("empty translation draft")
    return draft


def curate_records(
    records: list[dict],
    pool: ExemplarPool,
    gateway: LLMGateway,
    model_id: str,
    k: int = DEFAULT_K,
    lambda_: float = DEFAULT_LAMBDA,
) -> list[dict]:
    """Draft Urdu translations for {"id", "text"} records, one review row each."""
    drafts = []
    for record in records:
        text = record["text"]
        chosen = (
            mmr_select(pool, text, k=min(k, len(pool.exemplars)), lambda_=lambda_)
            if k and pool.exemplars
            else []
        )
        draft = translate_record(text, chosen, gateway, model_id)
        drafts.append({"id": record["id"], "source_text": text, "draft": draft})
    return drafts
