"""The four-agent fact-checking pipeline and its three evidence-retrieval
strategies.

Agents: ClaimProcessor (free text -> atomic claims), QueryGenerator (claim ->
question query + claim query), Retriever (monolingual / translated /
thresholded evidence), Verifier (claim + evidence -> labeled verdict).

The thresholded strategy runs Urdu retrieval first and compares the
deduplicated per-claim evidence count against the minimum evidence count
``tau``: at or above the threshold the Urdu evidence is used as-is and no
translation or English-search call is ever billed; below it, queries are
translated, searched in English, the snippets back-translated, and both
evidence pools merged.

Claims are verified on a bounded worker pool; report ordering always follows
claim index, and per-claim ledgers are merged in claim order so serialized
reports are byte-identical for any worker count under deterministic backends.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

from .llm import (
    ChatRequest,
    CostLedger,
    DEFAULT_MAX_OUTPUT_TOKENS,
    DEFAULT_TEMPERATURE,
    LLMGateway,
    StructuredParseError,
    parse_structured,
)
from .prompts import CLAIM_EXTRACTION, QUERY_GENERATION, VERIFICATION
from .search import (
    LANG_EN,
    LANG_EN_UR,
    LANG_UR,
    EvidenceSnippet,
    SearchError,
    SearchGateway,
    SearchQuery,
    normalize_url,
)
from .translation import TranslationRequest, Translator, UR_TO_EN

logger = logging.getLogger(__name__)

MONOLINGUAL = "monolingual"
TRANSLATED = "translated"
THRESHOLDED = "thresholded"
STRATEGIES = (MONOLINGUAL, TRANSLATED, THRESHOLDED)

DEFAULT_TAU = 5
DEFAULT_WORKERS = 4
REPORT_SCHEMA_VERSION = 1

NO_EVIDENCE_TEXT = "کوئی شواہد دستیاب نہیں۔"


class PipelineError(Exception):
    """Base error for pipeline failures."""


class ClaimExtractionError(PipelineError):
    """Claim extraction output stayed unparseable after a re-prompt."""


class QueryGenerationError(PipelineError):
    """Query generation produced an invalid query pair."""


class RetrievalError(PipelineError):
    """All retrieval routes for a claim failed."""


class UnverifiableClaimError(PipelineError):
    """The verifier output stayed unparseable; the claim is unverifiable."""


@dataclass(frozen=True)
class AtomicClaim:
    """One self-contained factual assertion extracted from source text."""

    text: str
    index: int
    origin_span: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        if not self.text or not self.text.strip():
            raise ValueError("claim text must be non-empty")

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "index": self.index,
            "origin_span": list(self.origin_span) if self.origin_span else None,
        }


@dataclass(frozen=True)
class QueryPair:
    """The two search queries generated for one claim."""

    question_query: str
    claim_query: str
    claim_index: int

    def __post_init__(self) -> None:
        if not self.question_query or not self.claim_query:
            raise ValueError("both queries must be non-empty")
        if self.question_query == self.claim_query:
            raise ValueError("queries must be distinct")

    def to_dict(self) -> dict:
        return {
            "question_query": self.question_query,
            "claim_query": self.claim_query,
            "claim_index": self.claim_index,
        }


@dataclass(frozen=True)
class EvidenceSet:
    """Evidence gathered for one claim, with language provenance counts."""

    snippets: tuple[EvidenceSnippet, ...]
    urdu_count: int
    translated_count: int
    fallback_used: bool

    def __post_init__(self) -> None:
        if self.urdu_count + self.translated_count != len(self.snippets):
            raise ValueError("urdu_count + translated_count must equal snippet count")

    def to_dict(self) -> dict:
        return {
            "snippets": [s.to_dict() for s in self.snippets],
            "urdu_count": self.urdu_count,
            "translated_count": self.translated_count,
            "fallback_used": self.fallback_used,
        }


@dataclass(frozen=True)
class Verdict:
    """The verifier's judgment for one claim."""

    label: bool
    reasoning: str
    correction: str | None
    evidence_used: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.reasoning or not self.reasoning.strip():
            raise ValueError("verdict reasoning must be non-empty")

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "reasoning": self.reasoning,
            "correction": self.correction,
            "evidence_used": list(self.evidence_used),
        }


@dataclass(frozen=True)
class RetrievalConfig:
    """Retrieval strategy selection and knobs."""

    strategy: str = THRESHOLDED
    tau: int = DEFAULT_TAU
    requested_results: int = 10

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        if self.strategy == THRESHOLDED and self.tau < 1:
            raise ValueError("tau must be >= 1 for the thresholded strategy")
        if not 1 <= self.requested_results <= 20:
            raise ValueError("requested_results must be in [1, 20]")


@dataclass
class ClaimCheck:
    """Everything the pipeline produced for one claim.

    ``verdict`` is None and ``error`` set when the claim is unverifiable or
    an earlier stage failed for it.
    """

    claim: AtomicClaim
    queries: QueryPair | None = None
    evidence: EvidenceSet | None = None
    verdict: Verdict | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "claim": self.claim.to_dict(),
            "queries": self.queries.to_dict() if self.queries else None,
            "evidence": self.evidence.to_dict() if self.evidence else None,
            "verdict": self.verdict.to_dict() if self.verdict else None,
            "error": self.error,
        }


@dataclass
class FactCheckReport:
    """Full per-claim report for one pipeline run."""

    source_text: str
    strategy: str
    tau: int | None
    claims: list[ClaimCheck]
    ledger: CostLedger
    timings: dict[str, float]

    def __post_init__(self) -> None:
        if (self.tau is not None) != (self.strategy == THRESHOLDED):
            raise ValueError("tau must be present exactly when strategy is thresholded")

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "source_text": self.source_text,
            "strategy": self.strategy,
            "tau": self.tau,
            "claims": [check.to_dict() for check in self.claims],
            "ledger": self.ledger.to_dict(),
            "timings": self.timings,
        }

    def to_json(self) -> str:
        """Stable serialization: sorted keys, no volatile fields."""
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True, indent=2) + "\n"


@dataclass
class BatchCheckResult:
    """Checks plus the merged ledger for a batch of pre-atomic claims."""

    checks: list[ClaimCheck]
    ledger: CostLedger


class ClaimProcessor:
    """Decomposes Urdu free text into atomic, check-worthy claims."""

    def __init__(
        self,
        gateway: LLMGateway,
        model_id: str,
        temperature: float = DEFAULT_TEMPERATURE,
        max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS,
    ):
        self.gateway = gateway
        self.model_id = model_id
        self.temperature = temperature
        self.max_output_tokens = max_output_tokens

    def process(self, text: str) -> list[AtomicClaim]:
        """Extract an ordered list of self-contained claims.

        Zero claims is a valid outcome for purely subjective text. Parse
        failures are re-prompted once, then raise ClaimExtractionError.
        """
        if not text or not text.strip():
            raise ValueError("input text must be non-empty")
        request = ChatRequest(
            model_id=self.model_id,
            user_text=CLAIM_EXTRACTION.render(input=text),
            temperature=self.temperature,
            max_output_tokens=self.max_output_tokens,
            tag=CLAIM_EXTRACTION.name,
        )
        last_error: StructuredParseError | None = None
        for attempt in range(2):
            response = self.gateway.complete(request)
            try:
                items = parse_structured(response.text, CLAIM_EXTRACTION.output_shape)
                return [AtomicClaim(text=item, index=i) for i, item in enumerate(items)]
            except StructuredParseError as exc:
                last_error = exc
                if attempt == 0:
                    logger.warning("claim extraction parse failed, re-prompting: %s", exc)
        raise ClaimExtractionError(f"claim extraction unparseable after re-prompt: {last_error}")


class QueryGenerator:
    """Produces the question-style and statement-style query for a claim."""

    def __init__(
        self,
        gateway: LLMGateway,
        model_id: str,
        temperature: float = DEFAULT_TEMPERATURE,
        max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS,
    ):
        self.gateway = gateway
        self.model_id = model_id
        self.temperature = temperature
        self.max_output_tokens = max_output_tokens

    def generate(self, claim: AtomicClaim) -> QueryPair:
        """Generate exactly two distinct queries; re-prompt once on a bad parse."""
        request = ChatRequest(
            model_id=self.model_id,
            user_text=QUERY_GENERATION.render(claim=claim.text),
            temperature=self.temperature,
            max_output_tokens=self.max_output_tokens,
            tag=QUERY_GENERATION.name,
        )
        problem = ""
        for attempt in range(2):
            response = self.gateway.complete(request)
            try:
                items = parse_structured(response.text, QUERY_GENERATION.output_shape)
            except StructuredParseError as exc:
                problem = str(exc)
                items = None
            if items is not None:
                if len(items) == 2:
                    if items[0] == items[1]:
                        raise QueryGenerationError(
                            f"claim {claim.index}: generated queries must be distinct"
                        )
                    return QueryPair(
                        question_query=items[0],
                        claim_query=items[1],
                        claim_index=claim.index,
                    )
                problem = f"expected 2 queries, got {len(items)}"
            if attempt == 0:
                logger.warning(
                    "query generation failed for claim %d, re-prompting: %s",
                    claim.index,
                    problem,
                )
        raise QueryGenerationError(f"claim {claim.index}: {problem}")


def _dedup_union(groups: list[list[EvidenceSnippet]]) -> tuple[EvidenceSnippet, ...]:
    """Merge snippet groups, keeping the first snippet seen per normalized URL."""
    merged: list[EvidenceSnippet] = []
    seen: set[str] = set()
    for group in groups:
        for snippet in group:
            key = normalize_url(snippet.url)
            if key in seen:
                continue
            seen.add(key)
            merged.append(snippet)
    return tuple(merged)


class Retriever:
    """Evidence retrieval under the three strategies."""

    def __init__(self, search: SearchGateway, translator: Translator | None = None):
        self.search = search
        self.translator = translator

    def retrieve(self, pair: QueryPair, config: RetrievalConfig) -> EvidenceSet:
        if config.strategy == MONOLINGUAL:
            return self.monolingual(pair, config.requested_results)
        if config.strategy == TRANSLATED:
            return self.translated(pair, config.requested_results)
        return self.thresholded(pair, config.tau, config.requested_results)

    def _search_safe(self, text: str, language: str, requested: int) -> list[EvidenceSnippet] | None:
        """One search; None signals failure (an empty result list does not)."""
        try:
            return self.search.search(
                SearchQuery(text=text, language=language, requested_results=requested)
            )
        except SearchError as exc:
            logger.warning("search failed for %r (%s): %s", text, language, exc)
            return None

    def monolingual(self, pair: QueryPair, requested_results: int = 10) -> EvidenceSet:
        """Urdu-only retrieval: union of both queries' results, URL-deduplicated."""
        question_hits = self._search_safe(pair.question_query, LANG_UR, requested_results)
        claim_hits = self._search_safe(pair.claim_query, LANG_UR, requested_results)
        if question_hits is None and claim_hits is None:
            raise RetrievalError(f"claim {pair.claim_index}: both Urdu searches failed")
        merged = _dedup_union([question_hits or [], claim_hits or []])
        return EvidenceSet(
            snippets=merged,
            urdu_count=len(merged),
            translated_count=0,
            fallback_used=False,
        )

    def translated(self, pair: QueryPair, requested_results: int = 10) -> EvidenceSet:
        """Translate queries to English, search, and back-translate the evidence."""
        if self.translator is None:
            raise RetrievalError("translated retrieval requires a translator")
        english_queries: list[str] = []
        for text in (pair.question_query, pair.claim_query):
            try:
                english_queries.append(self.translator.translate(TranslationRequest(text, UR_TO_EN)))
            except Exception as exc:  # translation or gateway failure for one query
                logger.warning("query translation failed for %r: %s", text, exc)
        if not english_queries:
            raise RetrievalError(f"claim {pair.claim_index}: both query translations failed")
        groups = []
        failures = 0
        for text in english_queries:
            hits = self._search_safe(text, LANG_EN, requested_results)
            if hits is None:
                failures += 1
            else:
                groups.append(hits)
        if failures == len(english_queries):
            raise RetrievalError(f"claim {pair.claim_index}: both English searches failed")
        english = _dedup_union(groups)
        back = self.translator.translate_snippets(list(english))
        return EvidenceSet(
            snippets=tuple(back),
            urdu_count=0,
            translated_count=len(back),
            fallback_used=False,
        )

    def thresholded(self, pair: QueryPair, tau: int, requested_results: int = 10) -> EvidenceSet:
        """Urdu retrieval first; below ``tau`` evidence items, merge in the
        translated route.

        The comparison is inclusive: exactly ``tau`` Urdu snippets means no
        fallback, and in that case no translation or English-search call is
        made at all.
        """
        if tau < 1:
            raise ValueError("tau must be >= 1")
        urdu = self.monolingual(pair, requested_results)
        if urdu.urdu_count >= tau:
            return urdu
        translated = self.translated(pair, requested_results)
        merged = _dedup_union([list(urdu.snippets), list(translated.snippets)])
        translated_count = sum(1 for s in merged if s.language == LANG_EN_UR)
        return EvidenceSet(
            snippets=merged,
            urdu_count=len(merged) - translated_count,
            translated_count=translated_count,
            fallback_used=True,
        )


class Verifier:
    """Judges claim factuality against retrieved evidence."""

    def __init__(
        self,
        gateway: LLMGateway,
        model_id: str,
        temperature: float = DEFAULT_TEMPERATURE,
        max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS,
        max_evidence_chars: int = 12000,
    ):
        self.gateway = gateway
        self.model_id = model_id
        self.temperature = temperature
        self.max_output_tokens = max_output_tokens
        self.max_evidence_chars = max_evidence_chars

    def _format_evidence(self, evidence: EvidenceSet) -> tuple[str, tuple[str, ...]]:
        """Render the evidence block, dropping trailing snippets over budget.

        Snippets are consumed in evidence-set order (per-query rank order);
        when the character budget is exceeded, later snippets are dropped
        first.
        """
        blocks: list[str] = []
        used: list[str] = []
        total = 0
        for i, snippet in enumerate(evidence.snippets, start=1):
            block = f"[{i}] {snippet.title}: {snippet.snippet_text} ({snippet.url})"
            if blocks and total + len(block) > self.max_evidence_chars:
                logger.warning(
                    "evidence truncated to %d of %d snippets", len(blocks), len(evidence.snippets)
                )
                break
            blocks.append(block)
            used.append(snippet.url)
            total += len(block)
        if not blocks:
            return NO_EVIDENCE_TEXT, ()
        return "\n".join(blocks), tuple(used)

    def verify(self, claim: AtomicClaim, evidence: EvidenceSet) -> Verdict:
        """Produce a labeled verdict; with empty evidence the judgment relies
        on model knowledge and ``evidence_used`` stays empty.

        Raises :class:`UnverifiableClaimError` if the judgment stays
        unparseable after one re-prompt.
        """
        evidence_text, used = self._format_evidence(evidence)
        request = ChatRequest(
            model_id=self.model_id,
            user_text=VERIFICATION.render(claim=claim.text, evidence=evidence_text),
            temperature=self.temperature,
            max_output_tokens=self.max_output_tokens,
            tag=VERIFICATION.name,
        )
        last_error: StructuredParseError | None = None
        for attempt in range(2):
            response = self.gateway.complete(request)
            try:
                judgment = parse_structured(response.text, VERIFICATION.output_shape)
            except StructuredParseError as exc:
                last_error = exc
                if attempt == 0:
                    logger.warning(
                        "verdict parse failed for claim %d, re-prompting: %s", claim.index, exc
                    )
                continue
            return Verdict(
                label=judgment["label"],
                reasoning=judgment["reasoning"],
                correction=judgment["correction"],
                evidence_used=used,
            )
        raise UnverifiableClaimError(
            f"claim {claim.index}: verdict unparseable after re-prompt: {last_error}"
        )


class FactCheckPipeline:
    """Claim extraction, query generation, retrieval, and verification.

    ``clock`` provides wall-clock timestamps for report timings; mock runs
    pass a constant clock so serialized reports stay byte-identical.
    """

    def __init__(
        self,
        llm: LLMGateway,
        search: SearchGateway,
        translator: Translator,
        model_id: str,
        config: RetrievalConfig | None = None,
        workers: int = DEFAULT_WORKERS,
        temperature: float = DEFAULT_TEMPERATURE,
        max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS,
        max_evidence_chars: int = 12000,
        clock: Callable[[], float] = time.monotonic,
    ):
        if workers < 1:
            raise ValueError("workers must be >= 1")
        self.llm = llm
        self.search = search
        self.translator = translator
        self.model_id = model_id
        self.config = config or RetrievalConfig()
        self.workers = workers
        self.temperature = temperature
        self.max_output_tokens = max_output_tokens
        self.max_evidence_chars = max_evidence_chars
        self.clock = clock

    def _check_one(self, claim: AtomicClaim, ledger: CostLedger) -> ClaimCheck:
        """Run QG -> RTV -> VFR for one claim, billing to its own ledger.

        Stage failures are recorded in the check rather than raised, so one
        bad claim never kills the run.
        """
        llm = self.llm.bound_to(ledger)
        generator = QueryGenerator(
            llm, self.model_id, self.temperature, self.max_output_tokens
        )
        retriever = Retriever(self.search.bound_to(ledger), self.translator.bound_to(ledger))
        verifier = Verifier(
            llm,
            self.model_id,
            self.temperature,
            self.max_output_tokens,
            self.max_evidence_chars,
        )
        try:
            pair = generator.generate(claim)
        except QueryGenerationError as exc:
            return ClaimCheck(claim=claim, error=str(exc))
        try:
            evidence = retriever.retrieve(pair, self.config)
        except RetrievalError as exc:
            return ClaimCheck(claim=claim, queries=pair, error=str(exc))
        try:
            verdict = verifier.verify(claim, evidence)
        except UnverifiableClaimError as exc:
            return ClaimCheck(claim=claim, queries=pair, evidence=evidence, error=str(exc))
        return ClaimCheck(claim=claim, queries=pair, evidence=evidence, verdict=verdict)

    def _run_claims(self, claims: list[AtomicClaim]) -> tuple[list[ClaimCheck], list[CostLedger]]:
        ledgers = [CostLedger() for _ in claims]
        if not claims:
            return [], ledgers
        if self.workers == 1 or len(claims) == 1:
            checks = [self._check_one(claim, ledgers[i]) for i, claim in enumerate(claims)]
        else:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                checks = list(
                    pool.map(lambda item: self._check_one(item[1], ledgers[item[0]]), enumerate(claims))
                )
        return checks, ledgers

    def run(self, text: str, benchmark_mode: bool = False) -> FactCheckReport:
        """Fact-check a text end to end.

        In benchmark mode the input is already a single atomic claim and
        claim extraction is bypassed. The run fails only if claim extraction
        itself fails; per-claim errors are recorded in the report.
        """
        started = self.clock()
        run_ledger = CostLedger()
        if benchmark_mode:
            claims = [AtomicClaim(text=text.strip(), index=0)]
        else:
            processor = ClaimProcessor(
                self.llm.bound_to(run_ledger),
                self.model_id,
                self.temperature,
                self.max_output_tokens,
            )
            claims = processor.process(text)
        checks, ledgers = self._run_claims(claims)
        for ledger in ledgers:
            run_ledger.merge(ledger)
        return FactCheckReport(
            source_text=text,
            strategy=self.config.strategy,
            tau=self.config.tau if self.config.strategy == THRESHOLDED else None,
            claims=checks,
            ledger=run_ledger,
            timings={"total_seconds": self.clock() - started},
        )

    def check_claims(self, texts: list[str]) -> BatchCheckResult:
        """Fact-check a batch of pre-atomic claims through the worker pool.

        Used by the benchmark harness; ledgers are merged in claim order so
        totals are deterministic for any worker count.
        """
        claims = [AtomicClaim(text=text, index=i) for i, text in enumerate(texts)]
        checks, ledgers = self._run_claims(claims)
        merged = CostLedger()
        for ledger in ledgers:
            merged.merge(ledger)
        return BatchCheckResult(checks=checks, ledger=merged)
