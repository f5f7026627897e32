"""LLM-backed Urdu/English translation for query translation and evidence
back-translation.

The prompts forbid any output beyond the translation itself; an empty or
whitespace-only reply is treated as a translation failure. Snippet batches
are translated one snippet at a time so a single bad snippet cannot abort a
claim's verification: failures drop that snippet with a logged warning.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass

from .llm import ChatRequest, CostLedger, DEFAULT_MAX_OUTPUT_TOKENS, DEFAULT_TEMPERATURE, LLMGateway
from .prompts import TRANSLATE_EN_UR, TRANSLATE_UR_EN
from .search import LANG_EN, LANG_EN_UR, EvidenceSnippet

logger = logging.getLogger(__name__)

UR_TO_EN = "ur-en"
EN_TO_UR = "en-ur"
DIRECTIONS = (UR_TO_EN, EN_TO_UR)

_TEMPLATES = {UR_TO_EN: TRANSLATE_UR_EN, EN_TO_UR: TRANSLATE_EN_UR}


class TranslationError(Exception):
    """The model produced no usable translation."""


@dataclass(frozen=True)
class TranslationRequest:
    """One text to translate in a fixed direction."""

    text: str
    direction: str

    def __post_init__(self) -> None:
        if not self.text or not self.text.strip():
            raise ValueError("translation text must be non-empty")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")


class Translator:
    """Urdu/English translator over the chat gateway."""

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

    def bound_to(self, ledger: CostLedger) -> "Translator":
        """A view of this translator billing to a different ledger."""
        return Translator(
            self.gateway.bound_to(ledger),
            model_id=self.model_id,
            temperature=self.temperature,
            max_output_tokens=self.max_output_tokens,
        )

    def translate(self, request: TranslationRequest) -> str:
        """Translate one text; returns the trimmed translation only.

        Raises :class:`TranslationError` on empty model output; transport
        errors propagate from the gateway.
        """
        template = _TEMPLATES[request.direction]
        response = self.gateway.complete(
            ChatRequest(
                model_id=self.model_id,
                user_text=template.render(input=request.text),
                temperature=self.temperature,
                max_output_tokens=self.max_output_tokens,
                tag=template.name,
            )
        )
        translated = response.text.strip()
        if not translated:
            raise TranslationError(f"empty translation output for {request.direction}")
        return translated

    def translate_snippets(self, snippets: list[EvidenceSnippet]) -> list[EvidenceSnippet]:
        """Back-translate English snippets (title and body) into Urdu.

        URL, rank, order, and query provenance are preserved; surviving
        snippets are tagged ``en-ur``. A snippet whose translation fails is
        dropped with a warning rather than aborting the batch.
        """
        for snippet in snippets:
            if snippet.language != LANG_EN:
                raise ValueError(f"can only back-translate en snippets, got {snippet.language!r}")
        translated: list[EvidenceSnippet] = []
        for snippet in snippets:
            try:
                title = (
                    self.translate(TranslationRequest(snippet.title, EN_TO_UR))
                    if snippet.title.strip()
                    else snippet.title
                )
                body = (
                    self.translate(TranslationRequest(snippet.snippet_text, EN_TO_UR))
                    if snippet.snippet_text.strip()
                    else snippet.snippet_text
                )
            except TranslationError as exc:
                logger.warning("dropping snippet %s: %s", snippet.url, exc)
                continue
            translated.append(
                dataclasses.replace(
                    snippet, title=title, snippet_text=body, language=LANG_EN_UR
                )
            )
        return translated
