"""Prompt templates for the pipeline agents, translators, and dataset curation.

Templates are versioned assets: the text is exact and rendering substitutes
only bare ``{name}`` placeholder tokens, leaving everything else verbatim
(JSON examples inside prompts are untouched because their braces never wrap a
bare identifier). :func:`asset_hashes` exposes SHA-256 digests of every
template for run manifests.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass

from .llm import FREE_TEXT, ITEMIZED_LIST, LABELED_JUDGMENT, OUTPUT_SHAPES

_PLACEHOLDER_RE = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")


class PromptError(ValueError):
    """Raised when rendering a template with unbound placeholders."""


@dataclass(frozen=True)
class PromptTemplate:
    """A named prompt asset with typed output shape."""

    name: str
    text: str
    output_shape: str

    def __post_init__(self) -> None:
        if self.output_shape not in OUTPUT_SHAPES:
            raise ValueError(f"unknown output shape {self.output_shape!r}")

    @property
    def placeholders(self) -> tuple[str, ...]:
        seen: list[str] = []
        for name in _PLACEHOLDER_RE.findall(self.text):
            if name not in seen:
                seen.append(name)
        return tuple(seen)

    def render(self, **bindings: object) -> str:
        """Substitute placeholder tokens; the rest of the template is verbatim.

        Unbound placeholders raise :class:`PromptError` naming them; extra
        bindings are ignored. Substitution is single-pass, so placeholder-like
        text inside bound values is never re-expanded.
        """
        missing = [name for name in self.placeholders if name not in bindings]
        if missing:
            raise PromptError(f"unbound placeholder(s): {', '.join(missing)}")
        return _PLACEHOLDER_RE.sub(lambda m: str(bindings[m.group(1)]), self.text)


CLAIM_EXTRACTION = PromptTemplate(
    name="claim_extraction",
    output_shape=ITEMIZED_LIST,
    text="""You are given a piece of text in Urdu. Your task is to identify every atomic, check-worthy factual claim the text makes and list each one as a single self-contained Urdu sentence.

Rules:
1. Each claim must state exactly one verifiable fact about the world.
2. Resolve all pronouns and references: every claim must be understandable on its own, naming entities explicitly.
3. Skip opinions, questions, instructions, and purely subjective statements.
4. Keep each claim in Urdu, phrased as a short declarative sentence.
5. Respond with a JSON array of strings and nothing else. If the text contains no check-worthy claims, respond with [].

Examples:

Text: پاکستان کا دارالحکومت اسلام آباد ہے اور یہ شہر 1960 کی دہائی میں تعمیر کیا گیا۔
Response: ["پاکستان کا دارالحکومت اسلام آباد ہے۔", "اسلام آباد شہر 1960 کی دہائی میں تعمیر کیا گیا۔"]

Text: البرٹ آئن سٹائن نے 1921 میں طبیعیات کا نوبل انعام جیتا۔ انہوں نے نظریہ اضافیت پیش کیا۔
Response: ["البرٹ آئن سٹائن نے 1921 میں طبیعیات کا نوبل انعام جیتا۔", "البرٹ آئن سٹائن نے نظریہ اضافیت پیش کیا۔"]

Text: مجھے لگتا ہے کہ لاہور کا موسم بہت خوشگوار ہوتا ہے۔
Response: []

Text: {input}
Response:""",
)


QUERY_GENERATION = PromptTemplate(
    name="query_generation",
    output_shape=ITEMIZED_LIST,
    text="""You are given a factual claim in Urdu. Generate exactly two Urdu web-search queries for verifying the claim:
1. A question that asks about the fact without revealing the claimed answer.
2. A direct statement of the claim itself, suitable as a keyword query.

Respond with a JSON array containing exactly two strings, the question first and the statement second. DO NOT RESPOND WITH ANYTHING ELSE.

Examples:

Claim: پاکستان کا دارالحکومت اسلام آباد ہے۔
Response: ["پاکستان کا دارالحکومت کون سا شہر ہے؟", "پاکستان کا دارالحکومت اسلام آباد ہے"]

Claim: ماؤنٹ ایورسٹ دنیا کا بلند ترین پہاڑ ہے۔
Response: ["دنیا کا بلند ترین پہاڑ کون سا ہے؟", "ماؤنٹ ایورسٹ دنیا کا بلند ترین پہاڑ ہے"]

Claim: {claim}
Response:""",
)


VERIFICATION = PromptTemplate(
    name="verification",
    output_shape=LABELED_JUDGMENT,
    text="""You are given a factual claim in Urdu together with evidence snippets gathered from a web search. Decide whether the claim is factually true or false.

Instructions:
1. Judge the claim strictly against the evidence. If the evidence is empty or insufficient, fall back on your own knowledge and still give your best judgment.
2. Explain your reasoning in Urdu.
3. If the claim is false, provide a corrected version of the claim in Urdu; if it is true, set "correction" to null.
4. Respond with a single JSON object of the form {"label": true or false, "reasoning": "...", "correction": "..." or null} and nothing else.

Examples:

Claim: پاکستان کا دارالحکومت کراچی ہے۔
Evidence:
[1] اسلام آباد: اسلام آباد پاکستان کا دارالحکومت ہے۔ (https://ur.wikipedia.org/wiki/Islamabad)
Response: {"label": false, "reasoning": "شواہد کے مطابق پاکستان کا دارالحکومت اسلام آباد ہے، کراچی نہیں۔", "correction": "پاکستان کا دارالحکومت اسلام آباد ہے۔"}

Claim: ماؤنٹ ایورسٹ دنیا کا بلند ترین پہاڑ ہے۔
Evidence:
[1] ماؤنٹ ایورسٹ: ماؤنٹ ایورسٹ سطح سمندر سے 8848 میٹر بلند، دنیا کی بلند ترین چوٹی ہے۔ (https://ur.wikipedia.org/wiki/Everest)
Response: {"label": true, "reasoning": "شواہد تصدیق کرتے ہیں کہ ماؤنٹ ایورسٹ دنیا کا بلند ترین پہاڑ ہے۔", "correction": null}

Claim: {claim}
Evidence:
{evidence}
Response:""",
)


TRANSLATE_UR_EN = PromptTemplate(
    name="translate_ur_en",
    output_shape=FREE_TEXT,
    text="""You are given a piece of text in Urdu. Your task is to translate it into English. The translation should be accurate and maintain the original meaning of the text. Please ensure that the translation is grammatically correct and coherent in English.
DO NOT RESPOND WITH ANYTHING ELSE. ADDING ANY OTHER EXTRA NOTES THAT VIOLATE THE RESPONSE FORMAT IS BANNED.

{input}""",
)


TRANSLATE_EN_UR = PromptTemplate(
    name="translate_en_ur",
    output_shape=FREE_TEXT,
    text="""You are given a piece of text in English. Your task is to translate it into Urdu. The translation should be accurate and maintain the original meaning of the text. Please ensure that the translation is grammatically correct and coherent in Urdu.
DO NOT RESPOND WITH ANYTHING ELSE. ADDING ANY OTHER EXTRA NOTES THAT VIOLATE THE RESPONSE FORMAT IS BANNED.

{input}""",
)


DATASET_PRE_TRANSLATION = PromptTemplate(
    name="dataset_pre_translation",
    output_shape=FREE_TEXT,
    text="""You are given an English record from a fact-checking dataset. Your task is to translate it into formal, grammatically correct Urdu.

Translation guidelines:
1. Proper nouns are transliterated into Urdu script, not translated.
2. Acronyms stay in Latin script exactly as written (for example: NASA, WHO) and are placed so the sentence reads naturally right-to-left.
3. Numerals and dates keep Western digits (for example: 1947, 8848) even inside right-to-left text.
4. Technical terms with no established Urdu form are transliterated.
5. Preserve the meaning exactly; do not add, drop, or soften any factual content.
6. Respond with the Urdu translation only. DO NOT RESPOND WITH ANYTHING ELSE.

{exemplars}Text: {input}
Urdu:""",
)


ALL_TEMPLATES: dict[str, PromptTemplate] = {
    template.name: template
    for template in (
        CLAIM_EXTRACTION,
        QUERY_GENERATION,
        VERIFICATION,
        TRANSLATE_UR_EN,
        TRANSLATE_EN_UR,
        DATASET_PRE_TRANSLATION,
    )
}


def asset_hashes() -> dict[str, str]:
    """SHA-256 of every prompt asset, recorded in run manifests."""
    return {
        name: hashlib.sha256(template.text.encode("utf-8")).hexdigest()
        for name, template in sorted(ALL_TEMPLATES.items())
    }
