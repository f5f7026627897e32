"""Shared test fixtures: deterministic mock worlds for the pipeline.

``build_world`` assembles a chat transcript plus a search fixture for a list
of claim specs, so pipeline and CLI tests drive the full stack offline. The
transcript covers query generation, verification, and (when English hits are
present) the translation round trips.
"""

from __future__ import annotations

import json
from pathlib import Path

from urfact.llm import BackendReply, estimate_tokens
from urfact.pipeline import FactCheckPipeline, RetrievalConfig, THRESHOLDED
from urfact.llm import LLMGateway, PricingTable, TranscriptChatBackend
from urfact.search import FixtureSearchBackend, SearchGateway, normalize_query_text
from urfact.translation import Translator


def hits(prefix: str, n: int, start: int = 0) -> list[dict]:
    """n distinct raw search hits; zero-padded so no title is a substring of another."""
    return [
        {
            "title": f"{prefix} title {i:03d}",
            "snippet": f"{prefix} text {i:03d}",
            "url": f"https://example.com/{prefix}/{i}",
        }
        for i in range(start, start + n)
    ]


def query_pair_texts(index: int, text: str) -> tuple[str, str]:
    return f"سوال {index}: {text}", f"بیان {index}: {text}"


def verdict_json(label: bool, correction: str | None = None) -> str:
    return json.dumps(
        {
            "label": label,
            "reasoning": "شواہد کی بنیاد پر فیصلہ کیا گیا۔",
            "correction": correction,
        },
        ensure_ascii=False,
    )


def build_world(specs: list[dict], source_text: str | None = None) -> dict:
    """Build transcript entries and a search fixture for claim specs.

    Spec keys (all optional except ``text``):
      text            claim text
      ur1 / ur2       Urdu hits per query: an int count or an explicit hit list
      en1 / en2       English hits per query, enabling the translated route
      label           canned verdict label (default True)
      correction      canned correction for false verdicts
      verdict_raw     raw verifier reply overriding the canned judgment
      query_raw       raw query-generation reply (or list of replies)
    """
    entries: list[dict] = []
    search_entries: list[dict] = []
    claim_texts = [spec["text"] for spec in specs]
    if source_text is not None:
        entries.append(
            {
                "template": "claim_extraction",
                "contains": source_text,
                "response": json.dumps(claim_texts, ensure_ascii=False),
            }
        )

    def as_hits(value, prefix):
        if isinstance(value, int):
            return hits(prefix, value)
        return value or []

    for i, spec in enumerate(specs):
        text = spec["text"]
        q1, q2 = query_pair_texts(i, text)
        if "query_raw" in spec:
            raw = spec["query_raw"]
            entry = {"template": "query_generation", "contains": text}
            if isinstance(raw, list):
                entry["responses"] = raw
            else:
                entry["response"] = raw
            entries.append(entry)
        else:
            entries.append(
                {
                    "template": "query_generation",
                    "contains": text,
                    "response": json.dumps([q1, q2], ensure_ascii=False),
                }
            )
        ur1 = as_hits(spec.get("ur1", 0), f"u{i}a")
        ur2 = as_hits(spec.get("ur2", 0), f"u{i}b")
        search_entries.append({"text": q1, "language": "ur", "results": ur1})
        search_entries.append({"text": q2, "language": "ur", "results": ur2})

        if "en1" in spec or "en2" in spec:
            en1 = as_hits(spec.get("en1", 0), f"e{i}a")
            en2 = as_hits(spec.get("en2", 0), f"e{i}b")
            eq1, eq2 = f"en question {i}", f"en statement {i}"
            entries.append({"template": "translate_ur_en", "contains": q1, "response": eq1})
            entries.append({"template": "translate_ur_en", "contains": q2, "response": eq2})
            search_entries.append({"text": eq1, "language": "en", "results": en1})
            search_entries.append({"text": eq2, "language": "en", "results": en2})
            for hit in en1 + en2:
                entries.append(
                    {
                        "template": "translate_en_ur",
                        "contains": hit["title"],
                        "response": spec.get("title_translation", "اردو ") + hit["title"],
                    }
                )
                entries.append(
                    {
                        "template": "translate_en_ur",
                        "contains": hit["snippet"],
                        "response": spec.get("body_translation", "اردو ") + hit["snippet"],
                    }
                )

        if "verdict_raw" in spec:
            raw = spec["verdict_raw"]
            entry = {"template": "verification", "contains": text}
            if isinstance(raw, list):
                entry["responses"] = raw
            else:
                entry["response"] = raw
            entries.append(entry)
        else:
            entries.append(
                {
                    "template": "verification",
                    "contains": text,
                    "response": verdict_json(spec.get("label", True), spec.get("correction")),
                }
            )

    mapping = {
        (entry["language"], normalize_query_text(entry["text"])): entry["results"]
        for entry in search_entries
    }
    return {
        "source_text": source_text,
        "entries": entries,
        "search": mapping,
        "search_entries": search_entries,
        "specs": specs,
    }


def make_pipeline(
    world: dict,
    tau: int = 5,
    strategy: str = THRESHOLDED,
    workers: int = 4,
    requested_results: int = 10,
    pricing: PricingTable | None = None,
    unit_cost: float = 0.00105,
    model_id: str = "test-model",
):
    """Assemble an offline pipeline over a built world.

    Returns (pipeline, chat_backend, search_backend) so tests can inspect the
    raw call logs.
    """
    chat_backend = TranscriptChatBackend(world["entries"])
    search_backend = FixtureSearchBackend(world["search"])
    llm = LLMGateway(chat_backend, pricing=pricing)
    search = SearchGateway(search_backend, unit_cost=unit_cost)
    translator = Translator(llm, model_id=model_id)
    pipeline = FactCheckPipeline(
        llm,
        search,
        translator,
        model_id=model_id,
        config=RetrievalConfig(strategy=strategy, tau=tau, requested_results=requested_results),
        workers=workers,
        clock=lambda: 0.0,
    )
    return pipeline, chat_backend, search_backend


def write_world_files(directory: Path, world: dict) -> tuple[Path, Path]:
    """Write the world as transcript and search fixture files for CLI runs."""
    directory.mkdir(parents=True, exist_ok=True)
    transcript_path = directory / "transcript.json"
    transcript_path.write_text(
        json.dumps({"schema_version": 1, "entries": world["entries"]}, ensure_ascii=False, indent=2),
        encoding="utf-8",
    )
    search_path = directory / "search.json"
    search_path.write_text(
        json.dumps(
            {"schema_version": 1, "queries": world["search_entries"]},
            ensure_ascii=False,
            indent=2,
        ),
        encoding="utf-8",
    )
    return transcript_path, search_path


def five_claim_world() -> dict:
    """The canonical five-claim fixture: claims 3 and 4 fall below tau=5."""
    # Claim texts deliberately differ from the few-shot examples embedded in
    # the prompt templates, so substring matching stays unambiguous.
    specs = [
        {"text": "لاہور صوبہ پنجاب کا دارالحکومت ہے۔", "ur1": 4, "ur2": 2, "label": True},
        {"text": "دریائے سندھ پاکستان کا سب سے طویل دریا ہے۔", "ur1": 3, "ur2": 2, "label": True},
        {"text": "کے ٹو دنیا کی دوسری بلند ترین چوٹی ہے۔", "ur1": 5, "ur2": 3, "label": True},
        {
            "text": "قائد اعظم کی وفات 1950 میں ہوئی۔",
            "ur1": 1,
            "ur2": 1,
            "en1": 3,
            "en2": 2,
            "label": False,
            "correction": "قائد اعظم کی وفات 1948 میں ہوئی۔",
        },
        {"text": "شاہین آباد گوجرانوالہ کا ایک علاقہ ہے۔", "ur1": 0, "ur2": 0, "en1": 2, "en2": 0, "label": True},
    ]
    text = " ".join(spec["text"] for spec in specs)
    return build_world(specs, source_text=text)


class EchoChatBackend:
    """Programmable double: replies with a function of the prompt's last line.

    Used by property tests that would otherwise need thousands of transcript
    entries; the default function echoes the rendered prompt's trailing
    segment, which for the translation prompts is exactly the input text.
    """

    def __init__(self, reply_fn=None):
        self.calls: list[tuple[str | None, str]] = []
        self.reply_fn = reply_fn or (lambda tag, prompt: "X " + prompt.rsplit("\n\n", 1)[-1])

    def complete(self, request) -> BackendReply:
        self.calls.append((request.tag, request.user_text))
        text = self.reply_fn(request.tag, request.user_text)
        return BackendReply(
            text=text,
            input_tokens=estimate_tokens(request.user_text),
            output_tokens=estimate_tokens(text),
        )


def write_jsonl(path: Path, rows: list[dict]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row, ensure_ascii=False) + "\n")
    return path


def claim_rows(n_true: int, n_false: int, source: str = "other", prefix: str = "c") -> list[dict]:
    rows = []
    for i in range(n_true):
        rows.append({"id": f"{prefix}-t{i}", "claim": f"درست دعویٰ {prefix} {i}", "label": True, "source": source})
    for i in range(n_false):
        rows.append({"id": f"{prefix}-f{i}", "claim": f"غلط دعویٰ {prefix} {i}", "label": False, "source": source})
    return rows
