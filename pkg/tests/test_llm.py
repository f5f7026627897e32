"""Gateway, ledger, pricing, prompt rendering, and structured parsing tests."""

from __future__ import annotations

import random

import pytest

from urfact.llm import (
    AuthenticationError,
    BackendReply,
    ChatRequest,
    CostLedger,
    LLMGateway,
    ModelPricing,
    MockTranscriptError,
    PricingTable,
    RetriesExhaustedError,
    StructuredParseError,
    TranscriptChatBackend,
    TransientBackendError,
    parse_structured,
    request_fingerprint,
)
from urfact.prompts import PromptError, PromptTemplate, TRANSLATE_UR_EN, asset_hashes


def _request(text="سوال", tag=None, **kwargs):
    return ChatRequest(model_id="test-model", user_text=text, tag=tag, **kwargs)


def _pricing(input_price=1e-6, output_price=2e-6):
    return PricingTable(
        {
            "test-model": ModelPricing(
                model_id="test-model",
                price_per_input_token=input_price,
                price_per_output_token=output_price,
            )
        }
    )


# ---------------------------------------------------------------------------
# Gateway completion and billing
# ---------------------------------------------------------------------------


def test_mock_canned_reply_and_ledger_increment():
    backend = TranscriptChatBackend([{"contains": "سوال", "response": "جی ہاں"}])
    gateway = LLMGateway(backend)
    response = gateway.complete(_request())
    assert response.text == "جی ہاں"
    assert gateway.ledger.llm_calls == 1
    assert gateway.ledger.output_tokens > 0


def test_cost_arithmetic_from_pricing():
    backend = TranscriptChatBackend(
        [{"contains": "سوال", "response": "جواب", "input_tokens": 1000, "output_tokens": 500}]
    )
    gateway = LLMGateway(backend, pricing=_pricing())
    gateway.complete(_request())
    assert gateway.ledger.llm_cost == pytest.approx(0.002, abs=1e-12)


def test_zero_token_usage_costs_nothing():
    backend = TranscriptChatBackend(
        [{"contains": "سوال", "response": "", "input_tokens": 0, "output_tokens": 0}]
    )
    gateway = LLMGateway(backend, pricing=_pricing())
    gateway.complete(_request())
    assert gateway.ledger.llm_cost == 0.0
    assert gateway.ledger.llm_calls == 1


def test_unknown_model_billed_zero():
    backend = TranscriptChatBackend([{"response": "ok"}])
    gateway = LLMGateway(backend, pricing=PricingTable())
    gateway.complete(_request())
    assert gateway.ledger.llm_cost == 0.0


def test_ledger_additivity_over_random_usage():
    rng = random.Random(5)
    pricing = _pricing(3.7e-7, 1.9e-6)
    entries = []
    expected = 0.0
    usages = []
    for i in range(200):
        tokens_in, tokens_out = rng.randint(0, 5000), rng.randint(0, 4000)
        usages.append((tokens_in, tokens_out))
        expected += tokens_in * 3.7e-7 + tokens_out * 1.9e-6
        entries.append(
            {"contains": f"call {i:04d}", "response": "ok", "input_tokens": tokens_in, "output_tokens": tokens_out}
        )
    gateway = LLMGateway(TranscriptChatBackend(entries), pricing=pricing)
    for i in range(200):
        gateway.complete(_request(text=f"call {i:04d}"))
    assert gateway.ledger.llm_cost == pytest.approx(expected, abs=1e-9)
    assert gateway.ledger.input_tokens == sum(u[0] for u in usages)


def test_ledger_merge_and_total():
    first, second = CostLedger(), CostLedger()
    first.add_llm_call(0.5, 10, 5)
    second.add_search_call(0.25)
    first.merge(second)
    assert first.total == pytest.approx(0.75)
    assert first.llm_calls == 1 and first.search_calls == 1


def test_ledger_rejects_negative_increments():
    ledger = CostLedger()
    with pytest.raises(ValueError):
        ledger.add_llm_call(-0.1, 0, 0)


def test_truncated_flag_when_output_hits_limit():
    backend = TranscriptChatBackend(
        [{"contains": "سوال", "response": "long", "output_tokens": 10}]
    )
    gateway = LLMGateway(backend)
    response = gateway.complete(_request(max_output_tokens=10))
    assert response.truncated is True


# ---------------------------------------------------------------------------
# Retry policy
# ---------------------------------------------------------------------------


class FlakyBackend:
    def __init__(self, failures, exc=TransientBackendError):
        self.failures = failures
        self.exc = exc
        self.attempts = 0

    def complete(self, request):
        self.attempts += 1
        if self.attempts <= self.failures:
            raise self.exc("boom")
        return BackendReply(text="ok", input_tokens=1, output_tokens=1)


def test_transient_failures_retried_until_success():
    backend = FlakyBackend(failures=2)
    sleeps = []
    gateway = LLMGateway(backend, sleep=sleeps.append, rng=random.Random(0))
    assert gateway.complete(_request()).text == "ok"
    assert backend.attempts == 3
    assert len(sleeps) == 2
    assert sleeps[1] > sleeps[0] * 0.5  # backoff grows (modulo jitter)


def test_retries_exhausted_raises():
    backend = FlakyBackend(failures=10)
    gateway = LLMGateway(backend, sleep=lambda s: None)
    with pytest.raises(RetriesExhaustedError):
        gateway.complete(_request())
    assert backend.attempts == 3
    assert gateway.ledger.llm_calls == 0


def test_auth_failures_never_retried():
    backend = FlakyBackend(failures=10, exc=AuthenticationError)
    gateway = LLMGateway(backend, sleep=lambda s: None)
    with pytest.raises(AuthenticationError):
        gateway.complete(_request())
    assert backend.attempts == 1


# ---------------------------------------------------------------------------
# Transcript backend
# ---------------------------------------------------------------------------


def test_transcript_unexpected_request_raises():
    backend = TranscriptChatBackend([{"contains": "registered", "response": "ok"}])
    with pytest.raises(MockTranscriptError):
        backend.complete(_request(text="something else"))


def test_transcript_template_routing():
    backend = TranscriptChatBackend(
        [
            {"template": "a", "contains": "دعویٰ", "response": "first"},
            {"template": "b", "contains": "دعویٰ", "response": "second"},
        ]
    )
    assert backend.complete(_request(text="دعویٰ", tag="b")).text == "second"


def test_transcript_fingerprint_match():
    request = _request(text="exact text", tag="t")
    backend = TranscriptChatBackend(
        [{"fingerprint": request_fingerprint(request), "response": "matched"}]
    )
    assert backend.complete(request).text == "matched"


def test_transcript_response_sequence_consumed_per_call():
    backend = TranscriptChatBackend([{"contains": "x", "responses": ["one", "two"]}])
    gateway = LLMGateway(backend)
    assert gateway.complete(_request(text="x")).text == "one"
    assert gateway.complete(_request(text="x")).text == "two"
    assert gateway.complete(_request(text="x")).text == "two"  # last reply repeats


def test_transcript_injected_errors():
    backend = TranscriptChatBackend([{"contains": "x", "error": "transient"}])
    gateway = LLMGateway(backend, sleep=lambda s: None)
    with pytest.raises(RetriesExhaustedError):
        gateway.complete(_request(text="x"))


def test_bound_to_shares_backend_but_not_ledger():
    backend = TranscriptChatBackend([{"response": "ok"}])
    gateway = LLMGateway(backend)
    other = CostLedger()
    view = gateway.bound_to(other)
    view.complete(_request())
    assert other.llm_calls == 1
    assert gateway.ledger.llm_calls == 0


# ---------------------------------------------------------------------------
# Prompt rendering
# ---------------------------------------------------------------------------


def test_translator_prompt_renders_with_banner():
    rendered = TRANSLATE_UR_EN.render(input="یہ ایک جملہ ہے۔")
    assert "DO NOT RESPOND WITH ANYTHING ELSE" in rendered
    assert rendered.endswith("یہ ایک جملہ ہے۔")


def test_placeholder_free_template_renders_verbatim():
    template = PromptTemplate(name="t", text="fixed text, no slots", output_shape="free-text")
    assert template.render() == "fixed text, no slots"


def test_missing_binding_error_names_placeholder():
    with pytest.raises(PromptError, match="input"):
        TRANSLATE_UR_EN.render()


def test_render_deterministic_and_single_pass():
    template = PromptTemplate(name="t", text="value: {input}", output_shape="free-text")
    first = template.render(input="{input} stays literal")
    assert first == template.render(input="{input} stays literal")
    assert first == "value: {input} stays literal"


def test_extra_bindings_ignored():
    template = PromptTemplate(name="t", text="{a}", output_shape="free-text")
    assert template.render(a="1", b="2") == "1"


def test_asset_hashes_cover_all_templates():
    hashes = asset_hashes()
    assert set(hashes) == {
        "claim_extraction",
        "query_generation",
        "verification",
        "translate_ur_en",
        "translate_en_ur",
        "dataset_pre_translation",
    }
    assert all(len(value) == 64 for value in hashes.values())


# ---------------------------------------------------------------------------
# Structured parsing
# ---------------------------------------------------------------------------


def test_parse_fenced_judgment():
    text = 'Here is my answer:\n```json\n{"label": true, "reasoning": "درست ہے"}\n```\nThanks!'
    judgment = parse_structured(text, "labeled-judgment")
    assert judgment == {"label": True, "reasoning": "درست ہے", "correction": None}


def test_parse_bare_query_list():
    items = parse_structured('["پہلا سوال؟", "دوسرا بیان"]', "itemized-list")
    assert items == ["پہلا سوال؟", "دوسرا بیان"]


def test_parse_empty_string_fails():
    with pytest.raises(StructuredParseError):
        parse_structured("", "itemized-list")


def test_parse_error_carries_raw_text():
    with pytest.raises(StructuredParseError) as exc_info:
        parse_structured("no json here at all", "labeled-judgment")
    assert exc_info.value.raw_text == "no json here at all"


def test_parse_object_embedded_in_prose():
    text = 'The verdict is {"label": "False", "reasoning": "غلط", "correction": "درست جملہ"} ok?'
    judgment = parse_structured(text, "labeled-judgment")
    assert judgment["label"] is False
    assert judgment["correction"] == "درست جملہ"


def test_parse_judgment_requires_reasoning():
    with pytest.raises(StructuredParseError, match="reasoning"):
        parse_structured('{"label": true}', "labeled-judgment")


def test_parse_list_rejects_non_strings():
    with pytest.raises(StructuredParseError):
        parse_structured("[1, 2]", "itemized-list")


def test_parse_list_drops_blank_items():
    assert parse_structured('["a", "  ", "b"]', "itemized-list") == ["a", "b"]


def test_parse_free_text_strips():
    assert parse_structured("  متن  \n", "free-text") == "متن"
