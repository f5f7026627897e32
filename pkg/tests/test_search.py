"""Search gateway tests: caching, deduplication, billing, and normalization."""

from __future__ import annotations

import random
import threading

import pytest

from conftest import hits
from urfact.search import (
    DiskSearchCache,
    FixtureSearchBackend,
    SearchFixtureError,
    SearchGateway,
    SearchQuery,
    cache_key,
    normalize_query_text,
    normalize_url,
)


def _gateway(mapping, **kwargs):
    backend = FixtureSearchBackend(mapping)
    return SearchGateway(backend, **kwargs), backend


def _query(text="تازہ خبریں", language="ur", n=10):
    return SearchQuery(text=text, language=language, requested_results=n)


# ---------------------------------------------------------------------------
# Basic search behaviour
# ---------------------------------------------------------------------------


def test_mock_hits_become_ranked_snippets():
    gateway, _ = _gateway({("ur", "تازہ خبریں"): hits("a", 3)})
    snippets = gateway.search(_query())
    assert [s.rank for s in snippets] == [1, 2, 3]
    assert all(s.language == "ur" for s in snippets)
    assert len({s.query_id for s in snippets}) == 1


def test_empty_result_set_is_not_an_error():
    gateway, _ = _gateway({("ur", "تازہ خبریں"): []})
    assert gateway.search(_query()) == []


def test_unexpected_query_raises_fixture_error():
    gateway, _ = _gateway({})
    with pytest.raises(SearchFixtureError):
        gateway.search(_query())


def test_duplicate_urls_deduplicated_and_reranked():
    raw = hits("a", 3) + [dict(hits("a", 1)[0])] + hits("b", 1)
    gateway, _ = _gateway({("ur", "تازہ خبریں"): raw})
    snippets = gateway.search(_query())
    assert len(snippets) == 4
    assert [s.rank for s in snippets] == [1, 2, 3, 4]
    assert len({normalize_url(s.url) for s in snippets}) == 4


def test_url_normalization_variants_count_once():
    raw = [
        {"title": "a", "snippet": "x", "url": "https://Example.com/Path/"},
        {"title": "b", "snippet": "y", "url": "https://example.com/Path"},
    ]
    gateway, _ = _gateway({("ur", "تازہ خبریں"): raw})
    assert len(gateway.search(_query())) == 1


def test_requested_results_caps_output():
    gateway, _ = _gateway({("ur", "تازہ خبریں"): hits("a", 15)})
    assert len(gateway.search(_query(n=5))) == 5


def test_query_validation():
    with pytest.raises(ValueError):
        SearchQuery(text="", language="ur")
    with pytest.raises(ValueError):
        SearchQuery(text="x", language="fr")
    with pytest.raises(ValueError):
        SearchQuery(text="x", language="ur", requested_results=21)


# ---------------------------------------------------------------------------
# Cache keys
# ---------------------------------------------------------------------------


def test_cache_key_deterministic():
    assert cache_key(_query()) == cache_key(_query())


def test_cache_key_distinguishes_language():
    assert cache_key(_query(language="ur")) != cache_key(_query(language="en"))


def test_cache_key_whitespace_normalized():
    padded = SearchQuery(text="  تازہ   خبریں ", language="ur")
    assert cache_key(padded) == cache_key(_query())
    assert normalize_query_text("  A   b ") == "a b"


# ---------------------------------------------------------------------------
# Billing and caching
# ---------------------------------------------------------------------------


def test_cache_hit_performs_no_billed_call():
    gateway, backend = _gateway({("ur", "تازہ خبریں"): hits("a", 2)})
    first = gateway.search(_query())
    second = gateway.search(_query())
    assert gateway.ledger.search_calls == 1
    assert len(backend.calls) == 1
    assert [s.url for s in first] == [s.url for s in second]


def test_hundred_uncached_queries_cost():
    mapping = {("ur", f"query {i:03d}"): hits(f"q{i}", 1) for i in range(100)}
    gateway, _ = _gateway(mapping)
    for i in range(100):
        gateway.search(_query(text=f"query {i:03d}"))
    assert gateway.ledger.search_cost == pytest.approx(0.105, abs=1e-9)
    assert gateway.ledger.search_calls == 100


def test_billed_calls_equal_distinct_uncached_keys():
    rng = random.Random(21)
    pool = [f"query {i}" for i in range(12)]
    mapping = {("ur", normalize_query_text(text)): hits(f"p{i}", 2) for i, text in enumerate(pool)}
    gateway, backend = _gateway(mapping)
    stream = [rng.choice(pool) for _ in range(200)]
    for text in stream:
        gateway.search(_query(text=text))
    distinct = len({normalize_query_text(text) for text in stream})
    assert gateway.ledger.search_calls == distinct
    assert len(backend.calls) == distinct
    assert gateway.ledger.search_cost == pytest.approx(distinct * 0.00105, abs=1e-9)


def test_single_flight_under_concurrency():
    mapping = {("ur", "تازہ خبریں"): hits("a", 2)}
    gateway, backend = _gateway(mapping)
    threads = [threading.Thread(target=lambda: gateway.search(_query())) for _ in range(8)]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
    assert gateway.ledger.search_calls == 1
    assert len(backend.calls) == 1


def test_bypass_cache_forces_billed_calls():
    gateway, backend = _gateway({("ur", "تازہ خبریں"): hits("a", 1)}, bypass_cache=True)
    gateway.search(_query())
    gateway.search(_query())
    assert gateway.ledger.search_calls == 2
    assert len(backend.calls) == 2


def test_bound_to_bills_other_ledger():
    from urfact.llm import CostLedger

    gateway, _ = _gateway({("ur", "تازہ خبریں"): hits("a", 1)})
    other = CostLedger()
    gateway.bound_to(other).search(_query())
    assert other.search_calls == 1
    assert gateway.ledger.search_calls == 0


# ---------------------------------------------------------------------------
# Disk cache
# ---------------------------------------------------------------------------


def test_disk_cache_persists_across_instances(tmp_path):
    cache_path = tmp_path / "cache" / "search.jsonl"
    mapping = {("ur", "تازہ خبریں"): hits("a", 2)}

    gateway, _ = _gateway(mapping, cache=DiskSearchCache(cache_path))
    gateway.search(_query())
    assert gateway.ledger.search_calls == 1

    # A fresh gateway over an empty backend must serve entirely from disk.
    gateway2, backend2 = _gateway({}, cache=DiskSearchCache(cache_path))
    snippets = gateway2.search(_query())
    assert len(snippets) == 2
    assert gateway2.ledger.search_calls == 0
    assert backend2.calls == []


def test_fixture_backend_from_file(tmp_path):
    path = tmp_path / "search.json"
    path.write_text(
        '{"queries": [{"text": "  Mixed   Case ", "language": "en", "results": []}]}',
        encoding="utf-8",
    )
    backend = FixtureSearchBackend.from_file(path)
    assert backend.search(SearchQuery(text="mixed case", language="en")) == []
