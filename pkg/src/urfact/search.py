"""SERP-style web-search gateway: snippet extraction, URL deduplication,
persistent caching, and per-query cost accounting.

Cache keys are a deterministic function of (whitespace-normalized casefolded
query text, language, requested result count). Lookups are single-flight per
key, so the number of billed backend calls equals the number of distinct
uncached keys exercised regardless of thread scheduling. The disk cache is an
append-only JSONL file; each line is {"key": ..., "query": ..., "language":
..., "results": [...]} and later lines for the same key win.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable
from urllib.parse import urlsplit, urlunsplit

import requests

from .llm import CostLedger

logger = logging.getLogger(__name__)

LANG_UR = "ur"
LANG_EN = "en"
LANG_EN_UR = "en-ur"  # retrieved in English, then translated back to Urdu
QUERY_LANGUAGES = (LANG_UR, LANG_EN)
SNIPPET_LANGUAGES = (LANG_UR, LANG_EN, LANG_EN_UR)

DEFAULT_REQUESTED_RESULTS = 10
DEFAULT_SEARCH_UNIT_COST = 0.00105  # currency units per billed query


class SearchError(Exception):
    """Base error for search failures."""


class SearchAuthenticationError(SearchError):
    """Credentials or quota rejected; never retried."""


class TransientSearchError(SearchError):
    """Transport or 5xx-class failure that is safe to retry."""


class SearchRetriesExhaustedError(SearchError):
    """All retry attempts failed."""


class SearchFixtureError(SearchError):
    """A mock backend received a query it has no canned results for."""


@dataclass(frozen=True)
class SearchQuery:
    """One web-search request in a specific language."""

    text: str
    language: str
    requested_results: int = DEFAULT_REQUESTED_RESULTS
    locale: str | None = None

    def __post_init__(self) -> None:
        if not self.text or not self.text.strip():
            raise ValueError("query text must be non-empty")
        if self.language not in QUERY_LANGUAGES:
            raise ValueError(f"query language must be one of {QUERY_LANGUAGES}")
        if not 1 <= self.requested_results <= 20:
            raise ValueError("requested_results must be in [1, 20]")


@dataclass(frozen=True)
class EvidenceSnippet:
    """A (title, text, URL, rank) search hit with language provenance."""

    title: str
    snippet_text: str
    url: str
    rank: int
    language: str
    query_id: str

    def __post_init__(self) -> None:
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if not self.url:
            raise ValueError("snippet url must be non-empty")
        if self.language not in SNIPPET_LANGUAGES:
            raise ValueError(f"snippet language must be one of {SNIPPET_LANGUAGES}")

    def to_dict(self) -> dict:
        return {
            "title": self.title,
            "snippet_text": self.snippet_text,
            "url": self.url,
            "rank": self.rank,
            "language": self.language,
            "query_id": self.query_id,
        }


def normalize_query_text(text: str) -> str:
    """Collapse whitespace runs and casefold so trivial variants share a key."""
    return " ".join(text.split()).casefold()


def cache_key(query: SearchQuery) -> str:
    """Deterministic opaque key over (normalized text, language, result count)."""
    payload = json.dumps(
        [normalize_query_text(query.text), query.language, query.requested_results]
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def normalize_url(url: str) -> str:
    """Canonical URL form used for deduplication."""
    parts = urlsplit(url.strip())
    path = parts.path.rstrip("/") or "/"
    return urlunsplit((parts.scheme.lower(), parts.netloc.lower(), path, parts.query, ""))


class MemorySearchCache:
    """In-process cache; used when no persistent cache path is configured."""

    def __init__(self) -> None:
        self._store: dict[str, list[dict]] = {}
        self._lock = threading.Lock()

    def get(self, key: str) -> list[dict] | None:
        with self._lock:
            hits = self._store.get(key)
            return [dict(h) for h in hits] if hits is not None else None

    def put(self, key: str, hits: list[dict], meta: dict | None = None) -> None:
        with self._lock:
            self._store[key] = [dict(h) for h in hits]


class DiskSearchCache:
    """Persistent append-only JSONL cache of raw search hits."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._store: dict[str, list[dict]] = {}
        self._lock = threading.Lock()
        if self.path.exists():
            with self.path.open("r", encoding="utf-8") as handle:
                for line_no, line in enumerate(handle, start=1):
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        entry = json.loads(line)
                        self._store[entry["key"]] = entry["results"]
                    except (ValueError, KeyError) as exc:
                        raise SearchError(
                            f"corrupt search cache {self.path}:{line_no}: {exc}"
                        ) from exc

    def get(self, key: str) -> list[dict] | None:
        with self._lock:
            hits = self._store.get(key)
            return [dict(h) for h in hits] if hits is not None else None

    def put(self, key: str, hits: list[dict], meta: dict | None = None) -> None:
        entry = {"key": key, **(meta or {}), "results": hits}
        with self._lock:
            self._store[key] = [dict(h) for h in hits]
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as handle:
                handle.write(json.dumps(entry, ensure_ascii=False) + "\n")


class HttpSearchBackend:
    """Live SERP-style HTTP backend returning raw organic hits."""

    def __init__(
        self,
        endpoint: str,
        api_key: str,
        session: requests.Session | None = None,
        timeout: float = 30.0,
    ):
        self.endpoint = endpoint
        self.api_key = api_key
        self.session = session or requests.Session()
        self.timeout = timeout

    def search(self, query: SearchQuery) -> list[dict]:
        payload: dict = {
            "q": query.text,
            "num": query.requested_results,
            "hl": query.language,
        }
        if query.locale:
            payload["gl"] = query.locale
        try:
            response = self.session.post(
                self.endpoint,
                json=payload,
                headers={"X-API-KEY": self.api_key},
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise TransientSearchError(f"transport failure: {exc}") from exc
        if response.status_code in (401, 403):
            raise SearchAuthenticationError(f"authentication failed ({response.status_code})")
        if response.status_code == 429 or response.status_code >= 500:
            raise TransientSearchError(f"backend returned {response.status_code}")
        if response.status_code >= 400:
            raise SearchError(f"backend returned {response.status_code}: {response.text[:200]}")
        data = response.json()
        hits = []
        for item in data.get("organic", []):
            url = item.get("link") or item.get("url") or ""
            if not url:
                continue
            hits.append(
                {
                    "title": item.get("title", ""),
                    "snippet": item.get("snippet", ""),
                    "url": url,
                }
            )
        return hits


class FixtureSearchBackend:
    """Deterministic offline backend serving canned results from a fixture.

    The fixture maps (language, normalized query text) to raw hit lists.
    Unknown queries raise :class:`SearchFixtureError` so a mock run can never
    fall through to the network.

    Fixture file format: {"queries": [{"text": ..., "language": ...,
    "results": [{"title": ..., "snippet": ..., "url": ...}, ...]}]}
    """

    def __init__(self, mapping: dict[tuple[str, str], list[dict]]):
        self.mapping = {key: [dict(h) for h in hits] for key, hits in mapping.items()}
        self.calls: list[tuple[str, str]] = []
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> "FixtureSearchBackend":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        mapping: dict[tuple[str, str], list[dict]] = {}
        for entry in data["queries"]:
            key = (entry["language"], normalize_query_text(entry["text"]))
            mapping[key] = entry.get("results", [])
        return cls(mapping)

    def search(self, query: SearchQuery) -> list[dict]:
        key = (query.language, normalize_query_text(query.text))
        with self._lock:
            self.calls.append(key)
        if key not in self.mapping:
            raise SearchFixtureError(
                f"no fixture results for language={query.language!r} text={query.text!r}"
            )
        return [dict(h) for h in self.mapping[key]]


class SearchGateway:
    """Search client with caching, URL deduplication, retries, and billing.

    Results are deduplicated by normalized URL (cardinalities downstream count
    post-deduplication snippets) and re-ranked 1..n. Cache hits bill nothing;
    ``bypass_cache`` forces a fresh billed call for freshness-sensitive runs
    while still refreshing the cache.
    """

    def __init__(
        self,
        backend,
        cache=None,
        ledger: CostLedger | None = None,
        unit_cost: float = DEFAULT_SEARCH_UNIT_COST,
        bypass_cache: bool = False,
        max_attempts: int = 3,
        backoff_seconds: float = 1.0,
        sleep: Callable[[float], None] = time.sleep,
        rng: random.Random | None = None,
    ):
        self.backend = backend
        self.cache = cache if cache is not None else MemorySearchCache()
        self.ledger = ledger if ledger is not None else CostLedger()
        self.unit_cost = unit_cost
        self.bypass_cache = bypass_cache
        self.max_attempts = max_attempts
        self.backoff_seconds = backoff_seconds
        self._sleep = sleep
        self._rng = rng or random.Random()
        self._key_locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def bound_to(self, ledger: CostLedger) -> "SearchGateway":
        """A view of this gateway that bills to a different ledger.

        Backend, cache, and the single-flight key locks are shared.
        """
        view = SearchGateway.__new__(SearchGateway)
        view.__dict__.update(self.__dict__)
        view.ledger = ledger
        return view

    def _key_lock(self, key: str) -> threading.Lock:
        with self._locks_guard:
            return self._key_locks.setdefault(key, threading.Lock())

    def _call_backend(self, query: SearchQuery) -> list[dict]:
        for attempt in range(self.max_attempts):
            try:
                return self.backend.search(query)
            except TransientSearchError as exc:
                if attempt + 1 >= self.max_attempts:
                    raise SearchRetriesExhaustedError(
                        f"gave up after {self.max_attempts} attempts: {exc}"
                    ) from exc
                delay = self.backoff_seconds * (2 ** attempt) * (0.5 + self._rng.random())
                logger.warning(
                    "transient search failure (attempt %d/%d), retrying in %.1fs: %s",
                    attempt + 1,
                    self.max_attempts,
                    delay,
                    exc,
                )
                self._sleep(delay)
        raise AssertionError("unreachable")

    def search(self, query: SearchQuery) -> list[EvidenceSnippet]:
        """Run one search, serving from cache when possible.

        Returns at most ``requested_results`` snippets with no duplicate URLs
        and ranks ascending from 1. An empty result set is not an error.
        """
        key = cache_key(query)
        with self._key_lock(key):
            hits = None if self.bypass_cache else self.cache.get(key)
            if hits is None:
                hits = self._call_backend(query)
                self.cache.put(
                    key, hits, meta={"query": query.text, "language": query.language}
                )
                self.ledger.add_search_call(self.unit_cost)
        return self._to_snippets(hits, query, key)

    def _to_snippets(
        self, hits: list[dict], query: SearchQuery, key: str
    ) -> list[EvidenceSnippet]:
        snippets: list[EvidenceSnippet] = []
        seen_urls: set[str] = set()
        for hit in hits:
            url = hit.get("url", "")
            if not url:
                logger.warning("dropping search hit without url for query %r", query.text)
                continue
            normalized = normalize_url(url)
            if normalized in seen_urls:
                continue
            seen_urls.add(normalized)
            snippets.append(
                EvidenceSnippet(
                    title=hit.get("title", ""),
                    snippet_text=hit.get("snippet", ""),
                    url=url,
                    rank=len(snippets) + 1,
                    language=query.language,
                    query_id=key[:12],
                )
            )
            if len(snippets) >= query.requested_results:
                break
        return snippets
