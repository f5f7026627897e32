"""Claim and QA dataset handling: loading, label standardization, balancing, summaries.

Dataset files are line-delimited JSON, one record per line, UTF-8 throughout.
Urdu text is stored as plain Unicode with no bidi processing.

Claim record line:   {"id": ..., "claim": ..., "label": true, "source": ..., "original_label": ...}
QA record line:      {"id": ..., "question": ..., "reference_answer": ..., "source": ...}

Binary labels are serialized as JSON booleans (rendered exactly "true"/"false").
Balanced sampling uses the Mersenne Twister PRNG (CPython ``random.Random``)
with selection via ``random.sample`` so balanced sets are reproducible across
runs given the same seed.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

# Pre-standardization label space of the source claim datasets.
SUPPORTED = "supported"
PARTIALLY_SUPPORTED = "partially-supported"
NOT_SUPPORTED = "not-supported"
REFUTED = "refuted"
SOURCE_LABELS = (SUPPORTED, PARTIALLY_SUPPORTED, NOT_SUPPORTED, REFUTED)

CLAIM_SOURCES = ("factcheck-bench", "factool-qa", "bingcheck")
QA_SOURCES = ("simpleqa", "freshqa")
OTHER_SOURCE = "other"


class DatasetError(ValueError):
    """Raised for malformed dataset files or records."""


def parse_source_label(value: str) -> str:
    """Parse a four-way source label, case-insensitively, to its canonical form.

    Accepts space or underscore in place of the canonical hyphen
    (e.g. "Partially Supported" -> "partially-supported").
    """
    canonical = str(value).strip().lower().replace("_", "-").replace(" ", "-")
    if canonical not in SOURCE_LABELS:
        raise DatasetError(f"unknown source label {value!r}")
    return canonical


def standardize_label(original: str) -> bool | None:
    """Map a four-way source label onto the binary scheme.

    supported and partially-supported map to True, refuted to False, and
    not-supported to None (the record is dropped from standardized sets).
    """
    label = parse_source_label(original)
    if label in (SUPPORTED, PARTIALLY_SUPPORTED):
        return True
    if label == REFUTED:
        return False
    return None


def normalize_source(value: str | None, known: tuple[str, ...]) -> str:
    """Canonicalize a source-dataset tag; unknown values map to "other"."""
    if value is None:
        return OTHER_SOURCE
    canonical = str(value).strip().lower().replace("_", "-").replace(" ", "-")
    return canonical if canonical in known else OTHER_SOURCE


@dataclass(frozen=True)
class ClaimRecord:
    """One labeled claim in a claim-verification dataset."""

    id: str
    claim_text: str
    label: bool
    source_dataset: str = OTHER_SOURCE
    original_label: str | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise DatasetError("claim record id must be non-empty")
        if not self.claim_text or not self.claim_text.strip():
            raise DatasetError(f"record {self.id!r}: claim_text must be non-empty")

    def to_row(self) -> dict:
        row = {
            "id": self.id,
            "claim": self.claim_text,
            "label": self.label,
            "source": self.source_dataset,
        }
        if self.original_label is not None:
            row["original_label"] = self.original_label
        return row


@dataclass(frozen=True)
class QARecord:
    """One question (with optional reference answer) in a QA dataset."""

    id: str
    question: str
    reference_answer: str | None = None
    source_dataset: str = OTHER_SOURCE

    def __post_init__(self) -> None:
        if not self.id:
            raise DatasetError("qa record id must be non-empty")
        if not self.question or not self.question.strip():
            raise DatasetError(f"record {self.id!r}: question must be non-empty")

    def to_row(self) -> dict:
        row = {"id": self.id, "question": self.question, "source": self.source_dataset}
        if self.reference_answer is not None:
            row["reference_answer"] = self.reference_answer
        return row


def _iter_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    """Yield (line_number, parsed_object) for every non-blank line of a JSONL file."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise DatasetError(f"{path}:{line_no}: record must be a JSON object")
            yield line_no, obj


def _require_field(obj: dict, name: str, path: Path, line_no: int) -> object:
    if name not in obj or obj[name] is None:
        raise DatasetError(f"{path}:{line_no}: missing required field '{name}'")
    return obj[name]


def _parse_binary(value: object, path: Path, line_no: int) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, str) and value.strip().lower() in ("true", "false"):
        return value.strip().lower() == "true"
    raise DatasetError(f"{path}:{line_no}: label must be true or false, got {value!r}")


def load_claims(path: str | Path) -> list[ClaimRecord]:
    """Load claim records from a JSONL file, in file order.

    Raises DatasetError (naming file, line, and field or id) on schema
    violations or duplicate ids.
    """
    path = Path(path)
    records: list[ClaimRecord] = []
    seen: set[str] = set()
    for line_no, obj in _iter_jsonl(path):
        record_id = str(_require_field(obj, "id", path, line_no))
        if record_id in seen:
            raise DatasetError(f"{path}:{line_no}: duplicate id '{record_id}'")
        seen.add(record_id)
        claim = str(_require_field(obj, "claim", path, line_no))
        label = _parse_binary(_require_field(obj, "label", path, line_no), path, line_no)
        original = obj.get("original_label")
        records.append(
            ClaimRecord(
                id=record_id,
                claim_text=claim,
                label=label,
                source_dataset=normalize_source(obj.get("source"), CLAIM_SOURCES),
                original_label=parse_source_label(original) if original is not None else None,
            )
        )
    return records


def load_qa(path: str | Path) -> list[QARecord]:
    """Load QA records from a JSONL file, in file order."""
    path = Path(path)
    records: list[QARecord] = []
    seen: set[str] = set()
    for line_no, obj in _iter_jsonl(path):
        record_id = str(_require_field(obj, "id", path, line_no))
        if record_id in seen:
            raise DatasetError(f"{path}:{line_no}: duplicate id '{record_id}'")
        seen.add(record_id)
        question = str(_require_field(obj, "question", path, line_no))
        reference = obj.get("reference_answer")
        records.append(
            QARecord(
                id=record_id,
                question=question,
                reference_answer=str(reference) if reference is not None else None,
                source_dataset=normalize_source(obj.get("source"), QA_SOURCES),
            )
        )
    return records


def save_records(records: Iterable[ClaimRecord | QARecord], path: str | Path) -> None:
    """Write records to a JSONL file (one record per line, UTF-8)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record.to_row(), ensure_ascii=False) + "\n")


def standardize_rows(rows: Iterable[tuple[int, dict]], path: Path) -> tuple[list[ClaimRecord], int]:
    """Standardize raw four-label rows into binary ClaimRecords.

    Returns (kept records, number of dropped not-supported rows).
    """
    records: list[ClaimRecord] = []
    seen: set[str] = set()
    dropped = 0
    for line_no, obj in rows:
        record_id = str(_require_field(obj, "id", path, line_no))
        if record_id in seen:
            raise DatasetError(f"{path}:{line_no}: duplicate id '{record_id}'")
        seen.add(record_id)
        claim = str(_require_field(obj, "claim", path, line_no))
        raw_label = str(_require_field(obj, "label", path, line_no))
        try:
            original = parse_source_label(raw_label)
        except DatasetError as exc:
            raise DatasetError(f"{path}:{line_no}: {exc}") from exc
        binary = standardize_label(original)
        if binary is None:
            dropped += 1
            continue
        records.append(
            ClaimRecord(
                id=record_id,
                claim_text=claim,
                label=binary,
                source_dataset=normalize_source(obj.get("source"), CLAIM_SOURCES),
                original_label=original,
            )
        )
    return records, dropped


def standardize_file(in_path: str | Path, out_path: str | Path) -> tuple[int, int]:
    """Standardize a four-label claim file into a binary-label file.

    Returns (records kept, records dropped).
    """
    in_path = Path(in_path)
    records, dropped = standardize_rows(_iter_jsonl(in_path), in_path)
    save_records(records, out_path)
    return len(records), dropped


def balance_sample(
    records: list[ClaimRecord],
    majority_label: bool,
    cap: int,
    seed: int,
) -> list[ClaimRecord]:
    """Downsample the majority label to at most ``cap`` records.

    All records of the non-majority label are retained. Exactly
    min(cap, available) majority-label records are kept, chosen by seeded
    uniform sampling without replacement. Relative input order is preserved
    among the kept records. A cap larger than the supply keeps everything.
    """
    if cap < 0:
        raise ValueError("cap must be >= 0")
    majority_positions = [i for i, record in enumerate(records) if record.label == majority_label]
    keep_count = min(cap, len(majority_positions))
    kept = set(random.Random(seed).sample(majority_positions, keep_count))
    return [
        record
        for i, record in enumerate(records)
        if record.label != majority_label or i in kept
    ]


@dataclass(frozen=True)
class LabelCount:
    """True/false record counts for one source."""

    true: int = 0
    false: int = 0

    @property
    def total(self) -> int:
        return self.true + self.false


@dataclass
class ClaimSummary:
    """Per-source and total label counts over one or more claim files."""

    per_source: dict[str, LabelCount]

    @property
    def totals(self) -> LabelCount:
        return LabelCount(
            true=sum(c.true for c in self.per_source.values()),
            false=sum(c.false for c in self.per_source.values()),
        )

    def to_dict(self) -> dict:
        return {
            "kind": "claims",
            "per_source": {
                name: {"true": c.true, "false": c.false, "total": c.total}
                for name, c in sorted(self.per_source.items())
            },
            "totals": {
                "true": self.totals.true,
                "false": self.totals.false,
                "total": self.totals.total,
            },
        }


@dataclass
class QASummary:
    """Per-source and total sizes over one or more QA files."""

    per_source: dict[str, int]

    @property
    def total(self) -> int:
        return sum(self.per_source.values())

    def to_dict(self) -> dict:
        return {
            "kind": "qa",
            "per_source": dict(sorted(self.per_source.items())),
            "total": self.total,
        }


def summarize_claims(paths: Iterable[str | Path]) -> ClaimSummary:
    """Count true/false claims per source dataset across files."""
    counts: dict[str, list[int]] = {}
    for path in paths:
        for record in load_claims(path):
            bucket = counts.setdefault(record.source_dataset, [0, 0])
            bucket[0 if record.label else 1] += 1
    return ClaimSummary(
        per_source={name: LabelCount(true=t, false=f) for name, (t, f) in counts.items()}
    )


def summarize_qa(paths: Iterable[str | Path]) -> QASummary:
    """Count QA records per source dataset across files."""
    counts: dict[str, int] = {}
    for path in paths:
        for record in load_qa(path):
            counts[record.source_dataset] = counts.get(record.source_dataset, 0) + 1
    return QASummary(per_source=counts)


def format_claim_summary(summary: ClaimSummary) -> str:
    """Render a fixed-width console table of claim counts."""
    lines = [f"{'Dataset':<20}{'#True':>8}{'#False':>8}{'Total':>8}"]
    for name, count in sorted(summary.per_source.items()):
        lines.append(f"{name:<20}{count.true:>8}{count.false:>8}{count.total:>8}")
    totals = summary.totals
    lines.append(f"{'total':<20}{totals.true:>8}{totals.false:>8}{totals.total:>8}")
    return "\n".join(lines)


def format_qa_summary(summary: QASummary) -> str:
    """Render a fixed-width console table of QA counts."""
    lines = [f"{'Dataset':<20}{'Size':>8}"]
    for name, size in sorted(summary.per_source.items()):
        lines.append(f"{name:<20}{size:>8}")
    lines.append(f"{'total':<20}{summary.total:>8}")
    return "\n".join(lines)
