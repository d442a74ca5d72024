"""Quote-speaker corpus: loading, validation, filtering, and splitting.

The unit of data is a Sample: a three-sentence context, the quote and the
speaker mention extracted from it, and article-level metadata. Samples are
stored one-per-line in UTF-8 JSON lines; timestamps are RFC 3339.

Speaker mentions are normalized to a canonical SourceId: the entity link
when present, otherwise the case-folded, whitespace-collapsed mention text.
"""

from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass, field, asdict
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import IO, Iterable

# Canonical speaker identity. Entity URI when the mention is linked,
# normalized surface text otherwise.
SourceId = str

SPEAKER_TYPES = ("person", "organization", "other")

# Paired quote delimiters: straight and curly double quotes plus guillemets.
# Single quotes are deliberately not delimiters (apostrophe ambiguity).
_SYMMETRIC_QUOTE = '"'
_QUOTE_PAIRS = {"“": "”", "«": "»"}  # open -> close
_CLOSERS = set(_QUOTE_PAIRS.values())

_WS_RE = re.compile(r"\s+")


class CorpusError(Exception):
    """Fatal corpus-level failure (unreadable file, too many bad lines)."""


class UnpairedQuoteMarksError(ValueError):
    """Sentence contains an unmatched quote delimiter."""


class QuoteType(Enum):
    DIRECT = "direct"
    INDIRECT = "indirect"
    MIXED = "mixed"


@dataclass(frozen=True)
class Sample:
    """One context/quote/speaker record; the document unit of the corpus."""

    id: str
    context: str
    quote: str
    speaker_mention: str
    speaker_type: str
    published_at: datetime
    title: str
    domain: str
    speaker_link: str | None = None
    categories: tuple[str, ...] = ()
    keywords: tuple[str, ...] = ()

    def source(self) -> SourceId:
        return resolve_source(self.speaker_mention, self.speaker_link)


@dataclass(frozen=True)
class SrlTuple:
    """Predicate/subject/object extraction for one sentence.

    subject_entity, when known, is a (uri, type) pair with type one of
    SPEAKER_TYPES.
    """

    sentence: str
    predicate: str
    subject_span: str
    object_span: str
    subject_entity: tuple[str, str] | None = None


@dataclass(frozen=True)
class FilterDecision:
    accepted: bool
    reason: str | None = None


@dataclass(frozen=True)
class LineError:
    line_no: int
    reason: str


@dataclass
class IngestResult:
    samples: list[Sample]
    errors: list[LineError] = field(default_factory=list)


@dataclass(frozen=True)
class CorpusSplit:
    """Temporally ordered train/valid/test partition."""

    train: tuple[Sample, ...]
    valid: tuple[Sample, ...]
    test: tuple[Sample, ...]


def resolve_source(mention: str, link: str | None = None) -> SourceId:
    """Canonical identity for a speaker mention.

    The entity link wins when present; otherwise the mention is case-folded
    and internal whitespace collapsed, so "Dr  Fauci " and "dr fauci" agree.
    """
    if not mention or not mention.strip():
        raise ValueError("empty speaker mention")
    if link:
        return link
    return _WS_RE.sub(" ", mention.strip()).casefold()


def parse_timestamp(raw: str) -> datetime:
    """Parse an RFC 3339 timestamp into an aware UTC datetime."""
    text = raw.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def _sample_from_record(record: dict) -> Sample:
    required = ("id", "context", "quote", "speaker_mention", "speaker_type",
                "published_at", "title", "domain")
    for name in required:
        if name not in record:
            raise ValueError(f"missing field: {name}")
    speaker_type = record["speaker_type"]
    if speaker_type not in SPEAKER_TYPES:
        raise ValueError(f"bad speaker_type: {speaker_type!r}")
    quote = record["quote"]
    context = record["context"]
    if not isinstance(quote, str) or not isinstance(context, str):
        raise ValueError("quote and context must be strings")
    if quote not in context:
        raise ValueError("quote-not-in-context")
    mention = record["speaker_mention"]
    if not mention or not str(mention).strip():
        raise ValueError("empty speaker_mention")
    return Sample(
        id=str(record["id"]),
        context=context,
        quote=quote,
        speaker_mention=mention,
        speaker_type=speaker_type,
        published_at=parse_timestamp(record["published_at"]),
        title=record["title"],
        domain=record["domain"],
        speaker_link=record.get("speaker_link") or None,
        categories=tuple(record.get("categories") or ()),
        keywords=tuple(record.get("keywords") or ()),
    )


def sample_to_record(sample: Sample) -> dict:
    record = asdict(sample)
    record["published_at"] = sample.published_at.astimezone(timezone.utc).isoformat()
    record["categories"] = list(sample.categories)
    record["keywords"] = list(sample.keywords)
    if record["speaker_link"] is None:
        del record["speaker_link"]
    return record


def write_samples(samples: Iterable[Sample], fh: IO[str]) -> None:
    for sample in samples:
        fh.write(json.dumps(sample_to_record(sample), ensure_ascii=False, sort_keys=True))
        fh.write("\n")


def ingest(path: str | Path, fmt: str = "jsonl",
           max_error_rate: float = 0.10) -> IngestResult:
    """Load and validate a sample file.

    Malformed lines are collected with line numbers rather than dropped;
    the load aborts when more than ``max_error_rate`` of non-blank lines
    are bad, or when the file cannot be read at all.
    """
    if fmt != "jsonl":
        raise CorpusError(f"unsupported corpus format: {fmt}")
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CorpusError(f"cannot read corpus file {path}: {exc}") from exc

    samples: list[Sample] = []
    errors: list[LineError] = []
    seen_ids: set[str] = set()
    n_lines = 0
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        n_lines += 1
        try:
            record = json.loads(line)
            if not isinstance(record, dict):
                raise ValueError("record is not an object")
            sample = _sample_from_record(record)
            if sample.id in seen_ids:
                raise ValueError(f"duplicate id: {sample.id}")
        except ValueError as exc:
            errors.append(LineError(line_no, str(exc)))
            continue
        seen_ids.add(sample.id)
        samples.append(sample)

    if n_lines and len(errors) / n_lines > max_error_rate:
        raise CorpusError(
            f"{len(errors)}/{n_lines} malformed lines exceeds "
            f"{max_error_rate:.0%} threshold in {path}"
        )
    return IngestResult(samples=samples, errors=errors)


def load_lexicon(path: str | Path) -> frozenset[str]:
    """Read a trigger-word lexicon: one lemma per line, ``#`` comments."""
    words = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        word = line.split("#", 1)[0].strip()
        if word:
            words.add(word.casefold())
    if not words:
        raise CorpusError(f"empty trigger lexicon: {path}")
    return frozenset(words)


def default_lexicon() -> frozenset[str]:
    return load_lexicon(Path(__file__).parent / "data" / "trigger_lexicon.txt")


def count_words(span: str) -> int:
    """Whitespace-delimited tokens that still carry a word character."""
    return sum(1 for tok in span.split() if re.search(r"[^\W_]", tok, re.UNICODE))


def quote_mark_regions(sentence: str) -> list[tuple[int, int]]:
    """Character spans of paired quote regions, delimiters included.

    Straight double quotes pair up sequentially; curly quotes and
    guillemets pair opener-with-closer. Raises on any unmatched mark.
    """
    regions: list[tuple[int, int]] = []
    open_straight: int | None = None
    open_stack: list[tuple[str, int]] = []
    for i, ch in enumerate(sentence):
        if ch == _SYMMETRIC_QUOTE:
            if open_straight is None:
                open_straight = i
            else:
                regions.append((open_straight, i + 1))
                open_straight = None
        elif ch in _QUOTE_PAIRS:
            open_stack.append((ch, i))
        elif ch in _CLOSERS:
            if not open_stack or _QUOTE_PAIRS[open_stack[-1][0]] != ch:
                raise UnpairedQuoteMarksError(f"unmatched closing mark at {i}")
            _, start = open_stack.pop()
            regions.append((start, i + 1))
    if open_straight is not None or open_stack:
        raise UnpairedQuoteMarksError("unmatched opening mark")
    return sorted(regions)


def has_paired_quote_marks(sentence: str) -> bool:
    try:
        quote_mark_regions(sentence)
    except UnpairedQuoteMarksError:
        return False
    return True


def filter_candidate(tup: SrlTuple, lexicon: frozenset[str],
                     require_typed_subject: bool = False) -> FilterDecision:
    """Accept or reject one predicate/subject/object candidate.

    Rules: the predicate must be a trigger word, the subject non-empty,
    the object longer than three words, and any quote marks in the
    sentence must pair up. With ``require_typed_subject`` the subject
    must additionally carry a person or organization entity type.
    """
    if not lexicon:
        raise ValueError("empty trigger lexicon")
    if tup.predicate.casefold() not in lexicon:
        return FilterDecision(False, "predicate-not-trigger")
    if not tup.subject_span.strip():
        return FilterDecision(False, "empty-subject")
    if count_words(tup.object_span) <= 3:
        return FilterDecision(False, "object-too-short")
    if not has_paired_quote_marks(tup.sentence):
        return FilterDecision(False, "unpaired-quote-marks")
    if require_typed_subject:
        if tup.subject_entity is None:
            return FilterDecision(False, "untyped-subject")
        _, etype = tup.subject_entity
        if etype not in ("person", "organization"):
            return FilterDecision(False, "subject-not-person-or-org")
    return FilterDecision(True)


def classify_quote_type(primary_sentence: str, object_span: str) -> QuoteType:
    """Direct, indirect, or mixed, by quote-mark position.

    Direct when the object sits entirely inside one paired quote region,
    indirect when the sentence has no marks or the object touches none,
    mixed otherwise. Quote marks must be paired (filter first).
    """
    regions = quote_mark_regions(primary_sentence)
    if not regions:
        return QuoteType.INDIRECT
    start = primary_sentence.find(object_span)
    if start < 0:
        raise ValueError("object span does not occur in sentence")
    end = start + len(object_span)
    for r_start, r_end in regions:
        if r_start <= start and end <= r_end:
            return QuoteType.DIRECT
    if any(start < r_end and r_start < end for r_start, r_end in regions):
        return QuoteType.MIXED
    return QuoteType.INDIRECT


def enforce_min_frequency(samples: list[Sample], min_count: int = 2) -> list[Sample]:
    """Drop samples whose source occurs fewer than ``min_count`` times.

    Applied to a fixpoint so that every surviving source still clears the
    threshold after other sources' samples are gone. Input order is kept.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    current = list(samples)
    while True:
        counts: dict[SourceId, int] = {}
        for sample in current:
            src = sample.source()
            counts[src] = counts.get(src, 0) + 1
        keep = [s for s in current if counts[s.source()] >= min_count]
        if len(keep) == len(current):
            return keep
        current = keep


def temporal_split(samples: list[Sample], n_test: int, n_valid: int) -> CorpusSplit:
    """Partition by publishing time: newest into test, then valid, then train.

    Timestamp ties break on sample id, so the split is stable under any
    permutation of the input.
    """
    if n_test < 0 or n_valid < 0:
        raise ValueError("split sizes must be non-negative")
    if n_test + n_valid >= len(samples):
        raise CorpusError(
            f"cannot reserve {n_test}+{n_valid} samples out of {len(samples)}"
        )
    ordered = sorted(samples, key=lambda s: (s.published_at, s.id))
    n_train = len(ordered) - n_test - n_valid
    return CorpusSplit(
        train=tuple(ordered[:n_train]),
        valid=tuple(ordered[n_train:n_train + n_valid]),
        test=tuple(ordered[n_train + n_valid:]),
    )
