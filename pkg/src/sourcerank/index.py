"""Immutable occurrence statistics over the training split.

Each training sample contributes its full three-sentence context as one
document; the sample's resolved speaker is associated with that document.
The index carries every count the retrieval models consume:

    n(t,d)  term count within a document
    n(d)    document length in tokens
    n(t,C)  collection term count
    n(e)    token total over a source's associated documents
    assoc   source -> set of associated document ids (Boolean links)

Counts are exact integers; probabilities are formed at query time, in
double precision by default and in exact rationals on request.
"""

from __future__ import annotations

import gzip
import hashlib
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Sample, SourceId

SNAPSHOT_FORMAT_VERSION = 1

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

# Conservative English suffix stripping, only used when stemming is on.
_SUFFIXES = ("ings", "ing", "edly", "ed", "es", "s")


@dataclass(frozen=True)
class TokenizerConfig:
    stopwords: frozenset[str] = frozenset()
    stem: bool = False


def _strip_suffix(token: str) -> str:
    for suffix in _SUFFIXES:
        if token.endswith(suffix) and len(token) - len(suffix) >= 3:
            return token[: -len(suffix)]
    return token


def tokenize(text: str, cfg: TokenizerConfig | None = None) -> list[str]:
    """Case-folded Unicode word segmentation.

    Runs of letters/digits are tokens; everything else separates them, so
    "COVID-19" yields ["covid", "19"]. Stopword removal is off by default.
    """
    cfg = cfg or TokenizerConfig()
    tokens = [t.casefold() for t in _TOKEN_RE.findall(text)]
    if cfg.stopwords:
        tokens = [t for t in tokens if t not in cfg.stopwords]
    if cfg.stem:
        tokens = [_strip_suffix(t) for t in tokens]
    return tokens


@dataclass(frozen=True)
class Query:
    raw: str
    terms: tuple[str, ...]

    @classmethod
    def from_text(cls, text: str, cfg: TokenizerConfig | None = None) -> "Query":
        return cls(raw=text, terms=tuple(tokenize(text, cfg)))

    def term_counts(self) -> Counter:
        return Counter(self.terms)


@dataclass(frozen=True)
class Doc:
    doc_id: str
    length: int
    term_counts: dict[str, int]


@dataclass(frozen=True)
class Index:
    docs: dict[str, Doc]
    collection_term_counts: dict[str, int]
    total_tokens: int
    assoc: dict[SourceId, frozenset[str]]
    source_token_totals: dict[SourceId, int]
    display_names: dict[SourceId, str]
    tokenizer: TokenizerConfig = field(default_factory=TokenizerConfig)

    @property
    def n_docs(self) -> int:
        return len(self.docs)

    @property
    def n_sources(self) -> int:
        return len(self.assoc)

    @property
    def avg_doc_len(self) -> Fraction:
        return Fraction(self.total_tokens, self.n_docs)

    def sources(self) -> list[SourceId]:
        return sorted(self.assoc)

    def display_name(self, source: SourceId) -> str:
        return self.display_names.get(source, source)

    def digest(self) -> str:
        """SHA-256 over the canonical statistics payload."""
        return hashlib.sha256(
            json.dumps(_to_payload(self), sort_keys=True).encode("utf-8")
        ).hexdigest()


def build_index(train: Sequence[Sample], cfg: TokenizerConfig | None = None) -> Index:
    """Index the training samples: one document per sample context.

    Statistics are independent of input order; documents are keyed and
    ordered by sample id.
    """
    if not train:
        raise ValueError("cannot index an empty training split")
    cfg = cfg or TokenizerConfig()

    docs: dict[str, Doc] = {}
    collection: Counter = Counter()
    assoc: dict[SourceId, set[str]] = {}
    mention_counts: dict[SourceId, Counter] = {}
    total = 0

    for sample in sorted(train, key=lambda s: s.id):
        tokens = tokenize(sample.context, cfg)
        if sample.id in docs:
            raise ValueError(f"duplicate document id: {sample.id}")
        docs[sample.id] = Doc(sample.id, len(tokens), dict(Counter(tokens)))
        collection.update(tokens)
        total += len(tokens)
        source = sample.source()
        assoc.setdefault(source, set()).add(sample.id)
        mention_counts.setdefault(source, Counter())[sample.speaker_mention.strip()] += 1

    source_totals = {
        source: sum(docs[d].length for d in doc_ids)
        for source, doc_ids in assoc.items()
    }
    # Most frequent surface mention; ties break lexicographically.
    display = {
        source: min(counts.items(), key=lambda kv: (-kv[1], kv[0]))[0]
        for source, counts in mention_counts.items()
    }
    return Index(
        docs=docs,
        collection_term_counts=dict(collection),
        total_tokens=total,
        assoc={s: frozenset(ds) for s, ds in assoc.items()},
        source_token_totals=source_totals,
        display_names=display,
        tokenizer=cfg,
    )


def term_prob_doc(index: Index, term: str, doc_id: str,
                  exact: bool = False) -> float | Fraction:
    """Maximum-likelihood p(t|d); zero for absent terms."""
    if doc_id not in index.docs:
        raise KeyError(f"unknown document: {doc_id}")
    doc = index.docs[doc_id]
    count = doc.term_counts.get(term, 0)
    if exact:
        return Fraction(count, doc.length) if doc.length else Fraction(0)
    return count / doc.length if doc.length else 0.0


def term_prob_bg(index: Index, term: str,
                 exact: bool = False) -> float | Fraction:
    """Maximum-likelihood background p(t) over the whole collection."""
    count = index.collection_term_counts.get(term, 0)
    if exact:
        return Fraction(count, index.total_tokens) if index.total_tokens else Fraction(0)
    return count / index.total_tokens if index.total_tokens else 0.0


# -- snapshot I/O --

def _to_payload(index: Index) -> dict:
    return {
        "format_version": SNAPSHOT_FORMAT_VERSION,
        "docs": [
            {"id": d.doc_id, "length": d.length, "terms": dict(sorted(d.term_counts.items()))}
            for d in (index.docs[k] for k in sorted(index.docs))
        ],
        "collection_term_counts": dict(sorted(index.collection_term_counts.items())),
        "total_tokens": index.total_tokens,
        "assoc": {s: sorted(ds) for s, ds in sorted(index.assoc.items())},
        "source_token_totals": dict(sorted(index.source_token_totals.items())),
        "display_names": dict(sorted(index.display_names.items())),
        "tokenizer": {
            "stopwords": sorted(index.tokenizer.stopwords),
            "stem": index.tokenizer.stem,
        },
    }


def save_index(index: Index, path: str | Path) -> str:
    """Write a gzip-compressed snapshot; returns the statistics digest."""
    payload = json.dumps(_to_payload(index), sort_keys=True).encode("utf-8")
    # filename="" + mtime=0 keeps snapshot bytes identical across runs and paths
    with Path(path).open("wb") as raw:
        with gzip.GzipFile(filename="", fileobj=raw, mode="wb", mtime=0) as fh:
            fh.write(payload)
    return index.digest()


def load_index(path: str | Path) -> Index:
    with gzip.open(str(path), "rb") as fh:
        payload = json.loads(fh.read().decode("utf-8"))
    version = payload.get("format_version")
    if version != SNAPSHOT_FORMAT_VERSION:
        raise ValueError(
            f"snapshot format {version} not supported "
            f"(expected {SNAPSHOT_FORMAT_VERSION})"
        )
    docs = {
        d["id"]: Doc(d["id"], d["length"], dict(d["terms"]))
        for d in payload["docs"]
    }
    return Index(
        docs=docs,
        collection_term_counts=dict(payload["collection_term_counts"]),
        total_tokens=payload["total_tokens"],
        assoc={s: frozenset(ds) for s, ds in payload["assoc"].items()},
        source_token_totals=dict(payload["source_token_totals"]),
        display_names=dict(payload["display_names"]),
        tokenizer=TokenizerConfig(
            stopwords=frozenset(payload["tokenizer"]["stopwords"]),
            stem=payload["tokenizer"]["stem"],
        ),
    )
