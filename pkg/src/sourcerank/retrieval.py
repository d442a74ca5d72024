"""Probabilistic source ranking: score P(query | source) under two models.

Candidate-based scoring mixes a per-source term distribution with the
collection background:

    P(k|e) = prod_t [ (1-lam_e) * sum_d p(t|d) p(d|e) + lam_e * p(t) ]^n(t,k)
    lam_e  = beta / (beta + n(e))
    beta   = avg_doc_len * mean docs-per-source

Document-based scoring smooths each document separately and aggregates
over the source's documents:

    P(k|e) = sum_d [ prod_t ((1-lam_d) p(t|d) + lam_d p(t))^n(t,k) ] p(d|e)
    lam_d  = beta / (beta + n(d)),  beta = avg_doc_len

p(d|e) is a Boolean association, normalized uniformly over the source's
documents by default ("uniform"); the raw 0/1 variant is available for
ablation ("boolean").

Products are always accumulated as sums of logarithms (document-based
aggregation via log-sum-exp); a zero probability is surfaced as -inf,
which sorts after every finite score. Exact Fraction arithmetic is
available through cer_prob/der_prob for small corpora.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

from .corpus import SourceId
from .index import Index, Query

DOC_PRIORS = ("uniform", "boolean")


class RetrievalModel(Enum):
    CANDIDATE_BASED = "cer"
    DOCUMENT_BASED = "der"


@dataclass(frozen=True)
class ScoredSource:
    source: SourceId
    log_score: float | None  # None once scores are dropped by rerank stages

    def sort_key(self) -> tuple:
        # -inf (P=0) orders after every finite score; ties break on id.
        score = self.log_score if self.log_score is not None else -math.inf
        return (-score, self.source)


@dataclass(frozen=True)
class RankedList:
    items: tuple[ScoredSource, ...]

    def __post_init__(self):
        sources = [item.source for item in self.items]
        if len(set(sources)) != len(sources):
            raise ValueError("duplicate source in ranked list")

    def sources(self) -> list[SourceId]:
        return [item.source for item in self.items]

    def __len__(self) -> int:
        return len(self.items)

    @classmethod
    def from_sources(cls, sources, scores=None) -> "RankedList":
        if scores is None:
            return cls(tuple(ScoredSource(s, None) for s in sources))
        return cls(tuple(ScoredSource(s, sc) for s, sc in zip(sources, scores)))


def _check_source(index: Index, source: SourceId) -> None:
    if source not in index.assoc:
        raise KeyError(f"unknown source: {source}")


def _check_prior(doc_prior: str) -> None:
    if doc_prior not in DOC_PRIORS:
        raise ValueError(f"doc_prior must be one of {DOC_PRIORS}")


def cer_beta(index: Index) -> Fraction:
    """Corpus constant: average document length times mean docs per source."""
    assoc_total = sum(len(ds) for ds in index.assoc.values())
    return index.avg_doc_len * Fraction(assoc_total, index.n_sources)


def _doc_prior_weight(index: Index, source: SourceId, doc_prior: str) -> Fraction:
    if doc_prior == "uniform":
        return Fraction(1, len(index.assoc[source]))
    return Fraction(1)


def cer_prob(index: Index, query: Query, source: SourceId,
             doc_prior: str = "uniform") -> Fraction:
    """Exact-rational candidate-based P(k|e)."""
    _check_source(index, source)
    _check_prior(doc_prior)
    beta = cer_beta(index)
    n_e = index.source_token_totals[source]
    lam = beta / (beta + n_e)
    weight = _doc_prior_weight(index, source, doc_prior)
    prob = Fraction(1)
    for term, n_tk in sorted(query.term_counts().items()):
        mix_doc = sum(
            (Fraction(index.docs[d].term_counts.get(term, 0), index.docs[d].length)
             for d in index.assoc[source]),
            Fraction(0),
        ) * weight
        bg = Fraction(index.collection_term_counts.get(term, 0), index.total_tokens)
        factor = (1 - lam) * mix_doc + lam * bg
        prob *= factor ** n_tk
    return prob


def cer_score(index: Index, query: Query, source: SourceId,
              doc_prior: str = "uniform") -> float:
    """log P(k|e) under the candidate-based model; -inf when P = 0."""
    _check_source(index, source)
    _check_prior(doc_prior)
    beta = float(cer_beta(index))
    n_e = index.source_token_totals[source]
    lam = beta / (beta + n_e)
    weight = float(_doc_prior_weight(index, source, doc_prior))
    log_p = 0.0
    for term, n_tk in sorted(query.term_counts().items()):
        mix_doc = weight * sum(
            index.docs[d].term_counts.get(term, 0) / index.docs[d].length
            for d in index.assoc[source]
        )
        bg = index.collection_term_counts.get(term, 0) / index.total_tokens
        factor = (1.0 - lam) * mix_doc + lam * bg
        if factor <= 0.0:
            return -math.inf
        log_p += n_tk * math.log(factor)
    return log_p


def der_prob(index: Index, query: Query, source: SourceId,
             doc_prior: str = "uniform") -> Fraction:
    """Exact-rational document-based P(k|e)."""
    _check_source(index, source)
    _check_prior(doc_prior)
    beta = index.avg_doc_len
    weight = _doc_prior_weight(index, source, doc_prior)
    counts = sorted(query.term_counts().items())
    total = Fraction(0)
    for doc_id in sorted(index.assoc[source]):
        doc = index.docs[doc_id]
        lam = beta / (beta + doc.length)
        inner = Fraction(1)
        for term, n_tk in counts:
            p_td = Fraction(doc.term_counts.get(term, 0), doc.length)
            bg = Fraction(index.collection_term_counts.get(term, 0), index.total_tokens)
            inner *= ((1 - lam) * p_td + lam * bg) ** n_tk
        total += inner * weight
    return total


def der_score(index: Index, query: Query, source: SourceId,
              doc_prior: str = "uniform") -> float:
    """log P(k|e) under the document-based model; -inf when P = 0.

    The outer document sum is evaluated with log-sum-exp; only the
    source's associated documents contribute since p(d|e) = 0 elsewhere.
    """
    _check_source(index, source)
    _check_prior(doc_prior)
    beta = float(index.avg_doc_len)
    log_weight = math.log(float(_doc_prior_weight(index, source, doc_prior)))
    counts = sorted(query.term_counts().items())
    doc_logs: list[float] = []
    for doc_id in sorted(index.assoc[source]):
        doc = index.docs[doc_id]
        lam = beta / (beta + doc.length)
        log_inner = 0.0
        for term, n_tk in counts:
            p_td = doc.term_counts.get(term, 0) / doc.length
            bg = index.collection_term_counts.get(term, 0) / index.total_tokens
            factor = (1.0 - lam) * p_td + lam * bg
            if factor <= 0.0:
                log_inner = -math.inf
                break
            log_inner += n_tk * math.log(factor)
        if log_inner > -math.inf:
            doc_logs.append(log_inner + log_weight)
    if not doc_logs:
        return -math.inf
    peak = max(doc_logs)
    return peak + math.log(sum(math.exp(x - peak) for x in doc_logs))


_SCORERS = {
    RetrievalModel.CANDIDATE_BASED: cer_score,
    RetrievalModel.DOCUMENT_BASED: der_score,
}


def rank_sources(index: Index, query: Query, model: RetrievalModel,
                 top_n: int, doc_prior: str = "uniform") -> RankedList:
    """Score every indexed source and return the top_n, deterministically.

    Descending log score; ties and zero-probability sources break on
    source id, with P = 0 after every positive score.
    """
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    scorer = _SCORERS[model]
    scored = [
        ScoredSource(source, scorer(index, query, source, doc_prior))
        for source in index.sources()
    ]
    scored.sort(key=ScoredSource.sort_key)
    return RankedList(tuple(scored[:top_n]))
