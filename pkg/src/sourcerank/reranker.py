"""Listwise rerankers behind one interface.

A ranker receives an ordered candidate list for a query and returns a
permutation of it. The production ranker drives a chat-completions
endpoint with a one-shot prompt; deterministic rankers (identity, oracle,
noisy oracle) and a record/replay ranker support testing and simulation.

Whatever a model answers, parse_ranking is total: recognized names are
kept in response order, hallucinated names dropped, missing candidates
appended in request order, and the repair is flagged on the response.
"""

from __future__ import annotations

import ast
import hashlib
import json
import os
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import requests

from .corpus import SourceId
from .retrieval import RankedList

DEFAULT_GROUP_SIZE = 10
DEFAULT_TOKEN_BUDGET = 8000

ENDPOINT_URL_VAR = "SOURCERANK_ENDPOINT"
API_KEY_VAR = "SOURCERANK_API_KEY"

_WS_RE = re.compile(r"\s+")


class RankerError(Exception):
    """A ranker could not produce a ranking."""


class EndpointError(RankerError):
    """Chat endpoint failed after all retries; carries the attempt log."""

    def __init__(self, message: str, attempts: list[str] | None = None):
        super().__init__(message)
        self.attempts = attempts or []


class PromptTooLargeError(RankerError):
    pass


@dataclass(frozen=True)
class Exemplar:
    """One-shot example embedded in every prompt."""

    query: str
    candidates: tuple[str, ...]
    reranked: tuple[str, ...]

    def __post_init__(self):
        if sorted(self.candidates) != sorted(self.reranked):
            raise ValueError("exemplar reranked list is not a permutation")


# Neutral synthetic exemplar; ships with the repo so one-shot prompting
# works out of the box.
DEFAULT_EXEMPLAR = Exemplar(
    query="city council delays new tram line opening",
    candidates=(
        "Transit Workers Union", "Maria Keller", "City Transport Office",
        "Daniel Obi", "Metro Passenger Association", "Jonas Brandt",
        "Urban Planning Institute", "Priya Nair", "Downtown Business Forum",
        "Leo Fernandez",
    ),
    reranked=(
        "City Transport Office", "Transit Workers Union", "Maria Keller",
        "Metro Passenger Association", "Urban Planning Institute",
        "Daniel Obi", "Priya Nair", "Downtown Business Forum",
        "Jonas Brandt", "Leo Fernandez",
    ),
)


@dataclass(frozen=True)
class RerankRequest:
    query: str
    candidates: tuple[SourceId, ...]
    names: Mapping[SourceId, str]
    exemplar: Exemplar = DEFAULT_EXEMPLAR
    max_size: int = DEFAULT_GROUP_SIZE

    def __post_init__(self):
        if not (1 <= len(self.candidates) <= self.max_size):
            raise ValueError(
                f"candidate count {len(self.candidates)} outside 1..{self.max_size}"
            )
        if len(set(self.candidates)) != len(self.candidates):
            raise ValueError("duplicate candidates")
        display = [self.display_name(c) for c in self.candidates]
        if len(set(display)) != len(display):
            raise ValueError("candidate display names are not unique")

    @classmethod
    def make(cls, query: str, candidates: Sequence[SourceId],
             names: Mapping[SourceId, str] | None = None,
             exemplar: Exemplar = DEFAULT_EXEMPLAR,
             max_size: int | None = None) -> "RerankRequest":
        return cls(
            query=query,
            candidates=tuple(candidates),
            names=dict(names or {}),
            exemplar=exemplar,
            max_size=max_size if max_size is not None else
            max(DEFAULT_GROUP_SIZE, len(candidates)),
        )

    def display_name(self, source: SourceId) -> str:
        return self.names.get(source, source)

    def digest(self) -> str:
        payload = json.dumps(
            {
                "query": self.query,
                "candidates": list(self.candidates),
                "names": [self.display_name(c) for c in self.candidates],
                "exemplar": [self.exemplar.query,
                             list(self.exemplar.candidates),
                             list(self.exemplar.reranked)],
            },
            sort_keys=True, ensure_ascii=False,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class RerankResponse:
    ranking: RankedList
    raw: str
    repaired: bool
    repair_notes: tuple[str, ...] = ()


_PROMPT_TEMPLATE = (
    "You are a knowledgeable referrer. "
    "Given a query and the {n} potential information sources (which may include "
    "both individuals and organizations) retrieved based on the query, you need "
    "to rank the {n} potential sources in order of relevance to the query, "
    "placing the source that is most likely to provide information relevant to "
    "the query at the top of the list. "
    "Return the new rank of sources only in the form of python list (exactly the "
    "same form of the given list, just rerank it), please do not provide other "
    "words except for the list. "
    "Here is an example: "
    "Query: {example_query}. "
    "{example_n} potential sources are: {example_candidates}, "
    "and then the output should be: {example_reranked}. "
    "Now the query is: {query}. The source candidates are: {candidates}"
)


def serialize_name_list(names: Sequence[str]) -> str:
    quoted = ", ".join("'" + n.replace("\\", "\\\\").replace("'", "\\'") + "'"
                       for n in names)
    return f"[{quoted}]"


def estimate_tokens(text: str) -> int:
    # rough chars/4 heuristic, adequate for a budget check
    return (len(text) + 3) // 4


def build_prompt(request: RerankRequest,
                 token_budget: int = DEFAULT_TOKEN_BUDGET) -> str:
    """Instantiate the one-shot ranking prompt for a request.

    The candidate-count text is parameterized so groups smaller than the
    default ten render correctly.
    """
    prompt = _PROMPT_TEMPLATE.format(
        n=len(request.candidates),
        example_query=request.exemplar.query,
        example_n=len(request.exemplar.candidates),
        example_candidates=serialize_name_list(request.exemplar.candidates),
        example_reranked=serialize_name_list(request.exemplar.reranked),
        query=request.query,
        candidates=serialize_name_list(
            [request.display_name(c) for c in request.candidates]),
    )
    if estimate_tokens(prompt) > token_budget:
        raise PromptTooLargeError(
            f"prompt of ~{estimate_tokens(prompt)} tokens exceeds budget {token_budget}"
        )
    return prompt


def _normalize_name(name: str) -> str:
    return _WS_RE.sub(" ", name.strip()).casefold()


def _extract_bracketed_entries(raw: str) -> list[str] | None:
    start = raw.find("[")
    if start < 0:
        return None
    end = raw.find("]", start + 1)
    if end < 0:
        return None
    body = raw[start:end + 1]
    try:
        parsed = ast.literal_eval(body)
        if isinstance(parsed, (list, tuple)):
            return [str(item) for item in parsed]
    except (ValueError, SyntaxError):
        pass
    inner = body[1:-1]
    entries = []
    for part in inner.split(","):
        entry = part.strip().strip("'\"").strip()
        if entry:
            entries.append(entry)
    return entries if entries else None


def parse_ranking(raw: str, request: RerankRequest) -> RerankResponse:
    """Recover a candidate permutation from arbitrary response text.

    The first bracketed list is matched to candidates case-insensitively
    after whitespace normalization. Repair rule: drop names that are not
    candidates, keep recognized names in response order, then append any
    missing candidates in request order.
    """
    by_norm = {_normalize_name(request.display_name(c)): c
               for c in request.candidates}
    entries = _extract_bracketed_entries(raw)
    if entries is None:
        return RerankResponse(
            ranking=RankedList.from_sources(request.candidates),
            raw=raw, repaired=True, repair_notes=("no-list",),
        )

    notes: list[str] = []
    recognized: list[SourceId] = []
    seen: set[SourceId] = set()
    for entry in entries:
        source = by_norm.get(_normalize_name(entry))
        if source is None:
            notes.append(f"dropped-unknown:{entry}")
        elif source in seen:
            notes.append(f"dropped-duplicate:{entry}")
        else:
            recognized.append(source)
            seen.add(source)
    missing = [c for c in request.candidates if c not in seen]
    for source in missing:
        notes.append(f"appended-missing:{request.display_name(source)}")
    ranking = RankedList.from_sources(recognized + missing)
    return RerankResponse(
        ranking=ranking, raw=raw, repaired=bool(notes),
        repair_notes=tuple(notes),
    )


class IdentityRanker:
    """Returns candidates unchanged; the baseline mock."""

    def rerank(self, request: RerankRequest) -> RerankResponse:
        return RerankResponse(
            ranking=RankedList.from_sources(request.candidates),
            raw="", repaired=False,
        )


class OracleRanker:
    """Sorts by a known relevance table, descending; ties keep request order."""

    def __init__(self, relevance: Mapping[SourceId, float]):
        self.relevance = dict(relevance)

    def order(self, request: RerankRequest) -> list[SourceId]:
        return sorted(request.candidates,
                      key=lambda s: -self.relevance.get(s, 0.0))

    def rerank(self, request: RerankRequest) -> RerankResponse:
        return RerankResponse(
            ranking=RankedList.from_sources(self.order(request)),
            raw="", repaired=False,
        )


class NoisyOracleRanker(OracleRanker):
    """Oracle order perturbed by seeded adjacent swaps.

    Each adjacent pair is swapped with probability error_rate per pass.
    With a popularity table, swaps that would promote the more popular
    item are proportionally more likely, so noise pushes popular
    candidates up the list. The noise stream is a pure function of
    (seed, request), independent of call order.
    """

    def __init__(self, relevance: Mapping[SourceId, float], error_rate: float,
                 seed: int, popularity: Mapping[SourceId, float] | None = None,
                 passes: int = 1):
        super().__init__(relevance)
        if not 0.0 <= error_rate <= 1.0:
            raise ValueError("error_rate must be in [0, 1]")
        self.error_rate = error_rate
        self.seed = seed
        self.popularity = dict(popularity) if popularity else None
        self.passes = passes

    def _rng(self, request: RerankRequest):
        import random
        material = f"{self.seed}|{request.digest()}"
        return random.Random(material)

    def rerank(self, request: RerankRequest) -> RerankResponse:
        order = self.order(request)
        if self.error_rate > 0.0:
            rng = self._rng(request)
            for _ in range(self.passes):
                for i in range(len(order) - 1):
                    p_swap = self.error_rate
                    if self.popularity is not None:
                        upper = self.popularity.get(order[i], 0.0)
                        lower = self.popularity.get(order[i + 1], 0.0)
                        total = upper + lower
                        if total > 0:
                            p_swap = min(1.0, self.error_rate * 2.0 * lower / total)
                    if rng.random() < p_swap:
                        order[i], order[i + 1] = order[i + 1], order[i]
        return RerankResponse(
            ranking=RankedList.from_sources(order), raw="", repaired=False,
        )


class ChatEndpointRanker:
    """Drives a chat-completions-compatible HTTPS endpoint.

    Endpoint URL and API key come from SOURCERANK_ENDPOINT and
    SOURCERANK_API_KEY unless given explicitly. Requests are retried with
    exponential backoff; after the last attempt an EndpointError carrying
    the attempt log is raised. With record_path set, every request/response
    pair is appended to a JSON-lines replay file.
    """

    def __init__(self, endpoint_url: str | None = None,
                 api_key: str | None = None,
                 model: str = "gpt-3.5-turbo",
                 temperature: float = 0.0,
                 max_attempts: int = 3,
                 backoff_base: float = 1.0,
                 timeout: float = 60.0,
                 token_budget: int = DEFAULT_TOKEN_BUDGET,
                 record_path: str | Path | None = None,
                 transport: Callable[..., "requests.Response"] | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.endpoint_url = endpoint_url or os.environ.get(ENDPOINT_URL_VAR)
        if not self.endpoint_url:
            raise RankerError(
                f"no endpoint configured; set {ENDPOINT_URL_VAR} or pass endpoint_url"
            )
        self.api_key = api_key or os.environ.get(API_KEY_VAR)
        self.model = model
        self.temperature = temperature
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.timeout = timeout
        self.token_budget = token_budget
        self.record_path = Path(record_path) if record_path else None
        self._transport = transport or requests.post
        self._sleep = sleep

    def _call_once(self, prompt: str) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
        }
        resp = self._transport(self.endpoint_url, headers=headers,
                               json=body, timeout=self.timeout)
        resp.raise_for_status()
        payload = resp.json()
        return payload["choices"][0]["message"]["content"]

    def complete(self, prompt: str) -> str:
        attempts: list[str] = []
        for attempt in range(1, self.max_attempts + 1):
            try:
                return self._call_once(prompt)
            except (requests.RequestException, KeyError, ValueError) as exc:
                attempts.append(f"attempt {attempt}: {type(exc).__name__}: {exc}")
                if attempt < self.max_attempts:
                    self._sleep(self.backoff_base * (2 ** (attempt - 1)))
        raise EndpointError(
            f"endpoint failed after {self.max_attempts} attempts", attempts)

    def _record(self, request: RerankRequest, raw: str) -> None:
        if self.record_path is None:
            return
        entry = {
            "key": request.digest(),
            "query": request.query,
            "candidates": list(request.candidates),
            "names": [request.display_name(c) for c in request.candidates],
            "raw": raw,
        }
        with self.record_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, sort_keys=True, ensure_ascii=False) + "\n")

    def rerank(self, request: RerankRequest) -> RerankResponse:
        prompt = build_prompt(request, token_budget=self.token_budget)
        raw = self.complete(prompt)
        self._record(request, raw)
        return parse_ranking(raw, request)


class ReplayRanker:
    """Replays recorded endpoint responses for offline deterministic reruns."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.responses: dict[str, str] = {}
        for line in self.path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            entry = json.loads(line)
            self.responses[entry["key"]] = entry["raw"]

    def rerank(self, request: RerankRequest) -> RerankResponse:
        key = request.digest()
        if key not in self.responses:
            raise EndpointError(f"no recorded response for request {key[:12]}...")
        return parse_ranking(self.responses[key], request)
