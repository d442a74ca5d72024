from __future__ import annotations

import sys
from datetime import datetime, timedelta, timezone
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sourcerank.corpus import Sample

BASE_TIME = datetime(2020, 3, 1, 12, 0, tzinfo=timezone.utc)


def make_sample(i: int, context: str, quote: str, mention: str,
                link: str | None = None, minutes: int | None = None,
                title: str | None = None, **kw) -> Sample:
    defaults = dict(
        id=f"s{i:04d}",
        context=context,
        quote=quote,
        speaker_mention=mention,
        speaker_type="person",
        published_at=BASE_TIME + timedelta(minutes=minutes if minutes is not None else i),
        title=title or f"title {i}",
        domain="example.org",
        speaker_link=link,
    )
    defaults.update(kw)
    return Sample(**defaults)


@pytest.fixture
def two_doc_samples() -> list[Sample]:
    """The worked two-document corpus: d1="a b a" (X), d2="c c" (Y)."""
    return [
        make_sample(1, "a b a", "a b a", "X", link="synth:X"),
        make_sample(2, "c c", "c c", "Y", link="synth:Y"),
    ]
