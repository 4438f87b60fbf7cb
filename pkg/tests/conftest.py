"""Shared fixtures: a small bilingual corpus with parallel translations.

Topic words are chosen so that same-language queries share tokens with their
gold document while cross-script queries share none with the gold's original
text (Latin letters never appear in the Han documents and vice versa).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import settings

from clirkit.corpus import Corpus, Document, Judgment, Judgments, Query, QuerySet

# property tests check logic, not speed; per-example wall-clock deadlines
# flake under full-suite load
settings.register_profile("suite", deadline=None)
settings.load_profile("suite")

TOPICS_EN = [
    "glacier",
    "volcano",
    "harvest",
    "orbit",
    "enzyme",
    "piano",
    "lantern",
    "compass",
    "meadow",
    "anchor",
    "falcon",
    "quartz",
]

# two distinctive Han characters per topic, plus shared filler below
TOPICS_ZH = [
    "冰川",
    "火山",
    "收获",
    "轨道",
    "酵素",
    "钢琴",
    "灯笼",
    "罗盘",
    "草地",
    "锚链",
    "猎鹰",
    "石英",
]

FILLER_ZH = "的和在了有"


def _en_doc_text(word: str) -> str:
    return f"the {word} study measures {word} formation near the {word} field"


def _zh_doc_text(chars: str) -> str:
    return f"{chars}{FILLER_ZH}{chars}研究{chars}"


@dataclass
class BilingualFixture:
    corpus: Corpus
    queries: dict[str, QuerySet]  # keyed "en->zh" etc.
    judgments: dict[str, Judgments]

    def all_queries(self) -> QuerySet:
        merged = []
        for qs in self.queries.values():
            merged.extend(qs)
        return QuerySet(merged)

    def all_judgments(self) -> Judgments:
        merged = []
        for js in self.judgments.values():
            merged.extend(js)
        return Judgments(merged)


def build_bilingual_fixture(n_topics: int = 12) -> BilingualFixture:
    docs = []
    for i in range(n_topics):
        en_text = _en_doc_text(TOPICS_EN[i])
        docs.append(Document(f"den{i}", "en", en_text, translated_text=en_text))
        docs.append(
            Document(
                f"dzh{i}", "zh", _zh_doc_text(TOPICS_ZH[i]), translated_text=en_text
            )
        )
    corpus = Corpus(docs)

    queries: dict[str, QuerySet] = {}
    judgments: dict[str, Judgments] = {}

    def add(pair: str, qlang: str, make_text, gold_prefix: str) -> None:
        qs, js = [], []
        for i in range(n_topics):
            qid = f"q_{pair.replace('->', '_')}_{i}"
            qs.append(Query(qid, qlang, make_text(i)))
            js.append(Judgment(qid, f"{gold_prefix}{i}", 1))
        queries[pair] = QuerySet(qs)
        judgments[pair] = Judgments(js)

    add("en->en", "en", lambda i: f"{TOPICS_EN[i]} formation", "den")
    add("zh->zh", "zh", lambda i: f"{TOPICS_ZH[i]}研究", "dzh")
    add("en->zh", "en", lambda i: f"{TOPICS_EN[i]} formation", "dzh")
    add("zh->en", "zh", lambda i: f"{TOPICS_ZH[i]}研究", "den")
    return BilingualFixture(corpus, queries, judgments)


@pytest.fixture(scope="session")
def bilingual() -> BilingualFixture:
    return build_bilingual_fixture()


def unit_rows(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    mat = rng.standard_normal((n, dim))
    mat /= np.linalg.norm(mat, axis=1, keepdims=True)
    return mat.astype(np.float32)
