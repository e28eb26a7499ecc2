"""Cleaning pipeline for crawled question-answer pairs.

Steps, in order: text normalization, removal of sentences with personal or
contact information, stripping of greeting/closing phrases at both ends,
removal of leading question numbers, image-question filtering and
minimum-length filtering. Everything is heuristic and dictionary driven;
lemmatization uses a plain surface->lemma lookup table.
"""

from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping

# Characters kept besides letters, digits and whitespace.
ALLOWED_PUNCTUATION = frozenset('.,:;?!()-"\'%')

_EMAIL = re.compile(r"[\w.+-]+@[\w-]+(?:\.[\w-]+)+", re.UNICODE)
_URL = re.compile(r"(?<!\w)(?:https?://|ftp://|www\.)\S*", re.IGNORECASE)
_WS = re.compile(r"\s+")
_SENTENCE_BREAK = re.compile(r"(?<=[.!?])\s+(?=\w)", re.UNICODE)
_WORD = re.compile(r"\w+", re.UNICODE)
_NUMBERING = re.compile(r"^\d+[.)]\s+")
_EDGE_PUNCT = " \t\n,.;:!?-"
_TAIL_PUNCT = " \t\n,;:-"

MAX_PASSES = 10


@dataclass(frozen=True)
class PrepConfig:
    name_dictionaries: frozenset[str] = frozenset()
    contact_words: frozenset[str] = frozenset()
    boilerplate_phrases: tuple[str, ...] = ()
    image_words: frozenset[str] = frozenset()
    lemma_dictionary: Mapping[str, str] = field(default_factory=dict)
    min_question_chars: int = 10
    min_answer_chars: int = 50
    low_quality_sources: frozenset[str] = frozenset({"abczdrowie", "specprawnik"})
    low_quality_min_answer_chars: int = 200
    # None means the step applies to every source
    numbering_sources: frozenset[str] | None = None
    image_filter_sources: frozenset[str] | None = None

    def __post_init__(self):
        if self.min_question_chars <= 0 or self.min_answer_chars <= 0 or self.low_quality_min_answer_chars <= 0:
            raise ValueError("minimum lengths must be > 0")
        lower = lambda words: frozenset(w.strip().lower() for w in words if w.strip())
        object.__setattr__(self, "name_dictionaries", lower(self.name_dictionaries))
        object.__setattr__(self, "contact_words", lower(self.contact_words))
        object.__setattr__(self, "image_words", lower(self.image_words))
        # longest first so "dzień dobry państwu" wins over "dzień dobry"
        phrases = sorted({p.strip().lower() for p in self.boilerplate_phrases if p.strip()}, key=lambda p: (-len(p), p))
        object.__setattr__(self, "boilerplate_phrases", tuple(phrases))
        object.__setattr__(self, "lemma_dictionary",
                           {k.lower(): v.lower() for k, v in dict(self.lemma_dictionary).items()})
        object.__setattr__(self, "low_quality_sources", frozenset(self.low_quality_sources))
        for name in ("numbering_sources", "image_filter_sources"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, frozenset(value))

    def min_answer_for(self, source: str) -> int:
        return self.low_quality_min_answer_chars if source in self.low_quality_sources else self.min_answer_chars

    @classmethod
    def from_file(cls, path) -> "PrepConfig":
        """Load a JSON config.

        Each word list is a path (relative to the config file) of a
        one-entry-per-line UTF-8 file, or a JSON list mixing inline entries
        and ``{"file": path}`` objects. The lemma
        dictionary is an inline mapping or a ``surface<TAB>lemma`` file path.
        """
        path = Path(path)
        raw = json.loads(path.read_text(encoding="utf-8"))
        base = path.parent

        def words(value) -> list[str]:
            if value is None:
                return []
            if isinstance(value, str):
                return read_word_list(base / value)
            out = []
            for item in value:
                out.extend(read_word_list(base / item["file"]) if isinstance(item, dict) else [item])
            return out

        lemmas = raw.get("lemma_dictionary") or {}
        if isinstance(lemmas, str):
            lemmas = read_lemma_dictionary(base / lemmas)
        kwargs = dict(
            name_dictionaries=frozenset(words(raw.get("name_dictionaries"))),
            contact_words=frozenset(words(raw.get("contact_words"))),
            boilerplate_phrases=tuple(words(raw.get("boilerplate_phrases"))),
            image_words=frozenset(words(raw.get("image_words"))),
            lemma_dictionary=lemmas,
        )
        for key in ("min_question_chars", "min_answer_chars", "low_quality_min_answer_chars"):
            if key in raw:
                kwargs[key] = int(raw[key])
        for key in ("low_quality_sources", "numbering_sources", "image_filter_sources"):
            if key in raw:
                kwargs[key] = None if raw[key] is None else frozenset(raw[key])
        return cls(**kwargs)


def read_word_list(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.strip() for line in fh if line.strip() and not line.startswith("#")]


def read_lemma_dictionary(path) -> dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}, line {lineno}: expected 'surface<TAB>lemma'")
            out[parts[0].strip().lower()] = parts[1].strip().lower()
    return out


@dataclass(frozen=True)
class QaPair:
    question: str
    answer: str
    source: str = ""


def _keep_char(ch: str) -> bool:
    if ch.isspace():
        return True
    if ch in ALLOWED_PUNCTUATION:
        return True
    cat = unicodedata.category(ch)
    return cat[0] == "L" or cat == "Nd"


def _normalize_once(text: str) -> str:
    text = _EMAIL.sub(" ", text)
    text = _URL.sub(" ", text)
    text = "".join(ch for ch in text if _keep_char(ch))
    return _WS.sub(" ", text).strip()


def normalize_text(raw: str) -> str:
    """Drop e-mails, URLs and special characters; collapse whitespace and trim.

    E-mails and URLs go first since they contain special characters.
    Repeats until stable, because deleting a character can expose a new
    address (``www#.x`` becomes ``www.x``).
    """
    text = _normalize_once(raw)
    for _ in range(MAX_PASSES):
        again = _normalize_once(text)
        if again == text:
            break
        text = again
    return text


def split_sentences(text: str) -> list[str]:
    """Split after ``.!?`` when followed by whitespace and an uppercase letter or digit."""
    sentences, start = [], 0
    for m in _SENTENCE_BREAK.finditer(text):
        nxt = text[m.end()]
        if nxt.isupper() or nxt.isdigit():
            sentences.append(text[start:m.start()])
            start = m.end()
    sentences.append(text[start:])
    return [s.strip() for s in sentences if s.strip()]


def lemmatize(text: str, lemmas: Mapping[str, str]) -> list[str]:
    return [lemmas.get(w, w) for w in (t.lower() for t in _WORD.findall(text))]


def remove_personal_info(text: str, config: PrepConfig) -> str:
    """Drop every sentence whose lemmas hit the name or contact dictionaries."""
    blocked = config.name_dictionaries | config.contact_words
    if not blocked:
        return text
    kept = [s for s in split_sentences(text) if blocked.isdisjoint(lemmatize(s, config.lemma_dictionary))]
    return " ".join(kept)


def _lower_same_length(text: str) -> str:
    # str.lower() can change length (e.g. "İ"); keep offsets aligned with the original
    return "".join(c.lower() if len(c.lower()) == 1 else c for c in text)


def _strip_once(text: str, phrase: str) -> str | None:
    low = _lower_same_length(text)
    n = len(phrase)
    if low.startswith(phrase) and (len(low) == n or not low[n].isalnum()):
        return text[n:].lstrip(_EDGE_PUNCT)
    body = low.rstrip(_EDGE_PUNCT)
    if body.endswith(phrase) and (len(body) == n or not body[-n - 1].isalnum()):
        return text[:len(body) - n].rstrip(_TAIL_PUNCT)
    return None


def strip_boilerplate_phrases(text: str, config: PrepConfig) -> str:
    """Remove configured phrases from the start and end of ``text`` until none match."""
    text = text.strip()
    changed = True
    while changed and text:
        changed = False
        for phrase in config.boilerplate_phrases:
            stripped = _strip_once(text, phrase)
            if stripped is not None:
                text = stripped.strip()
                changed = True
                break
    return text


def strip_leading_numbering(question: str) -> str:
    return _NUMBERING.sub("", question, count=1)


def is_image_question(question: str, config: PrepConfig) -> bool:
    return not config.image_words.isdisjoint(lemmatize(question, config.lemma_dictionary))


def _clean(pair: QaPair, config: PrepConfig) -> QaPair:
    q = normalize_text(pair.question)
    a = normalize_text(pair.answer)
    q = remove_personal_info(q, config)
    a = remove_personal_info(a, config)
    q = strip_boilerplate_phrases(q, config)
    a = strip_boilerplate_phrases(a, config)
    if config.numbering_sources is None or pair.source in config.numbering_sources:
        q = strip_leading_numbering(q)
    return replace(pair, question=q, answer=a)


def preprocess_pair(pair: QaPair, config: PrepConfig) -> QaPair | None:
    """Clean one pair; ``None`` when it is filtered out.

    The cleaning steps repeat until the text stops changing, so stacked
    numbering or a greeting hidden behind a number are removed fully and the
    function is idempotent on its output.
    """
    current = pair
    for _ in range(MAX_PASSES):
        cleaned = _clean(current, config)
        if cleaned == current:
            break
        current = cleaned
    q, a = current.question, current.answer
    if config.image_filter_sources is None or pair.source in config.image_filter_sources:
        if is_image_question(q, config):
            return None
    if len(q) < config.min_question_chars or len(a) < config.min_answer_for(pair.source):
        return None
    return current


def preprocess_pairs(pairs: Iterable[QaPair], config: PrepConfig) -> list[QaPair]:
    return [out for out in (preprocess_pair(p, config) for p in pairs) if out is not None]


def load_pairs(path) -> list[QaPair]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            obj = json.loads(line)
            try:
                pairs.append(QaPair(question=obj["question"], answer=obj["answer"], source=obj.get("source", "")))
            except KeyError as exc:
                raise ValueError(f"{path}, line {lineno}: missing field {exc}") from None
    return pairs


def write_pairs(pairs: Iterable[QaPair], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(json.dumps({"question": p.question, "answer": p.answer, "source": p.source},
                                ensure_ascii=False) + "\n")
