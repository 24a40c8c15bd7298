"""Column-format corpus reading, tag schemes, entity spans and vocabularies."""

from __future__ import annotations

import json
import logging
import os
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

logger = logging.getLogger(__name__)

IOB2 = "iob2"
IOBES = "iobes"
SCHEMES = (IOB2, IOBES)

DOCSTART = "-DOCSTART-"

_PREFIXES = {IOB2: frozenset("BI"), IOBES: frozenset("BIES")}


class CorpusError(ValueError):
    """Malformed corpus input."""


class LabelError(ValueError):
    """A label sequence that is invalid under its declared scheme."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (position {position})")
        self.position = position


@dataclass(frozen=True)
class Token:
    surface: str
    word_id: int | None = None
    char_ids: tuple[int, ...] = ()

    def __post_init__(self):
        if not self.surface:
            raise CorpusError("token surface must be non-empty")
        if self.char_ids and len(self.char_ids) != len(self.surface):
            raise CorpusError(f"char_ids length mismatch for {self.surface!r}")

    @property
    def characters(self) -> tuple[str, ...]:
        return tuple(self.surface)


@dataclass(frozen=True)
class EntityMention:
    entity_class: str
    start: int
    end: int
    surface: tuple[str, ...]

    def __len__(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[Token, ...]
    labels: tuple[str, ...]
    scheme: str = IOB2

    def __post_init__(self):
        if len(self.tokens) != len(self.labels):
            raise CorpusError(
                f"{len(self.tokens)} tokens but {len(self.labels)} labels")
        if self.scheme not in SCHEMES:
            raise CorpusError(f"unsupported scheme {self.scheme!r}")

    @classmethod
    def from_strings(cls, words: Iterable[str], labels: Iterable[str],
                     scheme: str = IOB2) -> "Sentence":
        return cls(tuple(Token(w) for w in words), tuple(labels), scheme)

    @property
    def words(self) -> tuple[str, ...]:
        return tuple(t.surface for t in self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    def validate(self) -> None:
        extract_spans(self.labels, self.scheme, strict=True)

    def to_scheme(self, scheme: str) -> "Sentence":
        if scheme == self.scheme:
            return self
        labels = convert_scheme(self.labels, self.scheme, scheme)
        return Sentence(self.tokens, tuple(labels), scheme)


@dataclass(frozen=True)
class Corpus:
    """An ordered collection of sentences.

    ``doc_starts`` holds the index of the first sentence after every
    ``-DOCSTART-`` marker found in the input.
    """

    sentences: tuple[Sentence, ...]
    scheme: str = IOB2
    doc_starts: tuple[int, ...] = ()

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self) -> Iterator[Sentence]:
        return iter(self.sentences)

    def __getitem__(self, i: int) -> Sentence:
        return self.sentences[i]

    def to_scheme(self, scheme: str) -> "Corpus":
        if scheme == self.scheme:
            return self
        return Corpus(tuple(s.to_scheme(scheme) for s in self.sentences),
                      scheme, self.doc_starts)


# ---------------------------------------------------------------- parsing

def parse_column_corpus(text: str | Iterable[str], token_column: int = 0,
                        label_column: int | None = -1, scheme: str = IOB2,
                        validate: bool = True,
                        allow_empty: bool = False) -> Corpus:
    """Parse whitespace-separated column data, one token per line.

    Blank lines separate sentences.  With ``label_column=None`` every token
    is labelled ``O`` (unlabelled input for prediction).
    """
    if scheme not in SCHEMES:
        raise CorpusError(f"unsupported scheme {scheme!r}")
    lines = text.splitlines() if isinstance(text, str) else text
    sentences: list[Sentence] = []
    doc_starts: list[int] = []
    words: list[str] = []
    labels: list[str] = []
    first_line = 0

    def flush():
        nonlocal words, labels
        if words:
            sent = Sentence.from_strings(words, labels, scheme)
            if validate:
                try:
                    sent.validate()
                except LabelError as err:
                    raise CorpusError(
                        f"line {first_line + err.position}: {err}") from err
            sentences.append(sent)
        words, labels = [], []

    for lineno, line in enumerate(lines, start=1):
        cols = line.split()
        if not cols:
            flush()
            continue
        if cols[0] == DOCSTART:
            flush()
            doc_starts.append(len(sentences))
            continue
        needed = [token_column] if label_column is None else [token_column, label_column]
        for col in needed:
            if not -len(cols) <= col < len(cols):
                raise CorpusError(
                    f"line {lineno}: expected column {col}, found {len(cols)} column(s)")
        if not words:
            first_line = lineno
        words.append(cols[token_column])
        labels.append("O" if label_column is None else cols[label_column])
    flush()
    if not sentences and not allow_empty:
        raise CorpusError("corpus contains no sentences")
    return Corpus(tuple(sentences), scheme, tuple(doc_starts))


def read_column_corpus(path: str | os.PathLike, **kwargs) -> Corpus:
    with open(path, encoding="utf-8") as fh:
        return parse_column_corpus(fh.read(), **kwargs)


def format_column_corpus(sentences: Iterable[Sentence]) -> str:
    blocks = []
    for sent in sentences:
        blocks.append("\n".join(f"{t.surface} {lab}"
                                for t, lab in zip(sent.tokens, sent.labels)))
    return "\n\n".join(blocks) + ("\n" if blocks else "")


def write_column_corpus(path: str | os.PathLike, sentences: Iterable[Sentence]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_column_corpus(sentences))


# ---------------------------------------------------------------- schemes

def _split(label: str, scheme: str, position: int) -> tuple[str, str | None]:
    if label == "O":
        return "O", None
    prefix, sep, cls = label.partition("-")
    if not sep or not cls or prefix not in _PREFIXES[scheme]:
        raise LabelError(f"label {label!r} is not valid under {scheme}", position)
    return prefix, cls


def extract_spans(labels: Sequence[str], scheme: str = IOBES,
                  strict: bool = True) -> list[tuple[str, int, int]]:
    """Decode ``labels`` into ``(class, start, end)`` spans.

    In lenient mode an ``I-X``/``E-X`` without an open ``X`` span opens a new
    span at that token, and a span left without its closing tag is truncated
    at the last token it covered.
    """
    if scheme not in SCHEMES:
        raise CorpusError(f"unsupported scheme {scheme!r}")
    spans: list[tuple[str, int, int]] = []
    open_cls: str | None = None
    start = 0

    def close(end: int, position: int, complete: bool):
        nonlocal open_cls
        if open_cls is not None:
            if not complete and scheme == IOBES and strict:
                raise LabelError(f"span {open_cls} opened at {start} is not closed", position)
            spans.append((open_cls, start, end))
            open_cls = None

    for i, label in enumerate(labels):
        prefix, cls = _split(label, scheme, i)
        if prefix == "O":
            close(i, i, complete=False)
        elif prefix == "B":
            close(i, i, complete=False)
            open_cls, start = cls, i
        elif prefix == "S":
            close(i, i, complete=False)
            spans.append((cls, i, i + 1))
        else:  # I or E
            if open_cls != cls:
                if strict:
                    raise LabelError(f"{label} does not continue an open {cls} span", i)
                close(i, i, complete=False)
                open_cls, start = cls, i
            if prefix == "E":
                close(i + 1, i, complete=True)
    close(len(labels), len(labels), complete=scheme == IOB2)
    return spans


def write_labels(spans: Iterable[tuple[str, int, int]] | Iterable[EntityMention],
                 length: int, scheme: str = IOBES) -> list[str]:
    """Inverse of :func:`extract_spans`: render non-overlapping spans as tags."""
    out = ["O"] * length
    for span in spans:
        if isinstance(span, EntityMention):
            cls, start, end = span.entity_class, span.start, span.end
        else:
            cls, start, end = span
        if not 0 <= start < end <= length:
            raise CorpusError(f"span [{start}, {end}) outside sentence of length {length}")
        if any(lab != "O" for lab in out[start:end]):
            raise CorpusError(f"span [{start}, {end}) overlaps another span")
        if scheme == IOBES and end - start == 1:
            out[start] = f"S-{cls}"
            continue
        out[start] = f"B-{cls}"
        for j in range(start + 1, end):
            out[j] = f"I-{cls}"
        if scheme == IOBES:
            out[end - 1] = f"E-{cls}"
    return out


def convert_scheme(labels: Sequence[str], source: str, target: str) -> list[str]:
    spans = extract_spans(labels, source, strict=True)
    return write_labels(spans, len(labels), target)


def is_valid(labels: Sequence[str], scheme: str) -> bool:
    try:
        extract_spans(labels, scheme, strict=True)
    except LabelError:
        return False
    return True


def extract_entities(sentence: Sentence, strict: bool = True) -> list[EntityMention]:
    words = sentence.words
    return [EntityMention(cls, s, e, words[s:e])
            for cls, s, e in extract_spans(sentence.labels, sentence.scheme, strict)]


def iobes_labelset(classes: Iterable[str]) -> list[str]:
    labels = ["O"]
    for cls in sorted(set(classes)):
        labels.extend(f"{p}-{cls}" for p in "BIES")
    return labels


def entity_classes(corpus: Iterable[Sentence]) -> list[str]:
    seen = set()
    for sent in corpus:
        for label in sent.labels:
            if label != "O":
                seen.add(label.partition("-")[2])
    return sorted(seen)


# ---------------------------------------------------------------- glossary

@dataclass(frozen=True)
class EntityGlossary:
    """Per-class entity surfaces with their corpus frequencies.

    Entries keep first-occurrence order so that sampling is reproducible.
    """

    entries: dict[str, dict[tuple[str, ...], int]] = field(default_factory=dict)

    @property
    def classes(self) -> frozenset[str]:
        return frozenset(self.entries)

    def surfaces(self, entity_class: str) -> list[tuple[str, ...]]:
        return list(self.entries.get(entity_class, {}))

    def frequencies(self, entity_class: str) -> list[int]:
        return list(self.entries.get(entity_class, {}).values())

    def total(self, entity_class: str) -> int:
        return sum(self.entries.get(entity_class, {}).values())


@dataclass(frozen=True)
class CategoricalSentenceSets:
    sets: dict[str, tuple[int, ...]] = field(default_factory=dict)

    def __getitem__(self, entity_class: str) -> tuple[int, ...]:
        return self.sets.get(entity_class, ())


def build_entity_glossary(corpus: Iterable[Sentence]) -> EntityGlossary:
    entries: dict[str, dict[tuple[str, ...], int]] = {}
    for sent in corpus:
        for mention in extract_entities(sent):
            per_class = entries.setdefault(mention.entity_class, {})
            per_class[mention.surface] = per_class.get(mention.surface, 0) + 1
    return EntityGlossary(entries)


def build_categorical_sentence_sets(corpus: Iterable[Sentence]) -> CategoricalSentenceSets:
    sets: dict[str, list[int]] = {}
    for idx, sent in enumerate(corpus):
        for cls in sorted({m.entity_class for m in extract_entities(sent)}):
            sets.setdefault(cls, []).append(idx)
    return CategoricalSentenceSets({cls: tuple(v) for cls, v in sets.items()})


# ---------------------------------------------------------------- vocabulary

PAD = "<pad>"
UNK = "<unk>"


class Vocabulary:
    """Token/index mapping with padding at 0 and unknown at 1."""

    PAD_INDEX = 0
    UNK_INDEX = 1

    def __init__(self, tokens: Iterable[str] = (), lowercase_fallback: bool = True):
        self.lowercase_fallback = lowercase_fallback
        self.itos: list[str] = [PAD, UNK]
        self.stoi: dict[str, int] = {PAD: 0, UNK: 1}
        for tok in tokens:
            self.add(tok)

    def add(self, token: str) -> int:
        if token not in self.stoi:
            self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return self.stoi[token]

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def lookup(self, token: str) -> int:
        idx = self.stoi.get(token)
        if idx is None and self.lowercase_fallback:
            idx = self.stoi.get(token.lower())
        return self.UNK_INDEX if idx is None else idx

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.lookup(t) for t in tokens]

    def to_dict(self) -> dict:
        return {"itos": self.itos, "lowercase_fallback": self.lowercase_fallback}

    @classmethod
    def from_dict(cls, data: dict) -> "Vocabulary":
        itos = data["itos"]
        if itos[:2] != [PAD, UNK]:
            raise CorpusError("vocabulary does not start with reserved entries")
        return cls(itos[2:], data.get("lowercase_fallback", True))

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, ensure_ascii=False)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def build_vocab(corpus: Iterable[Sentence], min_frequency: int = 1,
                lowercase_fallback: bool = True) -> tuple[Vocabulary, Vocabulary]:
    if min_frequency < 1:
        raise ValueError("min_frequency must be >= 1")
    words: Counter[str] = Counter()
    chars: Counter[str] = Counter()
    for sent in corpus:
        for tok in sent.tokens:
            words[tok.surface] += 1
            chars.update(tok.surface)
    word_vocab = Vocabulary((w for w, c in words.items() if c >= min_frequency),
                            lowercase_fallback)
    char_vocab = Vocabulary(chars, lowercase_fallback=False)
    return word_vocab, char_vocab


def encode_sentence(sentence: Sentence, words: Vocabulary, chars: Vocabulary) -> Sentence:
    tokens = tuple(Token(t.surface, words.lookup(t.surface),
                         tuple(chars.lookup(c) for c in t.surface))
                   for t in sentence.tokens)
    return Sentence(tokens, sentence.labels, sentence.scheme)


def encode_corpus(corpus: Corpus, words: Vocabulary, chars: Vocabulary) -> Corpus:
    return Corpus(tuple(encode_sentence(s, words, chars) for s in corpus),
                  corpus.scheme, corpus.doc_starts)


_FLOAT = re.compile(r"^[-+0-9.eE]+$")


def read_pretrained_embeddings(path: str | os.PathLike) -> dict[str, list[float]]:
    """Read ``token v1 ... vd`` lines; a leading ``count dim`` header is skipped."""
    table: dict[str, list[float]] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip().split(" ")
            if not parts or not parts[0]:
                continue
            if lineno == 1 and len(parts) == 2 and all(_FLOAT.match(p) for p in parts):
                continue
            try:
                vec = [float(x) for x in parts[1:]]
            except ValueError as err:
                raise CorpusError(f"line {lineno}: non-numeric embedding value") from err
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise CorpusError(f"line {lineno}: expected {dim} values, found {len(vec)}")
            table[parts[0]] = vec
    return table
