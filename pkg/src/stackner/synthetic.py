"""Templated toy corpus with PER, LOC and ORG mentions.

Entity names are assembled from syllables with class-typical suffixes, so
unseen names are still recognisable from characters and context.
``overlap`` is the share of dev/test mentions drawn from the training
inventory; the remainder come from a held-out inventory.
"""

from __future__ import annotations

import os

import numpy as np

from .corpus import IOB2, Sentence, write_column_corpus, write_labels

_SYLLABLES = ["ka", "ro", "mi", "ten", "sa", "lo", "vi", "dar", "ne", "bri", "to",
              "mar", "el", "an", "gu", "fe", "zo", "li", "por", "ha"]

_TEMPLATES = [
    "{PER} visited {LOC} last week .",
    "{PER} works for {ORG} .",
    "{ORG} opened a new office in {LOC} .",
    "The mayor of {LOC} met {PER} on Monday .",
    "{LOC} imported 47000 sheep from {LOC} .",
    "Shares of {ORG} fell after {PER} resigned .",
    "{PER} said the talks in {LOC} were productive .",
    "According to {ORG} , prices in {LOC} rose sharply .",
    "{PER} and {PER} signed the agreement .",
    "{ORG} hired {PER} as chief executive .",
    "Heavy rain hit {LOC} on Tuesday .",
    "{PER} was born in {LOC} .",
    "Analysts at {ORG} expect growth to slow .",
    "{ORG} and {ORG} agreed to merge .",
    "Police in {LOC} arrested two men .",
    "{PER} thanked the fans after the match .",
    "The team flew from {LOC} to {LOC} .",
    "{PER} , a spokesman for {ORG} , declined to comment .",
    "Exports from {LOC} reached a record high .",
    "{ORG} reported a quarterly loss .",
]

_TITLES = ["Mr.", "Dr.", "Ms."]
_LOC_SUFFIX = ["ville", "burg", "ton", "stad", "port"]
_ORG_SUFFIX = ["Corp", "Group", "Bank", "Institute", "Holdings"]


def _word(rng: np.random.Generator, syllables: int) -> str:
    return "".join(rng.choice(_SYLLABLES, size=syllables)).capitalize()


def _person(rng) -> tuple[str, ...]:
    r = rng.random()
    if r < 0.2:
        return (_word(rng, 2),)
    if r < 0.35:
        return (str(rng.choice(_TITLES)), _word(rng, 3))
    return (_word(rng, 2), _word(rng, 3))


def _location(rng) -> tuple[str, ...]:
    base = _word(rng, 2) + str(rng.choice(_LOC_SUFFIX))
    if rng.random() < 0.2:
        return ("New", base)
    return (base,)


def _organization(rng) -> tuple[str, ...]:
    if rng.random() < 0.3:
        return (_word(rng, 2), _word(rng, 2), str(rng.choice(_ORG_SUFFIX)))
    return (_word(rng, 2), str(rng.choice(_ORG_SUFFIX)))


_MAKERS = {"PER": _person, "LOC": _location, "ORG": _organization}


def _inventory(rng, size: int) -> dict[str, list[tuple[str, ...]]]:
    inv = {}
    for cls, make in _MAKERS.items():
        names: dict[tuple[str, ...], None] = {}
        while len(names) < size:
            names[make(rng)] = None
        inv[cls] = list(names)
    return inv


def _fill(template: str, pick) -> Sentence:
    words, spans = [], []
    for piece in template.split():
        if piece.startswith("{") and piece.endswith("}"):
            cls = piece[1:-1]
            surface = pick(cls)
            spans.append((cls, len(words), len(words) + len(surface)))
            words.extend(surface)
        else:
            words.append(piece)
    return Sentence.from_strings(words, write_labels(spans, len(words), IOB2), IOB2)


def make_synthetic_corpus(n_train: int = 500, n_dev: int = 100, n_test: int = 100,
                          seed: int = 0, overlap: float = 0.5, inventory: int = 60
                          ) -> tuple[list[Sentence], list[Sentence], list[Sentence]]:
    rng = np.random.default_rng(seed)
    seen = _inventory(rng, inventory)
    unseen = _inventory(rng, inventory)
    for cls in unseen:
        unseen[cls] = [n for n in unseen[cls] if n not in set(seen[cls])]

    def sample(n, held_out_share):
        def pick(cls):
            pool = unseen[cls] if rng.random() < held_out_share else seen[cls]
            return pool[int(rng.integers(len(pool)))]
        return [_fill(_TEMPLATES[int(rng.integers(len(_TEMPLATES)))], pick)
                for _ in range(n)]

    return sample(n_train, 0.0), sample(n_dev, 1 - overlap), sample(n_test, 1 - overlap)


def write_synthetic_corpus(directory: str | os.PathLike, **kwargs) -> dict[str, str]:
    os.makedirs(directory, exist_ok=True)
    paths = {}
    for name, sents in zip(("train", "dev", "test"), make_synthetic_corpus(**kwargs)):
        path = os.path.join(directory, f"{name}.txt")
        write_column_corpus(path, sents)
        paths[name] = path
    return paths
