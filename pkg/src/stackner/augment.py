"""Entity-context crossover augmentation.

Two samplers share one splice primitive (:func:`crossover`):

* sentence-centric: take a sentence, light up each entity slot with
  probability ``p`` and swap every lit slot for another entity of the same
  class drawn from the glossary;
* entity-centric: draw an entity of a class in proportion to its corpus
  frequency, draw a host sentence that contains that class, and swap one of
  the host's slots of that class.

Everything is driven by an explicit ``numpy.random.Generator`` so a stream
is a pure function of its inputs.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .corpus import (IOBES, CategoricalSentenceSets, Corpus, EntityGlossary,
                     EntityMention, Sentence, Token, build_categorical_sentence_sets,
                     build_entity_glossary, extract_entities, write_labels)


class AugmentMode(str, enum.Enum):
    SCA = "sca"
    ECA = "eca"
    OFF = "off"


@dataclass(frozen=True)
class AugmentConfig:
    mode: AugmentMode = AugmentMode.SCA
    bernoulli_p: float = 0.7
    seed: int = 0
    max_per_epoch: int | None = None
    # draw SCA replacements in proportion to frequency instead of uniformly
    frequency_weighted: bool = False
    max_retries: int = 10

    def __post_init__(self):
        object.__setattr__(self, "mode", AugmentMode(self.mode))
        if not 0.0 <= self.bernoulli_p <= 1.0:
            raise ValueError(f"bernoulli_p must lie in [0, 1], got {self.bernoulli_p}")
        if self.max_per_epoch is not None and self.max_per_epoch < 0:
            raise ValueError("max_per_epoch must be non-negative")


@dataclass(frozen=True)
class Replacement:
    start: int
    end: int
    original: tuple[str, ...]
    replacement: tuple[str, ...]
    entity_class: str


@dataclass(frozen=True)
class AugmentedSentence:
    sentence: Sentence
    source_index: int | None = None
    replacements: tuple[Replacement, ...] = field(default_factory=tuple)


def crossover(sentence: Sentence, slot: EntityMention,
              replacement: Sequence[str]) -> Sentence:
    """Splice ``replacement`` into ``slot`` and relabel the slot."""
    if not 0 <= slot.start < slot.end <= len(sentence):
        raise IndexError(f"slot [{slot.start}, {slot.end}) outside sentence "
                         f"of length {len(sentence)}")
    if not replacement:
        raise ValueError("replacement must be non-empty")
    n = len(replacement)
    new_labels = write_labels([(slot.entity_class, 0, n)], n, sentence.scheme)
    tokens = (sentence.tokens[:slot.start] + tuple(Token(w) for w in replacement)
              + sentence.tokens[slot.end:])
    labels = sentence.labels[:slot.start] + tuple(new_labels) + sentence.labels[slot.end:]
    return Sentence(tokens, labels, sentence.scheme)


def _apply(sentence: Sentence, edits: list[tuple[EntityMention, tuple[str, ...]]]) -> Sentence:
    # right to left so earlier spans keep their offsets
    for slot, repl in sorted(edits, key=lambda e: e[0].start, reverse=True):
        sentence = crossover(sentence, slot, repl)
    return sentence


def sca_augment(sentence: Sentence, glossary: EntityGlossary, cfg: AugmentConfig,
                rng: np.random.Generator, source_index: int | None = None) -> AugmentedSentence:
    edits = []
    records = []
    for slot in extract_entities(sentence):
        # draw for every slot, even ones without a candidate, so the lit
        # pattern does not depend on glossary contents
        if rng.random() >= cfg.bernoulli_p:
            continue
        surfaces = glossary.surfaces(slot.entity_class)
        weights = glossary.frequencies(slot.entity_class)
        candidates = [(s, w) for s, w in zip(surfaces, weights) if s != slot.surface]
        if not candidates:
            continue
        if cfg.frequency_weighted:
            w = np.array([c[1] for c in candidates], dtype=float)
            choice = rng.choice(len(candidates), p=w / w.sum())
        else:
            choice = rng.integers(len(candidates))
        repl = candidates[int(choice)][0]
        edits.append((slot, repl))
        records.append(Replacement(slot.start, slot.end, slot.surface, repl,
                                   slot.entity_class))
    return AugmentedSentence(_apply(sentence, edits), source_index, tuple(records))


def sample_entity(glossary: EntityGlossary, entity_class: str,
                  rng: np.random.Generator) -> tuple[str, ...]:
    """Draw a surface of ``entity_class`` with probability F(e) / F(class)."""
    surfaces = glossary.surfaces(entity_class)
    if not surfaces:
        raise KeyError(f"class {entity_class!r} has no glossary entries")
    freq = np.asarray(glossary.frequencies(entity_class), dtype=float)
    return surfaces[int(rng.choice(len(surfaces), p=freq / freq.sum()))]


def eca_augment(target_class: str, glossary: EntityGlossary, sets: CategoricalSentenceSets,
                corpus: Corpus | Sequence[Sentence], rng: np.random.Generator,
                max_retries: int = 10) -> AugmentedSentence:
    hosts = sets[target_class]
    if not hosts:
        raise ValueError(f"no sentence contains an entity of class {target_class!r}")
    entity = sample_entity(glossary, target_class, rng)
    host_index = hosts[int(rng.integers(len(hosts)))]
    host = corpus[host_index]
    slots = [m for m in extract_entities(host) if m.entity_class == target_class]
    slot = slots[int(rng.integers(len(slots)))]
    retries = 0
    while entity == slot.surface:
        if retries == max_retries:
            return AugmentedSentence(host, host_index, ())
        entity = sample_entity(glossary, target_class, rng)
        retries += 1
    record = Replacement(slot.start, slot.end, slot.surface, entity, target_class)
    return AugmentedSentence(crossover(host, slot, entity), host_index, (record,))


def augmentation_stream(corpus: Corpus, cfg: AugmentConfig,
                        epoch: int) -> Iterator[AugmentedSentence]:
    """Yield augmented sentences for one epoch; deterministic in (seed, epoch)."""
    if cfg.mode is AugmentMode.OFF or len(corpus) == 0:
        return
    corpus = corpus.to_scheme(IOBES)
    glossary = build_entity_glossary(corpus)
    count = len(corpus) if cfg.max_per_epoch is None else cfg.max_per_epoch
    rng = np.random.default_rng([cfg.seed, epoch])
    if cfg.mode is AugmentMode.SCA:
        for _ in range(count):
            idx = int(rng.integers(len(corpus)))
            yield sca_augment(corpus[idx], glossary, cfg, rng, source_index=idx)
        return
    sets = build_categorical_sentence_sets(corpus)
    classes = sorted(c for c in sets.sets if sets[c])
    if not classes:
        return
    for k in range(count):
        yield eca_augment(classes[k % len(classes)], glossary, sets, corpus, rng,
                          cfg.max_retries)
