from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stackner.augment import (AugmentConfig, AugmentMode, augmentation_stream, crossover,
                              eca_augment, sample_entity, sca_augment)
from stackner.corpus import (IOBES, Corpus, EntityGlossary, EntityMention, Sentence,
                             build_categorical_sentence_sets, build_entity_glossary,
                             extract_entities, is_valid)

from _oracles import regex_spans, render


def S(text, labels):
    return Sentence.from_strings(text.split(), labels, IOBES)


SHEEP = S("Germany imported 47000 sheep from Britain", ["S-LOC", "O", "O", "O", "O", "S-LOC"])


class ScriptedRng:
    """Stands in for ``numpy.random.Generator`` with fixed outcomes."""

    def __init__(self, randoms=(), integers=()):
        self.randoms = list(randoms)
        self.ints = list(integers)

    def random(self):
        return self.randoms.pop(0)

    def integers(self, n):
        value = self.ints.pop(0)
        assert value < n
        return value


def toy_corpus():
    return Corpus((
        SHEEP,
        S("America exported wheat", ["S-LOC", "O", "O"]),
        S("Angela Merkel met Peter", ["B-PER", "E-PER", "O", "S-PER"]),
        S("Peter flew to United Kingdom", ["S-PER", "O", "O", "B-LOC", "E-LOC"]),
        S("Siemens AG hired Anna in Germany", ["B-ORG", "E-ORG", "O", "S-PER", "O", "S-LOC"]),
        S("the weather was fine", ["O", "O", "O", "O"]),
        S("Acme Corp beat Siemens AG", ["B-ORG", "E-ORG", "O", "B-ORG", "E-ORG"]),
    ), IOBES)


# ------------------------------------------------------------------ crossover

def test_crossover_changes_length():
    slot = extract_entities(SHEEP)[1]
    out = crossover(SHEEP, slot, ("United", "Kingdom"))
    assert len(out) == 7
    assert out.words[5:] == ("United", "Kingdom")
    assert out.labels[5:] == ("B-LOC", "E-LOC")
    assert out.labels[:5] == SHEEP.labels[:5]


def test_crossover_sheep_example():
    slot = extract_entities(SHEEP)[0]
    out = crossover(SHEEP, slot, ("America",))
    assert " ".join(out.words) == "America imported 47000 sheep from Britain"


def test_crossover_identity_and_bounds():
    slot = extract_entities(SHEEP)[0]
    assert crossover(SHEEP, slot, slot.surface) == SHEEP
    with pytest.raises(IndexError):
        crossover(SHEEP, EntityMention("LOC", 5, 9, ("x",)), ("y",))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.one_of(st.none(), st.sampled_from(["PER", "LOC"])),
                          st.integers(1, 3)), min_size=1, max_size=6),
       st.integers(0, 100), st.integers(1, 4))
def test_crossover_preserves_class_multiset(segs, pick, repl_len):
    labels = render(segs, "iobes")
    sent = S(" ".join(f"t{i}" for i in range(len(labels))), labels)
    mentions = extract_entities(sent)
    if not mentions:
        return
    slot = mentions[pick % len(mentions)]
    out = crossover(sent, slot, tuple(f"r{j}" for j in range(repl_len)))
    before = Counter(c for c, _, _ in regex_spans(sent.labels))
    after = Counter(c for c, _, _ in regex_spans(out.labels))
    assert before == after
    assert len(out) == len(sent) - len(slot) + repl_len


# ------------------------------------------------------------------ SCA

def test_sca_sheep_example():
    corpus = toy_corpus()
    glossary = build_entity_glossary(corpus)
    # LOC entries in order: Germany, Britain, America, United Kingdom
    # slot 0 lit (0.1 < p) and gets candidate 1 of [Britain, America, UK]; slot 5 unlit
    rng = ScriptedRng(randoms=[0.1, 0.9], integers=[1])
    out = sca_augment(SHEEP, glossary, AugmentConfig(bernoulli_p=0.7), rng)
    assert " ".join(out.sentence.words) == "America imported 47000 sheep from Britain"
    (rec,) = out.replacements
    assert (rec.original, rec.replacement, rec.entity_class) == (("Germany",), ("America",), "LOC")


def test_sca_p_zero_is_identity():
    corpus = toy_corpus()
    glossary = build_entity_glossary(corpus)
    rng = np.random.default_rng(0)
    for sent in corpus:
        out = sca_augment(sent, glossary, AugmentConfig(bernoulli_p=0.0), rng)
        assert out.sentence == sent and out.replacements == ()


def test_sca_single_entry_class_left_alone():
    corpus = Corpus((S("Paris is nice", ["S-LOC", "O", "O"]),), IOBES)
    out = sca_augment(corpus[0], build_entity_glossary(corpus),
                      AugmentConfig(bernoulli_p=1.0), np.random.default_rng(0))
    assert out.sentence == corpus[0] and out.replacements == ()


def test_sca_replacement_rate():
    corpus = toy_corpus()
    glossary = build_entity_glossary(corpus)
    rng = np.random.default_rng(123)
    cfg = AugmentConfig(bernoulli_p=0.7)
    hits = sum(len(sca_augment(SHEEP, glossary, cfg, rng).replacements) for _ in range(10_000))
    assert abs(hits / 20_000 - 0.7) <= 0.02


def test_sca_never_draws_current_surface():
    corpus = toy_corpus()
    glossary = build_entity_glossary(corpus)
    rng = np.random.default_rng(5)
    for _ in range(500):
        for rec in sca_augment(SHEEP, glossary, AugmentConfig(bernoulli_p=1.0), rng).replacements:
            assert rec.replacement != rec.original


def test_sca_frequency_weighted_option():
    corpus = Corpus((S("A B C", ["S-LOC", "S-LOC", "S-LOC"]),
                     S("B x", ["S-LOC", "O"]), S("B y", ["S-LOC", "O"])), IOBES)
    glossary = build_entity_glossary(corpus)   # A:1 B:3 C:1
    host = S("A z", ["S-LOC", "O"])
    rng = np.random.default_rng(0)
    cfg = AugmentConfig(bernoulli_p=1.0, frequency_weighted=True)
    draws = Counter(sca_augment(host, glossary, cfg, rng).replacements[0].replacement
                    for _ in range(20_000))
    assert abs(draws[("B",)] / 20_000 - 0.75) < 0.02


# ------------------------------------------------------------------ ECA

def test_eca_sampling_probability():
    corpus = Corpus((S("Germany and Germany and Britain", ["S-LOC", "O", "S-LOC", "O", "S-LOC"]),),
                    IOBES)
    glossary = build_entity_glossary(corpus)
    rng = np.random.default_rng(7)
    n = 30_000
    draws = Counter(sample_entity(glossary, "LOC", rng) for _ in range(n))
    assert abs(draws[("Germany",)] / n - 2 / 3) <= 0.01


def test_eca_frequencies_three_entities():
    glossary = EntityGlossary({"LOC": {("A",): 5, ("B",): 3, ("C",): 2}})
    rng = np.random.default_rng(11)
    n = 30_000
    draws = Counter(sample_entity(glossary, "LOC", rng) for _ in range(n))
    for key, f in ((("A",), 0.5), (("B",), 0.3), (("C",), 0.2)):
        assert abs(draws[key] / n - f) <= 0.01


def test_eca_singleton_host():
    corpus = Corpus((S("Paris rocks", ["S-LOC", "O"]), S("Peter sings", ["S-PER", "O"]),
                     S("Rome too", ["S-LOC", "O"])), IOBES)
    glossary = build_entity_glossary(corpus)
    sets = build_categorical_sentence_sets(corpus)
    rng = np.random.default_rng(0)
    for _ in range(50):
        out = eca_augment("PER", glossary, sets, corpus, rng)
        assert out.source_index == 1


def test_eca_output_distribution_matches_conditional_oracle():
    # Host slots are themselves glossary entries, so a draw equal to the slot
    # is redrawn; the expected law is F(e) / (F(E) - F(slot)) for e != slot.
    corpus = Corpus((S("A x", ["S-LOC", "O"]), S("A y", ["S-LOC", "O"]),
                     S("B z", ["S-LOC", "O"]), S("C w", ["S-LOC", "O"])), IOBES)
    glossary = build_entity_glossary(corpus)   # A:2 B:1 C:1
    sets = build_categorical_sentence_sets(corpus)
    freq = {("A",): 2, ("B",): 1, ("C",): 1}
    expected = Counter()
    for host in corpus:
        slot = host.words[:1]
        rest = sum(v for k, v in freq.items() if k != slot)
        for k, v in freq.items():
            if k != slot:
                expected[k] += v / rest / len(corpus)
    rng = np.random.default_rng(3)
    n = 30_000
    got = Counter(eca_augment("LOC", glossary, sets, corpus, rng, max_retries=50)
                  .replacements[0].replacement for _ in range(n))
    for k in freq:
        assert abs(got[k] / n - expected[k]) <= 0.01


def test_eca_errors_and_retry_exhaustion():
    corpus = Corpus((S("Paris rocks", ["S-LOC", "O"]),), IOBES)
    glossary = build_entity_glossary(corpus)
    sets = build_categorical_sentence_sets(corpus)
    with pytest.raises(ValueError):
        eca_augment("PER", glossary, sets, corpus, np.random.default_rng(0))
    out = eca_augment("LOC", glossary, sets, corpus, np.random.default_rng(0))
    assert out.sentence == corpus[0] and out.replacements == ()


# ------------------------------------------------------------------ stream

@pytest.mark.parametrize("mode", [AugmentMode.SCA, AugmentMode.ECA])
def test_stream_determinism(mode):
    corpus = toy_corpus()
    cfg = AugmentConfig(mode=mode, seed=4)
    a = [x.sentence for x in augmentation_stream(corpus, cfg, epoch=2)]
    b = [x.sentence for x in augmentation_stream(corpus, cfg, epoch=2)]
    c = [x.sentence for x in augmentation_stream(corpus, cfg, epoch=3)]
    assert a == b
    assert a != c
    assert len(a) == len(corpus)


def test_stream_length_and_off():
    corpus = toy_corpus()
    assert list(augmentation_stream(corpus, AugmentConfig(mode="off"), 0)) == []
    assert len(list(augmentation_stream(corpus, AugmentConfig(max_per_epoch=25), 0))) == 25


def test_eca_stream_round_robin():
    corpus = toy_corpus()
    out = list(augmentation_stream(corpus, AugmentConfig(mode="eca", max_per_epoch=9), 0))
    for k, aug in enumerate(out):
        cls = ["LOC", "ORG", "PER"][k % 3]
        assert cls in {m.entity_class for m in extract_entities(corpus[aug.source_index])}
        assert all(r.entity_class == cls for r in aug.replacements)


@pytest.mark.parametrize("mode", [AugmentMode.SCA, AugmentMode.ECA])
def test_stream_invariants(mode):
    corpus = toy_corpus()
    cfg = AugmentConfig(mode=mode, bernoulli_p=0.9, seed=1, max_per_epoch=400)
    for aug in augmentation_stream(corpus, cfg, epoch=0):
        src = corpus[aug.source_index]
        out = aug.sentence
        assert is_valid(out.labels, IOBES)
        for rec in aug.replacements:
            slot_labels = src.labels[rec.start:rec.end]
            assert all(lab.endswith("-" + rec.entity_class) for lab in slot_labels)
        assert Counter(m.entity_class for m in extract_entities(out)) == \
            Counter(m.entity_class for m in extract_entities(src))
        if mode is AugmentMode.SCA:
            context = [w for w, lab in zip(src.words, src.labels) if lab == "O"]
            assert [w for w, lab in zip(out.words, out.labels) if lab == "O"] == context


def test_config_validation():
    with pytest.raises(ValueError):
        AugmentConfig(bernoulli_p=1.5)
    assert 0.5 <= AugmentConfig().bernoulli_p <= 0.9
