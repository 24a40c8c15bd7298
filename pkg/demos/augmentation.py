"""
Entity replacement augmentation
===============================

Both augmenters swap a gold mention for another mention of the same class
drawn from the entity glossary, so the sentence context stays put while the
entity varies.
"""

import numpy as np

from stackner.augment import AugmentConfig, AugmentMode, augmentation_stream, sca_augment
from stackner.corpus import IOBES, Corpus, Sentence, build_entity_glossary


def sent(text, labels):
    return Sentence.from_strings(text.split(), labels, IOBES)


corpus = Corpus((
    sent("Germany imported 47000 sheep from Britain", ["S-LOC", "O", "O", "O", "O", "S-LOC"]),
    sent("Peter flew to United Kingdom", ["S-PER", "O", "O", "B-LOC", "E-LOC"]),
    sent("Angela Merkel visited America", ["B-PER", "E-PER", "O", "S-LOC"]),
), IOBES)

glossary = build_entity_glossary(corpus)
for cls in sorted(glossary.classes):
    print(cls, glossary.entries[cls])

###############################################################################
# Sentence-centric: every slot flips a coin with probability ``p``.

rng = np.random.default_rng(0)
cfg = AugmentConfig(bernoulli_p=0.7)
for _ in range(3):
    out = sca_augment(corpus[0], glossary, cfg, rng)
    print(" ".join(out.sentence.words), [(r.original, r.replacement) for r in out.replacements])

###############################################################################
# Entity-centric: pick an entity by frequency, then a host sentence of that
# class.  Streams are keyed by ``(seed, epoch)``, so re-running an epoch gives
# the same sentences.

eca = AugmentConfig(mode=AugmentMode.ECA, seed=1, max_per_epoch=4)
for aug in augmentation_stream(corpus, eca, epoch=0):
    print(aug.source_index, " ".join(aug.sentence.words), aug.sentence.labels)
