"""
Separate training of a bilateral tagger
=======================================

A left sub-network learns from gold data, a right one from gold data mixed
with augmented sentences, and finally only the projection and CRF are
retrained on top of both.  Takes well under a minute on a laptop CPU.
"""

import torch

from stackner.augment import AugmentConfig
from stackner.corpus import Corpus, build_vocab, entity_classes, iobes_labelset
from stackner.model import BilateralConfig, BilateralModel, Side, SubNetworkSpec, WordEncoder
from stackner.synthetic import make_synthetic_corpus
from stackner.training import Phase, TrainConfig, TrainingLog, evaluate, train_separate

train, dev, test = (Corpus(tuple(s)) for s in make_synthetic_corpus(n_train=300, seed=0))
words, chars = build_vocab(train)
labels = iobes_labelset(entity_classes(train))

config = BilateralConfig(
    left=SubNetworkSpec(word_encoder=WordEncoder.RECURRENT),
    right=SubNetworkSpec(word_encoder=WordEncoder.RECURRENT_THEN_CONV),
    labelset=tuple(labels))
torch.manual_seed(0)
model = BilateralModel(config, words, chars)
print({group: sum(p.numel() for _, p in params)
       for group, params in model.parameter_groups().items()})

cfg = TrainConfig(epochs_left=8, epochs_right=8, epochs_finetune=3,
                  augment=AugmentConfig(bernoulli_p=0.7))
log = TrainingLog()
snapshots = {}
train_separate(train, model, cfg, dev=dev, log=log, snapshots=snapshots)
print("\n".join(log.lines[-3:]))

###############################################################################
# Each side as it stood after its own phase, then the combination.  The
# final projection was fitted to both halves, so scoring one side through it
# says little.

print("left ", f"{evaluate(snapshots[Phase.LEFT_PRETRAIN], test, Side.LEFT).micro.f1:.4f}")
print("right", f"{evaluate(snapshots[Phase.RIGHT_PRETRAIN], test, Side.RIGHT).micro.f1:.4f}")
print("both ", f"{evaluate(model, test).micro.f1:.4f}")
