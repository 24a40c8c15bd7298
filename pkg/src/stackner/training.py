"""Separate (three-phase) and joint training of a :class:`BilateralModel`.

Separate training runs

1. ``LEFT_PRETRAIN``: left sub-network, projection and CRF on gold data,
   right side masked to zeros;
2. ``RIGHT_PRETRAIN``: right sub-network, projection and CRF on gold data
   interleaved batch by batch with freshly augmented sentences, left side
   masked;
3. ``CRF_FINETUNE``: projection and CRF only, both sides active, gold data.

Parameters outside a phase's groups have ``requires_grad`` switched off and
are not handed to the optimizer, so they stay bit-identical.
"""

from __future__ import annotations

import copy
import enum
import logging
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch

from .augment import AugmentConfig, AugmentMode, augmentation_stream
from .corpus import IOBES, Corpus, Sentence, Vocabulary, encode_corpus
from .evaluation import ScoreReport, score_entities
from .model import BilateralModel, Side, save_checkpoint

logger = logging.getLogger(__name__)


class Phase(str, enum.Enum):
    LEFT_PRETRAIN = "LEFT_PRETRAIN"
    RIGHT_PRETRAIN = "RIGHT_PRETRAIN"
    CRF_FINETUNE = "CRF_FINETUNE"
    JOINT = "JOINT"


class Optimizer(str, enum.Enum):
    SGD_MOMENTUM = "sgd_momentum"
    ADAPTIVE = "adaptive"


SEPARATE_PHASES = (Phase.LEFT_PRETRAIN, Phase.RIGHT_PRETRAIN, Phase.CRF_FINETUNE)

_PHASE_SIDE = {Phase.LEFT_PRETRAIN: Side.LEFT, Phase.RIGHT_PRETRAIN: Side.RIGHT,
               Phase.CRF_FINETUNE: Side.BOTH, Phase.JOINT: Side.BOTH}

_PHASE_GROUPS = {
    Phase.LEFT_PRETRAIN: {"left", "shared", "projection", "crf"},
    Phase.RIGHT_PRETRAIN: {"right", "shared", "projection", "crf"},
    Phase.CRF_FINETUNE: {"projection", "crf"},
    Phase.JOINT: {"left", "right", "shared", "projection", "crf"},
}


def trainable_groups(phase: Phase, model: BilateralModel) -> frozenset[str]:
    present = set(model.parameter_groups())
    return frozenset(_PHASE_GROUPS[Phase(phase)] & present)


@dataclass(frozen=True)
class TrainConfig:
    epochs_left: int = 10
    epochs_right: int = 10
    epochs_finetune: int = 4
    epochs_joint: int = 10
    batch_size: int = 16
    learning_rate: float = 0.03
    momentum: float = 0.9
    lr_decay: float = 0.05
    gradient_clip: float | None = 5.0
    optimizer: Optimizer = Optimizer.SGD_MOMENTUM
    seed: int = 0
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    early_stopping_patience: int = 5
    # chance of mapping a training singleton to the unknown index per occurrence
    singleton_unk: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "optimizer", Optimizer(self.optimizer))
        for name in ("epochs_left", "epochs_right", "epochs_finetune", "epochs_joint"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.singleton_unk <= 1.0:
            raise ValueError("singleton_unk must lie in [0, 1]")
        if self.gradient_clip is not None and self.gradient_clip <= 0:
            raise ValueError("gradient_clip must be positive or None")

    def epochs(self, phase: Phase) -> int:
        return {Phase.LEFT_PRETRAIN: self.epochs_left, Phase.RIGHT_PRETRAIN: self.epochs_right,
                Phase.CRF_FINETUNE: self.epochs_finetune,
                Phase.JOINT: self.epochs_joint}[Phase(phase)]


@dataclass
class PhaseState:
    phase: Phase
    trainable: frozenset[str]
    best_dev_f1: float = -1.0
    epoch: int = 0
    losses: list[float] = field(default_factory=list)


class TrainingLog:
    """Collects ``key=value`` epoch lines and mirrors them to a file if given."""

    def __init__(self, path: str | os.PathLike | None = None):
        self.path = path
        self.lines: list[str] = []
        self.phases: list[Phase] = []
        if path is not None:
            open(path, "w").close()

    def write(self, line: str) -> None:
        self.lines.append(line)
        logger.info(line)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")


def _phase_seed(seed: int, phase: Phase) -> list[int]:
    return [seed, list(Phase).index(Phase(phase))]


def evaluate(model: BilateralModel, corpus: Corpus | Sequence[Sentence],
             active: Side = Side.BOTH) -> ScoreReport:
    sentences = list(corpus)
    predicted = model.predict(sentences, active)
    return score_entities(sentences, predicted, scheme=IOBES)


def _batches(items: Sequence[Sentence], size: int) -> list[list[Sentence]]:
    return [list(items[i:i + size]) for i in range(0, len(items), size)]


def _interleave(a: list, b: list) -> list:
    out = []
    for i in range(max(len(a), len(b))):
        if i < len(a):
            out.append(a[i])
        if i < len(b):
            out.append(b[i])
    return out


def _drop_singletons(batch, singletons, p, rng) -> None:
    hit = torch.isin(batch.words, singletons)
    coin = torch.from_numpy(rng.random(tuple(batch.words.shape)) < p)
    batch.words.masked_fill_(hit & coin, Vocabulary.UNK_INDEX)


def run_phase(model: BilateralModel, phase: Phase, corpus: Corpus, cfg: TrainConfig,
              dev: Corpus | None = None, run_dir: str | os.PathLike | None = None,
              log: TrainingLog | None = None,
              epoch_hook: Callable[[PhaseState], None] | None = None) -> PhaseState:
    phase = Phase(phase)
    if len(corpus) == 0:
        raise ValueError("training corpus is empty")
    log = log if log is not None else TrainingLog()
    log.phases.append(phase)
    active = _PHASE_SIDE[phase]
    state = PhaseState(phase, trainable_groups(phase, model))
    epochs = cfg.epochs(phase)
    if epochs == 0:
        return state

    gold = corpus.to_scheme(IOBES)
    encoded = encode_corpus(gold, model.words, model.chars)
    dev = dev.to_scheme(IOBES) if dev is not None else None
    use_augment = phase is Phase.RIGHT_PRETRAIN and cfg.augment.mode is not AugmentMode.OFF
    if phase is Phase.RIGHT_PRETRAIN and not use_augment:
        logger.warning("augmentation is off; right sub-network trains on gold data only")

    counts = Counter(t.word_id for s in encoded for t in s.tokens)
    singletons = torch.tensor(sorted(i for i, c in counts.items() if c == 1), dtype=torch.long)

    params = []
    for name, p in model.named_parameters():
        p.requires_grad_(model.parameter_group(name) in state.trainable)
        if p.requires_grad:
            params.append(p)
    torch.manual_seed(int(np.random.SeedSequence(_phase_seed(cfg.seed, phase))
                          .generate_state(1)[0]))
    if cfg.optimizer is Optimizer.SGD_MOMENTUM:
        opt = torch.optim.SGD(params, lr=cfg.learning_rate, momentum=cfg.momentum)
    else:
        opt = torch.optim.Adam(params, lr=cfg.learning_rate)

    best = None
    stale = 0
    try:
        for epoch in range(epochs):
            state.epoch = epoch + 1
            for group in opt.param_groups:
                group["lr"] = cfg.learning_rate / (1.0 + cfg.lr_decay * epoch)
            rng = np.random.default_rng(_phase_seed(cfg.seed, phase) + [epoch])
            order = rng.permutation(len(encoded))
            batches = _batches([encoded[int(i)] for i in order], cfg.batch_size)
            if use_augment:
                extra = [a.sentence for a in augmentation_stream(gold, cfg.augment, epoch)]
                batches = _interleave(batches, _batches(extra, cfg.batch_size))

            model.train()
            total, count = 0.0, 0
            for chunk in batches:
                batch = model.batch(chunk)
                if cfg.singleton_unk > 0 and len(singletons):
                    _drop_singletons(batch, singletons, cfg.singleton_unk, rng)
                opt.zero_grad()
                loss = model.loss(batch, active)
                (loss / len(chunk)).backward()
                if cfg.gradient_clip is not None:
                    torch.nn.utils.clip_grad_norm_(params, cfg.gradient_clip)
                opt.step()
                total += loss.item()
                count += len(chunk)
            state.losses.append(total / count)

            line = f"phase={phase.value} epoch={epoch + 1} train_nll={total / count:.6f}"
            if dev is not None and len(dev):
                report = evaluate(model, dev, active)
                m = report.micro
                line += (f" dev_precision={m.precision:.4f} dev_recall={m.recall:.4f}"
                         f" dev_f1={m.f1:.4f}")
                # ties keep the later, longer-trained parameters
                if m.f1 >= state.best_dev_f1:
                    best = {id(p): p.detach().clone() for p in params}
                if m.f1 > state.best_dev_f1:
                    state.best_dev_f1 = m.f1
                    stale = 0
                else:
                    stale += 1
            log.write(line)
            if epoch_hook is not None:
                epoch_hook(state)
            if dev is not None and stale >= cfg.early_stopping_patience:
                break

        if run_dir is not None:
            save_checkpoint(os.path.join(run_dir, f"{phase.value}-last.pt"), model,
                            {"phase": phase.value, "epoch": state.epoch})
        if best is not None:
            with torch.no_grad():
                for p in params:
                    p.copy_(best[id(p)])
        if run_dir is not None:
            save_checkpoint(os.path.join(run_dir, f"{phase.value}-best.pt"), model,
                            {"phase": phase.value, "best_dev_f1": state.best_dev_f1})
    finally:
        for p in model.parameters():
            p.requires_grad_(True)
    return state


def train_left(corpus, model, cfg, **kwargs) -> BilateralModel:
    run_phase(model, Phase.LEFT_PRETRAIN, corpus, cfg, **kwargs)
    return model


def train_right(corpus, model, cfg, **kwargs) -> BilateralModel:
    run_phase(model, Phase.RIGHT_PRETRAIN, corpus, cfg, **kwargs)
    return model


def finetune_crf(corpus, model, cfg, **kwargs) -> BilateralModel:
    run_phase(model, Phase.CRF_FINETUNE, corpus, cfg, **kwargs)
    return model


def train_joint(corpus, model, cfg, **kwargs) -> BilateralModel:
    run_phase(model, Phase.JOINT, corpus, cfg, **kwargs)
    return model


def train_separate(corpus, model, cfg, start: Phase = Phase.LEFT_PRETRAIN,
                   snapshots: dict | None = None, **kwargs) -> BilateralModel:
    """Run the three phases in order, beginning at ``start`` (for resuming).

    If ``snapshots`` is a dict, a deep copy of the model is stored in it
    under each phase after that phase finishes.
    """
    phases = SEPARATE_PHASES[SEPARATE_PHASES.index(Phase(start)):]
    for phase in phases:
        run_phase(model, phase, corpus, cfg, **kwargs)
        if snapshots is not None:
            snapshots[phase] = copy.deepcopy(model)
    return model
