import copy
import dataclasses
import time

import pytest
import torch

from stackner.augment import AugmentConfig, AugmentMode
from stackner.corpus import Corpus, build_vocab, entity_classes, iobes_labelset
from stackner.model import BilateralConfig, BilateralModel, Side, SubNetworkSpec
from stackner.synthetic import make_synthetic_corpus
from stackner.training import Phase, TrainConfig, evaluate, run_phase

ACCEPTANCE_RESULTS = []
TIMINGS = {}


def record_criterion(number, title, passed, detail=""):
    ACCEPTANCE_RESULTS.append((number, title, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {number}. {title} {detail}".rstrip())


def synthetic_corpus(seed=0):
    train, dev, test = make_synthetic_corpus(seed=seed)
    return Corpus(tuple(train)), Corpus(tuple(dev)), Corpus(tuple(test))


@pytest.fixture(scope="session")
def synthetic():
    return synthetic_corpus()


def build_model(train, left=None, right=None, seed=0, **kwargs):
    words, chars = build_vocab(train)
    labels = iobes_labelset(entity_classes(train))
    left = left or SubNetworkSpec()
    cfg = BilateralConfig(left, right or left, tuple(labels), **kwargs)
    torch.manual_seed(seed)
    return BilateralModel(cfg, words, chars)


@pytest.fixture(scope="session")
def pipeline_runs(synthetic):
    start = time.perf_counter()
    runs = paired_runs(synthetic)
    TIMINGS["pipeline_runs"] = time.perf_counter() - start
    return runs


def paired_runs(synthetic, seeds=(0, 1, 2)):
    """Per seed: left-only baseline, separate bilateral, and baseline+baseline control.

    Both bilateral variants continue from the same phase-1 model, so the
    comparisons are paired.
    """
    train, dev, test = synthetic
    runs = {}
    for seed in seeds:
        cfg = TrainConfig(epochs_left=20, epochs_right=20, epochs_finetune=4, seed=seed,
                          augment=AugmentConfig(AugmentMode.SCA, 0.7, seed))
        model = build_model(train, seed=seed)
        run_phase(model, Phase.LEFT_PRETRAIN, train, cfg, dev=dev)
        left = copy.deepcopy(model)
        baseline = evaluate(left, test, Side.LEFT).micro.f1
        baseline_dev = evaluate(left, dev, Side.LEFT).micro.f1

        out = {"baseline": baseline, "baseline_dev": baseline_dev}
        for name, acfg in (("bilateral", cfg.augment),
                           ("double_baseline", AugmentConfig(AugmentMode.OFF))):
            m = copy.deepcopy(left)
            tcfg = dataclasses.replace(cfg, augment=acfg)
            run_phase(m, Phase.RIGHT_PRETRAIN, train, tcfg, dev=dev)
            out[f"{name}_right"] = evaluate(m, test, Side.RIGHT).micro.f1
            run_phase(m, Phase.CRF_FINETUNE, train, tcfg, dev=dev)
            out[name] = evaluate(m, test).micro.f1
        runs[seed] = out
    return runs
