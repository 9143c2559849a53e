import os
from pathlib import Path

import numpy as np
import pytest

from culgen.cultural_db import ingest, load_visual_elements
from culgen.embeddings import HashTextEncoder, PixelStatsImageEncoder
from culgen.trainer import build_examples, load_training_manifest

ROOT = Path(__file__).resolve().parents[1]
CORPUS = ROOT / "fixtures" / "corpus"
FIXTURES = ROOT / "fixtures"


@pytest.fixture(scope="session")
def corpus():
    return CORPUS


@pytest.fixture(scope="session")
def db():
    return ingest(CORPUS / "db_manifest.jsonl", load_visual_elements())


@pytest.fixture(scope="session")
def encoders():
    return HashTextEncoder(16), PixelStatsImageEncoder(16, 2)


@pytest.fixture(scope="session")
def examples(db, encoders):
    te, ie = encoders
    return build_examples(load_training_manifest(CORPUS / "train_manifest.jsonl"), db, te, ie, (4, 8, 8))


@pytest.fixture(scope="session")
def pretrained_backbone(examples):
    from culgen.pipeline import pretrain_on_examples

    den, _ = pretrain_on_examples(examples, steps=1500, lr=3e-3, seed=0)
    return den


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def env_python_kernels(monkeypatch):
    monkeypatch.setenv("CULGEN_KERNELS", "python")
    return os.environ


ACCEPTANCE = {
    "test_ac1_schedule_contract": "1 schedule contract",
    "test_ac2_attention_oracle": "2 attention oracle",
    "test_ac3_adapter_gradients": "3 adapter gradients",
    "test_ac4_frozen_training": "4 frozen training",
    "test_ac5_retrieval": "5 retrieval",
    "test_ac6_metrics_arithmetic": "6 metrics arithmetic",
    "test_ac7_debiasing": "7 debiasing",
    "test_ac8_end_to_end": "8 end-to-end smoke",
}
_acceptance_results = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if name not in ACCEPTANCE:
        return
    if report.when == "call" or report.failed:
        prev = _acceptance_results.get(name, (True, 0.0))
        _acceptance_results[name] = (prev[0] and not report.failed, prev[1] + report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for name, label in ACCEPTANCE.items():
        if name in _acceptance_results:
            ok, secs = _acceptance_results[name]
            terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {label} ({secs:.1f} s)")
