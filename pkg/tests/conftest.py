import numpy as np
import pytest

from adept.autoencoder import AutoencoderConfig, train_autoencoder
from adept.intent_classifier import ICConfig
from adept.text_data import build_vocab
from adept.toydata import tiny_corpus, toy_intents

TINY_AE = AutoencoderConfig(emb_dim=32, hidden_dim=64, epochs=300, lr=5e-3, batch_size=8, seed=0)
TOY_IC = ICConfig(word_dim=32, char_dim=16, char_hidden=16, hidden_dim=32, epochs=60, lr=3e-3, batch_size=16)


@pytest.fixture(scope="session")
def tiny():
    return tiny_corpus()


@pytest.fixture(scope="session")
def tiny_vocab(tiny):
    return build_vocab(tiny)


@pytest.fixture(scope="session")
def tiny_ae(tiny, tiny_vocab):
    """Autoencoder overfit on the 8-utterance corpus (shared; do not mutate)."""
    return train_autoencoder(tiny, tiny_vocab, TINY_AE)


@pytest.fixture(scope="session")
def toy200():
    return toy_intents(200, 4, 0.4, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


TOY_AE = AutoencoderConfig(emb_dim=32, hidden_dim=64, epochs=150, lr=5e-3, batch_size=8)
FAST_AE = AutoencoderConfig(emb_dim=16, hidden_dim=32, epochs=20, lr=5e-3, batch_size=8)
FAST_IC = ICConfig(word_dim=16, char_dim=8, char_hidden=8, hidden_dim=16, epochs=8, lr=3e-3, batch_size=16)


def toy_experiment_config(seed=0, fast=False, sweep=None):
    from adept.pipeline import ExperimentConfig

    return ExperimentConfig(
        seed=seed,
        autoencoder=FAST_AE if fast else TOY_AE,
        classifier=FAST_IC if fast else TOY_IC,
        sweep=list(sweep or []),
    )


@pytest.fixture(scope="session")
def toy_experiment(toy200):
    """Seed-0 experiment on the 200-utterance toy set with a trained autoencoder."""
    from adept.pipeline import Experiment

    exp = Experiment(toy_experiment_config(0), toy200)
    exp.autoencoder
    return exp


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion (recorded via ``record_property``)."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(rep, "user_properties", []))
            if "criterion" in props and rep.when == "call":
                lines.append((props["criterion"], "PASS" if outcome == "passed" else "FAIL", props.get("detail", "")))
    if lines:
        terminalreporter.section("acceptance criteria")
        for crit, status, detail in sorted(lines, key=lambda t: int(t[0].split()[0])):
            terminalreporter.write_line(f"[{status}] {crit}{': ' + detail if detail else ''}")
