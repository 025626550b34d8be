import math

import numpy as np
import pytest

from adept.errors import ContractError
from adept.intent_classifier import (
    ICConfig,
    IntentClassifierModel,
    evaluate_accuracy,
    predict_topk,
    rank,
    train_ic,
)
from adept.nn_core import softmax
from adept.nn_core.gradcheck import check_gradients
from adept.text_data import LabeledUtterance

WORDS = {
    "A": "alpha bravo charlie delta echo".split(),
    "B": "golf hotel india juliet kilo".split(),
    "C": "lima mike oscar papa romeo".split(),
    "D": "sierra tango uniform victor whiskey".split(),
}
FAST = ICConfig(word_dim=16, char_dim=8, char_hidden=8, hidden_dim=16, epochs=50, lr=5e-3)


def separable(n, labels, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        lab = labels[i % len(labels)]
        out.append(LabeledUtterance(lab, tuple(rng.choice(WORDS[lab], size=rng.integers(2, 6)))))
    return out


@pytest.fixture(scope="module")
def two_intents():
    data = separable(40, ["A", "B"])
    model, tlog = train_ic(data, FAST, seed=0)
    return data, model, tlog


@pytest.fixture(scope="module")
def four_intents():
    data = separable(80, list(WORDS), seed=1)
    model, _ = train_ic(data, FAST, seed=1)
    return data, model


class TestTraining:
    def test_separable_reaches_high_accuracy(self, two_intents):
        data, model, tlog = two_intents
        assert tlog.train_accuracy >= 0.95
        assert evaluate_accuracy(model, data) >= 0.95

    def test_initial_loss_near_log_k(self, two_intents):
        _, _, tlog = two_intents
        assert tlog.initial_loss == pytest.approx(math.log(2), rel=0.1)

    def test_same_seed_same_parameters(self):
        data = separable(12, ["A", "B"])
        cfg = ICConfig(word_dim=8, char_dim=4, char_hidden=4, hidden_dim=8, epochs=2)
        a, _ = train_ic(data, cfg, seed=3)
        b, _ = train_ic(data, cfg, seed=3)
        assert all(p.data.tobytes() == q.data.tobytes() for p, q in zip(a.parameters(), b.parameters()))

    def test_single_label_rejected(self):
        with pytest.raises(ContractError):
            train_ic(separable(6, ["A"]), FAST)

    def test_output_width_is_label_count(self, four_intents):
        _, model = four_intents
        assert model.fc_w.shape[1] == model.num_labels == 4


class TestPrediction:
    def test_truncates_to_k(self):
        data = separable(9, ["A", "B", "C"])
        model, _ = train_ic(data, ICConfig(word_dim=8, char_dim=4, char_hidden=4, hidden_dim=8, epochs=1))
        pred = predict_topk(model, ("alpha",), k=5)
        assert len(pred.ranked) == 3

    def test_descending_and_normalised(self, four_intents):
        data, model = four_intents
        probs = model.predict_proba([u.tokens for u in data])
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)
        for u in data[:10]:
            p = predict_topk(model, u.tokens).probs
            assert p == sorted(p, reverse=True)
            assert all(0 <= x <= 1 for x in p)

    def test_overfit_top1_confident(self, two_intents):
        data, model, _ = two_intents
        pred = predict_topk(model, data[0].tokens)
        assert pred.labels[0] == data[0].label and pred.probs[0] > 0.9

    def test_ties_broken_by_label_index(self):
        pred = rank(np.array([0.25, 0.5, 0.25]), ["a", "b", "c"], 3)
        assert pred.labels == ["b", "a", "c"]

    def test_ranking_invariant_to_logit_shift(self, rng):
        z = rng.normal(size=7)
        labels = list("abcdefg")
        assert rank(softmax(z), labels, 5).labels == rank(softmax(z + 123.0), labels, 5).labels

    def test_empty_tokens(self, two_intents):
        with pytest.raises(ContractError):
            predict_topk(two_intents[1], ())


class TestAccuracy:
    def test_permuted_labels_near_chance(self, four_intents):
        _, model = four_intents
        fresh = separable(400, list(WORDS), seed=9)
        rng = np.random.default_rng(0)
        labels = rng.permutation([u.label for u in fresh])
        shuffled = [LabeledUtterance(lab, u.tokens) for lab, u in zip(labels, fresh)]
        assert evaluate_accuracy(model, shuffled) == pytest.approx(0.25, abs=0.07)

    def test_all_unknown_tokens_give_majority_prediction_rate(self, four_intents):
        _, model = four_intents
        gold = ["A"] * 5 + ["B"] * 3 + ["C"] * 2
        # "zz" and "qq" share no word and no character with the training data
        data = [LabeledUtterance(g, ("zz", "qq", "zz")) for g in gold]
        predicted = predict_topk(model, data[0].tokens).labels[0]
        assert evaluate_accuracy(model, data) == pytest.approx(gold.count(predicted) / len(gold))

    def test_empty_data(self, four_intents):
        with pytest.raises(ContractError):
            evaluate_accuracy(four_intents[1], [])


def test_checkpoint_roundtrip(tmp_path, four_intents):
    data, model = four_intents
    model.save(tmp_path / "a.ckpt")
    loaded = IntentClassifierModel.load(tmp_path / "a.ckpt")
    loaded.save(tmp_path / "b.ckpt")
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
    toks = [u.tokens for u in data]
    assert model.predict_proba(toks).tobytes() == loaded.predict_proba(toks).tobytes()


@pytest.mark.parametrize("seed", range(3))
def test_full_graph_gradients(seed):
    data = separable(4, ["A", "B", "C"], seed=seed)
    cfg = ICConfig(word_dim=3, char_dim=2, char_hidden=2, hidden_dim=3)
    model = IntentClassifierModel(["<pad>", "<unk>", "alpha", "golf", "lima"], ["<pad>", "<unk>", *"abcdefghiklmop"], ["A", "B", "C"], cfg, np.random.default_rng(seed))
    toks = [u.tokens for u in data]
    y = [model.label_index[u.label] for u in data]
    errs = check_gradients(lambda: model.loss(toks, y), model.parameters())
    assert max(errs.values()) < 1e-4
