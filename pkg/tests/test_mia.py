import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize

from adept.errors import ContractError
from adept.intent_classifier import ICConfig, IntentClassifierModel, train_ic
from adept.mia import (
    AttackModel,
    attack_loss,
    attack_target,
    extract_features,
    features_batch,
    read_attack_csv,
    roc_auc,
    run_attack,
    train_attack,
    train_shadow,
    write_attack_csv,
)
from adept.text_data import split_dataset
from adept.toydata import toy_intents

from conftest import TOY_IC


def pair_count_auc(pos, neg):
    """Independent oracle: count concordant pairs directly."""
    total = 0.0
    for p, q in itertools.product(pos, neg):
        total += 1.0 if p > q else 0.5 if p == q else 0.0
    return total / (len(pos) * len(neg))


class TestRocAuc:
    def test_perfect(self):
        assert roc_auc([0.9, 0.8, 0.7, 0.6], [1, 1, 0, 0]) == 1.0

    def test_three_of_four(self):
        assert roc_auc([0.9, 0.4, 0.6, 0.3], [1, 1, 0, 0]) == pytest.approx(0.75)

    def test_all_equal(self):
        assert roc_auc([0.3] * 6, [1, 0, 1, 0, 1, 0]) == 0.5

    def test_one_class(self):
        with pytest.raises(ContractError):
            roc_auc([0.1, 0.2], [1, 1])

    def test_matches_pair_counting(self, rng):
        for _ in range(100):
            n = rng.integers(2, 30)
            s = np.round(rng.random(n), 1)  # coarse grid forces ties
            y = rng.integers(0, 2, n)
            y[0], y[1] = 1, 0
            assert roc_auc(s, y) == pytest.approx(pair_count_auc(s[y == 1], s[y == 0]), abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(
        s=st.lists(st.integers(-800, 800), min_size=4, max_size=40),
        seed=st.integers(0, 1000),
    )
    def test_monotone_invariance_and_swap(self, s, seed):
        s = np.array(s) / 8.0
        y = np.random.default_rng(seed).integers(0, 2, len(s))
        y[0], y[1] = 1, 0
        auc = roc_auc(s, y)
        assert roc_auc(np.exp(s / 50.0) * 3 + 1, y) == pytest.approx(auc, abs=1e-12)
        assert roc_auc(s, 1 - y) == pytest.approx(1 - auc, abs=1e-12)


class TestTrainAttack:
    def test_separable(self):
        rng = np.random.default_rng(0)
        m = np.c_[np.full(20, 0.99), rng.random((20, 4)) * 0.01]
        n = np.c_[np.full(20, 0.40), rng.random((20, 4)) * 0.3]
        att = train_attack(m, n)
        acc = np.mean(np.r_[att.predict(m), 1 - att.predict(n)])
        assert acc == 1.0

    def test_indistinguishable(self):
        rng = np.random.default_rng(1)
        draw = lambda k: -np.sort(-rng.dirichlet(np.ones(6), size=k), axis=1)[:, :5]  # noqa: E731
        att = train_attack(draw(2000), draw(2000))
        test_m, test_n = draw(2000), draw(2000)
        acc = np.mean(np.r_[att.predict(test_m), 1 - att.predict(test_n)])
        assert acc == pytest.approx(0.5, abs=0.05)

    def test_matches_independent_logistic_fit(self):
        # overlapping one-feature classes: the MLE is finite
        members = np.array([[0.9], [0.8], [0.75], [0.6], [0.55], [0.3]])
        nonmembers = np.array([[0.7], [0.5], [0.45], [0.4], [0.2], [0.1]])
        att = train_attack(members, nonmembers, max_iter=200_000, tol=1e-10)
        x = np.r_[members[:, 0], nonmembers[:, 0]]
        y = np.r_[np.ones(6), np.zeros(6)]

        def nll(theta):
            z = theta[0] * x + theta[1]
            return np.sum(np.logaddexp(0, z) - y * z)

        theta = optimize.minimize(nll, np.zeros(2), method="BFGS", options={"gtol": 1e-12}).x
        assert -att.bias / att.weights[0] == pytest.approx(-theta[1] / theta[0], abs=1e-3)

    def test_loss_not_worse_than_zero_model(self, rng):
        m = rng.random((50, 5)) * 0.5 + 0.2
        n = rng.random((50, 5)) * 0.5
        att = train_attack(m, n)
        zero = AttackModel(np.zeros(5), 0.0)
        assert attack_loss(att, m, n) <= attack_loss(zero, m, n)

    def test_restarts_agree(self, rng):
        m = rng.random((60, 5)) * 0.6 + 0.1
        n = rng.random((60, 5)) * 0.6
        y = np.r_[np.ones(60), np.zeros(60)]
        aucs = [roc_auc(train_attack(m, n, seed=s).score(np.vstack([m, n])), y) for s in range(4)]
        assert max(aucs) - min(aucs) <= 0.01

    def test_empty_class(self):
        with pytest.raises(ContractError):
            train_attack(np.zeros((0, 5)), np.ones((3, 5)))


class TestFeatures:
    def test_zero_padding(self):
        cfg = ICConfig(word_dim=4, char_dim=2, char_hidden=2, hidden_dim=4)
        model = IntentClassifierModel(["<pad>", "<unk>", "hi"], ["<pad>", "<unk>", "h", "i"], ["x", "y", "z"], cfg)
        model.fc_w.data[...] = 0.0
        model.fc_b.data[...] = np.log([0.3, 0.5, 0.2])
        np.testing.assert_allclose(extract_features(model, ("hi",)), [0.5, 0.3, 0.2, 0.0, 0.0], atol=1e-12)

    def test_length_and_order(self, toy200):
        model, _ = train_ic(toy200[:40], ICConfig(word_dim=8, char_dim=4, char_hidden=4, hidden_dim=8, epochs=2))
        f = features_batch(model, toy200[:30])
        assert f.shape == (30, 5)
        assert np.all(np.diff(f, axis=1) <= 0)

    def test_overfit_confident(self, toy200):
        model, _ = train_ic(toy200[:60], TOY_IC, seed=0)
        assert np.median(features_batch(model, toy200[:60])[:, 0]) > 0.9


class TestShadow:
    def test_partition_and_seed(self, toy200):
        cfg = ICConfig(word_dim=8, char_dim=4, char_hidden=4, hidden_dim=8, epochs=1)
        _, a_in, a_out = train_shadow(toy200[:40], cfg, seed=0)
        _, b_in, _ = train_shadow(toy200[:40], cfg, seed=1)
        assert set(a_in).isdisjoint(a_out)
        assert len(a_in) + len(a_out) == 40
        assert a_in != b_in

    def test_shadow_fits_training_half(self, toy200):
        from adept.intent_classifier import evaluate_accuracy

        shadow, s_in, _ = train_shadow(toy200[:80], TOY_IC, seed=2)
        assert evaluate_accuracy(shadow, s_in) >= 0.9

    def test_too_small(self, toy200):
        with pytest.raises(ContractError):
            train_shadow(toy200[:3])


@pytest.fixture(scope="module")
def overfit_attack():
    # small pool, many epochs: a deliberately memorising target
    data = toy_intents(120, 4, 0.5, seed=0)
    split = split_dataset(data, 0)
    cfg = ICConfig(**{**TOY_IC.__dict__, "epochs": 80})
    target, _ = train_ic(split.train, cfg, seed=0)
    result = run_attack(target, split.train, split.train, split.eval, cfg, seed=1)
    return split, target, result


class TestAttackTarget:
    def test_overfit_target_leaks(self, overfit_attack):
        assert overfit_attack[2].auc > 0.6

    def test_swap_symmetry(self, overfit_attack):
        split, target, result = overfit_attack
        cfg = ICConfig(**{**TOY_IC.__dict__, "epochs": 80})
        shadow, s_in, s_out = train_shadow(split.train, cfg, seed=1)
        att = train_attack(features_batch(shadow, s_in), features_batch(shadow, s_out), seed=1)
        swapped = attack_target(target, att, split.eval, split.train)
        assert swapped.auc == pytest.approx(1 - result.auc, abs=1e-12)

    def test_unbalanced_rejected(self, overfit_attack):
        split, target, _ = overfit_attack
        with pytest.raises(ContractError):
            attack_target(target, AttackModel(np.ones(5), 0.0), split.train, split.eval[:40])

    def test_csv_roundtrip(self, tmp_path, overfit_attack):
        result = overfit_attack[2]
        write_attack_csv(tmp_path / "a.csv", result)
        rows, auc = read_attack_csv(tmp_path / "a.csv")
        assert auc == pytest.approx(result.auc, abs=1e-11)
        assert len(rows) == len(result.scores)
        assert rows[0][0] == "member-0" and rows[0][1] == 1
        assert (tmp_path / "a.csv").read_text().splitlines()[0] == "record_id,membership_truth,attack_score"
