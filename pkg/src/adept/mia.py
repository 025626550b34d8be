"""Membership inference against an intent classifier.

A shadow classifier is trained on half of the attacker's data.  Its sorted
top-5 confidence scores on the half it saw (members) and the half it did
not (non-members) train a logistic-regression attack model, which then
scores the target classifier's outputs.  Attack success is the ROC AUC of
those scores with members as the positive class.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from adept.errors import ContractError
from adept.intent_classifier import ICConfig, IntentClassifierModel, train_ic
from adept.nn_core.tensor import _sigmoid
from adept.text_data import split_dataset

TOP_K = 5


@dataclass
class AttackModel:
    weights: np.ndarray
    bias: float
    iterations: int = 0
    seed: int = 0
    grad_norm: float = 0.0

    def score(self, features) -> np.ndarray:
        """Membership probability for each feature row."""
        x = np.atleast_2d(np.asarray(features, dtype=np.float64))
        return _sigmoid(x @ self.weights + self.bias)

    def predict(self, features) -> np.ndarray:
        return (self.score(features) >= 0.5).astype(int)


@dataclass
class MembershipDataset:
    members: np.ndarray
    nonmembers: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.members) == 0 or len(self.nonmembers) == 0:
            raise ContractError("both member and non-member features are required")


@dataclass
class AttackResult:
    auc: float
    scores: np.ndarray
    truth: np.ndarray
    record_ids: list


def _tokens(u):
    return tuple(u.tokens) if hasattr(u, "tokens") else tuple(u)


def features_batch(model: IntentClassifierModel, utterances) -> np.ndarray:
    """Top-5 probabilities (descending, zero-padded) for each utterance, shape ``(n, 5)``."""
    probs = model.predict_proba([_tokens(u) for u in utterances])
    top = -np.sort(-probs, axis=1)[:, :TOP_K]
    if top.shape[1] < TOP_K:
        top = np.pad(top, ((0, 0), (0, TOP_K - top.shape[1])))
    return top


def extract_features(model: IntentClassifierModel, u) -> np.ndarray:
    return features_batch(model, [u])[0]


def train_shadow(transformed_train, config: ICConfig | None = None, seed: int = 0):
    """Train one shadow classifier on a seeded half of the attacker's pool.

    Returns ``(shadow_model, shadow_in, shadow_out)``.
    """
    pool = list(transformed_train)
    if len(pool) < 4:
        raise ContractError(f"shadow training needs at least 4 utterances, got {len(pool)}")
    split = split_dataset(pool, seed)
    model, _ = train_ic(split.train, config, seed=seed)
    return model, split.train, split.eval


def _mean_log_loss(x, y, w, b):
    z = x @ w + b
    # log(1 + e^z) - y z, computed stably
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def train_attack(members, nonmembers, seed: int = 0, max_iter: int = 10_000, tol: float = 1e-6, lr: float = 1.0) -> AttackModel:
    """Binary logistic regression (member = 1) by full-batch gradient descent.

    Features are standardised for conditioning and the fitted coefficients
    are mapped back, so the returned weights act on raw feature vectors.
    Stops when the gradient norm drops below ``tol`` or after ``max_iter``.
    """
    members = np.atleast_2d(np.asarray(members, dtype=np.float64))
    nonmembers = np.atleast_2d(np.asarray(nonmembers, dtype=np.float64))
    if members.size == 0 or nonmembers.size == 0:
        raise ContractError("both member and non-member features are required")
    x = np.vstack([members, nonmembers])
    y = np.concatenate([np.ones(len(members)), np.zeros(len(nonmembers))])
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    sd[sd < 1e-12] = 1.0
    xs = (x - mu) / sd
    rng = np.random.default_rng(seed)
    w = rng.normal(0.0, 0.01, size=x.shape[1])
    b = 0.0
    gnorm = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        r = _sigmoid(xs @ w + b) - y
        gw = xs.T @ r / len(y)
        gb = r.mean()
        gnorm = float(np.sqrt(gw @ gw + gb * gb))
        if gnorm < tol:
            break
        w -= lr * gw
        b -= lr * gb
    raw_w = w / sd
    raw_b = float(b - raw_w @ mu)
    return AttackModel(raw_w, raw_b, iterations=it, seed=seed, grad_norm=gnorm)


def attack_loss(attack: AttackModel, members, nonmembers) -> float:
    x = np.vstack([np.atleast_2d(members), np.atleast_2d(nonmembers)])
    y = np.concatenate([np.ones(len(members)), np.zeros(len(nonmembers))])
    return _mean_log_loss(x, y, attack.weights, attack.bias)


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC: P(pos > neg) + 0.5 P(pos == neg), via mid-ranks."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape:
        raise ContractError("scores and labels must have the same length")
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ContractError("roc_auc needs both classes")
    order = np.argsort(s, kind="mergesort")
    sorted_s = s[order]
    ranks = np.empty(len(s))
    # average ranks over runs of equal scores
    starts = np.flatnonzero(np.r_[True, sorted_s[1:] != sorted_s[:-1]])
    ends = np.r_[starts[1:], len(s)]
    for a, e in zip(starts, ends):
        ranks[order[a:e]] = 0.5 * (a + 1 + e)
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def attack_target(target: IntentClassifierModel, attack: AttackModel, members, nonmembers) -> AttackResult:
    """Score the target's top-5 outputs on members and non-members."""
    members, nonmembers = list(members), list(nonmembers)
    if not members or not nonmembers:
        raise ContractError("both member and non-member utterances are required")
    ratio = len(members) / len(nonmembers)
    if not 0.9 <= ratio <= 1.0 / 0.9:
        raise ContractError(f"member/non-member counts are unbalanced ({len(members)} vs {len(nonmembers)})")
    feats = features_batch(target, members + nonmembers)
    scores = attack.score(feats)
    truth = np.r_[np.ones(len(members), dtype=int), np.zeros(len(nonmembers), dtype=int)]
    ids = [f"member-{i}" for i in range(len(members))] + [f"nonmember-{i}" for i in range(len(nonmembers))]
    return AttackResult(roc_auc(scores, truth), scores, truth, ids)


def run_attack(target, shadow_pool, members, nonmembers, config: ICConfig | None = None, seed: int = 0) -> AttackResult:
    """Shadow -> attack model -> AUC against ``target`` in one call."""
    shadow, s_in, s_out = train_shadow(shadow_pool, config, seed)
    attack = train_attack(features_batch(shadow, s_in), features_batch(shadow, s_out), seed=seed)
    return attack_target(target, attack, members, nonmembers)


def write_attack_csv(path, result: AttackResult) -> None:
    """Per-record rows, then a ``summary:auc`` row carrying the AUC."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["record_id", "membership_truth", "attack_score"])
        for rid, t, s in zip(result.record_ids, result.truth, result.scores):
            w.writerow([rid, int(t), f"{s:.12g}"])
        w.writerow(["summary:auc", "", f"{result.auc:.12g}"])


def read_attack_csv(path):
    """Inverse of :func:`write_attack_csv`: ``(rows, auc)``."""
    rows, auc = [], None
    with Path(path).open(encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            if rec["record_id"] == "summary:auc":
                auc = float(rec["attack_score"])
            else:
                rows.append((rec["record_id"], int(rec["membership_truth"]), float(rec["attack_score"])))
    return rows, auc
