"""Intent classifier: word + char embeddings -> bi-LSTM -> max-pool -> linear.

Each word is represented by its embedding concatenated with the final state
of a character-level LSTM run over its spelling.  A single bi-directional
LSTM layer reads those features; the per-direction hidden states are
max-pooled over the real (unpadded) positions and a fully connected layer
maps the pooled vector to intent logits.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np

from adept.checkpoint import load_checkpoint, save_checkpoint
from adept.errors import ContractError, DimensionError
from adept.nn_core import (
    Tensor,
    clip_grad_norm,
    concat,
    embedding_lookup,
    embedding_table,
    final_states,
    lstm_params,
    lstm_sequence,
    make_optimizer,
    matmul,
    no_grad,
    softmax,
    softmax_cross_entropy,
    tmax,
    uniform_init,
)

log = logging.getLogger(__name__)

KIND = "intent_classifier"
PAD, UNK = "<pad>", "<unk>"
_NEG = -1e9


@dataclass
class ICConfig:
    word_dim: int = 64
    char_dim: int = 16
    char_hidden: int = 16
    hidden_dim: int = 64
    epochs: int = 30
    lr: float = 1e-3
    batch_size: int = 16
    grad_clip: float = 5.0
    optimizer: str = "adam"
    min_count: int = 1
    seed: int = 0


@dataclass
class Prediction:
    """Ranked ``(label, probability)`` pairs, most likely first."""

    ranked: list

    @property
    def labels(self) -> list:
        return [lab for lab, _ in self.ranked]

    @property
    def probs(self) -> list:
        return [p for _, p in self.ranked]


@dataclass
class ICTrainLog:
    epoch_loss: list = field(default_factory=list)
    initial_loss: float | None = None
    train_accuracy: float | None = None


def _index(items) -> dict:
    return {t: i for i, t in enumerate(items)}


class IntentClassifierModel:
    def __init__(self, words, chars, labels, config: ICConfig, rng=None):
        if len(labels) < 2:
            raise ContractError(f"need at least 2 intents, got {len(labels)}")
        self.words = list(words)
        self.chars = list(chars)
        self.labels = list(labels)
        self.word_index = _index(self.words)
        self.char_index = _index(self.chars)
        self.label_index = _index(self.labels)
        self.config = config
        rng = rng if rng is not None else np.random.default_rng(config.seed)
        c = config
        self.word_emb = embedding_table(rng, len(self.words), c.word_dim)
        self.char_emb = embedding_table(rng, len(self.chars), c.char_dim)
        self.char_lstm = lstm_params(rng, c.char_dim, c.char_hidden)
        feat = c.word_dim + c.char_hidden
        self.fwd = lstm_params(rng, feat, c.hidden_dim)
        self.bwd = lstm_params(rng, feat, c.hidden_dim)
        self.fc_w = uniform_init(rng, (2 * c.hidden_dim, len(self.labels)), 2 * c.hidden_dim)
        self.fc_b = uniform_init(rng, (len(self.labels),), 2 * c.hidden_dim)

    @property
    def num_labels(self) -> int:
        return len(self.labels)

    def named_parameters(self) -> dict:
        out = {"word_emb": self.word_emb, "char_emb": self.char_emb}
        for prefix, p in (("char_lstm", self.char_lstm), ("fwd", self.fwd), ("bwd", self.bwd)):
            out.update({f"{prefix}.w_x": p.w_x, f"{prefix}.w_h": p.w_h, f"{prefix}.b": p.b})
        out.update({"fc.w": self.fc_w, "fc.b": self.fc_b})
        return out

    def parameters(self) -> list:
        return list(self.named_parameters().values())

    # -- forward ------------------------------------------------------------
    def logits(self, batch) -> Tensor:
        """Logits ``(B, K)`` for a list of token sequences."""
        batch = [tuple(toks) for toks in batch]
        if any(len(toks) == 0 for toks in batch):
            raise ContractError("cannot classify an empty token list")
        c = self.config
        n = len(batch)
        lengths = np.array([len(t) for t in batch])
        steps = int(lengths.max())

        vocab = sorted({w for toks in batch for w in toks})
        pos = _index(vocab)
        spell = [[self.char_index.get(ch, 1) for ch in w] for w in vocab]
        clen = np.array([len(s) for s in spell])
        cids = np.zeros((int(clen.max()), len(vocab)), dtype=np.int64)
        for j, s in enumerate(spell):
            cids[: len(s), j] = s
        char_states = lstm_sequence(
            embedding_lookup(self.char_emb, cids), Tensor(np.zeros((len(vocab), c.char_hidden))), self.char_lstm
        )
        char_feat = final_states(char_states, clen)  # (U, char_hidden)

        wids = np.zeros((steps, n), dtype=np.int64)
        widx = np.zeros((steps, n), dtype=np.int64)
        for b, toks in enumerate(batch):
            wids[: len(toks), b] = [self.word_index.get(w, 1) for w in toks]
            widx[: len(toks), b] = [pos[w] for w in toks]
        x = concat([embedding_lookup(self.word_emb, wids), char_feat[widx]], axis=2)

        cols = np.arange(n)[None, :]
        t = np.arange(steps)[:, None]
        rev = np.where(t < lengths[None, :], lengths[None, :] - 1 - t, t)
        h0 = Tensor(np.zeros((n, c.hidden_dim)))
        h_fwd = lstm_sequence(x, h0, self.fwd)
        h_bwd = lstm_sequence(x[rev, np.broadcast_to(cols, rev.shape)], h0, self.bwd)
        bias = np.where(t < lengths[None, :], 0.0, _NEG)[:, :, None]
        pooled = concat([tmax(h_fwd + bias, axis=0), tmax(h_bwd + bias, axis=0)], axis=1)
        return matmul(pooled, self.fc_w) + self.fc_b

    def loss(self, batch, labels) -> Tensor:
        return softmax_cross_entropy(self.logits(batch), labels, reduction="mean")

    def predict_proba(self, batch, chunk: int = 128) -> np.ndarray:
        batch = list(batch)
        out = []
        with no_grad():
            for s in range(0, len(batch), chunk):
                out.append(softmax(self.logits(batch[s : s + chunk]).data, axis=1))
        return np.concatenate(out) if out else np.zeros((0, self.num_labels))

    # -- checkpointing ------------------------------------------------------
    def save(self, path) -> None:
        save_checkpoint(
            path,
            KIND,
            {"model": asdict(self.config), "words": self.words, "chars": self.chars, "labels": self.labels},
            {k: p.data for k, p in self.named_parameters().items()},
        )

    @classmethod
    def load(cls, path) -> "IntentClassifierModel":
        header, tensors = load_checkpoint(path, KIND)
        cfg = header["config"]
        model = cls(cfg["words"], cfg["chars"], cfg["labels"], ICConfig(**cfg["model"]))
        for name, p in model.named_parameters().items():
            if tensors[name].shape != p.shape:
                raise DimensionError(f"checkpoint tensor {name} has shape {tensors[name].shape}, expected {p.shape}")
            p.data = tensors[name].copy()
        return model


def build_ic_vocab(train, min_count: int = 1):
    """Word list, char list and sorted label list from training utterances."""
    wc = Counter(t for u in train for t in u.tokens)
    words = [PAD, UNK] + sorted((w for w, k in wc.items() if k >= min_count), key=lambda w: (-wc[w], w))
    chars = [PAD, UNK] + sorted({ch for w in wc for ch in w})
    labels = sorted({u.label for u in train})
    return words, chars, labels


def train_ic(train, config: ICConfig | None = None, seed: int | None = None):
    """Cross-entropy training; returns ``(model, ICTrainLog)``."""
    config = config or ICConfig()
    if seed is not None:
        config = ICConfig(**{**asdict(config), "seed": seed})
    train = list(train)
    words, chars, labels = build_ic_vocab(train, config.min_count)
    if len(labels) < 2:
        raise ContractError(f"intent classifier needs >= 2 distinct labels, got {len(labels)}")
    rng = np.random.default_rng(config.seed)
    model = IntentClassifierModel(words, chars, labels, config, rng)
    toks = [u.tokens for u in train]
    y = np.array([model.label_index[u.label] for u in train])
    params = model.parameters()
    opt = make_optimizer(config.optimizer, params, config.lr)
    tlog = ICTrainLog()
    with no_grad():
        tlog.initial_loss = float(model.loss(toks, y).data)
    for epoch in range(config.epochs):
        order = rng.permutation(len(train))
        total = 0.0
        for s in range(0, len(order), config.batch_size):
            idx = order[s : s + config.batch_size]
            opt.zero_grad()
            loss = model.loss([toks[i] for i in idx], y[idx])
            loss.backward()
            clip_grad_norm(params, config.grad_clip)
            opt.step()
            total += float(loss.data) * len(idx)
        tlog.epoch_loss.append(total / len(train))
        log.debug("ic epoch %d loss %.4f", epoch + 1, tlog.epoch_loss[-1])
    tlog.train_accuracy = evaluate_accuracy(model, train)
    return model, tlog


def rank(probs: np.ndarray, labels, k: int) -> Prediction:
    # stable sort on -p keeps lower label index first among ties
    order = np.argsort(-probs, kind="stable")[:k]
    return Prediction([(labels[i], float(probs[i])) for i in order])


def predict_topk(model: IntentClassifierModel, tokens, k: int = 5) -> Prediction:
    tokens = tuple(tokens)
    if not tokens:
        raise ContractError("cannot classify an empty token list")
    return rank(model.predict_proba([tokens])[0], model.labels, k)


def evaluate_accuracy(model: IntentClassifierModel, data) -> float:
    data = list(data)
    if not data:
        raise ContractError("cannot evaluate on an empty dataset")
    probs = model.predict_proba([u.tokens for u in data])
    pred = np.argsort(-probs, axis=1, kind="stable")[:, 0]
    return float(np.mean([model.labels[p] == u.label for p, u in zip(pred, data)]))
