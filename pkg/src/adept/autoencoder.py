"""Label-aware LSTM sequence autoencoder.

The encoder reads ``[BOS, @label, words..., EOS]`` left to right and its
final hidden state is the latent ``r``.  Training clips ``r`` to the L2 ball
of radius ``C`` (no noise) and reconstructs the same sequence with a
teacher-forced decoder whose initial hidden state is the clipped latent.
At transformation time the clipped latent is additionally noised
(:func:`adept.dp_mechanism.privatize`) and decoded greedily.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from adept import dp_mechanism as dp
from adept.checkpoint import load_checkpoint, save_checkpoint
from adept.errors import ConfigError, ContractError, DimensionError
from adept.nn_core import (
    LSTMParams,
    Tensor,
    ball_penalty,
    clip_grad_norm,
    clip_rows,
    embedding_lookup,
    embedding_table,
    final_states,
    lstm_params,
    lstm_sequence,
    make_optimizer,
    matmul,
    no_grad,
    softmax_cross_entropy,
    uniform_init,
)
from adept.nn_core.tensor import _sigmoid
from adept.text_data import (
    BOS_ID,
    EOS_ID,
    PAD_ID,
    Vocabulary,
    encode_for_autoencoder,
    parse_transformed,
)

log = logging.getLogger(__name__)

KIND = "autoencoder"


@dataclass
class AutoencoderConfig:
    emb_dim: int = 64
    hidden_dim: int = 128
    clip_radius: float = 1.0
    epochs: int = 60
    lr: float = 1e-3
    batch_size: int = 16
    grad_clip: float = 5.0
    optimizer: str = "adam"
    # weight of the mean squared norm excess beyond C; the hard projection has no
    # radial gradient, so this is what keeps raw latents near the ball
    norm_penalty: float = 0.1
    seed: int = 0


@dataclass
class DecodeOptions:
    max_length: int = 32
    no_repeat_window: int = 0

    def __post_init__(self):
        if self.max_length < 2:
            raise ConfigError(f"max_length must be >= 2, got {self.max_length}")
        if self.no_repeat_window < 0:
            raise ConfigError("no_repeat_window must be non-negative")


@dataclass
class TrainLog:
    epoch_loss: list = field(default_factory=list)
    initial_loss: float | None = None


class AutoencoderModel:
    def __init__(self, vocab: Vocabulary, config: AutoencoderConfig, rng: np.random.Generator | None = None):
        self.vocab = vocab
        self.config = config
        rng = rng if rng is not None else np.random.default_rng(config.seed)
        v, e, d = len(vocab), config.emb_dim, config.hidden_dim
        self.embedding = embedding_table(rng, v, e)
        self.encoder = lstm_params(rng, e, d)
        self.decoder = lstm_params(rng, e, d)
        self.out_w = uniform_init(rng, (d, v), d)
        self.out_b = uniform_init(rng, (v,), d)

    @property
    def latent_dim(self) -> int:
        return self.config.hidden_dim

    @property
    def clip_radius(self) -> float:
        return self.config.clip_radius

    def named_parameters(self) -> dict:
        return {
            "embedding": self.embedding,
            "encoder.w_x": self.encoder.w_x,
            "encoder.w_h": self.encoder.w_h,
            "encoder.b": self.encoder.b,
            "decoder.w_x": self.decoder.w_x,
            "decoder.w_h": self.decoder.w_h,
            "decoder.b": self.decoder.b,
            "out.w": self.out_w,
            "out.b": self.out_b,
        }

    def parameters(self) -> list:
        return list(self.named_parameters().values())

    # -- graph pieces -------------------------------------------------------
    def _encode_graph(self, seqs) -> Tensor:
        ids, lengths = _pad(seqs)
        states = lstm_sequence(embedding_lookup(self.embedding, ids), Tensor(np.zeros((len(seqs), self.latent_dim))), self.encoder)
        return final_states(states, lengths)

    def loss(self, seqs) -> Tensor:
        """Mean per-token teacher-forced cross-entropy, plus the latent norm penalty."""
        raw = self._encode_graph(seqs)
        latent = clip_rows(raw, self.clip_radius)
        dec_in, _ = _pad([s[:-1] for s in seqs])
        targets, tlen = _pad([s[1:] for s in seqs])
        n_steps, batch = dec_in.shape
        states = lstm_sequence(embedding_lookup(self.embedding, dec_in), latent, self.decoder)
        logits = matmul(states.reshape(n_steps * batch, self.latent_dim), self.out_w) + self.out_b
        mask = (np.arange(n_steps)[:, None] < tlen[None, :]).astype(np.float64)
        loss = softmax_cross_entropy(logits, targets.reshape(-1), mask.reshape(-1), reduction="mean")
        if self.config.norm_penalty > 0:
            loss = loss + self.config.norm_penalty * ball_penalty(raw, self.clip_radius)
        return loss

    # -- checkpointing ------------------------------------------------------
    def save(self, path) -> None:
        save_checkpoint(
            path,
            KIND,
            {"model": asdict(self.config), "vocab": self.vocab.to_json()},
            {k: p.data for k, p in self.named_parameters().items()},
        )

    @classmethod
    def load(cls, path) -> "AutoencoderModel":
        header, tensors = load_checkpoint(path, KIND)
        model = cls(Vocabulary.from_json(header["config"]["vocab"]), AutoencoderConfig(**header["config"]["model"]))
        for name, p in model.named_parameters().items():
            if tensors[name].shape != p.shape:
                raise DimensionError(f"checkpoint tensor {name} has shape {tensors[name].shape}, expected {p.shape}")
            p.data = tensors[name].copy()
        return model


def _pad(seqs):
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    if (lengths == 0).any():
        raise ContractError("cannot encode an empty sequence")
    ids = np.full((int(lengths.max()), len(seqs)), PAD_ID, dtype=np.int64)
    for b, s in enumerate(seqs):
        ids[: len(s), b] = s
    return ids, lengths


# -- inference (no tape) -----------------------------------------------------------
def encode_batch(model: AutoencoderModel, seqs) -> np.ndarray:
    """Latents (final encoder hidden states) for a batch of id sequences."""
    with no_grad():
        return model._encode_graph([list(s) for s in seqs]).data.copy()


def encode(model: AutoencoderModel, ids) -> np.ndarray:
    ids = list(ids)
    if not ids:
        raise ContractError("cannot encode an empty sequence")
    if min(ids) < 0 or max(ids) >= len(model.vocab):
        raise IndexError("token id outside the vocabulary")
    return encode_batch(model, [ids])[0]


def _lstm_step(p: LSTMParams, x, h, c):
    d = h.shape[1]
    z = x @ p.w_x.data + h @ p.w_h.data + p.b.data
    a = _sigmoid(z)
    g = np.tanh(z[:, 2 * d : 3 * d])
    c = a[:, d : 2 * d] * c + a[:, :d] * g
    return a[:, 3 * d :] * np.tanh(c), c


def decode_batch(model: AutoencoderModel, latents, opts: DecodeOptions | None = None) -> list:
    """Greedy decoding from each latent; returns ``[BOS, tokens..., (EOS)]`` lists."""
    opts = opts or DecodeOptions()
    latents = np.asarray(latents, dtype=np.float64)
    if latents.ndim != 2 or latents.shape[1] != model.latent_dim:
        raise DimensionError(f"latents must be (n, {model.latent_dim}), got {latents.shape}")
    n = latents.shape[0]
    h, c = latents.copy(), np.zeros_like(latents)
    tok = np.full(n, BOS_ID, dtype=np.int64)
    out = [[BOS_ID] for _ in range(n)]
    done = np.zeros(n, dtype=bool)
    emb = model.embedding.data
    w = opts.no_repeat_window
    for _ in range(opts.max_length):
        h, c = _lstm_step(model.decoder, emb[tok], h, c)
        logits = h @ model.out_w.data + model.out_b.data
        logits[:, PAD_ID] = -np.inf
        logits[:, BOS_ID] = -np.inf
        if w > 0:
            for b in range(n):
                recent = out[b][1:][-w:]
                if recent:
                    logits[b, recent] = -np.inf
        tok = np.argmax(logits, axis=1)
        for b in np.flatnonzero(~done):
            out[b].append(int(tok[b]))
        done |= tok == EOS_ID
        if done.all():
            break
    return out


def decode(model: AutoencoderModel, latent, opts: DecodeOptions | None = None) -> list:
    latent = np.asarray(latent, dtype=np.float64)
    if latent.shape != (model.latent_dim,):
        raise DimensionError(f"latent must have length {model.latent_dim}, got {latent.shape}")
    return decode_batch(model, latent[None, :], opts)[0]


# -- training -----------------------------------------------------------------
def train_autoencoder(corpus, vocab: Vocabulary, config: AutoencoderConfig | None = None):
    """Teacher-forced reconstruction training with latent clipping.

    Returns ``(model, TrainLog)``; ``TrainLog.epoch_loss`` holds the mean
    per-token cross-entropy of each epoch.
    """
    config = config or AutoencoderConfig()
    corpus = list(corpus)
    if not corpus:
        raise ContractError("cannot train an autoencoder on an empty corpus")
    rng = np.random.default_rng(config.seed)
    model = AutoencoderModel(vocab, config, rng)
    seqs = [encode_for_autoencoder(u, vocab) for u in corpus]
    params = model.parameters()
    opt = make_optimizer(config.optimizer, params, config.lr)
    tlog = TrainLog()
    with no_grad():
        tlog.initial_loss = float(model.loss(seqs).data)
    for epoch in range(config.epochs):
        order = rng.permutation(len(seqs))
        total, count = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            batch = [seqs[i] for i in order[start : start + config.batch_size]]
            opt.zero_grad()
            loss = model.loss(batch)
            loss.backward()
            clip_grad_norm(params, config.grad_clip)
            opt.step()
            ntok = sum(len(s) - 1 for s in batch)
            total += float(loss.data) * ntok
            count += ntok
        tlog.epoch_loss.append(total / count)
        log.debug("autoencoder epoch %d loss %.4f", epoch + 1, tlog.epoch_loss[-1])
    return model, tlog


# -- transformation ------------------------------------------------------------
def _check_spec(model: AutoencoderModel, spec: dp.PrivacySpec):
    if spec.clip_radius != model.clip_radius:
        raise ConfigError(f"privacy spec clip radius {spec.clip_radius} != autoencoder clip radius {model.clip_radius}")
    if spec.dim != model.latent_dim:
        raise ConfigError(f"privacy spec dimension {spec.dim} != latent dimension {model.latent_dim}")


def transform_many(model, utterances, spec: dp.PrivacySpec, opts: DecodeOptions | None = None, base_seed: int = 0):
    """Transform each utterance; record ``i`` draws noise from seed ``base_seed + i``.

    Returns a list of :class:`LabeledUtterance` or :class:`Rejection`.
    """
    _check_spec(model, spec)
    utterances = list(utterances)
    if not utterances:
        return []
    latents = encode_batch(model, [encode_for_autoencoder(u, model.vocab) for u in utterances])
    clipped = dp.clip_batch(latents, spec.clip_radius)
    if np.any(np.linalg.norm(clipped, axis=1) > spec.clip_radius):
        raise AssertionError("clipped latent left the ball")
    noisy = clipped + np.stack([dp.sample_noise(spec, dp.record_rng(base_seed, i)) for i in range(len(utterances))])
    return [parse_transformed(ids, model.vocab) for ids in decode_batch(model, noisy, opts)]


def transform(model, u, spec: dp.PrivacySpec, opts: DecodeOptions | None = None, rng: np.random.Generator | None = None):
    """encode -> clip + noise -> greedy decode -> parse, for one utterance."""
    _check_spec(model, spec)
    r = encode(model, encode_for_autoencoder(u, model.vocab))
    noisy = dp.privatize(r, spec, rng if rng is not None else np.random.default_rng())
    return parse_transformed(decode(model, noisy, opts), model.vocab)
