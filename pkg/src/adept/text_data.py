"""Utterance ingestion, vocabulary, label-prefixed encoding and 50:50 splits."""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from adept.errors import ContractError, EmptyDatasetError, ParseError, UnknownLabelError

LABEL_MARK = "@"
PAD, UNK, BOS, EOS = "<pad>", "<unk>", "<s>", "</s>"
PAD_ID, UNK_ID, BOS_ID, EOS_ID = 0, 1, 2, 3
RESERVED = (PAD, UNK, BOS, EOS)


@dataclass(frozen=True)
class LabeledUtterance:
    label: str
    tokens: tuple

    def __post_init__(self):
        if not self.label:
            raise ContractError("utterance label must be non-empty")
        if not self.tokens:
            raise ContractError("utterance must have at least one token")
        object.__setattr__(self, "tokens", tuple(self.tokens))
        for tok in self.tokens:
            if not tok or any(ch.isspace() for ch in tok):
                raise ContractError(f"invalid token {tok!r}")

    @classmethod
    def from_text(cls, text: str, label: str) -> "LabeledUtterance":
        return cls(label.strip(), tuple(tokenize(text)))

    @property
    def text(self) -> str:
        return " ".join(self.tokens)

    def to_json(self) -> dict:
        return {"text": self.text, "label": self.label}


@dataclass(frozen=True)
class Rejection:
    """A decoded sequence that does not parse as ``@label tokens...``."""

    reason: str
    tokens: tuple = ()


@dataclass
class DatasetSplit:
    train: list
    eval: list
    seed: int


def tokenize(text: str) -> list:
    """Lowercased whitespace split; a leading "@" is stripped so no word can
    impersonate a label token."""
    out = []
    for tok in text.lower().split():
        if is_label_token(tok):
            tok = tok.lstrip(LABEL_MARK) or LABEL_MARK
        out.append(tok)
    return out


def label_token(label: str) -> str:
    return LABEL_MARK + label


# -- ingestion ---------------------------------------------------------------
def load_dataset(path, format: str | None = None) -> list:
    """Read a JSONL (``text``/``label`` fields) or two-column TSV file."""
    path = Path(path)
    fmt = format or ("tsv" if path.suffix.lower() in (".tsv", ".txt") else "jsonl")
    if fmt not in ("jsonl", "tsv"):
        raise ValueError(f"unsupported format {fmt!r}")
    data = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            text, label = _parse_jsonl(line, lineno) if fmt == "jsonl" else _parse_tsv(line, lineno)
            if not tokenize(text):
                raise ParseError("empty text", lineno)
            if not label.strip():
                raise ParseError("empty label", lineno)
            data.append(LabeledUtterance.from_text(text, label))
    if not data:
        raise EmptyDatasetError(f"{path} contains no records")
    return data


def _parse_jsonl(line, lineno):
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON ({exc.msg})", lineno) from exc
    if not isinstance(rec, dict):
        raise ParseError("record is not an object", lineno)
    for key in ("text", "label"):
        if not isinstance(rec.get(key), str):
            raise ParseError(f"missing string field {key!r}", lineno)
    return rec["text"], rec["label"]


def _parse_tsv(line, lineno):
    cols = line.split("\t")
    if len(cols) != 2:
        raise ParseError(f"expected 2 tab-separated columns (text, label), got {len(cols)}", lineno)
    return cols[0], cols[1]


def save_jsonl(data, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for u in data:
            fh.write(json.dumps(u.to_json(), ensure_ascii=False) + "\n")


def import_dataset(src, fmt: str) -> list:
    """Convert an external layout to utterances.

    Supported layouts:
      ``tsv``    text<TAB>label
      ``csv``    header with ``text`` and ``label`` (or ``intent``) columns
      ``seqin``  directory with parallel ``seq.in`` and ``label`` files, the
                 layout commonly used to distribute ATIS and SNIPS
    """
    src = Path(src)
    if fmt in ("tsv", "jsonl"):
        return load_dataset(src, fmt)
    if fmt == "csv":
        out = []
        with src.open(encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            label_col = "label" if reader.fieldnames and "label" in reader.fieldnames else "intent"
            for lineno, row in enumerate(reader, start=2):
                if not row.get("text") or not row.get(label_col):
                    raise ParseError("missing text or label column", lineno)
                out.append(LabeledUtterance.from_text(row["text"], row[label_col]))
    elif fmt == "seqin":
        texts = (src / "seq.in").read_text(encoding="utf-8").splitlines()
        labels = (src / "label").read_text(encoding="utf-8").splitlines()
        if len(texts) != len(labels):
            raise ParseError(f"seq.in has {len(texts)} lines but label has {len(labels)}")
        out = []
        for lineno, (t, lab) in enumerate(zip(texts, labels), start=1):
            if not t.strip() or not lab.strip():
                raise ParseError("empty text or label", lineno)
            # multi-intent rows such as "atis_flight#atis_airfare" keep the first
            out.append(LabeledUtterance.from_text(t, lab.split("#")[0]))
    else:
        raise ValueError(f"unsupported import format {fmt!r}")
    if not out:
        raise EmptyDatasetError(f"{src} contains no records")
    return out


def split_dataset(data, seed: int) -> DatasetSplit:
    """Seeded shuffle, then first half (rounded up) to train, rest to eval."""
    data = list(data)
    if len(data) < 2:
        raise ContractError(f"need at least 2 utterances to split, got {len(data)}")
    order = np.random.default_rng(seed).permutation(len(data))
    n_train = (len(data) + 1) // 2
    return DatasetSplit(
        train=[data[i] for i in order[:n_train]],
        eval=[data[i] for i in order[n_train:]],
        seed=seed,
    )


# -- vocabulary ----------------------------------------------------------------
@dataclass
class Vocabulary:
    tokens: list
    index: dict = field(init=False, repr=False)

    def __post_init__(self):
        if tuple(self.tokens[:4]) != RESERVED:
            raise ContractError("vocabulary must start with the four reserved tokens")
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ContractError("duplicate vocabulary entries")

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, tok):
        return tok in self.index

    def id(self, tok: str) -> int:
        return self.index.get(tok, UNK_ID)

    def token(self, i: int) -> str:
        return self.tokens[i]

    @property
    def label_ids(self) -> list:
        return [i for i, t in enumerate(self.tokens) if is_label_token(t)]

    @property
    def labels(self) -> list:
        return [t[1:] for t in self.tokens if is_label_token(t)]

    def to_json(self) -> list:
        return list(self.tokens)

    @classmethod
    def from_json(cls, tokens) -> "Vocabulary":
        return cls(list(tokens))


def is_label_token(tok: str) -> bool:
    return len(tok) > 1 and tok.startswith(LABEL_MARK)


def build_vocab(train, min_count: int = 1) -> Vocabulary:
    """Reserved tokens, then label tokens, then words by (-count, token)."""
    train = list(train)
    if not train:
        raise ContractError("cannot build a vocabulary from an empty corpus")
    counts = Counter(t for u in train for t in u.tokens)
    labels = sorted({label_token(u.label) for u in train})
    words = sorted(
        (t for t, n in counts.items() if n >= min_count and t not in RESERVED and not is_label_token(t)),
        key=lambda t: (-counts[t], t),
    )
    return Vocabulary(list(RESERVED) + labels + words)


def encode_tokens(tokens, vocab: Vocabulary) -> list:
    """Word ids with label-looking tokens and OOV words mapped to UNK."""
    return [UNK_ID if is_label_token(t) else vocab.id(t) for t in tokens]


def encode_for_autoencoder(u: LabeledUtterance, vocab: Vocabulary) -> list:
    """``[BOS, @label, words..., EOS]``."""
    lab = label_token(u.label)
    if lab not in vocab:
        raise UnknownLabelError(f"label {u.label!r} is not in the vocabulary")
    return [BOS_ID, vocab.id(lab), *encode_tokens(u.tokens, vocab), EOS_ID]


def parse_transformed(ids, vocab: Vocabulary):
    """Turn decoded ids back into a :class:`LabeledUtterance` or a :class:`Rejection`."""
    toks = [vocab.token(int(i)) for i in ids]
    if toks and toks[0] == BOS:
        toks = toks[1:]
    if EOS in toks:
        toks = toks[: toks.index(EOS)]
    toks = [t for t in toks if t != PAD]
    if not toks or not is_label_token(toks[0]):
        return Rejection("missing-label", tuple(toks))
    body = toks[1:]
    if not body:
        return Rejection("empty-utterance", tuple(toks))
    if any(is_label_token(t) or t in (BOS,) for t in body):
        return Rejection("misplaced-label", tuple(toks))
    return LabeledUtterance(toks[0][1:], tuple(body))
