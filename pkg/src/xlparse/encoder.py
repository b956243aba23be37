"""Input embeddings and contextual encoders.

Two families are provided: a stacked bidirectional LSTM (order-sensitive)
and a Transformer-style self-attention stack whose position handling is one
of four variants:

* ``SelfAtt-Relative``      clipped |j - i| relative tables (k + 1 rows, no direction)
* ``SelfAtt-Relative+Dir``  clipped signed j - i relative tables (2k + 1 rows)
* ``SelfAtt-Absolute``      sinusoidal absolute positions added to the inputs
* ``SelfAtt-NoPosi``        no position information at all

All computation is per sentence on (n, d) matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterStore, Tensor
from .conllu import Sentence

RNN = "RNN"
SELFATT_RELATIVE = "SelfAtt-Relative"
SELFATT_RELATIVE_DIR = "SelfAtt-Relative+Dir"
SELFATT_ABSOLUTE = "SelfAtt-Absolute"
SELFATT_NOPOSI = "SelfAtt-NoPosi"
VARIANTS = (RNN, SELFATT_RELATIVE, SELFATT_RELATIVE_DIR, SELFATT_ABSOLUTE, SELFATT_NOPOSI)


@dataclass(frozen=True)
class EncoderConfig:
    variant: str = SELFATT_RELATIVE
    layers: int = 6
    word_dim: int = 300
    pos_dim: int = 50
    rnn_hidden: int = 300
    d_ff: int = 512
    heads: int = 7
    clip_k: int = 10
    dropout: float = 0.2

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown encoder variant {self.variant!r}; expected one of {VARIANTS}")
        if self.variant != RNN and self.d_model % self.heads:
            raise ValueError(f"d_model {self.d_model} not divisible by {self.heads} heads")
        if self.clip_k < 1:
            raise ValueError("clip_k must be >= 1")

    @classmethod
    def for_variant(cls, variant: str, **overrides) -> "EncoderConfig":
        """Full-size defaults: 3-layer BiLSTM (dropout 0.33) or 6-layer self-attention (0.2)."""
        if variant == RNN:
            base = dict(variant=variant, layers=3, dropout=0.33)
        else:
            base = dict(variant=variant, layers=6, dropout=0.2)
        base.update(overrides)
        return cls(**base)

    @property
    def d_model(self) -> int:
        return self.word_dim + self.pos_dim

    @property
    def d_z(self) -> int:
        return self.d_model // self.heads

    @property
    def output_dim(self) -> int:
        return 2 * self.rnn_hidden if self.variant == RNN else self.d_model

    @property
    def directed(self) -> bool:
        return self.variant == SELFATT_RELATIVE_DIR

    @property
    def relative(self) -> bool:
        return self.variant in (SELFATT_RELATIVE, SELFATT_RELATIVE_DIR)


# -- word embeddings -----------------------------------------------------------------

@dataclass
class WordEmbeddings:
    vocab: dict[str, int]
    vectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def lookup(self, word: str) -> np.ndarray | None:
        i = self.vocab.get(word)
        return None if i is None else self.vectors[i]


def parse_embeddings(text: str, dim: int | None = None) -> WordEmbeddings:
    """Parse the text format: header ``<vocab_size> <dim>``, then ``word v1 ... vdim``."""
    lines = text.split("\n")
    header = lines[0].split()
    if len(header) != 2:
        raise ValueError(f"bad embedding header {lines[0]!r}")
    size, file_dim = int(header[0]), int(header[1])
    if dim is not None and dim != file_dim:
        raise ValueError(f"embedding file has dimension {file_dim}, expected {dim}")
    vocab: dict[str, int] = {}
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.rstrip("\r").rstrip(" ").split(" ")
        if parts == [""]:
            continue
        if len(parts) != file_dim + 1:
            raise ValueError(f"line {lineno}: expected {file_dim} values, got {len(parts) - 1}")
        if parts[0] in vocab:
            continue
        vocab[parts[0]] = len(rows)
        rows.append([float(x) for x in parts[1:]])
    if len(rows) != size:
        raise ValueError(f"header announces {size} words, file has {len(rows)}")
    vectors = np.array(rows, dtype=np.float32).reshape(len(rows), file_dim)
    return WordEmbeddings(vocab, vectors)


def load_embeddings(path: str | Path, dim: int | None = None) -> WordEmbeddings:
    return parse_embeddings(Path(path).read_text(encoding="utf-8"), dim)


def format_embeddings(emb: WordEmbeddings) -> str:
    words = sorted(emb.vocab, key=emb.vocab.get)
    lines = [f"{len(words)} {emb.dim}"]
    lines += [w + " " + " ".join(repr(float(x)) for x in emb.vectors[emb.vocab[w]]) for w in words]
    return "\n".join(lines) + "\n"


def merge_embeddings(tables: Sequence[WordEmbeddings]) -> WordEmbeddings:
    """Union of several aligned tables; the first table wins on shared words."""
    vocab: dict[str, int] = {}
    rows = []
    for t in tables:
        for w, i in t.vocab.items():
            if w not in vocab:
                vocab[w] = len(rows)
                rows.append(t.vectors[i])
    dim = tables[0].dim if tables else 0
    return WordEmbeddings(vocab, np.array(rows, dtype=np.float32).reshape(len(rows), dim))


# -- input layer -------------------------------------------------------------------

class InputEmbedder:
    """Concatenation of a frozen word vector and a trainable POS embedding.

    Out-of-vocabulary words, and every word in delexicalized mode, get the
    zero vector as their word part.
    """

    def __init__(self, params: ParameterStore, pos_tags: Sequence[str],
                 words: WordEmbeddings | None, word_dim: int, pos_dim: int,
                 prefix: str = "input"):
        self.params = params
        self.pos_vocab = {t: i for i, t in enumerate(pos_tags)}
        self.word_dim = word_dim
        self.pos_dim = pos_dim
        if words is not None and words.dim != word_dim:
            raise ValueError(f"word vectors have dimension {words.dim}, expected {word_dim}")
        self.words = words
        self.word_table = (words.vectors if words is not None
                           else np.zeros((0, word_dim), dtype=np.float32))
        self.word_table.setflags(write=False)
        self.key = f"{prefix}.pos_table"
        params.embedding(self.key, (len(pos_tags), pos_dim))

    @property
    def d_model(self) -> int:
        return self.word_dim + self.pos_dim

    def word_matrix(self, forms: Sequence[str], delexicalized: bool, dtype) -> np.ndarray:
        out = np.zeros((len(forms), self.word_dim), dtype=dtype)
        if delexicalized or self.words is None:
            return out
        for i, w in enumerate(forms):
            idx = self.words.vocab.get(w)
            if idx is None:
                idx = self.words.vocab.get(w.lower())
            if idx is not None:
                out[i] = self.word_table[idx]
        return out

    def pos_ids(self, tags: Sequence[str]) -> np.ndarray:
        try:
            return np.array([self.pos_vocab[t] for t in tags], dtype=np.int64)
        except KeyError as e:
            raise KeyError(f"unknown POS tag {e.args[0]!r}") from None

    def __call__(self, s: Sentence, delexicalized: bool = False) -> Tensor:
        table = self.params[self.key]
        words = Tensor(self.word_matrix(s.forms, delexicalized, table.dtype))
        return ad.concat([words, ad.embedding(table, self.pos_ids(s.upos))], axis=-1)


def embed_input(s: Sentence, emb: InputEmbedder, delexicalized: bool = False) -> Tensor:
    return emb(s, delexicalized)


# -- BiLSTM ------------------------------------------------------------------------

def _gates(z: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
    hid = c.shape[-1]
    i, f, g, o = ad.split(z, [hid] * 4, axis=-1)
    c_new = ad.sigmoid(f) * c + ad.sigmoid(i) * ad.tanh(g)
    return ad.sigmoid(o) * ad.tanh(c_new), c_new


def lstm_cell(x: Tensor, h: Tensor, c: Tensor, w: Tensor, b: Tensor) -> tuple[Tensor, Tensor]:
    """One LSTM step on row vectors; gate order in ``w`` columns is i, f, g, o."""
    return _gates(ad.concat([x, h], axis=-1) @ w + b, c)


def _run_lstm(x: Tensor, w: Tensor, b: Tensor, hidden: int, reverse: bool) -> Tensor:
    n, d_in = x.shape
    # input projections for all steps at once; only the recurrent part is sequential
    xw = x @ w[:d_in] + b
    w_h = w[d_in:]
    h = Tensor(np.zeros((1, hidden), dtype=x.dtype))
    c = Tensor(np.zeros((1, hidden), dtype=x.dtype))
    outs = [None] * n
    steps = range(n - 1, -1, -1) if reverse else range(n)
    for t in steps:
        h, c = _gates(xw[t:t + 1] + h @ w_h, c)
        outs[t] = h
    return ad.concat(outs, axis=0)


class BiLSTMEncoder:
    def __init__(self, params: ParameterStore, cfg: EncoderConfig, input_dim: int, prefix: str = "enc"):
        self.params, self.cfg, self.prefix = params, cfg, prefix
        hid = cfg.rnn_hidden
        dim = input_dim
        for layer in range(cfg.layers):
            for d in ("fw", "bw"):
                params.weight(f"{prefix}.l{layer}.{d}.w", (dim + hid, 4 * hid))
                params.bias(f"{prefix}.l{layer}.{d}.b", (4 * hid,))
            dim = 2 * hid

    @property
    def output_dim(self) -> int:
        return 2 * self.cfg.rnn_hidden

    def __call__(self, x: Tensor, training: bool = False, rng=None) -> Tensor:
        if x.shape[0] == 0:
            raise ValueError("cannot encode an empty sequence")
        p, hid = self.params, self.cfg.rnn_hidden
        keep = 1.0 - self.cfg.dropout
        for layer in range(self.cfg.layers):
            if layer > 0:
                x = ad.dropout(x, keep, training, rng)
            fw = _run_lstm(x, p[f"{self.prefix}.l{layer}.fw.w"], p[f"{self.prefix}.l{layer}.fw.b"], hid, False)
            bw = _run_lstm(x, p[f"{self.prefix}.l{layer}.bw.w"], p[f"{self.prefix}.l{layer}.bw.b"], hid, True)
            x = ad.concat([fw, bw], axis=-1)
        return x


def encode_rnn(x: Tensor, encoder: BiLSTMEncoder, training: bool = False, rng=None) -> Tensor:
    return encoder(x, training, rng)


# -- self-attention ----------------------------------------------------------------

def relative_index(i: int, j: int, k: int, directed: bool = False) -> int:
    """Row of the relative-position table used for query i attending to key j."""
    if directed:
        return max(-k, min(k, j - i)) + k
    return min(abs(j - i), k)


def relative_index_matrix(n: int, k: int, directed: bool) -> np.ndarray:
    pos = np.arange(n)
    diff = pos[None, :] - pos[:, None]
    if directed:
        return np.clip(diff, -k, k) + k
    return np.minimum(np.abs(diff), k)


def sinusoid_positions(n: int, d: int) -> np.ndarray:
    pos = np.arange(n)[:, None]
    rates = np.exp(-math.log(10000.0) * (np.arange(0, d, 2) / d))
    out = np.zeros((n, d))
    out[:, 0::2] = np.sin(pos * rates)
    out[:, 1::2] = np.cos(pos * rates[: d // 2])
    return out


class SelfAttentionEncoder:
    """Post-norm Transformer encoder with optional relative position tables.

    The relative key/value tables are shared by all heads of a layer.
    """

    def __init__(self, params: ParameterStore, cfg: EncoderConfig, prefix: str = "enc"):
        if cfg.variant == RNN:
            raise ValueError("SelfAttentionEncoder needs a self-attention variant")
        self.params, self.cfg, self.prefix = params, cfg, prefix
        d, dz = cfg.d_model, cfg.d_z
        rows = 2 * cfg.clip_k + 1 if cfg.directed else cfg.clip_k + 1
        for l in range(cfg.layers):
            q = f"{prefix}.l{l}"
            for name in ("wq", "wk", "wv", "wo"):
                params.weight(f"{q}.{name}", (d, d))
            if cfg.relative:
                params.embedding(f"{q}.rel_k", (rows, dz))
                params.embedding(f"{q}.rel_v", (rows, dz))
            params.ones(f"{q}.ln1.g", (d,))
            params.bias(f"{q}.ln1.b", (d,))
            params.weight(f"{q}.ff1.w", (d, cfg.d_ff))
            params.bias(f"{q}.ff1.b", (cfg.d_ff,))
            params.weight(f"{q}.ff2.w", (cfg.d_ff, d))
            params.bias(f"{q}.ff2.b", (d,))
            params.ones(f"{q}.ln2.g", (d,))
            params.bias(f"{q}.ln2.b", (d,))
        self.last_attention: list[np.ndarray] = []

    @property
    def output_dim(self) -> int:
        return self.cfg.d_model

    def attention(self, x: Tensor, layer: int) -> Tensor:
        cfg, p = self.cfg, self.params
        q_ = f"{self.prefix}.l{layer}"
        n, d = x.shape
        H, dz = cfg.heads, cfg.d_z

        def heads(t: Tensor) -> Tensor:  # (n, d) -> (H, n, dz)
            return t.reshape(n, H, dz).transpose(1, 0, 2)

        q = heads(x @ p[f"{q_}.wq"])
        k = heads(x @ p[f"{q_}.wk"])
        v = heads(x @ p[f"{q_}.wv"])
        scores = q @ k.transpose(0, 2, 1)  # (H, n, n)
        if cfg.relative:
            idx = relative_index_matrix(n, cfg.clip_k, cfg.directed)
            a_k = ad.embedding(p[f"{q_}.rel_k"], idx)  # (n, n, dz)
            q_by_pos = q.transpose(1, 0, 2)  # (n, H, dz)
            rel = (q_by_pos @ a_k.transpose(0, 2, 1)).transpose(1, 0, 2)  # (H, n, n)
            scores = scores + rel
        alpha = ad.softmax(scores * (1.0 / math.sqrt(dz)), axis=-1)
        self.last_attention.append(alpha.data)
        z = alpha @ v  # (H, n, dz)
        if cfg.relative:
            a_v = ad.embedding(p[f"{q_}.rel_v"], idx)  # (n, n, dz)
            z = z + (alpha.transpose(1, 0, 2) @ a_v).transpose(1, 0, 2)
        z = z.transpose(1, 0, 2).reshape(n, d)
        return z @ p[f"{q_}.wo"]

    def __call__(self, x: Tensor, training: bool = False, rng=None) -> Tensor:
        if x.shape[0] == 0:
            raise ValueError("cannot encode an empty sequence")
        cfg, p = self.cfg, self.params
        keep = 1.0 - cfg.dropout
        self.last_attention = []
        if cfg.variant == SELFATT_ABSOLUTE:
            x = x + Tensor(sinusoid_positions(x.shape[0], x.shape[1]).astype(x.dtype))
        for l in range(cfg.layers):
            q_ = f"{self.prefix}.l{l}"
            att = ad.dropout(self.attention(x, l), keep, training, rng)
            x = ad.layer_norm(x + att, p[f"{q_}.ln1.g"], p[f"{q_}.ln1.b"])
            hidden = ad.relu(x @ p[f"{q_}.ff1.w"] + p[f"{q_}.ff1.b"])
            hidden = ad.dropout(hidden, keep, training, rng)
            ff = ad.dropout(hidden @ p[f"{q_}.ff2.w"] + p[f"{q_}.ff2.b"], keep, training, rng)
            x = ad.layer_norm(x + ff, p[f"{q_}.ln2.g"], p[f"{q_}.ln2.b"])
        return x


def encode_selfatt(x: Tensor, encoder: SelfAttentionEncoder, training: bool = False, rng=None) -> Tensor:
    return encoder(x, training, rng)


def build_encoder(params: ParameterStore, cfg: EncoderConfig, input_dim: int, prefix: str = "enc"):
    if cfg.variant == RNN:
        return BiLSTMEncoder(params, cfg, input_dim, prefix)
    if input_dim != cfg.d_model:
        raise ValueError(f"self-attention input width {input_dim} != d_model {cfg.d_model}")
    return SelfAttentionEncoder(params, cfg, prefix)
