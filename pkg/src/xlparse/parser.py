"""Encoder + decoder assembly for the four parser architectures."""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterStore, Tensor
from .conllu import UPOS_TAGS, Sentence, Treebank, with_predictions
from .decoder import DecoderConfig, GraphDecoder, ParseTree, StackPointerDecoder
from .encoder import (RNN, SELFATT_RELATIVE, EncoderConfig, InputEmbedder, WordEmbeddings,
                      build_encoder)

GRAPH = "graph"
STACK = "stack"
ARCHITECTURES = {
    "selfatt-graph": (SELFATT_RELATIVE, GRAPH),
    "selfatt-stack": (SELFATT_RELATIVE, STACK),
    "rnn-graph": (RNN, GRAPH),
    "rnn-stack": (RNN, STACK),
}


def parse_architecture(name: str) -> tuple[str, str]:
    try:
        return ARCHITECTURES[name.lower()]
    except KeyError:
        raise ValueError(f"unknown architecture {name!r}; choose from {sorted(ARCHITECTURES)}") from None


class Parser:
    """A dependency parser: input embeddings -> contextual encoder -> structured decoder."""

    def __init__(self, enc_cfg: EncoderConfig, decoder: str, pos_tags: Sequence[str],
                 labels: Sequence[str], words: WordEmbeddings | None = None,
                 dec_cfg: DecoderConfig | None = None, seed: int = 0, precision: str = "single"):
        if decoder not in (GRAPH, STACK):
            raise ValueError(f"decoder must be {GRAPH!r} or {STACK!r}")
        self.enc_cfg = enc_cfg
        self.dec_cfg = dec_cfg or DecoderConfig()
        self.decoder_kind = decoder
        self.pos_tags = tuple(pos_tags)
        self.labels = tuple(labels)
        self.label_index = {l: i for i, l in enumerate(self.labels)}
        self.seed = seed
        self.params = ParameterStore(seed, precision)
        self.embedder = InputEmbedder(self.params, self.pos_tags, words,
                                      enc_cfg.word_dim, enc_cfg.pos_dim)
        self.encoder = build_encoder(self.params, enc_cfg, self.embedder.d_model)
        out_dim = self.encoder.output_dim
        if decoder == GRAPH:
            self.decoder = GraphDecoder(self.params, out_dim, self.dec_cfg, self.labels)
        else:
            self.decoder = StackPointerDecoder(self.params, out_dim, self.dec_cfg, self.labels)

    @property
    def architecture(self) -> str:
        enc = "rnn" if self.enc_cfg.variant == RNN else "selfatt"
        return f"{enc}-{self.decoder_kind}"

    def set_word_embeddings(self, words: WordEmbeddings | None):
        """Swap in another (aligned) word table, e.g. a target language's."""
        if words is not None and words.dim != self.enc_cfg.word_dim:
            raise ValueError(f"word vectors have dimension {words.dim}, expected {self.enc_cfg.word_dim}")
        self.embedder.words = words
        self.embedder.word_table = (words.vectors if words is not None
                                    else np.zeros((0, self.enc_cfg.word_dim), dtype=np.float32))

    def cast(self, precision: str) -> "Parser":
        """Convert every parameter to ``precision`` in place."""
        self.params.cast(precision)
        return self

    def encode(self, s: Sentence, training: bool = False, rng=None, delexicalized: bool = False) -> Tensor:
        x = self.embedder(s, delexicalized)
        x = ad.dropout(x, 1.0 - self.enc_cfg.dropout, training, rng)
        return self.encoder(x, training, rng)

    def sentence_loss(self, s: Sentence, training: bool = False, rng=None,
                      delexicalized: bool = False) -> Tensor:
        try:
            label_ids = [self.label_index[r] for r in s.deprels]
        except KeyError as e:
            raise KeyError(f"unknown dependency label {e.args[0]!r}") from None
        enc = self.encode(s, training, rng, delexicalized)
        return self.decoder.loss(enc, s.heads, label_ids)

    def batch_loss(self, batch: Sequence[Sentence], training: bool = False, rng=None,
                   delexicalized: bool = False) -> Tensor:
        """Summed sentence losses divided by the number of tokens in the batch."""
        total = None
        tokens = 0
        for s in batch:
            l = self.sentence_loss(s, training, rng, delexicalized)
            total = l if total is None else total + l
            tokens += len(s)
        return total * (1.0 / tokens)

    def parse(self, s: Sentence, delexicalized: bool = False) -> ParseTree:
        with ad.no_grad():
            enc = self.encode(s, False, None, delexicalized)
            return self.decoder.decode(enc)

    def parse_sentences(self, sentences: Iterable[Sentence], delexicalized: bool = False) -> list[Sentence]:
        out = []
        for s in sentences:
            tree = self.parse(s, delexicalized)
            out.append(with_predictions(s, tree.heads, tree.labels))
        return out

    def parse_treebank(self, tb: Treebank, delexicalized: bool = False) -> Treebank:
        return Treebank(tb.language, tuple(self.parse_sentences(tb.sentences, delexicalized)))

    # -- persistence ---------------------------------------------------------------
    def config(self) -> dict:
        return {
            "encoder": asdict(self.enc_cfg),
            "decoder": asdict(self.dec_cfg),
            "decoder_kind": self.decoder_kind,
            "pos_tags": list(self.pos_tags),
            "labels": list(self.labels),
            "seed": self.seed,
        }

    def save(self, directory: str | Path):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        ad.save_checkpoint(self.params, directory / "params.ckpt")
        (directory / "model.json").write_text(json.dumps(self.config(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, directory: str | Path, words: WordEmbeddings | None = None) -> "Parser":
        directory = Path(directory)
        cfg = json.loads((directory / "model.json").read_text())
        parser = cls(EncoderConfig(**cfg["encoder"]), cfg["decoder_kind"], cfg["pos_tags"],
                     cfg["labels"], words, DecoderConfig(**cfg["decoder"]), cfg["seed"])
        parser.params.load_arrays(ad.load_checkpoint(directory / "params.ckpt"))
        return parser


def inventories(treebanks: Iterable[Treebank]) -> tuple[list[str], list[str]]:
    """POS tag and dependency label inventories; POS always covers the UD tag set."""
    pos, labels = set(UPOS_TAGS), set()
    for tb in treebanks:
        for s in tb:
            pos.update(s.upos)
            labels.update(s.deprels)
    return sorted(pos), sorted(labels)
