"""A fixed two-sentence batch and miniature parsers for numerical self-checks."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .conllu import Sentence, make_sentence
from .decoder import DecoderConfig
from .encoder import EncoderConfig, WordEmbeddings
from .parser import Parser, parse_architecture

TOY_POS = ("DET", "NOUN", "VERB", "PRON", "ADP")
TOY_LABELS = ("det", "nsubj", "root", "obj", "case", "obl")
TOY_WORDS = ("the", "dog", "barks", "at", "cats", "runs", "it")


def toy_batch() -> list[Sentence]:
    return [
        make_sentence([2, 3, 0, 5, 3], ["det", "nsubj", "root", "case", "obl"],
                      ["DET", "NOUN", "VERB", "ADP", "NOUN"], ["the", "dog", "barks", "at", "cats"]),
        make_sentence([0, 1, 1], ["root", "obj", "obl"], ["VERB", "PRON", "NOUN"], ["runs", "it", "cats"]),
    ]


def toy_embeddings(dim: int = 4, seed: int = 0) -> WordEmbeddings:
    rng = np.random.default_rng(seed)
    vectors = rng.normal(size=(len(TOY_WORDS), dim)).astype(np.float32)
    return WordEmbeddings({w: i for i, w in enumerate(TOY_WORDS)}, vectors)


def toy_parser(arch: str, seed: int = 1, precision: str = "double") -> Parser:
    """A parser with every dimension shrunk to a handful of units.

    Trainable embedding tables and root vectors are redrawn from N(0, 1):
    at their N(0, 0.01) initial scale the recurrent models produce
    gradients near 1e-9, below what a central difference can resolve.
    """
    variant, decoder = parse_architecture(arch)
    enc = EncoderConfig.for_variant(variant, word_dim=4, pos_dim=4, heads=2, layers=2,
                                    rnn_hidden=3, d_ff=6, clip_k=2, dropout=0.0)
    parser = Parser(enc, decoder, TOY_POS, TOY_LABELS, toy_embeddings(), DecoderConfig(5, 4, 4),
                    seed=seed, precision=precision)
    rng = np.random.default_rng(7)
    for name, t in parser.params.items():
        if name.endswith(("pos_table", "root")):
            t.data[...] = rng.normal(0.0, 1.0, t.data.shape).astype(t.data.dtype)
    return parser


def gradcheck_architecture(arch: str, eps: float = 1e-4, seed: int = 1) -> float:
    """Max relative error between backprop and central differences on the toy batch."""
    parser = toy_parser(arch, seed)
    batch = toy_batch()
    return ad.grad_check(lambda: parser.batch_loss(batch), parser.params, eps=eps)
