"""Hand-built corpora shared by the unit and acceptance tests."""

from __future__ import annotations

import numpy as np

from xlparse.conllu import Treebank, make_sentence
from xlparse.decoder import DecoderConfig
from xlparse.encoder import EncoderConfig, WordEmbeddings
from xlparse.parser import Parser, inventories, parse_architecture


def tb(language, rows):
    """``rows``: (heads, deprels, upos[, forms]) tuples."""
    return Treebank(language, tuple(make_sentence(*r) for r in rows))


# -- overfit corpus -----------------------------------------------------------------

OVERFIT_ROWS = [
    ([2, 3, 0, 5, 3], ["det", "nsubj", "root", "det", "obj"],
     ["DET", "NOUN", "VERB", "DET", "NOUN"], ["the", "dog", "sees", "a", "cat"]),
    ([3, 3, 0, 3], ["amod", "nsubj", "root", "punct"],
     ["ADJ", "NOUN", "VERB", "PUNCT"], ["big", "dogs", "bark", "."]),
    ([2, 0, 4, 2], ["nsubj", "root", "case", "obl"],
     ["PRON", "VERB", "ADP", "NOUN"], ["she", "runs", "in", "parks"]),
    ([0, 1, 4, 1], ["root", "obj", "case", "obl"],
     ["VERB", "PRON", "ADP", "NOUN"], ["give", "it", "to", "cats"]),
    ([2, 4, 4, 0, 6, 4, 4], ["det", "nsubj", "advmod", "root", "det", "obj", "punct"],
     ["DET", "NOUN", "ADV", "VERB", "DET", "NOUN", "PUNCT"],
     ["a", "cat", "quickly", "sees", "the", "dog", "."]),
    ([2, 0, 2], ["nsubj", "root", "obj"], ["PRON", "VERB", "PRON"], ["she", "sees", "it"]),
    ([2, 0, 5, 5, 2], ["nsubj", "root", "case", "det", "obl"],
     ["NOUN", "VERB", "ADP", "DET", "NOUN"], ["dogs", "run", "in", "the", "park"]),
    ([0, 3, 1, 1], ["root", "amod", "obj", "punct"],
     ["VERB", "ADJ", "NOUN", "PUNCT"], ["see", "big", "cats", "!"]),
]


def overfit_treebank() -> Treebank:
    return tb("syn", OVERFIT_ROWS)


def overfit_embeddings(dim: int = 8, seed: int = 3) -> WordEmbeddings:
    vocab = sorted({w for r in OVERFIT_ROWS for w in r[3]})
    rng = np.random.default_rng(seed)
    return WordEmbeddings({w: i for i, w in enumerate(vocab)},
                          rng.normal(size=(len(vocab), dim)).astype(np.float32))


def small_parser(arch: str, seed: int = 0, precision: str = "double") -> Parser:
    """Reduced-size parser whose inventories cover the overfit corpus."""
    variant, decoder = parse_architecture(arch)
    enc = EncoderConfig.for_variant(variant, word_dim=8, pos_dim=8, heads=2, layers=2,
                                    rnn_hidden=16, d_ff=32, clip_k=4, dropout=0.0)
    pos, labels = inventories([overfit_treebank()])
    return Parser(enc, decoder, pos, labels, overfit_embeddings(), DecoderConfig(32, 16, 32),
                  seed=seed, precision=precision)


# -- typology corpus -------------------------------------------------------------------
# aa: modifiers before heads except objects; bb: verb-final; cc: verb-initial, no ADJ.

TYPOLOGY_ROWS = {
    "aa": [([2, 3, 0, 5, 3], ["det", "nsubj", "root", "det", "obj"], ["DET", "NOUN", "VERB", "DET", "NOUN"]),
           ([2, 3, 0, 3], ["amod", "nsubj", "root", "obj"], ["ADJ", "NOUN", "VERB", "NOUN"])],
    "bb": [([4, 3, 4, 0], ["nsubj", "det", "obj", "root"], ["NOUN", "DET", "NOUN", "VERB"]),
           ([3, 1, 0], ["nsubj", "amod", "root"], ["NOUN", "ADJ", "VERB"])],
    "cc": [([0, 1, 2, 1], ["root", "nsubj", "det", "obj"], ["VERB", "NOUN", "DET", "NOUN"]),
           ([0, 1, 1, 3], ["root", "nsubj", "obj", "det"], ["VERB", "NOUN", "NOUN", "DET"])],
}


def typology_treebanks() -> dict[str, Treebank]:
    return {lang: tb(lang, rows) for lang, rows in TYPOLOGY_ROWS.items()}


# -- dependency-distance corpus ------------------------------------------------------
# signed distances: -1 -1 -1 +2 | -1 -1 +1 | -3 -2 -1 +1 +2 +3

DEPDIST_ROWS = TYPOLOGY_ROWS["aa"] + [([4, 4, 4, 0, 4, 4, 4], None, None)]
DEPDIST_COUNTS = {"<-2": 1, "-2": 1, "-1": 6, "1": 2, "2": 2, ">2": 1}


# -- evaluation corpus ---------------------------------------------------------------
# 20 tokens, 4 of them PUNCT/SYM. Planted errors: head errors on two content tokens
# and two punctuation tokens, label-only errors on two content tokens.

EVAL_GOLD_ROWS = [
    ([2, 3, 0, 3, 3, 3], ["det", "nsubj", "root", "advmod", "obl", "punct"],
     ["DET", "NOUN", "VERB", "ADV", "NOUN", "PUNCT"]),
    ([2, 0, 4, 2, 2], ["nsubj", "root", "case", "obl", "punct"],
     ["PRON", "VERB", "ADP", "NOUN", "PUNCT"]),
    ([0, 1, 4, 1, 1], ["root", "obj", "case", "obl", "dep"],
     ["VERB", "PRON", "ADP", "NOUN", "SYM"]),
    ([2, 0, 2, 2], ["nsubj", "root", "obj", "punct"],
     ["NOUN", "VERB", "NOUN", "PUNCT"]),
]
EVAL_PRED = [
    ([2, 3, 0, 3, 3, 2], ["det", "nsubj", "root", "advmod", "obj", "punct"]),
    ([2, 0, 2, 2, 2], ["nsubj", "root", "case", "obl", "punct"]),
    ([0, 1, 4, 1, 3], ["root", "obj", "case", "nmod", "dep"]),
    ([2, 0, 1, 2], ["nsubj", "root", "obj", "punct"]),
]
# (correct heads, correct labels, evaluated tokens)
EVAL_TALLY = {True: (14, 12, 16), False: (16, 14, 20)}
