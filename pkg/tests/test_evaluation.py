import json
import random

import pytest

from xlparse.conllu import make_sentence
from xlparse.decoder import ParseTree
from xlparse.evaluation import (ALL, HEAD_FIRST, MOD_FIRST, attachment_scores, breakdown_by_distance,
                                breakdown_by_type, breakdown_tsv, report_json, report_tsv)
from xlparse.typology import AugmentedType, collect_type_stats, dep_distance_histogram

from corpora import EVAL_GOLD_ROWS, EVAL_PRED, EVAL_TALLY, tb


def gold():
    return list(tb("ev", EVAL_GOLD_ROWS).sentences)


def test_identity_scores_one():
    g = gold()
    r = attachment_scores(g, g)
    assert (r.uas, r.las, r.evaluated_tokens) == (1.0, 1.0, 16)


def test_small_example_both_modes():
    g = [make_sentence([2, 0, 2], ["nsubj", "root", "punct"], ["NOUN", "VERB", "PUNCT"])]
    pred = [ParseTree((2, 0, 2), ("obj", "root", "punct"))]
    r = attachment_scores(pred, g)
    assert (r.uas, r.las, r.evaluated_tokens) == (1.0, 0.5, 2)
    r = attachment_scores(pred, g, exclude_punct=False)
    assert (r.uas, r.las, r.evaluated_tokens) == (1.0, 2 / 3, 3)


@pytest.mark.parametrize("exclude", [True, False])
def test_planted_errors(exclude):
    heads, labels, total = EVAL_TALLY[exclude]
    r = attachment_scores(EVAL_PRED, gold(), exclude_punct=exclude)
    assert (r.correct_heads, r.correct_labels, r.evaluated_tokens) == (heads, labels, total)
    assert r.uas == heads / total and r.las == labels / total


def test_reordering_invariance_and_content_correctness():
    g, p = gold(), list(EVAL_PRED)
    idx = list(range(len(g)))
    random.Random(0).shuffle(idx)
    assert attachment_scores([p[i] for i in idx], [g[i] for i in idx]) == attachment_scores(p, g)
    strict, loose = attachment_scores(p, g), attachment_scores(p, g, exclude_punct=False)
    assert strict.las <= strict.uas and loose.las <= loose.uas
    # the punctuation tokens contribute 2 correct heads and 2 correct labels
    assert loose.correct_heads - strict.correct_heads == 2 and loose.correct_labels - strict.correct_labels == 2


def test_misaligned_inputs():
    with pytest.raises(ValueError):
        attachment_scores(EVAL_PRED[:2], gold())
    with pytest.raises(ValueError):
        attachment_scores([([0], ["root"])] + EVAL_PRED[1:], gold())


def test_breakdown_hand_tally():
    # 6 non-root edges over 2 types: (DET,NOUN,det) mod-first x3, (NOUN,VERB,obj) head-first x2 + mod-first x1
    g = [make_sentence([2, 3, 0, 5, 3], ["det", "nsubj", "root", "det", "obj"],
                       ["DET", "NOUN", "VERB", "DET", "NOUN"]),
         make_sentence([0, 3, 1], ["root", "det", "obj"], ["VERB", "DET", "NOUN"]),
         make_sentence([2, 0], ["obj", "root"], ["NOUN", "VERB"])]
    p = [([2, 3, 0, 3, 3], ["det", "nsubj", "root", "det", "obj"]),
         ([0, 3, 1], ["root", "det", "nmod"]),
         ([2, 0], ["obj", "root"])]
    b = breakdown_by_type(p, g, min_frequency=0.2)
    det, obj = AugmentedType("DET", "NOUN", "det"), AugmentedType("NOUN", "VERB", "obj")
    nsubj = AugmentedType("NOUN", "VERB", "nsubj")
    assert (b.cells[det, ALL].total, b.cells[det, ALL].heads, b.cells[det, ALL].labels) == (3, 2, 2)
    assert b.cells[obj, HEAD_FIRST].uas == 1.0 and b.cells[obj, HEAD_FIRST].las == 0.5
    assert b.cells[obj, MOD_FIRST].las == 1.0
    assert b.frequency[obj, HEAD_FIRST] == pytest.approx(2 / 3)
    assert b.frequency[obj, HEAD_FIRST] + b.frequency[obj, MOD_FIRST] == pytest.approx(1.0)
    assert (nsubj, ALL) in b.unstable and (det, ALL) not in b.unstable
    all_uas = sum(b.cells[obj, d].uas * b.frequency[obj, d] for d in (HEAD_FIRST, MOD_FIRST))
    assert all_uas == pytest.approx(b.cells[obj, ALL].uas)


def test_breakdown_directions_match_typology_stats():
    g = gold()
    b = breakdown_by_type(g, g)
    stats = collect_type_stats(g)
    for t, n in stats.total.items():
        assert b.cells[t, ALL].total == n
        assert b.cells.get((t, MOD_FIRST), None) is None or b.cells[t, MOD_FIRST].total == stats.left[t]
        assert b.frequency.get((t, MOD_FIRST), 0.0) == pytest.approx(stats.left_ratio(t))
        assert b.cells[t, ALL].uas == 1.0


def test_distance_breakdown():
    g = gold()
    b = breakdown_by_distance(g, g)
    for c in b.cells.values():
        assert c.total == 0 or c.uas == 1.0
    hist = dep_distance_histogram(g)
    for key, pct in hist.percentages.items():
        assert b.frequency[key] * 100 == pytest.approx(pct)
    # break only the d=1 edges: rewire every head-first adjacent token to the root's child
    wrong = []
    for s in g:
        heads = [t.head if t.id - t.head != 1 or t.head == 0 else (t.head % len(s)) + 1
                 for t in s.tokens]
        wrong.append((heads, s.deprels))
    b = breakdown_by_distance(wrong, g)
    assert b.cells["1"].uas < 1.0
    assert all(c.uas == 1.0 for k, c in b.cells.items() if k != "1" and c.total)


def test_report_formats():
    r = attachment_scores(EVAL_PRED, gold())
    d = json.loads(report_json(r, {"by_distance": breakdown_by_distance(EVAL_PRED, gold())}))
    assert d["uas"] == 0.875 and d["las"] == 0.75 and d["evaluated_tokens"] == 16
    assert d["by_distance"]["-1"]["count"] > 0
    assert report_tsv(r) == "uas\tlas\tevaluated_tokens\tpunct_excluded\n0.8750\t0.7500\t16\ttrue\n"
    text = breakdown_tsv(breakdown_by_type(EVAL_PRED, gold()))
    assert text.startswith("key\tuas\tlas\tcount\tfrequency\tunstable\n")
    assert "DET|NOUN|det|mod-first\t1.0000\t1.0000\t1\t1.0000\tfalse" in text
