"""Attachment scores and breakdowns by augmented type, direction and distance.

Breakdowns condition on the gold tree: a key's score is the fraction of gold
edges of that kind whose head (and label) the prediction recovers.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

from .conllu import PUNCT_TAGS, Sentence
from .decoder import ParseTree
from .typology import DIST_BUCKETS, augmented_type, distance_bucket, signed_distance

MOD_FIRST, HEAD_FIRST, ALL = "mod-first", "head-first", "all"


@dataclass(frozen=True)
class EvalReport:
    uas: float
    las: float
    evaluated_tokens: int
    punct_excluded: bool
    correct_heads: int = 0
    correct_labels: int = 0

    def to_dict(self) -> dict:
        return {"uas": round(self.uas, 4), "las": round(self.las, 4),
                "evaluated_tokens": self.evaluated_tokens, "punct_excluded": self.punct_excluded}

    @property
    def score(self) -> float:
        """Mean of UAS and LAS."""
        return (self.uas + self.las) / 2


@dataclass
class Cell:
    total: int = 0
    heads: int = 0
    labels: int = 0

    @property
    def uas(self) -> float:
        return self.heads / self.total if self.total else 0.0

    @property
    def las(self) -> float:
        return self.labels / self.total if self.total else 0.0


@dataclass
class BreakdownReport:
    cells: dict = field(default_factory=dict)
    frequency: dict = field(default_factory=dict)
    unstable: set = field(default_factory=set)

    def to_dict(self) -> dict:
        out = {}
        for key, cell in self.cells.items():
            out[_key_str(key)] = {"uas": round(cell.uas, 4), "las": round(cell.las, 4),
                                  "count": cell.total, "frequency": round(self.frequency[key], 4),
                                  "unstable": key in self.unstable}
        return out


def _key_str(key) -> str:
    if isinstance(key, tuple) and len(key) == 2 and not isinstance(key[0], str):
        t, direction = key
        return "|".join((*t, direction))
    return str(key)


def _pred_arrays(p) -> tuple[list[int], list[str]]:
    if isinstance(p, Sentence):
        return p.heads, p.deprels
    if isinstance(p, ParseTree):
        return list(p.heads), list(p.labels)
    heads, labels = p
    return list(heads), list(labels)


def _aligned(pred, gold):
    if len(pred) != len(gold):
        raise ValueError(f"{len(pred)} predicted vs {len(gold)} gold sentences")
    for k, (p, g) in enumerate(zip(pred, gold)):
        heads, labels = _pred_arrays(p)
        if len(heads) != len(g) or len(labels) != len(g):
            raise ValueError(f"sentence {k + 1}: prediction has {len(heads)} tokens, gold {len(g)}")
        yield heads, labels, g


def attachment_scores(pred: Sequence, gold: Sequence[Sentence], exclude_punct: bool = True) -> EvalReport:
    """Micro-averaged UAS/LAS; PUNCT and SYM tokens are skipped when ``exclude_punct``."""
    total = heads_ok = labels_ok = 0
    for heads, labels, g in _aligned(pred, gold):
        for tok, h, l in zip(g.tokens, heads, labels):
            if exclude_punct and tok.upos in PUNCT_TAGS:
                continue
            total += 1
            if h == tok.head:
                heads_ok += 1
                if l == tok.deprel:
                    labels_ok += 1
    uas = heads_ok / total if total else 0.0
    las = labels_ok / total if total else 0.0
    return EvalReport(uas, las, total, exclude_punct, heads_ok, labels_ok)


def breakdown_by_type(pred: Sequence, gold: Sequence[Sentence], min_frequency: float = 0.01,
                      include_root: bool = False) -> BreakdownReport:
    """Scores per gold augmented type and direction.

    Keys are ``(AugmentedType, direction)`` with direction in mod-first,
    head-first and all.  Frequencies of the two directions are relative to
    the type's count; the ``all`` frequency is the type's share of every
    scored edge.  Types whose share is below ``min_frequency`` are listed in
    ``unstable``.
    """
    cells: dict = defaultdict(Cell)
    for heads, labels, g in _aligned(pred, gold):
        for tok, h, l in zip(g.tokens, heads, labels):
            if tok.head == 0 and not include_root:
                continue
            head_tok = g.tokens[tok.head - 1] if tok.head else None
            t = augmented_type(tok, head_tok)
            direction = MOD_FIRST if tok.head and tok.id < tok.head else HEAD_FIRST
            for key in ((t, direction), (t, ALL)):
                c = cells[key]
                c.total += 1
                c.heads += h == tok.head
                c.labels += h == tok.head and l == tok.deprel
    grand = sum(c.total for (t, d), c in cells.items() if d == ALL)
    report = BreakdownReport(dict(cells))
    for (t, d), c in cells.items():
        if d == ALL:
            report.frequency[(t, d)] = c.total / grand if grand else 0.0
            if report.frequency[(t, d)] < min_frequency:
                report.unstable.add((t, d))
        else:
            report.frequency[(t, d)] = c.total / cells[(t, ALL)].total
    for (t, d) in list(cells):
        if d != ALL and (t, ALL) in report.unstable:
            report.unstable.add((t, d))
    return report


def breakdown_by_distance(pred: Sequence, gold: Sequence[Sentence]) -> BreakdownReport:
    """Scores per signed-distance bucket of the gold edge (root attachments skipped)."""
    cells = {b: Cell() for b in DIST_BUCKETS}
    for heads, labels, g in _aligned(pred, gold):
        for tok, h, l in zip(g.tokens, heads, labels):
            if tok.head == 0:
                continue
            c = cells[distance_bucket(signed_distance(tok.id, tok.head))]
            c.total += 1
            c.heads += h == tok.head
            c.labels += h == tok.head and l == tok.deprel
    grand = sum(c.total for c in cells.values())
    freq = {b: (cells[b].total / grand if grand else 0.0) for b in DIST_BUCKETS}
    return BreakdownReport(cells, freq)


def report_json(report: EvalReport, breakdowns: dict[str, BreakdownReport] | None = None) -> str:
    out = report.to_dict()
    for name, b in (breakdowns or {}).items():
        out[name] = b.to_dict()
    return json.dumps(out, indent=2, sort_keys=True) + "\n"


def report_tsv(report: EvalReport) -> str:
    return ("uas\tlas\tevaluated_tokens\tpunct_excluded\n"
            f"{report.uas:.4f}\t{report.las:.4f}\t{report.evaluated_tokens}\t{str(report.punct_excluded).lower()}\n")


def breakdown_tsv(b: BreakdownReport) -> str:
    lines = ["key\tuas\tlas\tcount\tfrequency\tunstable"]
    items = list(b.cells.items())
    if items and isinstance(items[0][0], tuple):
        items.sort(key=lambda kv: _key_str(kv[0]))
    for key, cell in items:
        lines.append(f"{_key_str(key)}\t{cell.uas:.4f}\t{cell.las:.4f}\t{cell.total}\t"
                     f"{b.frequency[key]:.4f}\t{str(key in b.unstable).lower()}")
    return "\n".join(lines) + "\n"

