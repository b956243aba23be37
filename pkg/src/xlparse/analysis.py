"""Relating transfer performance to word-order distance."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .evaluation import EvalReport
from .typology import DistanceMatrix

ORDER_FREE_ENCODER, ORDER_SENSITIVE_ENCODER = "selfatt", "rnn"
ORDER_FREE_DECODER, ORDER_SENSITIVE_DECODER = "graph", "stack"


@dataclass(frozen=True)
class CorrelationReport:
    pearson: float
    spearman: float
    n: int

    def to_dict(self) -> dict:
        return {"pearson": self.pearson, "spearman": self.spearman, "n": self.n}


@dataclass(frozen=True)
class TransferMatrix:
    """``scores[i, j]``: mean of UAS and LAS of a parser trained on ``languages[i]``
    and evaluated on ``languages[j]``."""

    languages: tuple[str, ...]
    scores: np.ndarray

    def __post_init__(self):
        n = len(self.languages)
        if self.scores.shape != (n, n):
            raise ValueError(f"transfer matrix of shape {self.scores.shape} for {n} languages")

    @classmethod
    def from_reports(cls, reports: Mapping[tuple[str, str], EvalReport],
                     languages: Sequence[str] | None = None) -> "TransferMatrix":
        langs = tuple(languages or sorted({s for s, _ in reports} | {t for _, t in reports}))
        m = np.full((len(langs), len(langs)), np.nan)
        for (src, tgt), r in reports.items():
            m[langs.index(src), langs.index(tgt)] = r.score
        return cls(langs, m)


def performance_distance(target: EvalReport, source: EvalReport) -> float:
    """Score gap between the source language and a target (scores are mean of UAS and LAS)."""
    if target.punct_excluded != source.punct_excluded:
        raise ValueError("reports use different punctuation conventions")
    return source.score - target.score


def average_ranks(values: Sequence[float]) -> np.ndarray:
    """1-based ranks; tied values share the mean of the ranks they span."""
    x = np.asarray(values, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x))
    sorted_x = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    xc, yc = x - x.mean(), y - y.mean()
    r = float(np.dot(xc, yc) / np.sqrt(np.dot(xc, xc) * np.dot(yc, yc)))
    return max(-1.0, min(1.0, r))


def correlate(xs: Sequence[float], ys: Sequence[float]) -> CorrelationReport:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 3:
        raise ValueError("correlation needs at least 3 samples")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise ValueError("zero variance: correlation is undefined")
    return CorrelationReport(_pearson(x, y), _pearson(average_ranks(x), average_ranks(y)), len(x))


@dataclass(frozen=True)
class Contrast:
    language: str
    encoder: float
    decoder: float
    distance: float | None = None


def component_contrast(results: Mapping[tuple[str, str, str], float],
                       distances: Mapping[str, float] | None = None) -> list[Contrast]:
    """Order-free minus order-sensitive score per language, for encoders and decoders.

    ``results`` maps ``(encoder, decoder, language)`` with encoder in
    {selfatt, rnn} and decoder in {graph, stack}.  Each module is compared
    using the best score over the other module's two options.  Output is
    sorted by ``distances`` when given (then by language code).
    """
    languages = sorted({lang for _, _, lang in results})
    out = []
    for lang in languages:
        cell = {}
        for enc in (ORDER_FREE_ENCODER, ORDER_SENSITIVE_ENCODER):
            for dec in (ORDER_FREE_DECODER, ORDER_SENSITIVE_DECODER):
                if (enc, dec, lang) not in results:
                    raise KeyError(f"missing result for {enc}-{dec} on {lang!r}")
                cell[enc, dec] = results[enc, dec, lang]
        enc_diff = (max(cell["selfatt", "graph"], cell["selfatt", "stack"])
                    - max(cell["rnn", "graph"], cell["rnn", "stack"]))
        dec_diff = (max(cell["selfatt", "graph"], cell["rnn", "graph"])
                    - max(cell["selfatt", "stack"], cell["rnn", "stack"]))
        dist = None if distances is None else distances[lang]
        out.append(Contrast(lang, enc_diff, dec_diff, dist))
    if distances is not None:
        out.sort(key=lambda c: (c.distance, c.language))
    return out


@dataclass(frozen=True)
class TransferSummary:
    languages: tuple[str, ...]
    as_source: np.ndarray
    as_target: np.ndarray
    mean_distance: np.ndarray
    source_correlation: CorrelationReport | None
    target_correlation: CorrelationReport | None

    def to_dict(self) -> dict:
        return {
            "languages": list(self.languages),
            "as_source": [round(float(x), 6) for x in self.as_source],
            "as_target": [round(float(x), 6) for x in self.as_target],
            "mean_distance": [round(float(x), 6) for x in self.mean_distance],
            "source_correlation": None if self.source_correlation is None else self.source_correlation.to_dict(),
            "target_correlation": None if self.target_correlation is None else self.target_correlation.to_dict(),
        }


def transfer_summaries(A: TransferMatrix, distances: DistanceMatrix,
                       allow_undefined: bool = False) -> TransferSummary:
    """Off-diagonal row means (as-source), column means (as-target) and their
    correlation with each language's mean distance to all others.

    A zero-variance series makes the correlation undefined: that raises
    unless ``allow_undefined``, in which case it is reported as None.
    """
    if set(A.languages) != set(distances.languages):
        raise ValueError("transfer matrix and distance matrix cover different languages")
    dm = distances.reorder(A.languages).entries
    n = len(A.languages)
    if n < 2:
        raise ValueError("need at least two languages")
    off = ~np.eye(n, dtype=bool)
    scores = np.where(off, A.scores, 0.0)
    as_source = scores.sum(axis=1) / (n - 1)
    as_target = scores.sum(axis=0) / (n - 1)
    mean_dist = np.where(off, dm, 0.0).sum(axis=1) / (n - 1)

    def corr(xs):
        try:
            return correlate(xs, mean_dist)
        except ValueError:
            if allow_undefined:
                return None
            raise

    return TransferSummary(A.languages, as_source, as_target, mean_dist, corr(as_source), corr(as_target))


# -- file formats ------------------------------------------------------------------

def transfer_matrix_tsv(A: TransferMatrix) -> str:
    lines = ["source\\target\t" + "\t".join(A.languages)]
    for lang, row in zip(A.languages, A.scores):
        lines.append(lang + "\t" + "\t".join(f"{x:.6f}" for x in row))
    return "\n".join(lines) + "\n"


def read_transfer_matrix_tsv(text: str) -> TransferMatrix:
    rows = [l.split("\t") for l in text.strip("\n").split("\n")]
    langs = tuple(rows[0][1:])
    if tuple(r[0] for r in rows[1:]) != langs:
        raise ValueError("row and column languages differ")
    return TransferMatrix(langs, np.array([[float(x) for x in r[1:]] for r in rows[1:]]))


def long_format_tsv(summary: TransferSummary) -> str:
    """Plot-ready rows ``language, distance, metric, value``."""
    lines = ["language\tdistance\tmetric\tvalue"]
    for i, lang in enumerate(summary.languages):
        d = summary.mean_distance[i]
        lines.append(f"{lang}\t{d:.6f}\tas_source\t{summary.as_source[i]:.6f}")
        lines.append(f"{lang}\t{d:.6f}\tas_target\t{summary.as_target[i]:.6f}")
    return "\n".join(lines) + "\n"


def contrast_tsv(contrasts: Sequence[Contrast]) -> str:
    lines = ["language\tdistance\tencoder_of_minus_os\tdecoder_of_minus_os"]
    for c in contrasts:
        d = "NA" if c.distance is None else f"{c.distance:.6f}"
        lines.append(f"{c.language}\t{d}\t{c.encoder:.6f}\t{c.decoder:.6f}")
    return "\n".join(lines) + "\n"


def summary_json(summary: TransferSummary) -> str:
    return json.dumps(summary.to_dict(), indent=2, sort_keys=True) + "\n"
