"""Word-order typology: directional features over augmented dependency types.

An augmented type is the triple (modifier UPOS, head UPOS, label).  For each
language we count how often each type occurs and how often the modifier
precedes its head; the left-direction ratios over a shared selection of
types form the language's word-order vector.  Languages are compared with
the Manhattan distance and clustered with single linkage.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .conllu import Sentence, Treebank

IMPUTE_VALUE = 0.5
ROOT_POS = "ROOT"
DIST_BUCKETS = ("<-2", "-2", "-1", "1", "2", ">2")


class AugmentedType(NamedTuple):
    modifier_upos: str
    head_upos: str
    deprel: str

    def __str__(self) -> str:
        return f"({self.modifier_upos}, {self.head_upos}, {self.deprel})"


@dataclass
class TypeStats:
    total: Counter = field(default_factory=Counter)
    left: Counter = field(default_factory=Counter)

    @property
    def edge_count(self) -> int:
        return sum(self.total.values())

    def left_ratio(self, t: AugmentedType) -> float:
        return self.left[t] / self.total[t]

    def merge(self, other: "TypeStats") -> "TypeStats":
        return TypeStats(self.total + other.total, self.left + other.left)


@dataclass(frozen=True)
class TypeSelection:
    types: tuple[AugmentedType, ...]
    min_avg_freq: float
    min_langs: int
    avg_freq: tuple[float, ...] = ()
    lang_count: tuple[int, ...] = ()

    def __len__(self) -> int:
        return len(self.types)


@dataclass(frozen=True)
class WordOrderVector:
    language: str
    values: np.ndarray
    imputed_mask: np.ndarray
    types: tuple[AugmentedType, ...] = ()

    @property
    def imputed_share(self) -> float:
        return float(np.mean(self.imputed_mask)) if len(self.imputed_mask) else 0.0


@dataclass(frozen=True)
class DistanceMatrix:
    languages: tuple[str, ...]
    entries: np.ndarray

    def __getitem__(self, pair: tuple[str, str]) -> float:
        a, b = pair
        return float(self.entries[self.languages.index(a), self.languages.index(b)])

    def reorder(self, languages: Sequence[str]) -> "DistanceMatrix":
        idx = [self.languages.index(l) for l in languages]
        return DistanceMatrix(tuple(languages), self.entries[np.ix_(idx, idx)])


class Merge(NamedTuple):
    cluster_a: int
    cluster_b: int
    height: float
    new_cluster_id: int


@dataclass(frozen=True)
class Dendrogram:
    labels: tuple[str, ...]
    merges: tuple[Merge, ...]


@dataclass(frozen=True)
class DepDistHistogram:
    percentages: dict[str, float]
    edge_count: int

    @property
    def empty(self) -> bool:
        return self.edge_count == 0


def _edges(s: Sentence, include_root: bool):
    for tok in s.tokens:
        if tok.head == 0:
            if include_root:
                yield tok, None
            continue
        yield tok, s.tokens[tok.head - 1]


def augmented_type(mod, head) -> AugmentedType:
    return AugmentedType(mod.upos, head.upos if head is not None else ROOT_POS, mod.deprel)


def collect_type_stats(tb: Treebank | Iterable[Sentence], include_root: bool = False) -> TypeStats:
    """Count occurrences and left-direction occurrences of each augmented type.

    Root attachments are skipped by default because the artificial root has
    no POS.  ``include_root=True`` instead counts them under the head tag
    ``ROOT``; they have no head position and never count as left.
    """
    stats = TypeStats()
    for s in tb:
        for mod, head in _edges(s, include_root):
            t = augmented_type(mod, head)
            stats.total[t] += 1
            if head is not None and mod.id < head.id:
                stats.left[t] += 1
    return stats


def select_types(stats_by_language: Mapping[str, TypeStats], min_avg_freq: float = 0.001,
                 min_langs: int = 20) -> TypeSelection:
    """Keep types with average relative frequency > min_avg_freq seen in >= min_langs languages."""
    if not stats_by_language:
        raise ValueError("select_types needs at least one language")
    langs = sorted(stats_by_language)
    all_types = set()
    for st in stats_by_language.values():
        all_types.update(t for t, c in st.total.items() if c > 0)

    freq_sum = Counter()
    seen_in = Counter()
    for lang in langs:
        st = stats_by_language[lang]
        n_edges = st.edge_count
        for t in all_types:
            c = st.total.get(t, 0)
            if c > 0:
                seen_in[t] += 1
                freq_sum[t] += c / n_edges

    rows = []
    for t in all_types:
        avg = freq_sum[t] / len(langs)
        if avg > min_avg_freq and seen_in[t] >= min_langs:
            rows.append((-avg, tuple(t), t, seen_in[t]))
    rows.sort(key=lambda r: (r[0], r[1]))
    return TypeSelection(tuple(r[2] for r in rows), min_avg_freq, min_langs,
                         tuple(-r[0] for r in rows), tuple(r[3] for r in rows))


def order_vector(tb: Treebank, sel: TypeSelection, stats: TypeStats | None = None) -> WordOrderVector:
    if not len(sel):
        raise ValueError("empty type selection")
    if stats is None:
        stats = collect_type_stats(tb)
    values = np.empty(len(sel))
    imputed = np.zeros(len(sel), dtype=bool)
    for i, t in enumerate(sel.types):
        if stats.total.get(t, 0) > 0:
            values[i] = stats.left_ratio(t)
        else:
            values[i] = IMPUTE_VALUE
            imputed[i] = True
    return WordOrderVector(tb.language, values, imputed, sel.types)


def manhattan_distance(a: WordOrderVector, b: WordOrderVector) -> float:
    if len(a.values) != len(b.values) or (a.types and b.types and a.types != b.types):
        raise ValueError(f"misaligned vectors for {a.language!r} and {b.language!r}")
    return float(np.sum(np.abs(np.asarray(a.values) - np.asarray(b.values))))


def distance_matrix(vectors: Sequence[WordOrderVector]) -> DistanceMatrix:
    if len(vectors) < 2:
        raise ValueError("distance_matrix needs at least two languages")
    langs = [v.language for v in vectors]
    dup = sorted({l for l in langs if langs.count(l) > 1})
    if dup:
        raise ValueError(f"duplicate language codes: {dup}")
    n = len(vectors)
    m = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            m[i, j] = m[j, i] = manhattan_distance(vectors[i], vectors[j])
    return DistanceMatrix(tuple(langs), m)


def cluster_single_linkage(dm: DistanceMatrix) -> Dendrogram:
    """Agglomerative clustering with nearest-point (single) linkage.

    Leaves are clusters ``0..L-1`` in language order and each merge creates
    cluster ``L + k``.  Among equally close pairs the one with the smallest
    ``(cluster_a, cluster_b)`` ids merges first.
    """
    L = len(dm.languages)
    if L < 2:
        raise ValueError("clustering needs at least two languages")
    members = {i: [i] for i in range(L)}
    d = dm.entries
    merges = []
    next_id = L
    while len(members) > 1:
        ids = sorted(members)
        best = None
        for ai, a in enumerate(ids):
            for b in ids[ai + 1:]:
                dist = min(d[i, j] for i in members[a] for j in members[b])
                if best is None or dist < best[0]:
                    best = (dist, a, b)
        dist, a, b = best
        merges.append(Merge(a, b, float(dist), next_id))
        members[next_id] = members.pop(a) + members.pop(b)
        next_id += 1
    return Dendrogram(tuple(dm.languages), tuple(merges))


def to_newick(dg: Dendrogram) -> str:
    """Newick string with branch lengths (node height = merge distance, leaves at 0)."""
    L = len(dg.labels)
    nodes = {i: (dg.labels[i], 0.0) for i in range(L)}
    for m in dg.merges:
        parts = []
        for child in (m.cluster_a, m.cluster_b):
            text, h = nodes.pop(child)
            parts.append(f"{text}:{m.height - h:.6f}")
        nodes[m.new_cluster_id] = (f"({','.join(parts)})", m.height)
    (text, _), = nodes.values()
    return text + ";"


def leaf_order(dg: Dendrogram) -> list[str]:
    L = len(dg.labels)
    order = {i: [dg.labels[i]] for i in range(L)}
    for m in dg.merges:
        order[m.new_cluster_id] = order.pop(m.cluster_a) + order.pop(m.cluster_b)
    (leaves,) = order.values()
    return leaves


def signed_distance(mod_id: int, head_id: int) -> int:
    """Negative when the modifier precedes its head."""
    return mod_id - head_id


def distance_bucket(d: int) -> str:
    if d == 0:
        raise ValueError("dependency distance cannot be zero")
    if d < -2:
        return "<-2"
    if d > 2:
        return ">2"
    return str(d)


def dep_distance_histogram(tb: Treebank | Iterable[Sentence]) -> DepDistHistogram:
    counts = Counter()
    for s in tb:
        for tok in s.tokens:
            if tok.head != 0:
                counts[distance_bucket(signed_distance(tok.id, tok.head))] += 1
    total = sum(counts.values())
    pct = {b: (100.0 * counts[b] / total if total else 0.0) for b in DIST_BUCKETS}
    return DepDistHistogram(pct, total)


# -- TSV output ---------------------------------------------------------------

def vectors_tsv(vectors: Sequence[WordOrderVector]) -> str:
    types = vectors[0].types
    lines = ["type\t" + "\t".join(v.language for v in vectors)]
    for i in range(len(vectors[0].values)):
        name = str(types[i]) if types else str(i)
        lines.append(name + "\t" + "\t".join(f"{v.values[i]:.6f}" for v in vectors))
    return "\n".join(lines) + "\n"


def matrix_tsv(dm: DistanceMatrix) -> str:
    lines = ["\t" + "\t".join(dm.languages)]
    for lang, row in zip(dm.languages, dm.entries):
        lines.append(lang + "\t" + "\t".join(f"{x:.6f}" for x in row))
    return "\n".join(lines) + "\n"


def read_matrix_tsv(text: str) -> DistanceMatrix:
    rows = [l.split("\t") for l in text.strip("\n").split("\n")]
    langs = tuple(rows[0][1:])
    if tuple(r[0] for r in rows[1:]) != langs:
        raise ValueError("row and column languages differ")
    return DistanceMatrix(langs, np.array([[float(x) for x in r[1:]] for r in rows[1:]]))


def dendrogram_tsv(dg: Dendrogram) -> str:
    lines = ["cluster_a\tcluster_b\theight\tnew_cluster_id"]
    lines += [f"{m.cluster_a}\t{m.cluster_b}\t{m.height:.6f}\t{m.new_cluster_id}" for m in dg.merges]
    return "\n".join(lines) + "\n"


def histogram_tsv(hists: Mapping[str, DepDistHistogram]) -> str:
    lines = ["language\t" + "\t".join(DIST_BUCKETS)]
    for lang, h in hists.items():
        lines.append(lang + "\t" + "\t".join(f"{h.percentages[b]:.6f}" for b in DIST_BUCKETS))
    return "\n".join(lines) + "\n"
