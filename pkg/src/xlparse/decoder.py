"""Structured decoders: biaffine graph scoring with MST search, and stack-pointer.

Arc score matrices are indexed ``[head, modifier]`` over ``n + 1`` nodes with
node 0 the artificial root; column 0 is never used.  Head sequences are
returned for tokens ``1..n`` (so ``heads[m - 1]`` is the head of token m).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterStore, Tensor
from .encoder import lstm_cell

NEG_INF = -np.inf
MASK_VALUE = -1e9


@dataclass(frozen=True)
class DecoderConfig:
    arc_mlp: int = 512
    label_mlp: int = 128
    decoder_hidden: int = 512


@dataclass(frozen=True)
class ParseTree:
    heads: tuple[int, ...]
    labels: tuple[str, ...]


# -- scoring -----------------------------------------------------------------------

def mlp(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return ad.elu(x @ w + b)


def biaffine(head_reps: Tensor, dep_reps: Tensor, u: Tensor, head_bias: Tensor) -> Tensor:
    """``score[h, m] = head_h . U . dep_m + head_bias . head_h``."""
    bilinear = head_reps @ u @ dep_reps.T
    return bilinear + head_reps @ head_bias.reshape(-1, 1)


def with_root(enc: Tensor, root: Tensor) -> Tensor:
    return ad.concat([root, enc], axis=0)


class ArcScorer:
    def __init__(self, params: ParameterStore, input_dim: int, mlp_dim: int, prefix: str):
        self.params, self.prefix = params, prefix
        params.weight(f"{prefix}.head.w", (input_dim, mlp_dim))
        params.bias(f"{prefix}.head.b", (mlp_dim,))
        params.weight(f"{prefix}.dep.w", (input_dim, mlp_dim))
        params.bias(f"{prefix}.dep.b", (mlp_dim,))
        params.weight(f"{prefix}.u", (mlp_dim, mlp_dim))
        params.bias(f"{prefix}.head_bias", (mlp_dim,))

    def __call__(self, enc_root: Tensor) -> Tensor:
        p, q = self.params, self.prefix
        heads = mlp(enc_root, p[f"{q}.head.w"], p[f"{q}.head.b"])
        deps = mlp(enc_root, p[f"{q}.dep.w"], p[f"{q}.dep.b"])
        return biaffine(heads, deps, p[f"{q}.u"], p[f"{q}.head_bias"])


def score_arcs(enc_root: Tensor, scorer: ArcScorer) -> Tensor:
    """(n+1) x (n+1) arc scores from an encoding that already carries the root row."""
    return scorer(enc_root)


class LabelScorer:
    """Per-label biaffine scorer over (head, dependent) label-MLP representations.

    ``score[m, l] = h . U_l . d + W_l . [h; d] + b_l`` with h the head's and
    d the dependent's representation.
    """

    def __init__(self, params: ParameterStore, input_dim: int, mlp_dim: int,
                 labels: Sequence[str], prefix: str):
        self.params, self.prefix = params, prefix
        self.labels = tuple(labels)
        L = len(self.labels)
        params.weight(f"{prefix}.head.w", (input_dim, mlp_dim))
        params.bias(f"{prefix}.head.b", (mlp_dim,))
        params.weight(f"{prefix}.dep.w", (input_dim, mlp_dim))
        params.bias(f"{prefix}.dep.b", (mlp_dim,))
        params.weight(f"{prefix}.u", (mlp_dim, L * mlp_dim))
        params.weight(f"{prefix}.w", (2 * mlp_dim, L))
        params.bias(f"{prefix}.b", (L,))
        self.mlp_dim = mlp_dim

    def __call__(self, enc_root: Tensor, heads: Sequence[int]) -> Tensor:
        """(n, L) label scores for tokens 1..n attached to ``heads``."""
        p, q = self.params, self.prefix
        n, L, dl = len(heads), len(self.labels), self.mlp_dim
        head_reps = mlp(enc_root, p[f"{q}.head.w"], p[f"{q}.head.b"])
        dep_reps = mlp(enc_root, p[f"{q}.dep.w"], p[f"{q}.dep.b"])
        h = head_reps[np.asarray(heads, dtype=np.int64)]
        d = dep_reps[1:]
        bilinear = ((h @ p[f"{q}.u"]).reshape(n, L, dl) * d.reshape(n, 1, dl)).sum(axis=-1)
        return bilinear + ad.concat([h, d], axis=-1) @ p[f"{q}.w"] + p[f"{q}.b"]


def score_labels(enc_root: Tensor, heads: Sequence[int], scorer: LabelScorer) -> tuple[Tensor, list[str]]:
    scores = scorer(enc_root, heads)
    best = np.argmax(scores.data, axis=1)
    return scores, [scorer.labels[i] for i in best]


# -- tree search -------------------------------------------------------------------

def tree_score(scores: np.ndarray, heads: Sequence[int]) -> float:
    """Sum of arc scores, accumulated in token order."""
    total = 0.0
    for m, h in enumerate(heads, start=1):
        total += float(scores[h, m])
    return total


def _find_cycle(heads: np.ndarray) -> list[int] | None:
    n = len(heads)
    state = np.zeros(n, dtype=np.int8)
    state[0] = 2
    for start in range(1, n):
        path = []
        v = start
        while state[v] == 0:
            state[v] = 1
            path.append(v)
            v = heads[v]
        if state[v] == 1:
            return path[path.index(v):]
        for p in path:
            state[p] = 2
    return None


def _chu_liu_edmonds(scores: np.ndarray) -> np.ndarray:
    """Maximum arborescence rooted at node 0 (root may take several children)."""
    s = scores.astype(np.float64, copy=True)
    N = s.shape[0]
    np.fill_diagonal(s, NEG_INF)
    s[:, 0] = NEG_INF
    heads = np.argmax(s, axis=0)
    heads[0] = -1
    cycle = _find_cycle(heads)
    if cycle is None:
        return heads

    in_cycle = np.zeros(N, dtype=bool)
    in_cycle[cycle] = True
    cyc = np.array(cycle)
    rest = np.flatnonzero(~in_cycle)  # includes the root, at position 0
    c = len(rest)

    sub = np.full((c + 1, c + 1), NEG_INF)
    sub[:c, :c] = s[np.ix_(rest, rest)]
    # entering the cycle at v replaces v's cycle arc
    enter_gain = s[np.ix_(rest, cyc)] - s[heads[cyc], cyc][None, :]
    enter_at = np.argmax(enter_gain, axis=1)
    sub[:c, c] = enter_gain[np.arange(c), enter_at]
    leave = s[np.ix_(cyc, rest)]
    leave_from = np.argmax(leave, axis=0)
    sub[c, :c] = leave[leave_from, np.arange(c)]

    sub_heads = _chu_liu_edmonds(sub)
    out = heads.copy()
    for i in range(1, c):
        v = rest[i]
        h = sub_heads[i]
        out[v] = cyc[leave_from[i]] if h == c else rest[h]
    u = sub_heads[c]
    out[cyc[enter_at[u]]] = rest[u]
    return out


def decode_mst(scores) -> list[int]:
    """Highest-scoring single-root spanning tree (non-projective allowed).

    Runs Chu-Liu-Edmonds once; if the optimum gives the root several
    children, reruns it once per candidate root child with all other root
    arcs removed and keeps the best.
    """
    s = np.asarray(scores.data if isinstance(scores, Tensor) else scores, dtype=np.float64)
    n = s.shape[0] - 1
    if n < 1:
        raise ValueError("need at least one token")
    if n == 1:
        return [0]
    heads = _chu_liu_edmonds(s)[1:]
    if int(np.sum(heads == 0)) == 1:
        return [int(h) for h in heads]
    best, best_score = None, NEG_INF
    for r in range(1, n + 1):
        constrained = s.copy()
        keep = constrained[0, r]
        constrained[0, :] = NEG_INF
        constrained[0, r] = keep
        cand = [int(h) for h in _chu_liu_edmonds(constrained)[1:]]
        sc = tree_score(s, cand)
        if best is None or sc > best_score:
            best, best_score = cand, sc
    return best


def _is_tree(heads: Sequence[int]) -> bool:
    if sum(1 for h in heads if h == 0) != 1:
        return False
    arr = np.array([-1] + list(heads))
    return _find_cycle(arr) is None


def brute_force_mst(scores) -> list[int]:
    """Exhaustive single-root tree search; ties go to the lexicographically smallest heads."""
    s = np.asarray(scores.data if isinstance(scores, Tensor) else scores, dtype=np.float64)
    n = s.shape[0] - 1
    if n > 7:
        raise ValueError(f"brute_force_mst is limited to n <= 7 (got {n})")
    if n < 1:
        raise ValueError("need at least one token")
    choices = [[h for h in range(n + 1) if h != m] for m in range(1, n + 1)]
    best, best_score = None, NEG_INF
    for heads in itertools.product(*choices):
        if not _is_tree(heads):
            continue
        sc = tree_score(s, heads)
        if best is None or sc > best_score:
            best, best_score = list(heads), sc
    return best


def greedy_heads(scores) -> list[int]:
    """Best head per token, ignoring tree constraints (self-attachment excluded)."""
    s = np.array(scores.data if isinstance(scores, Tensor) else scores, dtype=np.float64)
    np.fill_diagonal(s, NEG_INF)
    return [int(h) for h in np.argmax(s[:, 1:], axis=0)]


# -- stack-pointer -------------------------------------------------------------------

def gold_derivation(heads: Sequence[int]) -> list[tuple[int, int]]:
    """Teacher-forcing steps ``(stack_top, pointer_target)`` for a gold tree.

    Depth-first from the root; a head's children are visited inside-out
    (nearest first, left before right at equal distance).  Pointing at the
    stack top itself pops it.
    """
    n = len(heads)
    children: dict[int, list[int]] = {i: [] for i in range(n + 1)}
    for m, h in enumerate(heads, start=1):
        children[h].append(m)
    for h, cs in children.items():
        cs.sort(key=lambda c: (abs(c - h), c))
    steps = []
    stack = [0]
    cursor = {i: 0 for i in range(n + 1)}
    while stack:
        top = stack[-1]
        if cursor[top] < len(children[top]):
            child = children[top][cursor[top]]
            cursor[top] += 1
            steps.append((top, child))
            stack.append(child)
        else:
            steps.append((top, top))
            stack.pop()
    return steps


def valid_pointer_mask(n: int, stack: Sequence[int], attached: Sequence[bool]) -> np.ndarray:
    """Pointer targets allowed at the current step (index = position 0..n).

    Unattached tokens may always be chosen.  Popping (choosing the stack top)
    is refused while tokens remain unattached if the top is the root or the
    root's only child, which keeps the tree single-rooted and complete.
    """
    mask = np.array([not a for a in attached], dtype=bool)
    top = stack[-1]
    remaining = not all(attached)
    mask[top] = not (remaining and len(stack) <= 2)
    if top == 0 and any(attached[1:]):
        # the root already has its one child
        mask[1:] = False
        mask[0] = True
    return mask


def stackptr_search(n: int, choose: Callable[[list[int], np.ndarray], int]) -> list[int]:
    """Run the stack discipline; ``choose(stack, allowed)`` picks the pointer target."""
    attached = [True] + [False] * n
    heads = [0] * n
    stack = [0]
    while stack:
        top = stack[-1]
        allowed = valid_pointer_mask(n, stack, attached)
        j = int(choose(list(stack), allowed))
        if not allowed[j]:
            raise ValueError(f"pointer chose disallowed position {j} with stack {stack}")
        if j == top:
            stack.pop()
        else:
            heads[j - 1] = top
            attached[j] = True
            stack.append(j)
    return heads


class StackPointerDecoder:
    """Top-down pointer decoder driven by an LSTM over stack-top encodings."""

    def __init__(self, params: ParameterStore, input_dim: int, cfg: DecoderConfig,
                 labels: Sequence[str], prefix: str = "stackptr"):
        self.params, self.prefix, self.cfg = params, prefix, cfg
        ds, dp = cfg.decoder_hidden, cfg.arc_mlp
        params.embedding(f"{prefix}.root", (1, input_dim))
        params.weight(f"{prefix}.lstm.w", (input_dim + ds, 4 * ds))
        params.bias(f"{prefix}.lstm.b", (4 * ds,))
        params.weight(f"{prefix}.query.w", (ds, dp))
        params.bias(f"{prefix}.query.b", (dp,))
        params.weight(f"{prefix}.key.w", (input_dim, dp))
        params.bias(f"{prefix}.key.b", (dp,))
        params.weight(f"{prefix}.u", (dp, dp))
        params.bias(f"{prefix}.key_bias", (dp,))
        self.label_scorer = LabelScorer(params, input_dim, cfg.label_mlp, labels, f"{prefix}.label")

    def prepare(self, enc: Tensor) -> tuple[Tensor, Tensor]:
        p, q = self.params, self.prefix
        enc_root = with_root(enc, p[f"{q}.root"])
        keys = mlp(enc_root, p[f"{q}.key.w"], p[f"{q}.key.b"])
        return enc_root, keys

    def initial_state(self, dtype) -> tuple[Tensor, Tensor]:
        ds = self.cfg.decoder_hidden
        return (Tensor(np.zeros((1, ds), dtype=dtype)), Tensor(np.zeros((1, ds), dtype=dtype)))

    def step(self, enc_root: Tensor, keys: Tensor, top: int, state) -> tuple[Tensor, tuple]:
        """Advance the decoder LSTM on the stack top and return pointer scores over 0..n."""
        p, q = self.params, self.prefix
        h, c = lstm_cell(enc_root[top:top + 1], state[0], state[1], p[f"{q}.lstm.w"], p[f"{q}.lstm.b"])
        query = mlp(h, p[f"{q}.query.w"], p[f"{q}.query.b"])  # (1, dp)
        scores = keys @ (p[f"{q}.u"] @ query.T) + keys @ p[f"{q}.key_bias"].reshape(-1, 1)
        return scores.reshape(-1), (h, c)

    def decode(self, enc: Tensor) -> ParseTree:
        with ad.no_grad():
            enc_root, keys = self.prepare(enc)
            n = enc.shape[0]
            state = [self.initial_state(enc.dtype)]

            def choose(stack, allowed):
                scores, state[0] = self.step(enc_root, keys, stack[-1], state[0])
                masked = np.where(allowed, scores.data, NEG_INF)
                return int(np.argmax(masked))

            heads = stackptr_search(n, choose)
            _, labels = score_labels(enc_root, heads, self.label_scorer)
        return ParseTree(tuple(heads), tuple(labels))

    def loss(self, enc: Tensor, heads: Sequence[int], label_ids: Sequence[int]) -> Tensor:
        """Summed pointer cross-entropy over the gold derivation plus label cross-entropy."""
        enc_root, keys = self.prepare(enc)
        n = enc.shape[0]
        state = self.initial_state(enc.dtype)
        attached = [True] + [False] * n
        stack = [0]
        step_scores, targets = [], []
        for top, target in gold_derivation(heads):
            allowed = valid_pointer_mask(n, stack, attached)
            scores, state = self.step(enc_root, keys, top, state)
            penalty = np.where(allowed, 0.0, MASK_VALUE).astype(enc.dtype)
            step_scores.append(scores + Tensor(penalty))
            targets.append(target)
            if target == top:
                stack.pop()
            else:
                attached[target] = True
                stack.append(target)
        pointer_loss = ad.cross_entropy(ad.stack(step_scores, axis=0), targets)
        label_loss = ad.cross_entropy(self.label_scorer(enc_root, heads), label_ids)
        return pointer_loss + label_loss


def decode_stackptr(enc: Tensor, decoder: StackPointerDecoder) -> ParseTree:
    return decoder.decode(enc)


def stackptr_loss(enc: Tensor, gold: ParseTree, decoder: StackPointerDecoder) -> Tensor:
    label_ids = [decoder.label_scorer.labels.index(l) for l in gold.labels]
    return decoder.loss(enc, gold.heads, label_ids)


class GraphDecoder:
    """Biaffine arc scorer + label scorer; trees are found with :func:`decode_mst`."""

    def __init__(self, params: ParameterStore, input_dim: int, cfg: DecoderConfig,
                 labels: Sequence[str], prefix: str = "graph"):
        self.params, self.prefix, self.cfg = params, prefix, cfg
        params.embedding(f"{prefix}.root", (1, input_dim))
        self.arc_scorer = ArcScorer(params, input_dim, cfg.arc_mlp, f"{prefix}.arc")
        self.label_scorer = LabelScorer(params, input_dim, cfg.label_mlp, labels, f"{prefix}.label")

    def enc_root(self, enc: Tensor) -> Tensor:
        return with_root(enc, self.params[f"{self.prefix}.root"])

    def decode(self, enc: Tensor) -> ParseTree:
        with ad.no_grad():
            er = self.enc_root(enc)
            heads = decode_mst(self.arc_scorer(er).data)
            _, labels = score_labels(er, heads, self.label_scorer)
        return ParseTree(tuple(heads), tuple(labels))

    def loss(self, enc: Tensor, heads: Sequence[int], label_ids: Sequence[int]) -> Tensor:
        """Summed head and label cross-entropy over the sentence's tokens."""
        er = self.enc_root(enc)
        arcs = self.arc_scorer(er)  # [head, modifier]
        per_modifier = arcs.T[1:]  # (n, n+1): row m-1 scores every head for token m
        head_loss = ad.cross_entropy(per_modifier, heads)
        label_loss = ad.cross_entropy(self.label_scorer(er, heads), label_ids)
        return head_loss + label_loss
