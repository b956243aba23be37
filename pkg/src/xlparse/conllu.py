"""Reading, validating and writing Universal Dependencies treebanks (CoNLL-U).

Only the columns the parser needs are modelled: ID, FORM, UPOS, HEAD and
DEPREL.  Multiword-token ranges (``3-4``) and empty nodes (``5.1``) are
skipped.  Dependency labels are cut at the first ``:`` so that only the
universal part of the label survives.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

PUNCT_TAGS = frozenset({"PUNCT", "SYM"})
UPOS_TAGS = ("ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM", "PART",
             "PRON", "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X")
SPLITS = ("train", "dev", "test")


class ConlluError(ValueError):
    """Raised for malformed CoNLL-U input or trees that violate UD constraints."""


@dataclass(frozen=True)
class Token:
    id: int
    form: str
    upos: str
    head: int
    deprel: str


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[Token, ...]
    sent_id: str | None = None

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def heads(self) -> list[int]:
        return [t.head for t in self.tokens]

    @property
    def deprels(self) -> list[str]:
        return [t.deprel for t in self.tokens]

    @property
    def upos(self) -> list[str]:
        return [t.upos for t in self.tokens]

    @property
    def forms(self) -> list[str]:
        return [t.form for t in self.tokens]


@dataclass(frozen=True)
class Treebank:
    language: str
    sentences: tuple[Sentence, ...] = ()
    token_count: int = field(default=-1)
    content_token_count: int = field(default=-1)

    def __post_init__(self):
        sents = tuple(self.sentences)
        object.__setattr__(self, "sentences", sents)
        total = sum(len(s) for s in sents)
        content = sum(sum(content_mask(s)) for s in sents)
        if self.token_count == -1:
            object.__setattr__(self, "token_count", total)
        if self.content_token_count == -1:
            object.__setattr__(self, "content_token_count", content)
        if (self.token_count, self.content_token_count) != (total, content):
            raise ConlluError(
                f"treebank counts ({self.token_count}, {self.content_token_count}) "
                f"do not match its sentences ({total}, {content})")

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)


def make_sentence(heads: Sequence[int], deprels: Sequence[str] | None = None,
                  upos: Sequence[str] | None = None, forms: Sequence[str] | None = None,
                  sent_id: str | None = None) -> Sentence:
    """Convenience constructor used by tests and synthetic corpora (no validation)."""
    n = len(heads)
    deprels = deprels or ["dep"] * n
    upos = upos or ["X"] * n
    forms = forms or [f"w{i + 1}" for i in range(n)]
    return Sentence(tuple(Token(i + 1, forms[i], upos[i], int(heads[i]), deprels[i])
                          for i in range(n)), sent_id)


def validate_sentence(s: Sentence) -> list[str]:
    """Return the list of violated well-formedness rules (empty if the tree is valid).

    Each entry has the form ``"<rule>"`` or ``"<rule> (token <id>)"``; the rule
    names are ``non-consecutive ids``, ``empty field``, ``self-loop``,
    ``head out of range``, ``multiple roots`` and ``cycle``.
    """
    problems = []
    n = len(s.tokens)
    for pos, tok in enumerate(s.tokens, start=1):
        if tok.id != pos:
            problems.append(f"non-consecutive ids (token {tok.id})")
        if not tok.upos or not tok.deprel:
            problems.append(f"empty field (token {tok.id})")
        if tok.head == tok.id:
            problems.append(f"self-loop (token {tok.id})")
        elif not 0 <= tok.head <= n:
            problems.append(f"head out of range (token {tok.id})")
    if problems:
        return problems

    # a rootless graph always contains a cycle, which is what gets reported
    roots = [t.id for t in s.tokens if t.head == 0]
    if len(roots) > 1:
        problems.append("multiple roots")

    heads = [0] + [t.head for t in s.tokens]
    # colour 0 = unseen, 1 = on current path, 2 = known to reach root
    state = [2] + [0] * n
    cyclic = set()
    for start in range(1, n + 1):
        path = []
        node = start
        while state[node] == 0:
            state[node] = 1
            path.append(node)
            node = heads[node]
        if state[node] == 1:
            cyclic.add(min(path[path.index(node):]))
        for p in path:
            state[p] = 2
    for tid in sorted(cyclic):
        problems.append(f"cycle (token {tid})")
    return problems


def content_mask(s: Sentence) -> list[bool]:
    """True for tokens that count in punctuation-excluded evaluation."""
    return [t.upos not in PUNCT_TAGS for t in s.tokens]


def _parse_block(lines: list[tuple[int, str]], ordinal: int) -> Sentence:
    sent_id = None
    tokens = []
    for lineno, line in lines:
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            if key.strip() == "sent_id":
                sent_id = value.strip()
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise ConlluError(f"sentence {ordinal}, line {lineno}: expected 10 columns, "
                              f"got {len(cols)}: {line!r}")
        if "-" in cols[0] or "." in cols[0]:
            continue
        try:
            tid = int(cols[0])
        except ValueError:
            raise ConlluError(f"sentence {ordinal}, line {lineno}: bad token id {cols[0]!r}")
        try:
            head = int(cols[6])
        except ValueError:
            raise ConlluError(f"sentence {ordinal}, line {lineno}: non-integer head {cols[6]!r}")
        deprel = cols[7].split(":", 1)[0]
        tokens.append((lineno, Token(tid, cols[1], cols[3], head, deprel)))

    sent = Sentence(tuple(t for _, t in tokens), sent_id)
    problems = validate_sentence(sent)
    if problems:
        where = {t.id: ln for ln, t in tokens}
        first = problems[0]
        lineno = lines[0][0]
        if "(token " in first:
            tid = int(first.rsplit("(token ", 1)[1].rstrip(")"))
            lineno = where.get(tid, lineno)
        raise ConlluError(f"sentence {ordinal}, line {lineno}: " + "; ".join(problems))
    return sent


def read_treebank(text: str, language: str) -> Treebank:
    """Parse a CoNLL-U document into a validated :class:`Treebank`."""
    sentences = []
    block: list[tuple[int, str]] = []
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.rstrip("\r")
        if line.strip():
            block.append((lineno, line))
        elif block:
            if any(not l.startswith("#") for _, l in block):
                sentences.append(_parse_block(block, len(sentences) + 1))
            block = []
    if block and any(not l.startswith("#") for _, l in block):
        sentences.append(_parse_block(block, len(sentences) + 1))
    return Treebank(language, tuple(sentences))


def read_treebank_file(path: str | Path, language: str | None = None) -> Treebank:
    path = Path(path)
    if language is None:
        language = path.parent.name or path.stem
    return read_treebank(path.read_text(encoding="utf-8"), language)


def read_treebank_dir(root: str | Path, split: str = "train") -> dict[str, Treebank]:
    """Load ``<root>/<lang>/<split>.conllu`` for every language directory found."""
    root = Path(root)
    out = {}
    for lang_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        f = lang_dir / f"{split}.conllu"
        if f.exists():
            out[lang_dir.name] = read_treebank_file(f, lang_dir.name)
    return out


def format_sentence(s: Sentence) -> str:
    lines = []
    if s.sent_id is not None:
        lines.append(f"# sent_id = {s.sent_id}")
    for t in s.tokens:
        lines.append("\t".join([str(t.id), t.form, "_", t.upos, "_", "_",
                                str(t.head), t.deprel, "_", "_"]))
    return "\n".join(lines) + "\n"


def write_treebank(tb: Treebank | Iterable[Sentence]) -> str:
    """Serialise sentences to CoNLL-U; unmodelled columns are written as ``_``."""
    sentences = tb.sentences if isinstance(tb, Treebank) else tuple(tb)
    return "".join(format_sentence(s) + "\n" for s in sentences)


def filter_by_length(tb: Treebank, max_len: int) -> Treebank:
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    return Treebank(tb.language, tuple(s for s in tb.sentences if len(s) <= max_len))


def with_predictions(s: Sentence, heads: Sequence[int], deprels: Sequence[str]) -> Sentence:
    """Copy of ``s`` carrying predicted heads and labels."""
    return Sentence(tuple(Token(t.id, t.form, t.upos, int(h), r)
                          for t, h, r in zip(s.tokens, heads, deprels)), s.sent_id)
