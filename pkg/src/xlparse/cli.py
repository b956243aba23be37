"""Command-line entry point: ``xlparse <command> ...``.

Exit status is 0 on success, 1 for unusable configuration or data and 2
when a numerical invariant fails (for example a gradient check).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from . import analysis as an
from . import typology as ty
from .conllu import ConlluError, Treebank, filter_by_length, read_treebank_dir, read_treebank_file, write_treebank
from .decoder import DecoderConfig
from .encoder import EncoderConfig, load_embeddings
from .evaluation import (attachment_scores, breakdown_by_distance, breakdown_by_type, breakdown_tsv,
                         report_json, report_tsv)
from .parser import ARCHITECTURES, Parser, inventories, parse_architecture
from .training import TrainConfig, log_tsv, train

log = logging.getLogger("xlparse")

DEFAULT_PAIRS_SENTENCES = 4000


class InvariantError(RuntimeError):
    """A numerical self-check failed."""


class UsageError(ValueError):
    pass


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# -- run directories -----------------------------------------------------------------

def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)


def config_hash(config: dict) -> str:
    return hashlib.sha256(_canonical(config).encode()).hexdigest()


def versions() -> dict:
    return {"xlparse": __version__, "numpy": np.__version__, "python": platform.python_version()}


class Output:
    """Where a command writes.

    ``--out`` names a run directory, except that a path with a file suffix
    names the single primary output; its manifest then sits next to it as
    ``<name>.manifest.json``.
    """

    def __init__(self, out: str | None):
        self.path = Path(out) if out else None
        self.is_file = self.path is not None and self.path.suffix != ""

    def file(self, name: str) -> Path | None:
        if self.path is None:
            return None
        if self.is_file:
            return self.path if name == "primary" else self.path.with_name(f"{self.path.stem}.{name}")
        return self.path / name

    def write(self, name: str, text: str) -> Path | None:
        target = self.file(name)
        if target is None:
            return None
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text, encoding="utf-8")
        return target

    def manifest(self, command: str, config: dict, seed=None):
        if self.path is None:
            return
        doc = {"command": command, "config": config, "config_hash": config_hash(config),
               "seed": seed, "versions": versions()}
        self.write("manifest.json", json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")


# -- helpers ----------------------------------------------------------------------------

def _existing(path: str | None, what: str) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} not found: {p}")
    return p


def _load_treebanks(directory: str, split: str) -> dict[str, Treebank]:
    root = _existing(directory, "treebank directory")
    if not root.is_dir():
        raise UsageError(f"not a directory: {root}")
    tbs = read_treebank_dir(root, split)
    if not tbs:
        raise UsageError(f"no <lang>/{split}.conllu files under {root}")
    return tbs


def _read_tsv(path: str) -> list[dict[str, str]]:
    p = _existing(path, "table")
    rows = list(csv.DictReader(io.StringIO(p.read_text(encoding="utf-8")), delimiter="\t"))
    if not rows:
        raise UsageError(f"{p} has no data rows")
    return rows


def _column(rows: list[dict[str, str]], name: str, path: str) -> list[float]:
    if name not in rows[0]:
        raise UsageError(f"{path} has no column {name!r}; columns are {list(rows[0])}")
    try:
        return [float(r[name]) for r in rows]
    except ValueError as e:
        raise UsageError(f"{path}, column {name!r}: {e}") from None


def _mean_sd(xs: Sequence[float]) -> dict:
    a = np.asarray(xs, dtype=np.float64)
    sd = float(a.std(ddof=1)) if len(a) > 1 else 0.0
    return {"mean": round(float(a.mean()), 6), "sd": round(sd, 6), "n": len(a)}


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# -- typology ---------------------------------------------------------------------------

def _typology_inputs(args):
    tbs = _load_treebanks(args.treebanks, args.split)
    stats = {lang: ty.collect_type_stats(tb, args.include_root) for lang, tb in tbs.items()}
    min_langs = args.min_langs if args.min_langs is not None else min(20, len(tbs))
    sel = ty.select_types(stats, args.min_avg_freq, min_langs)
    if not len(sel):
        raise UsageError("no augmented type passes the selection thresholds")
    vectors = [ty.order_vector(tbs[l], sel, stats[l]) for l in sorted(tbs)]
    config = {"treebanks": str(args.treebanks), "split": args.split, "min_avg_freq": args.min_avg_freq,
              "min_langs": min_langs, "include_root": args.include_root}
    return tbs, vectors, config


def cmd_typology(args) -> int:
    out = Output(args.out)
    if args.action == "depdist":
        tbs = _load_treebanks(args.treebanks, args.split)
        hists = {lang: ty.dep_distance_histogram(tb) for lang, tb in tbs.items()}
        text = ty.histogram_tsv(hists)
        config = {"treebanks": str(args.treebanks), "split": args.split}
        out.write("primary" if out.is_file else "depdist.tsv", text)
        out.manifest("typology depdist", config)
        print(text, end="") if out.path is None else print(f"{len(hists)} languages")
        return 0

    tbs, vectors, config = _typology_inputs(args)
    if args.action == "vectors":
        text = ty.vectors_tsv(vectors)
        out.write("primary" if out.is_file else "vectors.tsv", text)
        summary = f"{len(vectors)} languages x {len(vectors[0].values)} types"
    else:
        if len(vectors) < 2:
            raise UsageError("distances need at least two languages")
        dm = ty.distance_matrix(vectors)
        if args.action == "distance":
            text = ty.matrix_tsv(dm)
            out.write("primary" if out.is_file else "distance.tsv", text)
            summary = f"{len(dm.languages)} x {len(dm.languages)} distance matrix"
        else:
            dg = ty.cluster_single_linkage(dm)
            text = ty.dendrogram_tsv(dg)
            newick = ty.to_newick(dg) + "\n"
            out.write("primary" if out.is_file else "dendrogram.tsv", text)
            out.write("nwk" if out.is_file else "dendrogram.nwk", newick)
            summary = newick.strip()
    out.manifest(f"typology {args.action}", config)
    print(text, end="") if out.path is None else print(summary)
    return 0


# -- training -----------------------------------------------------------------------

_TRAIN_FIELDS = {f.name for f in fields(TrainConfig)} - {"seed"}
_ENC_FIELDS = {f.name for f in fields(EncoderConfig)}
_DEC_FIELDS = {f.name for f in fields(DecoderConfig)}


def _set_path(cfg: dict, dotted: str, raw: str):
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise UsageError(f"--set {dotted}: {k!r} is not a section")
    node[keys[-1]] = value


def build_run_config(args) -> dict:
    """Defaults, then the JSON config file, then command-line flags."""
    cfg: dict = {"arch": "selfatt-graph", "variant": None, "train_language": None, "languages": {},
                 "encoder": {}, "decoder": {}, "training": {}, "seeds": [1]}
    if args.config:
        path = _existing(args.config, "config file")
        try:
            loaded = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise UsageError(f"{path}: invalid JSON ({e})") from None
        unknown = set(loaded) - set(cfg)
        if unknown:
            raise UsageError(f"{path}: unknown keys {sorted(unknown)}")
        cfg.update(loaded)
    if args.arch:
        cfg["arch"] = args.arch
    if args.variant:
        cfg["variant"] = args.variant
    if args.train_language:
        cfg["train_language"] = args.train_language
    if cfg["train_language"] is None:
        if len(cfg["languages"]) == 1:
            cfg["train_language"] = next(iter(cfg["languages"]))
        elif args.train:
            cfg["train_language"] = Path(args.train).parent.name or "src"
    lang = cfg["train_language"]
    entry = cfg["languages"].setdefault(lang, {}) if lang else None
    for flag, key in (("train", "train"), ("dev", "dev"), ("embeddings", "embeddings")):
        if getattr(args, flag):
            entry[key] = getattr(args, flag)
    if args.delexicalized:
        entry["delexicalized"] = True
    for spec in args.test or []:
        if "=" not in spec:
            raise UsageError(f"--test expects LANG=PATH, got {spec!r}")
        tl, tp = spec.split("=", 1)
        cfg["languages"].setdefault(tl, {})["test"] = tp
    tr = cfg["training"]
    for flag, key in (("epochs", "epochs"), ("lr", "learning_rate"), ("batch_size", "batch_size"),
                      ("dropout", "dropout"), ("max_length", "max_sentence_length"),
                      ("max_sentences", "max_sentences")):
        if getattr(args, flag) is not None:
            tr[key] = getattr(args, flag)
    if args.seeds:
        try:
            cfg["seeds"] = [int(s) for s in args.seeds.split(",") if s.strip()]
        except ValueError:
            raise UsageError(f"--seeds expects comma-separated integers, got {args.seeds!r}") from None
    for item in args.set or []:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        _set_path(cfg, k, v)
    return cfg


def validate_run_config(cfg: dict):
    parse_architecture(cfg["arch"])
    if not cfg["seeds"]:
        raise UsageError("seeds must be non-empty")
    lang = cfg["train_language"]
    if not lang or "train" not in cfg["languages"].get(lang, {}):
        raise UsageError("no training treebank given (use --train or a config file)")
    for name, entry in cfg["languages"].items():
        for key in ("train", "dev", "test", "embeddings"):
            if key in entry:
                _existing(entry[key], f"{name} {key} file")
    for section, allowed in (("training", _TRAIN_FIELDS), ("encoder", _ENC_FIELDS - {"variant"}),
                             ("decoder", _DEC_FIELDS)):
        bad = set(cfg[section]) - allowed
        if bad:
            raise UsageError(f"unknown {section} keys: {sorted(bad)}")


def _embeddings_for(entry: dict, dim: int | None = None):
    path = entry.get("embeddings")
    return load_embeddings(path, dim) if path else None


def cmd_train(args) -> int:
    cfg = build_run_config(args)
    validate_run_config(cfg)
    out = Output(args.out)
    if out.is_file:
        raise UsageError("train --out must be a directory")
    variant, decoder = parse_architecture(cfg["arch"])
    variant = cfg["variant"] or variant
    src = cfg["train_language"]
    src_entry = cfg["languages"][src]
    train_tb = read_treebank_file(src_entry["train"], src)
    dev_tb = read_treebank_file(src_entry["dev"], src) if "dev" in src_entry else None
    tests = {l: read_treebank_file(e["test"], l) for l, e in sorted(cfg["languages"].items()) if "test" in e}
    words = _embeddings_for(src_entry)
    enc_over = dict(cfg["encoder"])
    if words is not None:
        enc_over["word_dim"] = words.dim
    enc_cfg = EncoderConfig.for_variant(variant, **enc_over)
    dec_cfg = DecoderConfig(**cfg["decoder"])
    pos, labels = inventories([train_tb] + ([dev_tb] if dev_tb else []))
    label_set = set(labels)
    for tb in tests.values():
        for s in tb:
            label_set.update(s.deprels)
    labels = sorted(label_set)
    target_words = {l: _embeddings_for(e, enc_cfg.word_dim) for l, e in cfg["languages"].items() if l in tests}

    results = {"dev": [], "test": {l: [] for l in tests}}
    for seed in cfg["seeds"]:
        tcfg = TrainConfig.for_encoder(variant, **{**cfg["training"], "seed": seed,
                                                   "delexicalized": bool(src_entry.get("delexicalized"))})
        if "dropout" not in cfg["encoder"]:
            enc_cfg = EncoderConfig(**{**asdict(enc_cfg), "dropout": tcfg.dropout})
        parser = Parser(enc_cfg, decoder, pos, labels, words, dec_cfg, seed=seed)
        parser, logs = train(parser, train_tb, tcfg, dev_tb)
        run = Path(args.out) / f"seed-{seed}"
        parser.save(run / "model")
        (run / "train_log.tsv").write_text(log_tsv(logs, seed), encoding="utf-8")
        if dev_tb is not None:
            rep = attachment_scores(parser.parse_sentences(dev_tb.sentences, tcfg.delexicalized), dev_tb.sentences)
            (run / "dev.json").write_text(report_json(rep), encoding="utf-8")
            results["dev"].append(rep)
        for lang, tb in tests.items():
            parser.set_word_embeddings(target_words[lang] if lang != src else words)
            delex = bool(cfg["languages"][lang].get("delexicalized"))
            rep = attachment_scores(parser.parse_sentences(tb.sentences, delex), tb.sentences)
            (run / f"test_{lang}.json").write_text(report_json(rep), encoding="utf-8")
            results["test"][lang].append(rep)
        parser.set_word_embeddings(words)
        print(f"seed {seed}: {len(logs)} epochs"
              + (f", dev UAS {results['dev'][-1].uas:.4f}" if dev_tb is not None else ""))

    summary = {"arch": cfg["arch"], "variant": variant, "seeds": cfg["seeds"], "train_language": src}
    if results["dev"]:
        summary["dev"] = {"uas": _mean_sd([r.uas for r in results["dev"]]),
                          "las": _mean_sd([r.las for r in results["dev"]])}
    summary["test"] = {l: {"uas": _mean_sd([r.uas for r in rs]), "las": _mean_sd([r.las for r in rs])}
                       for l, rs in results["test"].items()}
    out.write("summary.json", _json(summary))
    out.manifest("train", cfg, cfg["seeds"])
    for l, s in summary["test"].items():
        print(f"{l}: UAS {s['uas']['mean']:.4f} ± {s['uas']['sd']:.4f}  LAS {s['las']['mean']:.4f} ± {s['las']['sd']:.4f}")
    return 0


# -- parse / eval ---------------------------------------------------------------------

def _load_model(path: str, embeddings: str | None) -> Parser:
    model_dir = _existing(path, "model directory")
    if not (model_dir / "model.json").exists():
        candidates = sorted(model_dir.glob("seed-*/model"))
        if not candidates:
            raise UsageError(f"{model_dir} holds no model.json")
        model_dir = candidates[0]
    parser = Parser.load(model_dir)
    if embeddings:
        parser.set_word_embeddings(load_embeddings(_existing(embeddings, "embeddings"), parser.enc_cfg.word_dim))
    return parser


def cmd_parse(args) -> int:
    parser = _load_model(args.model, args.embeddings)
    tb = read_treebank_file(_existing(args.input, "input treebank"))
    pred = parser.parse_treebank(tb, args.delexicalized)
    out = Output(args.out)
    text = write_treebank(pred)
    out.write("primary" if out.is_file else "pred.conllu", text)
    out.manifest("parse", {"model": str(args.model), "input": str(args.input),
                           "embeddings": args.embeddings, "delexicalized": args.delexicalized},
                 parser.seed)
    print(f"parsed {len(pred)} sentences")
    return 0


def cmd_eval(args) -> int:
    pred = read_treebank_file(_existing(args.pred, "prediction file"))
    gold = read_treebank_file(_existing(args.gold, "gold file"))
    for p, g in zip(pred.sentences, gold.sentences):
        if p.forms != g.forms:
            raise UsageError(f"prediction and gold tokens differ near sentence {g.sent_id or '?'}")
    rep = attachment_scores(pred.sentences, gold.sentences, exclude_punct=not args.include_punct)
    out = Output(args.out)
    breakdowns = {}
    if args.breakdown:
        breakdowns = {"by_type": breakdown_by_type(pred.sentences, gold.sentences),
                      "by_distance": breakdown_by_distance(pred.sentences, gold.sentences)}
    if out.path is not None:
        if out.is_file:
            out.write("primary", report_json(rep, breakdowns))
        else:
            out.write("eval.json", report_json(rep, breakdowns))
            out.write("eval.tsv", report_tsv(rep))
            for name, b in breakdowns.items():
                out.write(f"{name}.tsv", breakdown_tsv(b))
        out.manifest("eval", {"pred": str(args.pred), "gold": str(args.gold),
                              "include_punct": args.include_punct, "breakdown": args.breakdown})
    print(f"UAS={rep.uas:.4f} LAS={rep.las:.4f} tokens={rep.evaluated_tokens}")
    return 0


# -- analysis ----------------------------------------------------------------------

def _distances_from(path: str, reference: str | None) -> dict[str, float]:
    p = _existing(path, "distance file")
    text = p.read_text(encoding="utf-8")
    first = text.split("\n", 1)[0].split("\t")
    if reference is not None:
        dm = ty.read_matrix_tsv(text)
        if reference not in dm.languages:
            raise UsageError(f"reference language {reference!r} not in {p}")
        r = dm.languages.index(reference)
        return {l: float(dm.entries[r, i]) for i, l in enumerate(dm.languages)}
    if first[:2] != ["language", "distance"]:
        raise UsageError(f"{p}: expected columns language, distance (or pass --reference with a matrix)")
    return {r["language"]: float(r["distance"]) for r in _read_tsv(path)}


def _pairs_job(job):
    src, model_dir, targets = job
    parser = Parser.load(model_dir)
    out = {}
    for tgt, path, emb, delex, max_len, max_sentences in targets:
        sents = filter_by_length(read_treebank_file(path, tgt), max_len).sentences
        if max_sentences:
            sents = sents[:max_sentences]
        if emb:
            parser.set_word_embeddings(load_embeddings(emb, parser.enc_cfg.word_dim))
        else:
            parser.set_word_embeddings(None)
        rep = attachment_scores(parser.parse_sentences(sents, delex), sents)
        out[tgt] = rep
    return src, out


def _transfer_from_models(args) -> an.TransferMatrix:
    models = _existing(args.models, "model directory")
    tbs_root = _existing(args.treebanks, "treebank directory")
    langs = sorted(p.name for p in tbs_root.iterdir() if (p / f"{args.split}.conllu").exists())
    if len(langs) < 2:
        raise UsageError(f"need at least two languages with {args.split}.conllu under {tbs_root}")
    delex = set(args.delexicalized or [])
    emb_dir = Path(args.embeddings_dir) if args.embeddings_dir else None

    def emb(lang):
        if emb_dir is None:
            return None
        f = emb_dir / f"{lang}.vec"
        return str(f) if f.exists() else None

    targets = [(t, str(tbs_root / t / f"{args.split}.conllu"), emb(t), t in delex, args.max_length, args.max_sentences)
               for t in langs]
    jobs = []
    for src in langs:
        d = models / src
        if not (d / "model.json").exists():
            cands = sorted(d.glob("seed-*/model"))
            if not cands:
                raise UsageError(f"no trained model for {src!r} under {models}")
            d = cands[0]
        jobs.append((src, str(d), targets))
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = dict(pool.map(_pairs_job, jobs))
    else:
        results = dict(map(_pairs_job, jobs))
    reports = {(s, t): rep for s in langs for t, rep in results[s].items()}
    return an.TransferMatrix.from_reports(reports, langs)


def cmd_analyze(args) -> int:
    out = Output(args.out)
    if args.action == "correlate":
        rows = _read_tsv(args.table)
        rep = an.correlate(_column(rows, args.x, args.table), _column(rows, args.y, args.table))
        out.write("primary" if out.is_file else "correlation.json", _json(rep.to_dict()))
        out.manifest("analyze correlate", {"table": str(args.table), "x": args.x, "y": args.y})
        print(f"pearson={rep.pearson:.6f} spearman={rep.spearman:.6f} n={rep.n}")
        return 0

    if args.action == "contrast":
        rows = _read_tsv(args.results)
        results = {}
        for r in rows:
            try:
                if "score" in r:
                    score = float(r["score"])
                else:
                    score = (float(r["uas"]) + float(r["las"])) / 2
                results[r["encoder"].lower(), r["decoder"].lower(), r["language"]] = score
            except (KeyError, ValueError) as e:
                raise UsageError(f"{args.results}: bad row {r} ({e})") from None
        distances = _distances_from(args.distances, args.reference) if args.distances else None
        contrasts = an.component_contrast(results, distances)
        text = an.contrast_tsv(contrasts)
        out.write("primary" if out.is_file else "contrast.tsv", text)
        out.manifest("analyze contrast", {"results": str(args.results), "distances": args.distances,
                                          "reference": args.reference})
        print(text, end="") if out.path is None else print(f"{len(contrasts)} languages")
        return 0

    # pairs
    if bool(args.transfer) == bool(args.models):
        raise UsageError("analyze pairs needs exactly one of --transfer or --models")
    if args.transfer:
        A = an.read_transfer_matrix_tsv(_existing(args.transfer, "transfer matrix").read_text(encoding="utf-8"))
    else:
        if not args.treebanks:
            raise UsageError("--models needs --treebanks")
        A = _transfer_from_models(args)
    dm = ty.read_matrix_tsv(_existing(args.distances, "distance matrix").read_text(encoding="utf-8"))
    summary = an.transfer_summaries(A, dm, allow_undefined=args.allow_undefined)
    if out.is_file:
        raise UsageError("analyze pairs --out must be a directory")
    out.write("transfer.tsv", an.transfer_matrix_tsv(A))
    out.write("summary.json", an.summary_json(summary))
    out.write("long.tsv", an.long_format_tsv(summary))
    out.manifest("analyze pairs", {"transfer": args.transfer, "models": args.models,
                                   "treebanks": args.treebanks, "split": args.split,
                                   "distances": str(args.distances),
                                   "max_length": args.max_length, "max_sentences": args.max_sentences,
                                   "delexicalized": sorted(args.delexicalized or [])})
    for name, c in (("as-source", summary.source_correlation), ("as-target", summary.target_correlation)):
        print(f"{name}: " + ("undefined" if c is None else f"pearson={c.pearson:.4f} spearman={c.spearman:.4f}"))
    return 0


# -- gradcheck ------------------------------------------------------------------------

def cmd_gradcheck(args) -> int:
    from .toy import gradcheck_architecture

    archs = sorted(ARCHITECTURES) if args.arch == "all" else [args.arch]
    errors = {}
    for arch in archs:
        parse_architecture(arch)
        errors[arch] = gradcheck_architecture(arch, eps=args.eps)
        print(f"{arch}: max relative error {errors[arch]:.3e}")
    out = Output(args.out)
    out.write("primary" if out.is_file else "gradcheck.json",
              _json({a: float(f"{e:.6e}") for a, e in errors.items()}))
    out.manifest("gradcheck", {"arch": args.arch, "eps": args.eps, "tolerance": args.tolerance})
    failed = [a for a, e in errors.items() if not e < args.tolerance]
    if failed:
        raise InvariantError(f"gradient check above {args.tolerance:g} for {', '.join(failed)}")
    return 0


# -- argument parsing --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _ArgumentParser(prog="xlparse", description="Cross-lingual dependency parsing toolkit.")
    p.add_argument("--version", action="version", version=f"xlparse {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    t = sub.add_parser("typology", help="word-order features from treebanks")
    t.add_argument("action", choices=["vectors", "distance", "cluster", "depdist"])
    t.add_argument("--treebanks", required=True, help="directory of <lang>/<split>.conllu")
    t.add_argument("--split", default="train")
    t.add_argument("--min-avg-freq", type=float, default=0.001)
    t.add_argument("--min-langs", type=int, default=None, help="default: min(20, number of languages)")
    t.add_argument("--include-root", action="store_true", help="count root attachments as types")
    t.add_argument("--out", help="output file or directory (stdout when omitted)")
    t.set_defaults(func=cmd_typology)

    tr = sub.add_parser("train", help="train a parser with one or more seeds")
    tr.add_argument("--config", help="JSON run configuration")
    tr.add_argument("--arch", choices=sorted(ARCHITECTURES))
    tr.add_argument("--variant", help="encoder variant, e.g. SelfAtt-Relative+Dir")
    tr.add_argument("--train-language")
    tr.add_argument("--train", help="training CoNLL-U file")
    tr.add_argument("--dev", help="development CoNLL-U file")
    tr.add_argument("--embeddings", help="word vectors of the training language")
    tr.add_argument("--delexicalized", action="store_true", help="POS-only input for the training language")
    tr.add_argument("--test", action="append", metavar="LANG=PATH", help="evaluate on this treebank")
    tr.add_argument("--epochs", type=int)
    tr.add_argument("--lr", type=float)
    tr.add_argument("--batch-size", type=int)
    tr.add_argument("--dropout", type=float)
    tr.add_argument("--max-length", type=int)
    tr.add_argument("--max-sentences", type=int)
    tr.add_argument("--seeds", help="comma-separated seeds, e.g. 1,2,3,4,5")
    tr.add_argument("--set", action="append", metavar="KEY=VALUE",
                    help="override a config entry, e.g. encoder.layers=2")
    tr.add_argument("--out", required=True, help="run directory")
    tr.set_defaults(func=cmd_train)

    pa = sub.add_parser("parse", help="parse a CoNLL-U file with a trained model")
    pa.add_argument("--model", required=True)
    pa.add_argument("--input", required=True)
    pa.add_argument("--embeddings")
    pa.add_argument("--delexicalized", action="store_true")
    pa.add_argument("--out", required=True)
    pa.set_defaults(func=cmd_parse)

    ev = sub.add_parser("eval", help="attachment scores of predictions against gold")
    ev.add_argument("--pred", required=True)
    ev.add_argument("--gold", required=True)
    ev.add_argument("--include-punct", action="store_true")
    ev.add_argument("--breakdown", action="store_true", help="also score by type and distance")
    ev.add_argument("--out")
    ev.set_defaults(func=cmd_eval)

    a = sub.add_parser("analyze", help="relate performance to word-order distance")
    a.add_argument("action", choices=["correlate", "contrast", "pairs"])
    a.add_argument("--table", help="correlate: TSV with a header row")
    a.add_argument("--x", help="correlate: first column")
    a.add_argument("--y", help="correlate: second column")
    a.add_argument("--results", help="contrast: TSV with encoder, decoder, language, score (or uas, las)")
    a.add_argument("--distances", help="distance TSV (language, distance) or matrix")
    a.add_argument("--reference", help="read distances from this language's matrix row")
    a.add_argument("--transfer", help="pairs: transfer matrix TSV")
    a.add_argument("--models", help="pairs: directory of <lang>/ trained runs")
    a.add_argument("--treebanks", help="pairs: directory of <lang>/<split>.conllu")
    a.add_argument("--split", default="test")
    a.add_argument("--embeddings-dir", help="pairs: directory of <lang>.vec files")
    a.add_argument("--delexicalized", action="append", metavar="LANG")
    a.add_argument("--max-length", type=int, default=140, help="pairs: drop longer target sentences first")
    a.add_argument("--max-sentences", type=int, default=DEFAULT_PAIRS_SENTENCES)
    a.add_argument("--workers", type=int, default=1)
    a.add_argument("--allow-undefined", action="store_true",
                   help="report a zero-variance correlation as null instead of failing")
    a.add_argument("--out")
    a.set_defaults(func=cmd_analyze)

    g = sub.add_parser("gradcheck", help="finite-difference check of a miniature model")
    g.add_argument("--arch", default="selfatt-graph", choices=sorted(ARCHITECTURES) + ["all"])
    g.add_argument("--eps", type=float, default=1e-4)
    g.add_argument("--tolerance", type=float, default=1e-4)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gradcheck)
    return p


def _check_action_args(args):
    if args.command != "analyze":
        return
    need = {"correlate": ("table", "x", "y"), "contrast": ("results",), "pairs": ("distances",)}[args.action]
    missing = [f"--{n}" for n in need if getattr(args, n) is None]
    if missing:
        raise UsageError(f"analyze {args.action} needs {', '.join(missing)}")


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _check_action_args(args)
        return args.func(args)
    except InvariantError as e:
        print(f"xlparse: invariant violated: {e}", file=sys.stderr)
        return 2
    except (UsageError, ConlluError, ValueError, KeyError, OSError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"xlparse: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
