"""Command-line entry point: ``csgkit <command> ...``.

Exit status is 0 on success, 2 for usage errors and 1 for anything that
goes wrong while running a command.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import torch

from . import _accel
from .embed import Word2VecConfig, fit_token_embeddings, hashing_embeddings
from .gradcheck import run_gradcheck, summary_lines
from .io import load_corpus, read_graph, write_corpus, write_graph
from .metrics import corpus_report
from .model import Checkpoint, ModelConfig
from .pipeline import (TrainConfig, evaluate_model, explain_statements, split_corpus,
                       train_model)
from .simplify import DEFAULT_IDENTIFIER_TYPES, DEFAULT_RULES, PHASES, MergeRuleTable, gs, vgs
from .synth import generate_synthetic_corpus

logger = logging.getLogger("csgkit")


class UsageError(Exception):
    pass


def _load_config(path: Optional[str]) -> dict:
    """Config JSON with optional sections ``train``, ``model``, ``rules``
    (inline list or path) and ``identifier_types``."""
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise UsageError(f"config file {path} not found")
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}")
    if not isinstance(data, dict):
        raise UsageError("config must be a JSON object")
    unknown = set(data) - {"train", "model", "rules", "identifier_types"}
    if unknown:
        raise UsageError(f"unknown config sections: {sorted(unknown)}")
    return data


def _rules(args, cfg: dict) -> MergeRuleTable:
    if getattr(args, "rules", None):
        return MergeRuleTable.load(args.rules)
    rules = cfg.get("rules")
    if rules is None:
        return DEFAULT_RULES
    if isinstance(rules, str):
        return MergeRuleTable.load(rules)
    return MergeRuleTable.from_json(rules)


def _identifier_types(cfg: dict):
    return frozenset(cfg.get("identifier_types", DEFAULT_IDENTIFIER_TYPES))


def _train_config(args, cfg: dict) -> TrainConfig:
    values = dict(cfg.get("train", {}))
    if args.seed is not None:
        values["seed"] = args.seed
    if getattr(args, "epochs", None) is not None:
        values["max_epochs"] = args.epochs
        values["patience"] = min(values.get("patience", TrainConfig.patience), args.epochs)
    try:
        return TrainConfig(**values)
    except TypeError as exc:
        raise UsageError(f"bad train config: {exc}")


def _model_config(cfg: dict) -> ModelConfig:
    try:
        return ModelConfig(**cfg.get("model", {}))
    except TypeError as exc:
        raise UsageError(f"bad model config: {exc}")


def _seed(args) -> int:
    return 0 if args.seed is None else args.seed


# commands --------------------------------------------------------------------

def cmd_synth(args, cfg) -> int:
    corpus = generate_synthetic_corpus(args.n, _seed(args))
    written = write_corpus(corpus, args.out)
    print(f"wrote {len(written)} graphs to {args.out}")
    return 0


def cmd_simplify(args, cfg) -> int:
    corpus = load_corpus(args.inp, args.jobs)
    rules = _rules(args, cfg)
    ident = _identifier_types(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, g in zip(corpus.names, corpus.graphs):
        if args.phase == "vgs":
            s, _ = vgs(g, ident)
        elif args.phase == "gs":
            s, _ = gs(g, rules, ident)
        else:
            s, _ = PHASES[args.phase](g, rules)
        write_graph(s, out / name)
    print(f"simplified {len(corpus)} graphs ({args.phase}) into {out}; {len(corpus.errors)} skipped")
    return 0 if not corpus.errors else 1


def cmd_stats(args, cfg) -> int:
    corpus = load_corpus(args.inp, args.jobs)
    rules, ident = _rules(args, cfg), _identifier_types(cfg)
    simplified = [gs(g, rules, ident)[0] for g in corpus.graphs]
    report = corpus_report(corpus.names, corpus.graphs, simplified)
    Path(args.out).write_text(report.to_csv(), encoding="utf-8")
    print(report.reduction_text())
    return 0


def cmd_embed_fit(args, cfg) -> int:
    corpus = load_corpus(args.inp, args.jobs)
    rules, ident = _rules(args, cfg), _identifier_types(cfg)
    graphs = [gs(g, rules, ident)[0] for g in corpus.graphs]
    tcfg = _train_config(args, cfg)
    if args.method == "hash":
        table = hashing_embeddings(graphs, args.d)
    else:
        w = tcfg.word2vec
        table = fit_token_embeddings(graphs, args.d, tcfg.seed,
                                     Word2VecConfig(args.d, w.window, w.negative, w.epochs,
                                                    w.alpha, w.min_alpha))
    table.save(args.out)
    print(f"{len(table.vocab)} tokens x {table.d} dims -> {args.out}")
    return 0


def cmd_train(args, cfg) -> int:
    tcfg = _train_config(args, cfg)
    mcfg = _model_config(cfg)
    corpus = load_corpus(args.inp, args.jobs)
    if args.valid:
        train, valid, test = corpus, load_corpus(args.valid, args.jobs), None
    else:
        train, valid, test = split_corpus(corpus, tcfg.ratios, tcfg.seed)
    torch.set_num_threads(1)

    def report(rec):
        print(f"epoch {rec.epoch:3d}  loss {rec.loss:.4f}  valid f1 {rec.valid_f1:.4f}", flush=True)

    result = train_model(train.graphs, valid.graphs, tcfg, mcfg, _rules(args, cfg),
                         _identifier_types(cfg), on_epoch=report)
    if test is not None:
        result.checkpoint.meta["test_split"] = test.names
    result.checkpoint.save(args.out)
    history = args.history or str(Path(args.out).with_suffix(".history.jsonl"))
    Path(history).write_text(result.history_jsonl(), encoding="utf-8")
    print(f"best epoch {result.best_epoch}; checkpoint {args.out}; history {history}")
    if test is not None and len(test):
        scores = evaluate_model(result.checkpoint, test.graphs).scores
        print("test " + json.dumps(scores.as_dict()))
    return 0


def cmd_eval(args, cfg) -> int:
    ckpt = Checkpoint.load(args.checkpoint)
    corpus = load_corpus(args.inp, args.jobs)
    if args.split_from_checkpoint:
        wanted = set(ckpt.meta.get("test_split", []))
        corpus = corpus.subset([i for i, n in enumerate(corpus.names) if n in wanted])
    ev = evaluate_model(ckpt, corpus.graphs)
    doc = {"scores": ev.scores.as_dict(),
           "predictions": [{"id": n, "p_vul": p, "prediction": y, "label": t}
                           for n, p, y, t in zip(corpus.names, ev.probabilities, ev.predictions, ev.labels)]}
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=1), encoding="utf-8")
    print(json.dumps(doc["scores"]))
    return 0


def cmd_explain(args, cfg) -> int:
    ckpt = Checkpoint.load(args.checkpoint)
    g = read_graph(args.graph)
    attr = explain_statements(ckpt, g)
    total = float(attr.total())
    rows = [{"statement": sw.statement, "orig_id": g.nodes[sw.statement].orig_id, "line": sw.line,
             "code": sw.code, "weight": sw.weight, "share": sw.weight / total if total else 0.0,
             "members": sw.members} for sw in attr.statements]
    if args.out:
        Path(args.out).write_text(json.dumps(rows, indent=1), encoding="utf-8")
    for r in rows[:args.top]:
        line = "-" if r["line"] is None else r["line"]
        print(f"{r['share']:7.2%}  line {line:>4}  {r['code']}")
    return 0


def cmd_gradcheck(args, cfg) -> int:
    results = run_gradcheck(_seed(args))
    print("\n".join(summary_lines(results)))
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="csgkit", description="Code structure graph simplification and vulnerability detection.")
    p.add_argument("--seed", type=int, default=None, help="seed for every random choice (default 0)")
    p.add_argument("--config", default=None, help="JSON file with train/model/rules sections")
    p.add_argument("--jobs", type=int, default=1, help="parallel file loading")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a synthetic labelled corpus")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("simplify", help="simplify every graph in a directory")
    s.add_argument("--rules")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--phase", choices=["tgs", "vgs", "gs"], default="gs")
    s.set_defaults(func=cmd_simplify)

    s = sub.add_parser("stats", help="per-graph size and distance report (CSV)")
    s.add_argument("--rules")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("embed-fit", help="learn token embeddings from a corpus")
    s.add_argument("--rules")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--d", type=int, default=100)
    s.add_argument("--method", choices=["word2vec", "hash"], default="word2vec")
    s.set_defaults(func=cmd_embed_fit)

    s = sub.add_parser("train", help="train a detector; writes a checkpoint and a JSON-lines history")
    s.add_argument("--rules")
    s.add_argument("--in", dest="inp", required=True, help="training corpus (split 8:1:1 unless --valid)")
    s.add_argument("--valid", help="separate validation corpus")
    s.add_argument("--out", required=True, help="checkpoint path (.npz)")
    s.add_argument("--history", help="history path (default: <out>.history.jsonl)")
    s.add_argument("--epochs", type=int, help="override max_epochs")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="score a corpus with a checkpoint")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", help="JSON with scores and per-graph predictions")
    s.add_argument("--split-from-checkpoint", action="store_true",
                   help="only score the test split recorded at training time")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("explain", help="rank the statements of one graph by importance")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--graph", required=True)
    s.add_argument("--out")
    s.add_argument("--top", type=int, default=10)
    s.set_defaults(func=cmd_explain)

    s = sub.add_parser("gradcheck", help="finite-difference check of all model gradients")
    s.set_defaults(func=cmd_gradcheck)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    logger.debug("kernel backend: %s", _accel.BACKEND)
    try:
        cfg = _load_config(args.config)
        return args.func(args, cfg)
    except UsageError as exc:
        print(f"csgkit: usage error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report anything else as a runtime failure
        if args.verbose:
            logger.exception("command failed")
        print(f"csgkit: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
