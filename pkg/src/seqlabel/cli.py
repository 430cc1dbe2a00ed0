"""Command-line interface: ``seqlabel {train,crossval,tag,eval,inspect}``.

Exit codes: 0 success, 1 usage/config, 2 data/parse, 3 numerical failure.
Option precedence: command-line flags, then ``--config`` JSON, then the
built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import data as D
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import ConfigError, DataError, SeqLabelError
from .evaluation import crossval_aggregate, ner_report, token_accuracy
from .model import build_tagger
from .training import TrainingDiverged, TrainSchedule, dev_score, restore, train

logger = logging.getLogger("seqlabel")

HISTORY_FIELDS = ("epoch", "lr", "train_loss", "dev_score")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_model_flags(p):
    g = p.add_argument_group("model (defaults from the reference hyper-parameter table)")
    g.add_argument("--char-dim", type=int, default=100, help="character embedding size")
    g.add_argument("--word-dim", type=int, default=300, help="word embedding size")
    g.add_argument("--char-hidden", type=int, default=100, help="char LSTM hidden size per direction")
    g.add_argument("--word-hidden", type=int, default=150, help="word LSTM hidden size per direction")
    g.add_argument("--dropout", type=float, default=0.35, help="dropout rate")
    g.add_argument("--use-pos", action="store_true", help="append one-hot POS features (ner only)")
    g.add_argument("--use-chunk", action="store_true", help="append one-hot chunk features (ner only)")
    g.add_argument("--no-chars", action="store_true", help="drop the character-level word encoder")
    g.add_argument("--finetune-words", action="store_true", help="train the pretrained word vectors too")
    t = p.add_argument_group("training")
    t.add_argument("--lr", type=float, default=0.0035, help="initial learning rate")
    t.add_argument("--decay", type=float, default=0.005, help="per-epoch decay: lr/(1+decay*t)")
    t.add_argument("--batch-size", type=int, default=8, help="sentences per optimizer step")
    t.add_argument("--max-epochs", type=int, default=50, help="epoch limit")
    t.add_argument("--patience", type=int, default=5, help="epochs without dev improvement before stopping")
    t.add_argument("--mean-loss", action="store_true", help="average instead of sum losses in a batch")
    t.add_argument("--clip-norm", type=float, default=None, help="global gradient-norm clip")
    t.add_argument("--seed", type=int, default=0, help="random seed")


def _add_data_flags(p):
    p.add_argument("--task", choices=("pos", "ner"), required=True)
    p.add_argument("--columns", default=None,
                   help="column layout, e.g. word,pos,chunk,label (default: word,label for pos; "
                        "word,pos,chunk,label for ner)")
    p.add_argument("--strict-columns", action="store_true", help="split columns on tabs only")
    p.add_argument("--embeddings", default=None, help="word2vec text file; random frozen vectors if omitted")
    p.add_argument("--repair-bio", action="store_true", help="rewrite invalid I-X labels to B-X")
    p.add_argument("--no-plot", action="store_true", help="skip the PNG figures")
    p.add_argument("--config", default=None, help="JSON file of option defaults")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="seqlabel", description="Character-aware BiLSTM-CRF sequence tagger.",
                     formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train a model", formatter_class=fmt)
    _add_data_flags(p)
    p.add_argument("--train", required=True, help="training corpus")
    p.add_argument("--dev", default=None, help="dev corpus for early stopping")
    p.add_argument("--test", default=None, help="optional test corpus, scored with the best model")
    p.add_argument("--out", required=True, help="checkpoint path to write")
    _add_model_flags(p)

    p = sub.add_parser("crossval", help="k-fold cross-validation on one corpus", formatter_class=fmt)
    _add_data_flags(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("-k", "--folds", type=int, default=5)
    p.add_argument("--dev-fraction", type=float, default=0.1,
                   help="share of each fold's training part held out for early stopping")
    p.add_argument("--pooled", action="store_true",
                   help="also report the metric over pooled test predictions")
    p.add_argument("--out-dir", required=True)
    _add_model_flags(p)

    p = sub.add_parser("tag", help="label a corpus with a trained model", formatter_class=fmt)
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--repair-bio", action="store_true", help="post-process predictions to valid BIO2")
    p.add_argument("--strict-columns", action="store_true")
    p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("eval", help="score predictions against gold", formatter_class=fmt)
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--task", choices=("pos", "ner"), required=True)
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("inspect", help="summarize a checkpoint", formatter_class=fmt)
    p.add_argument("--model", required=True)
    p.add_argument("--json", action="store_true")
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def parse_args(argv):
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    if known.config:
        try:
            overrides = json.loads(Path(known.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {known.config}: {exc}") from None
        if not isinstance(overrides, dict):
            raise ConfigError("config file must hold a JSON object")
        overrides = {k.replace("-", "_"): v for k, v in overrides.items()}
        for action in parser._subparsers._group_actions:
            for sp in action.choices.values():
                sp.set_defaults(**overrides)
                for a in sp._actions:
                    if a.dest in overrides:
                        a.required = False
    return parser.parse_args(argv)


# --------------------------------------------------------------------------
# helpers


def _columns(args) -> tuple:
    if args.columns:
        return D.parse_columns(args.columns)
    return D.POS_COLUMNS if args.task == "pos" else D.NER_COLUMNS


def _require(path, what):
    if path is not None and not Path(path).exists():
        raise ConfigError(f"{what} file not found: {path}")


def _read_corpus(path, args, columns):
    sents = D.read_conll(path, columns, strict=args.strict_columns)
    if args.task == "ner" and "label" in columns:
        bad = 0
        for i, s in enumerate(sents):
            labels = s.labels
            violations = D.validate_bio2(labels)
            if violations:
                bad += 1
                if args.repair_bio:
                    sents[i] = s.with_labels(D.repair_bio2(labels))
        if bad:
            action = "repaired" if args.repair_bio else "left as-is (use --repair-bio)"
            logger.warning("%s: %d sentences with invalid BIO2 labels, %s", path, bad, action)
    return sents


def _tagger_overrides(args) -> dict:
    if args.task == "pos" and (args.use_pos or args.use_chunk):
        raise ConfigError("--use-pos/--use-chunk only apply to --task ner")
    return dict(
        char_dim=args.char_dim, word_dim=args.word_dim, char_hidden=args.char_hidden,
        word_hidden=args.word_hidden, dropout_rate=args.dropout, use_pos_onehot=args.use_pos,
        use_chunk_onehot=args.use_chunk, use_chars=not args.no_chars,
        finetune_words=args.finetune_words,
    )


def _schedule(args, has_dev) -> TrainSchedule:
    return TrainSchedule(
        base_lr=args.lr, decay=args.decay, batch_size=args.batch_size,
        max_epochs=args.max_epochs, patience=args.patience if has_dev else None,
        mean_loss=args.mean_loss, clip_norm=args.clip_norm,
    )


def write_history(history, path) -> None:
    lines = ["\t".join(HISTORY_FIELDS)]
    for h in history:
        score = "" if h["dev_score"] is None else repr(h["dev_score"])
        lines.append(f"{h['epoch']}\t{h['lr']!r}\t{h['train_loss']!r}\t{score}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_history(path) -> list:
    rows = Path(path).read_text(encoding="utf-8").splitlines()
    out = []
    for line in rows[1:]:
        epoch, lr, loss, score = line.split("\t")
        out.append({"epoch": int(epoch), "lr": float(lr), "train_loss": float(loss),
                    "dev_score": float(score) if score else None})
    return out


def _score_report(model, sents, task) -> tuple:
    gold = [s.labels for s in sents]
    pred = [model.tag(s) for s in sents]
    if task == "pos":
        acc = token_accuracy(gold, pred)
        return f"accuracy\t{acc:.6f}\n", {"accuracy": acc}
    rep = ner_report(gold, pred)
    return rep.format_table() + "\n", rep.to_dict()


def _metric_name(task):
    return "accuracy" if task == "pos" else "span micro-F1"


# --------------------------------------------------------------------------
# commands


def _prepare(args, train_sents, seed, extra_words=()):
    emb = None
    if args.embeddings:
        emb = D.load_embeddings(args.embeddings, expected_dim=args.word_dim, unk_seed=seed)
    return build_tagger(train_sents, _tagger_overrides(args), emb, seed=seed, extra_words=extra_words)


def cmd_train(args) -> int:
    for path, what in ((args.train, "train"), (args.dev, "dev"), (args.test, "test"),
                       (args.embeddings, "embeddings")):
        _require(path, what)
    columns = _columns(args)
    train_sents = _read_corpus(args.train, args, columns)
    if not train_sents:
        raise DataError(f"{args.train}: no sentences")
    dev_sents = _read_corpus(args.dev, args, columns) if args.dev else []
    model = _prepare(args, train_sents, args.seed)
    sched = _schedule(args, bool(dev_sents))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    meta = {"columns": list(columns), "task": args.task}
    try:
        result = train(model, train_sents, dev_sents, sched, seed=args.seed, task=args.task, meta=meta,
                       on_epoch=lambda r: logger.info("epoch %d  loss %.4f  dev %s", r.epoch, r.train_loss, r.dev_score))
    except TrainingDiverged as exc:
        if exc.best is not None:
            save_checkpoint(exc.best, out)
            logger.error("training diverged; best checkpoint so far kept at %s", out)
        write_history([vars(h) for h in exc.history], f"{out}.history.tsv")
        raise
    save_checkpoint(result.best, out)
    history = [vars(h) for h in result.history]
    write_history(history, f"{out}.history.tsv")
    if not args.no_plot:
        from .plotting import plot_history
        plot_history(history, f"{out}.history.png", _metric_name(args.task))
    best = restore(result.best)
    print(f"best epoch {result.best.epoch}  dev {result.best.dev_score}  -> {out}")
    for name, path in (("dev", args.dev), ("test", args.test)):
        if not path:
            continue
        sents = dev_sents if name == "dev" else _read_corpus(path, args, columns)
        text, structured = _score_report(best, sents, args.task)
        Path(f"{out}.{name}_report.txt").write_text(text, encoding="utf-8")
        Path(f"{out}.{name}_report.json").write_text(json.dumps(structured, indent=2, sort_keys=True) + "\n",
                                                     encoding="utf-8")
        print(f"[{name}]\n{text}", end="")
    return 0


def cmd_crossval(args) -> int:
    _require(args.corpus, "corpus")
    _require(args.embeddings, "embeddings")
    if not 0.0 <= args.dev_fraction < 1.0:
        raise ConfigError("--dev-fraction must lie in [0, 1)")
    columns = _columns(args)
    sents = _read_corpus(args.corpus, args, columns)
    folds = D.kfold_split(sents, args.folds, rng_seed=args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scores, rows = [], []
    pooled_gold, pooled_pred = [], []
    for k, (train_idx, test_idx) in enumerate(folds, start=1):
        rng = np.random.default_rng(args.seed + k)
        train_idx = list(rng.permutation(train_idx))
        n_dev = int(round(args.dev_fraction * len(train_idx)))
        dev_idx, fit_idx = sorted(train_idx[:n_dev]), sorted(train_idx[n_dev:])
        fit = [sents[i] for i in fit_idx]
        dev = [sents[i] for i in dev_idx]
        test = [sents[i] for i in test_idx]
        model = _prepare(args, fit, args.seed + k)
        try:
            result = train(model, fit, dev, _schedule(args, bool(dev)), seed=args.seed + k, task=args.task,
                           meta={"columns": list(columns), "task": args.task, "fold": k})
        except SeqLabelError as exc:
            _write_crossval(out_dir, rows, scores, args, partial=True)
            raise type(exc)(f"fold {k}: {exc}") from exc
        best = restore(result.best)
        score = dev_score(best, test, args.task)
        pooled_gold.extend(s.labels for s in test)
        pooled_pred.extend(best.tag(s) for s in test)
        scores.append(score)
        rows.append((k, len(fit), len(dev), len(test), result.best.epoch, score))
        write_history([vars(h) for h in result.history], out_dir / f"fold{k}.history.tsv")
        print(f"fold {k}: train {len(fit)} dev {len(dev)} test {len(test)} "
              f"best epoch {result.best.epoch} {_metric_name(args.task)} {score:.4f}")
    summary = _write_crossval(out_dir, rows, scores, args)
    print(f"mean {summary.mean:.4f}  std {summary.stddev:.4f}  over {len(scores)} folds")
    if args.pooled:
        if args.task == "pos":
            pooled = token_accuracy(pooled_gold, pooled_pred)
        else:
            pooled = ner_report(pooled_gold, pooled_pred).f1
        print(f"pooled {pooled:.4f}")
        with open(out_dir / "crossval.tsv", "a", encoding="utf-8") as fh:
            fh.write(f"pooled\t\t\t\t\t{pooled!r}\n")
    return 0


def _write_crossval(out_dir, rows, scores, args, partial=False):
    lines = ["fold\tn_train\tn_dev\tn_test\tbest_epoch\tscore"]
    lines += ["\t".join(str(x) for x in r[:-1]) + f"\t{r[-1]!r}" for r in rows]
    summary = None
    if len(scores) >= 2:
        summary = crossval_aggregate(scores)
        lines.append(f"mean\t\t\t\t\t{summary.mean!r}")
        lines.append(f"std\t\t\t\t\t{summary.stddev!r}")
    if partial:
        lines.append("# incomplete: a fold failed")
    (out_dir / "crossval.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    if scores and not args.no_plot:
        from .plotting import plot_crossval
        plot_crossval(scores, out_dir / "crossval.png", _metric_name(args.task))
    return summary


def cmd_tag(args) -> int:
    _require(args.input, "input")
    ckpt = load_checkpoint(args.model)
    model = restore(ckpt)
    columns = tuple(ckpt.meta.get("columns", D.NER_COLUMNS))
    sents = D.read_conll(args.input, columns, strict=args.strict_columns, allow_missing_label=True)
    preds = []
    for s in sents:
        labels = model.tag(s)
        if args.repair_bio:
            labels = D.repair_bio2(labels)
        preds.append(labels)
    Path(args.output).parent.mkdir(parents=True, exist_ok=True)
    D.write_conll(sents, args.output, columns, extra=preds)
    print(f"tagged {len(sents)} sentences -> {args.output}")
    return 0


def _raw_rows(path):
    """Non-blank lines as ``(lineno, fields)`` grouped by sentence."""
    sents, cur = [], []
    for lineno, line in enumerate(D._read_lines(path), start=1):
        if not line.strip():
            if cur:
                sents.append(cur)
                cur = []
            continue
        cur.append((lineno, line.split()))
    if cur:
        sents.append(cur)
    return sents


def cmd_eval(args) -> int:
    _require(args.gold, "gold")
    _require(args.pred, "pred")
    gold_rows, pred_rows = _raw_rows(args.gold), _raw_rows(args.pred)
    gold, pred = [], []
    for si in range(max(len(gold_rows), len(pred_rows))):
        if si >= len(gold_rows) or si >= len(pred_rows):
            longer = gold_rows if si < len(gold_rows) else pred_rows
            which = "gold" if longer is gold_rows else "pred"
            raise DataError(f"sentence count differs: extra sentence in {which} at line {longer[si][0][0]}")
        gs, ps = gold_rows[si], pred_rows[si]
        for (gl, gf), (pl, pf) in zip(gs, ps):
            if gf[0] != pf[0]:
                raise DataError(f"token mismatch: gold line {gl} {gf[0]!r} vs pred line {pl} {pf[0]!r}")
        if len(gs) != len(ps):
            at = gs[len(ps)][0] if len(gs) > len(ps) else ps[len(gs)][0]
            raise DataError(f"sentence {si + 1} length differs (first divergent line {at})")
        gold.append([f[-1] for _, f in gs])
        pred.append([f[-1] for _, f in ps])
    if args.task == "pos":
        acc = token_accuracy(gold, pred)
        if args.json:
            print(json.dumps({"accuracy": acc, "tokens": sum(map(len, gold))}, sort_keys=True))
        else:
            print(f"accuracy\t{acc:.6f}")
        return 0
    rep = ner_report(gold, pred)
    print(rep.to_json() if args.json else rep.format_table())
    return 0


def cmd_inspect(args) -> int:
    ckpt = load_checkpoint(args.model)
    info = {
        "config": ckpt.config,
        "meta": ckpt.meta,
        "epoch": ckpt.epoch,
        "dev_score": ckpt.dev_score,
        "vocab_sizes": {k: len(v["items"]) + (1 if v["with_unk"] else 0) for k, v in ckpt.vocabs.items()},
        "params": {k: list(v.shape) for k, v in sorted(ckpt.params.items())},
        "n_params": int(sum(v.size for v in ckpt.params.values())),
        "optimizer_steps": ckpt.optimizer["t"],
    }
    if args.json:
        print(json.dumps(info, indent=2, sort_keys=True))
        return 0
    print(f"epoch {info['epoch']}  dev score {info['dev_score']}  optimizer steps {info['optimizer_steps']}")
    print("config: " + ", ".join(f"{k}={v}" for k, v in ckpt.config.items() if k != "tagset"))
    print(f"tagset ({len(ckpt.config['tagset'])}): {' '.join(ckpt.config['tagset'])}")
    print("vocabularies: " + ", ".join(f"{k} {n}" for k, n in info["vocab_sizes"].items()))
    print(f"parameters ({info['n_params']} values):")
    for name, shape in info["params"].items():
        print(f"  {name:<24} {'x'.join(map(str, shape))}")
    return 0


COMMANDS = {
    "train": cmd_train,
    "crossval": cmd_crossval,
    "tag": cmd_tag,
    "eval": cmd_eval,
    "inspect": cmd_inspect,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except SeqLabelError as exc:
        print(f"seqlabel: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except SystemExit as exc:  # argparse usage errors and --help
        return exc.code if isinstance(exc.code, int) else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except SeqLabelError as exc:
        print(f"seqlabel: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"seqlabel: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
