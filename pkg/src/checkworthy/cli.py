"""Command-line entry point: ``checkworthy <command> [options]``.

Data arguments accept ``LANG:SPLIT=PATH``, ``LANG=PATH`` (split taken from
the option), a bare file whose name contains a language and a split (as in
``dataset_train_v1_english.tsv``), or a directory scanned for such files.

Options may also come from a ``key = value`` file passed with ``--config``;
options on the command line override it.  Every run writes a manifest in
that same format, so ``--config <manifest>`` reproduces the run.

Exit codes: 0 success, 2 input error, 3 runtime failure, 4 undefined metric.
"""
from __future__ import annotations

import argparse
import hashlib
import logging
import os
import re
import shlex
import sys

from . import __version__, baseline, corpus, metrics, projection, train
from .corpus import LANGUAGE_NAMES, LANGUAGES, SPLITS, DatasetError, Schema
from .textenc import EncoderConfig

log = logging.getLogger("checkworthy")

EXIT_INPUT, EXIT_RUNTIME, EXIT_UNDEFINED = 2, 3, 4

LANGUAGE_ALIASES = {
    "en": "en", "english": "en", "tr": "tr", "turkish": "tr", "bg": "bg",
    "bulgarian": "bg", "ar": "ar", "arabic": "ar", "es": "es", "spanish": "es",
}
SPLIT_ALIASES = {"train": "train", "training": "train", "dev": "dev", "devel": "dev",
                 "development": "dev", "test": "test"}


class InputError(Exception):
    pass


class UndefinedMetric(Exception):
    pass


# ---------------------------------------------------------------------------
# data specs

def _infer_from_name(path: str) -> tuple[str | None, str | None]:
    words = [w for w in re.split(r"[^0-9a-z]+", os.path.basename(path).lower()) if w]
    lang = next((LANGUAGE_ALIASES[w] for w in words if w in LANGUAGE_ALIASES), None)
    split = next((SPLIT_ALIASES[w] for w in words if w in SPLIT_ALIASES), None)
    return lang, split


def resolve_specs(specs, default_split: str | None = None) -> list[tuple[str, str, str]]:
    """Expand data specs into ``(language, split, path)`` triples."""
    out = []
    for spec in specs:
        m = re.fullmatch(r"([A-Za-z]+)(?::([A-Za-z]+))?=(.+)", spec)
        if m:
            lang = LANGUAGE_ALIASES.get(m.group(1).lower())
            split = SPLIT_ALIASES.get((m.group(2) or default_split or "").lower())
            if lang is None or split is None:
                raise InputError(f"cannot read language/split from data spec {spec!r}")
            if not os.path.isfile(m.group(3)):
                raise InputError(f"{m.group(3)}: no such file")
            out.append((lang, split, m.group(3)))
            continue
        if os.path.isdir(spec):
            found = []
            for name in sorted(os.listdir(spec)):
                full = os.path.join(spec, name)
                if not os.path.isfile(full) or not name.lower().endswith((".tsv", ".txt")):
                    continue
                lang, split = _infer_from_name(name)
                if lang and split and (default_split is None or split == default_split):
                    found.append((lang, split, full))
            if not found:
                raise InputError(f"{spec}: no dataset files found in directory")
            out.extend(found)
            continue
        if not os.path.isfile(spec):
            raise InputError(f"{spec}: no such file or directory")
        lang, split = _infer_from_name(spec)
        split = split or default_split
        if lang is None or split is None:
            raise InputError(f"{spec}: cannot infer language and split from the file name; "
                             "use LANG:SPLIT=PATH")
        out.append((lang, split, spec))
    return out


def _schema(args) -> Schema:
    return Schema(args.id_column, args.text_column, args.label_column, args.topic_column)


def load_many(specs, split: str | None, args, labeled=True) -> dict[tuple[str, str], corpus.Dataset]:
    out = {}
    for lang, sp, path in resolve_specs(specs, split):
        if (lang, sp) in out:
            raise InputError(f"more than one file for {lang}/{sp}")
        out[lang, sp] = corpus.load_dataset(path, lang, sp, _schema(args), labeled=labeled)
    return out


def load_split(specs, split: str, args, labeled=True) -> corpus.Dataset:
    parts = load_many(specs, split, args, labeled)
    wrong = [k for k in parts if k[1] != split]
    if wrong:
        raise InputError(f"expected {split} files, got {wrong}")
    ordered = [parts[k] for k in sorted(parts, key=lambda k: LANGUAGES.index(k[0]))]
    return corpus.merge(ordered)


# ---------------------------------------------------------------------------
# config files and manifests

def read_config_file(path: str, parser: argparse.ArgumentParser) -> list[str]:
    """Translate ``key = value`` lines into argv tokens for ``parser``."""
    known = {a.dest: a for a in parser._actions}
    argv = []
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as e:
        raise InputError(f"{path}: {e.strerror}") from None
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        if key.startswith("meta_") or key == "config":
            continue
        if key not in known:
            raise InputError(f"{path}:{lineno}: unknown option {key!r}")
        action = known[key]
        values = shlex.split(value)
        if not action.option_strings:
            argv += values
            continue
        flag = action.option_strings[-1]
        if action.nargs in ("+", "*"):
            argv += [flag] + values
        else:
            argv += [flag, value if not values else values[0]]
    return argv


def manifest_text(args, extra: dict | None = None) -> str:
    lines = [f"# checkworthy {args.command} run manifest"]
    for key in sorted(vars(args)):
        if key in ("command", "func", "config", "verbose"):
            continue
        val = getattr(args, key)
        if val is None:
            continue
        if isinstance(val, (list, tuple)):
            lines.append(f"{key} = {shlex.join(str(v) for v in val)}")
        else:
            lines.append(f"{key} = {shlex.quote(str(val))}")
    meta = {"meta_command": args.command, "meta_version": __version__,
            "meta_model_format": train.FORMAT_VERSION}
    meta.update(extra or {})
    lines += [f"{k} = {v}" for k, v in sorted(meta.items())]
    return "\n".join(lines) + "\n"


def write_manifest(args, default_path: str, extra: dict | None = None) -> str:
    """Write the manifest and return its SHA-256 hex digest."""
    text = manifest_text(args, extra)
    path = args.manifest or default_path
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def write_output(path: str | None, body: str, digest: str):
    text = f"# manifest_sha256={digest}\n" + body
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _bool(s: str) -> bool:
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {s!r}")


def _train_config(args) -> train.TrainConfig:
    enc = EncoderConfig(hash_vocab_size=args.vocab_size, hash_seed=args.hash_seed,
                        char_ngram_orders=tuple(args.ngram_orders), lowercase=args.lowercase,
                        replace_urls=args.replace_urls, replace_mentions=args.replace_mentions)
    return train.TrainConfig(
        epochs=args.epochs, batch_size=args.batch_size, k=args.k, alpha=args.alpha,
        lr=args.lr, beta1=args.beta1, beta2=args.beta2, eps=args.eps,
        weight_decay=args.weight_decay, data_seed=args.data_seed, init_seed=args.init_seed,
        embed_dim=args.embed_dim, hidden=args.hidden, languages=tuple(args.languages),
        class_weighting=args.class_weighting, chunk_mode=args.chunk_mode,
        run_id=args.run_id, encoder=enc)


# ---------------------------------------------------------------------------
# commands

def cmd_stats(args) -> int:
    if not args.data:
        raise InputError("no data paths given")
    datasets = load_many(args.data, None, args)
    stats = corpus.compute_stats(datasets)
    digest = write_manifest(args, (args.out or "stats.tsv") + ".manifest") if args.out else None
    body = stats.to_tsv()
    if digest:
        write_output(args.out, body, digest)
    else:
        sys.stdout.write(body)
    return 0


def cmd_train(args) -> int:
    config = _train_config(args)
    digest = write_manifest(args, args.model_out + ".manifest")
    train_data = load_split(args.train, "train", args)
    dev_data = load_split(args.dev, "dev", args) if args.dev else None
    history = []
    try:
        model = train.train_ensemble(train_data, config, history=history, dev_data=dev_data)
    except train.TrainingError as e:
        raise RuntimeError(str(e)) from e
    checksum = train.save_model(model, args.model_out)
    report = args.report or args.model_out + ".log"
    with open(report, "w", encoding="utf-8") as fh:
        fh.write(f"# manifest_sha256={digest}\n# model_sha256={checksum}\n")
        for h in history:
            fh.write("\t".join(f"{k}={v}" for k, v in h.items()) + "\n")
    print(f"model written to {args.model_out} (sha256 {checksum})")
    return 0


def cmd_predict(args) -> int:
    model = train.load_model(args.model)
    digest = write_manifest(args, (args.out or "predictions.tsv") + ".manifest")
    data = load_split(args.data, args.split, args, labeled=None)
    preds = train.predict(model, data)
    write_output(args.out, train.format_predictions(preds, args.run_id or model.config.run_id),
                 digest)
    return 0


def _metrics_table(per_language: dict, model_name: str) -> str:
    lines = ["Language\tModel\t" + "\t".join(metrics.REPORT_COLUMNS)]
    for lang in sorted(per_language, key=lambda l: LANGUAGES.index(l) if l in LANGUAGES else 99):
        name = LANGUAGE_NAMES.get(lang, lang)
        lines.append(f"{name}\t{model_name}\t{per_language[lang].tsv_row()}")
    return "\n".join(lines) + "\n"


def cmd_evaluate(args) -> int:
    gold = load_split(args.gold, args.split, args)
    with open(args.predictions, encoding="utf-8") as fh:
        preds = train.parse_predictions(fh.read())
    digest = write_manifest(args, (args.out or "report.tsv") + ".manifest")
    by_id = {p.sample_id: p for p in preds}
    unknown = [p.sample_id for p in preds if p.sample_id not in {s.id for s in gold}]
    if unknown:
        raise InputError(f"prediction for unknown id {unknown[0]!r}")
    per = {}
    for lang in sorted({s.language for s in gold}):
        part = [s for s in gold if s.language == lang]
        topics = {s.id: s.topic_id for s in part} if args.by_topic else None
        per[lang] = metrics.evaluate({s.id: by_id[s.id].score for s in part if s.id in by_id},
                                     {s.id: s.label for s in part}, topics=topics)
    write_output(args.out, _metrics_table(per, args.model_name), digest)
    undefined = [l for l, r in per.items() if not r.defined]
    if undefined:
        raise UndefinedMetric(f"MAP/R-Rank/R-Pr undefined (no positives) for {undefined}")
    return 0


def cmd_sweep(args) -> int:
    config = _train_config(args)
    digest = write_manifest(args, (args.out or "sweep.tsv") + ".manifest")
    train_data = load_split(args.train, "train", args)
    dev_data = load_split(args.dev, "dev", args)
    try:
        result = train.alpha_sweep(train_data, dev_data, config, args.alphas)
    except train.TrainingError as e:
        raise RuntimeError(str(e)) from e
    body = result.to_tsv()
    langs = sorted({l for r in result.rows for l in r.per_language},
                   key=lambda l: LANGUAGES.index(l))
    if len(langs) > 1:
        body += "\nLanguage\talpha\t" + "\t".join(metrics.REPORT_COLUMNS) + "\n"
        for lang in langs:
            for r in result.rows:
                body += f"{LANGUAGE_NAMES[lang]}\t{r.alpha:g}\t{r.per_language[lang].tsv_row()}\n"
    body += f"\nbest_alpha\t{result.best_alpha}\n"
    write_output(args.out, body, digest)
    return 0


def cmd_baseline(args) -> int:
    digest = write_manifest(args, (args.out or "baseline.tsv") + ".manifest")
    train_data = load_split(args.train, "train", args)
    test_data = load_split(args.test, args.split, args)
    langs = sorted({s.language for s in test_data}, key=LANGUAGES.index)
    if args.mode == "mixed":
        vec = baseline.fit_vectorizer(train_data, args.min_df)
        model = baseline.train_svm(train_data, vec, args.lam, args.svm_epochs, args.data_seed)
        preds = baseline.score(model, vec, test_data)
    else:
        preds = []
        for lang in langs:
            tr = corpus.Dataset(tuple(s for s in train_data if s.language == lang), "train")
            te = [s for s in test_data if s.language == lang]
            if not len(tr):
                raise InputError(f"no training data for language {lang}")
            vec = baseline.fit_vectorizer(tr, args.min_df)
            model = baseline.train_svm(tr, vec, args.lam, args.svm_epochs, args.data_seed)
            preds += baseline.score(model, vec, te)
    per = train.evaluate_by_language(preds, test_data)
    if args.predictions_out:
        write_output(args.predictions_out, train.format_predictions(preds, args.run_id), digest)
    write_output(args.out, _metrics_table(per, "SVM"), digest)
    return 0


def cmd_project(args) -> int:
    model = train.load_model(args.model)
    digest = write_manifest(args, (args.out or "projection.tsv") + ".manifest")
    data = load_split(args.data, args.split, args, labeled=None)
    member = "mean" if args.member == "mean" else int(args.member)
    emb = projection.extract_embeddings(model, data, member)
    if args.embeddings_out:
        write_output(args.embeddings_out, emb.to_tsv(), digest)
    if args.method == "pca":
        result = projection.pca_2d(emb)
    else:
        result = projection.tsne_2d(emb, args.perplexity, args.iterations, args.seed)
    write_output(args.out, result.to_tsv(emb), digest)
    if len(set(emb.languages)) > 1:
        overlap = projection.overlap_statistic(result, emb.languages)
        lines = ["language_a\tlanguage_b\toverlap"]
        lines += [f"{a}\t{b}\t{v:.6f}" for (a, b), v in sorted(overlap.items()) if a < b]
        text = "\n".join(lines) + "\n"
        if args.overlap_out:
            write_output(args.overlap_out, text, digest)
        else:
            sys.stderr.write(text)
    return 0


# ---------------------------------------------------------------------------
# parser

def _add_schema(p):
    g = p.add_argument_group("column schema")
    g.add_argument("--id-column", default="tweet_id")
    g.add_argument("--text-column", default="tweet_text")
    g.add_argument("--label-column", default="check_worthiness")
    g.add_argument("--topic-column", default="topic_id")


def _add_common(p):
    p.add_argument("--config", help="key = value option file (flags override it)")
    p.add_argument("--manifest", help="where to write the run manifest")
    p.add_argument("-v", "--verbose", action="store_true")
    _add_schema(p)


def _add_training(p):
    g = p.add_argument_group("training")
    g.add_argument("--epochs", type=int, default=3)
    g.add_argument("--batch-size", type=int, default=16)
    g.add_argument("--k", type=int, default=5, help="ensemble members / data chunks")
    g.add_argument("--alpha", type=float, default=0.6, help="weight of the check-worthiness loss")
    g.add_argument("--lr", type=float, default=1e-3)
    g.add_argument("--beta1", type=float, default=0.9)
    g.add_argument("--beta2", type=float, default=0.999)
    g.add_argument("--eps", type=float, default=1e-8)
    g.add_argument("--weight-decay", type=float, default=0.01)
    g.add_argument("--data-seed", type=int, default=13)
    g.add_argument("--init-seed", type=int, default=7)
    g.add_argument("--embed-dim", type=int, default=64)
    g.add_argument("--hidden", type=int, default=64)
    g.add_argument("--languages", nargs="+", default=list(LANGUAGES))
    g.add_argument("--class-weighting", type=_bool, default=False)
    g.add_argument("--chunk-mode", choices=train.CHUNK_MODES, default="leave_one_out")
    g.add_argument("--run-id", default="checkworthy")
    e = p.add_argument_group("encoder")
    e.add_argument("--vocab-size", type=int, default=32768)
    e.add_argument("--hash-seed", type=int, default=0)
    e.add_argument("--ngram-orders", type=int, nargs="+", default=[3])
    e.add_argument("--lowercase", type=_bool, default=True)
    e.add_argument("--replace-urls", type=_bool, default=True)
    e.add_argument("--replace-mentions", type=_bool, default=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="checkworthy", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="class counts and average tokens per language/split")
    p.add_argument("data", nargs="*")
    p.add_argument("--out")
    _add_common(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="train the joint ensemble")
    p.add_argument("--train", nargs="+", required=True)
    p.add_argument("--dev", nargs="+")
    p.add_argument("--model-out", required=True)
    p.add_argument("--report", help="loss trace file (default: <model-out>.log)")
    _add_training(p)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score a dataset with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", nargs="+", required=True)
    p.add_argument("--split", choices=SPLITS, default="test")
    p.add_argument("--out")
    p.add_argument("--run-id")
    _add_common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="ranking metrics of a prediction file")
    p.add_argument("--gold", nargs="+", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--split", choices=SPLITS, default="test")
    p.add_argument("--by-topic", type=_bool, default=False)
    p.add_argument("--model-name", default="joint")
    p.add_argument("--out")
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="train/evaluate one ensemble per alpha")
    p.add_argument("--train", nargs="+", required=True)
    p.add_argument("--dev", nargs="+", required=True)
    p.add_argument("--alphas", type=float, nargs="+", default=list(train.DEFAULT_ALPHAS))
    p.add_argument("--out")
    _add_training(p)
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("baseline", help="unigram linear SVM baseline")
    p.add_argument("--train", nargs="+", required=True)
    p.add_argument("--test", nargs="+", required=True)
    p.add_argument("--split", choices=SPLITS, default="test")
    p.add_argument("--mode", choices=("per_language", "mixed"), default="per_language")
    p.add_argument("--lam", type=float, default=1e-3)
    p.add_argument("--svm-epochs", type=int, default=10)
    p.add_argument("--min-df", type=int, default=2)
    p.add_argument("--data-seed", type=int, default=13)
    p.add_argument("--run-id", default="svm")
    p.add_argument("--predictions-out")
    p.add_argument("--out")
    _add_common(p)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("project", help="export shared representations and project to 2-D")
    p.add_argument("--model", required=True)
    p.add_argument("--data", nargs="+", required=True)
    p.add_argument("--split", choices=SPLITS, default="test")
    p.add_argument("--method", choices=("pca", "tsne"), default="tsne")
    p.add_argument("--member", default="mean")
    p.add_argument("--perplexity", type=float, default=30.0)
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--embeddings-out")
    p.add_argument("--overlap-out")
    p.add_argument("--out")
    _add_common(p)
    p.set_defaults(func=cmd_project)
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    choices = parser._subparsers._group_actions[0].choices
    if known.config and argv and argv[0] in choices:
        argv = [argv[0]] + read_config_file(known.config, choices[argv[0]]) + argv[1:]
    return parser.parse_args(argv)


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UndefinedMetric as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_UNDEFINED
    except metrics.UndefinedMetricError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_UNDEFINED
    except (InputError, DatasetError, train.ModelFormatError, projection.ProjectionError,
            baseline.BaselineError, KeyError, OSError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_INPUT
    except (RuntimeError, ArithmeticError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
