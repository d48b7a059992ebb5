"""Command-line entry point: train, translate, parse, score, inspect.

Exit status is 0 on success, 2 for bad input data and 3 for model or
configuration problems. ``SEQ2DRNN_LOG_LEVEL`` sets log verbosity (default INFO).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import fields
from pathlib import Path
from typing import Optional, Sequence

from . import checkpoint
from .attention import format_attention_tsv
from .autodiff import DomainError
from .config import ARCHS, ConfigError, DecodeLimits, TrainConfig, coerce, merge, parse_config_text
from .metrics import corpus_bleu
from .training import CorpusError, TrainingDiverged, read_lines, read_parallel, read_tree_file, train
from .treebank import TreebankParseError, corpus_brackets, serialize, strip_root

log = logging.getLogger("seq2drnn")

EXIT_OK, EXIT_DATA, EXIT_MODEL = 0, 2, 3


class DataError(Exception):
    pass


def _setup_logging() -> None:
    level = os.environ.get("SEQ2DRNN_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s", force=True)


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _add_config_flags(p: argparse.ArgumentParser, skip: Sequence[str] = ()) -> None:
    group = p.add_argument_group("configuration overrides (flags win over --config)")
    for f in fields(TrainConfig):
        if f.name in skip:
            continue
        kwargs = {"dest": f"cfg_{f.name}", "default": None, "metavar": "VALUE"}
        if f.type == "bool":
            kwargs.update(nargs="?", const="true")
        group.add_argument(_flag(f.name), **kwargs)


def _flag_overrides(args: argparse.Namespace) -> dict:
    return {k[4:]: coerce(k[4:], v) for k, v in vars(args).items() if k.startswith("cfg_") and v is not None}


def effective_config(args: argparse.Namespace) -> TrainConfig:
    file_layer = {}
    if args.config:
        try:
            file_layer = parse_config_text(Path(args.config).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"no such config file: {args.config}") from None
    flag_layer = _flag_overrides(args)
    if getattr(args, "arch", None):
        flag_layer["arch"] = args.arch
    combined = {**file_layer, **flag_layer}
    base = TrainConfig()
    if combined.get("parser_mode") and "layers" not in combined:
        base = base.replace(parser_mode=True, layers=3)
    return merge(base, file_layer, flag_layer)


# -- commands -------------------------------------------------------------------


def cmd_train(args: argparse.Namespace) -> int:
    config = effective_config(args)
    log.info("effective configuration:\n%s", config.echo())
    src = None if config.parser_mode else args.src
    if src is None and not config.parser_mode:
        raise DataError("--src is required unless --parser-mode is set")
    train_set = read_parallel(src, args.tgt_trees, config.strip_preterminals)
    valid_set = []
    if args.valid_tgt_trees:
        valid_src = None if config.parser_mode else args.valid_src
        if valid_src is None and not config.parser_mode:
            raise DataError("--valid-src is required with --valid-tgt-trees")
        valid_set = read_parallel(valid_src, args.valid_tgt_trees, config.strip_preterminals)
    curve = args.curve or f"{args.model}.curve.csv"
    result = train(config, train_set, valid_set, curve_path=curve)
    checkpoint.save(result.model, args.model)
    log.info("wrote %s and %s (best epoch %d)", args.model, curve, result.best_epoch)
    return EXIT_OK


def _load_model(path: str):
    try:
        return checkpoint.load(path)
    except FileNotFoundError:
        raise checkpoint.CheckpointError(f"no such checkpoint: {path}") from None
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        raise checkpoint.CheckpointError(f"unreadable checkpoint {path}: {exc}") from None


def _limits(args: argparse.Namespace, config: TrainConfig) -> DecodeLimits:
    base = config.limits
    return DecodeLimits(
        args.max_depth or base.max_depth,
        args.max_siblings or base.max_siblings,
        args.max_total_nodes or base.max_total_nodes,
    )


def _decode_lines(args: argparse.Namespace, emit: str) -> tuple[list, list[list[str]]]:
    model = _load_model(args.model)
    if args.max_len:
        model.config = model.config.replace(max_len=args.max_len)
    limits = _limits(args, model.config)
    sentences = []
    for lineno, line in enumerate(read_lines(args.input), 1):
        words = line.split()
        if not words:
            raise CorpusError("empty input sentence", lineno, args.input)
        sentences.append(words)

    def run(words):
        return model.translate(words, limits, args.schedule)

    if args.workers > 1:
        with ThreadPoolExecutor(args.workers) as pool:
            outputs = list(pool.map(run, sentences))
    else:
        outputs = [run(w) for w in sentences]

    if not model.is_tree and emit != "text":
        log.warning("sequence model has no trees; emitting text only")
    for out_line, (words, tr) in enumerate(zip(sentences, outputs), 1):
        for note in tr.diagnostics:
            log.warning("line %d: %s", out_line, note)
        text = " ".join(tr.words)
        tree = serialize(strip_root(tr.tree)) if tr.tree is not None else None
        if tree is None or emit == "text":
            print(text)
        elif emit == "trees":
            print(tree)
        else:
            print(f"{text}\t{tree}")
    if args.attention_dump:
        out_dir = Path(args.attention_dump)
        out_dir.mkdir(parents=True, exist_ok=True)
        width = max(4, len(str(len(outputs))))
        for k, (words, tr) in enumerate(zip(sentences, outputs), 1):
            tsv = format_attention_tsv(words, tr.column_labels, tr.attention)
            (out_dir / f"{k:0{width}d}.tsv").write_text(tsv, encoding="utf-8")
    return outputs, sentences


def cmd_translate(args: argparse.Namespace) -> int:
    _decode_lines(args, args.emit)
    return EXIT_OK


def cmd_parse(args: argparse.Namespace) -> int:
    outputs, sentences = _decode_lines(args, "trees")
    if sentences:
        same = sum(tr.words == words for tr, words in zip(outputs, sentences))
        log.info("yield matches input on %d/%d sentences (%.2f%%)", same, len(sentences),
                 100.0 * same / len(sentences))
    return EXIT_OK


def cmd_score(args: argparse.Namespace) -> int:
    if args.metric == "bleu":
        hyps = [line.split() for line in read_lines(args.hyp)]
        refs = [line.split() for line in read_lines(args.ref)]
        _check_aligned(len(hyps), len(refs))
        print(f"BLEU {corpus_bleu(hyps, refs):.2f}")
        return EXIT_OK
    hyps = read_tree_file(args.hyp)
    refs = read_tree_file(args.ref)
    _check_aligned(len(hyps), len(refs))
    s = corpus_brackets(hyps, refs, labelled=args.metric == "brackets-labelled")
    print(f"P={s['precision']:.4f} R={s['recall']:.4f} F1={s['f1']:.4f}")
    return EXIT_OK


def _check_aligned(n_hyp: int, n_ref: int) -> None:
    if n_hyp != n_ref:
        raise CorpusError(f"{n_hyp} hypothesis lines vs {n_ref} reference lines", min(n_hyp, n_ref) + 1)


def cmd_inspect(args: argparse.Namespace) -> int:
    model = _load_model(args.model)
    v = model.vocab
    print(f"format_version={checkpoint.VERSION}")
    print(model.config.echo())
    print(f"source_vocab_size={v.source_size}")
    print(f"terminals={len(v.terminals)}")
    print(f"nonterminals={len(v.nonterminals)} {' '.join(v.nonterminals)}")
    total = 0
    for name, t in model.named_parameters():
        total += t.data.size
        print(f"tensor {name} {'x'.join(map(str, t.data.shape))} {t.data.dtype}")
    print(f"parameters={total}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def _decode_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--attention-dump", metavar="DIR")
    p.add_argument("--schedule", choices=("sequential", "parallel"), default="sequential")
    p.add_argument("--workers", type=int, default=1, help="sentences decoded concurrently")
    p.add_argument("--max-depth", type=int)
    p.add_argument("--max-siblings", type=int)
    p.add_argument("--max-total-nodes", type=int)
    p.add_argument("--max-len", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seq2drnn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--src", help="source sentences, one per line")
    p.add_argument("--tgt-trees", required=True, help="bracketed target trees, line-aligned")
    p.add_argument("--valid-src")
    p.add_argument("--valid-tgt-trees")
    p.add_argument("--model", required=True, help="checkpoint to write")
    p.add_argument("--curve", help="loss CSV (default MODEL.curve.csv)")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--arch", choices=ARCHS)
    _add_config_flags(p, skip=("arch",))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("translate", help="decode sentences with a trained model")
    _decode_flags(p)
    p.add_argument("--emit", choices=("trees", "text", "both"), default="trees")
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("parse", help="parse sentences with a parser-mode model")
    _decode_flags(p)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("score", help="BLEU or bracket scores")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--metric", choices=("bleu", "brackets-labelled", "brackets-unlabelled"), default="bleu")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("inspect", help="describe a checkpoint")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CorpusError, TreebankParseError, DataError, DomainError) as exc:
        log.error("%s", exc)
        return EXIT_DATA
    except FileNotFoundError as exc:
        log.error("no such file: %s", exc.filename)
        return EXIT_DATA
    except (ConfigError, checkpoint.CheckpointError, TrainingDiverged) as exc:
        log.error("%s", exc)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
