"""Batch entry points: embed, translate, score-pairs, and the two trainers.

Exit codes follow the engine convention: 1 for usage problems, 2 for bad
data, 3 for internal failures.
"""

import argparse
import sys

from .contrastive import (
    ContrastiveConfig,
    QdValidation,
    load_encoder,
    save_encoder,
    train_contrastive,
    write_metrics_log,
)
from .cross_encoder import CrossEncoderConfig, train_cross_encoder
from .encoder import EncoderSpec, TinyEncoder, embed_records
from .errors import DataError, SidecarError, UsageError
from .formats import load_corpus_records, load_query_records, read_training_pairs
from .scorer import save_cross_encoder, score_pairs_file
from .translate import TranslationSpec, translate_file


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="clirkit-sidecar", description="Neural helpers for clirkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("embed", help="write an embedding file from a corpus or queries")
    s.add_argument("--corpus")
    s.add_argument("--queries")
    s.add_argument("--field", default="text", choices=["text", "translated_text"])
    s.add_argument("--model", default="hashed", choices=["hashed", "tiny"])
    s.add_argument("--dim", type=int, default=256)
    s.add_argument("--max-tokens", type=int, default=512)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--encoder-checkpoint", help="fine-tuned tiny encoder to use")
    s.add_argument("--out", required=True)

    s = sub.add_parser("translate", help="fill translated_text via the lexicon backend")
    s.add_argument("--corpus", required=True)
    s.add_argument("--lexicon", required=True)
    s.add_argument("--max-input-tokens", type=int, default=1200)
    s.add_argument("--out", required=True)

    s = sub.add_parser("score-pairs", help="score a scoring-request file")
    s.add_argument("--requests", required=True)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--out", required=True)

    s = sub.add_parser("train-cross-encoder", help="train a pair scorer on exported pairs")
    s.add_argument("--pairs", required=True)
    s.add_argument("--epochs", type=int, default=10)
    s.add_argument("--batch-size", type=int, default=8)
    s.add_argument("--lr", type=float, default=2e-5)
    s.add_argument("--out", required=True)

    s = sub.add_parser("train-qd", help="contrastively fine-tune the tiny encoder")
    s.add_argument("--pairs", required=True, help="engine training-pair export")
    s.add_argument("--val-queries", required=True)
    s.add_argument("--val-corpus", required=True)
    s.add_argument("--val-qrels", required=True)
    s.add_argument("--dim", type=int, default=32)
    s.add_argument("--epochs", type=int, default=10)
    s.add_argument("--lr", type=float, default=1e-5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--metrics-log")
    s.add_argument("--out", required=True)

    return parser


def _cmd_embed(opts) -> None:
    if bool(opts.corpus) == bool(opts.queries):
        raise UsageError("provide exactly one of --corpus or --queries")
    spec = EncoderSpec(
        model=opts.model, dim=opts.dim, max_tokens=opts.max_tokens, seed=opts.seed
    )
    encoder = None
    if opts.encoder_checkpoint:
        encoder = load_encoder(opts.encoder_checkpoint)
        spec = EncoderSpec(
            model="tiny", dim=encoder.dim, max_tokens=opts.max_tokens, seed=opts.seed
        )
    if opts.corpus:
        records = load_corpus_records(opts.corpus)
        rows = embed_records(
            records, spec, opts.out, text_field=opts.field, id_field="doc_id",
            encoder=encoder,
        )
    else:
        records = load_query_records(opts.queries)
        rows = embed_records(
            records, spec, opts.out, text_field="text", id_field="query_id",
            encoder=encoder,
        )
    print(f"embedded {rows} rows at dim {spec.dim} -> {opts.out}")


def _cmd_translate(opts) -> None:
    spec = TranslationSpec(max_input_tokens=opts.max_input_tokens)
    written, failed = translate_file(opts.corpus, opts.out, spec, opts.lexicon)
    print(f"translated {written} documents ({failed} failures) -> {opts.out}")


def _cmd_score_pairs(opts) -> None:
    count = score_pairs_file(opts.requests, opts.checkpoint, opts.out)
    print(f"scored {count} pairs -> {opts.out}")


def _cmd_train_cross_encoder(opts) -> None:
    pairs = read_training_pairs(opts.pairs)
    config = CrossEncoderConfig(
        learning_rate=opts.lr, batch_size=opts.batch_size, epochs=opts.epochs
    )
    result = train_cross_encoder(config, pairs)
    save_cross_encoder(result.model, opts.out)
    print(
        f"best epoch {result.best_epoch} "
        f"(validation loss {result.best_validation_loss:.4f}) -> {opts.out}"
    )


def _cmd_train_qd(opts) -> None:
    pairs = read_training_pairs(opts.pairs)
    validation = QdValidation.from_files(
        opts.val_queries, opts.val_corpus, opts.val_qrels
    )
    config = ContrastiveConfig(
        level="qd", learning_rate=opts.lr, epochs=opts.epochs
    )
    encoder = TinyEncoder(dim=opts.dim, seed=opts.seed)
    result = train_contrastive(config, pairs, validation, encoder=encoder, seed=opts.seed)
    save_encoder(result.encoder, opts.out)
    if opts.metrics_log:
        write_metrics_log(result, opts.metrics_log)
    print(
        f"best epoch {result.best_epoch} "
        f"({result.criterion} {result.best_value:.4f}) -> {opts.out}"
    )


_RUNNERS = {
    "embed": _cmd_embed,
    "translate": _cmd_translate,
    "score-pairs": _cmd_score_pairs,
    "train-cross-encoder": _cmd_train_cross_encoder,
    "train-qd": _cmd_train_qd,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        opts = parser.parse_args(argv)
        _RUNNERS[opts.command](opts)
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)
    except (UsageError, FileNotFoundError, NotADirectoryError, IsADirectoryError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except SidecarError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # anything unplanned is an internal failure
        print(f"internal error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
