"""Command-line interface: ``pemi <command> [options]``."""

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from config import DEFAULT_LOG_LEVEL
from pemi.data.dataset import parse_dataset, write_dataset
from pemi.data.fixtures import resolve_hierarchy
from pemi.data.stats import class_stats, format_stats
from pemi.data.synthetic import generate_synthetic, planted_hierarchy
from pemi.errors import (
    CheckpointError,
    CompatibilityError,
    ConfigError,
    DataError,
    HierarchyError,
    LabelPathError,
    PemiError,
)
from pemi.evaluation.metrics import format_report
from pemi.models.encoder import EncoderModel, init_encoder, load_weights
from pemi.models.hierarchy import LabelHierarchy
from pemi.models.model import (
    PemiModel,
    VOCAB_FILE,
    check_compatible,
    init_model,
    load_checkpoint,
    save_checkpoint,
)
from pemi.models.template import Vocab, build_vocab
from pemi.training.partition import ParameterPartition, count_trainable_params
from pemi.training.trainer import evaluate, fit
from pemi.ui.run_config import RunConfig, load_run_config
from pemi.visualization import (
    LabelEmbeddings,
    create_embedding_scatter,
    create_embedding_svg,
    format_weight_table,
    pca_2d,
    weight_table,
    write_embeddings_csv,
    write_scatter_html,
    write_scatter_svg,
)

logger = logging.getLogger(__name__)

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# Checked in order; subclasses of PemiError outside these families exit with 1
EXIT_CODES = ((ConfigError, 2), (DataError, 3), (CheckpointError, 4))

CHECKPOINT_DIR = "checkpoint"
TRAIN_LOG_FILE = "train_log.jsonl"
TEST_METRICS_FILE = "test_metrics.json"
EVAL_METRICS_FILE = "eval_metrics.json"
RUN_CONFIG_FILE = "run.conf"


def configure_logging(level_name: str) -> None:
    """
    Configure the root logger from a PEMI_LOG value.

    Raises:
        ConfigError: If the level is not one of error, info, debug
    """
    level = LOG_LEVELS.get(level_name.strip().lower())
    if level is None:
        raise ConfigError(f"PEMI_LOG must be one of {sorted(LOG_LEVELS)}, got {level_name!r}")
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)


def parse_level_range(text: Optional[str], depth: int, default: tuple[int, int]) -> tuple[int, int]:
    """
    Parse ``A..B`` (or a single level ``A``) into an inclusive range within 1..depth.

    Raises:
        ConfigError: If malformed, reversed or out of range
    """
    if text is None:
        return default
    first, sep, last = text.partition("..")
    try:
        a = int(first)
        b = int(last) if sep else a
    except ValueError:
        raise ConfigError(f"--level expects A..B, got {text!r}") from None
    if not 1 <= a <= b <= depth:
        raise ConfigError(f"--level {text} is outside 1..{depth}")
    return a, b


def _load_config(args: argparse.Namespace, required: bool = True) -> RunConfig:
    if args.config is None:
        if required:
            raise ConfigError("--config is required for this command")
        config = RunConfig()
    else:
        config = load_run_config(args.config)
    if args.seed is not None:
        config = config.with_seed(args.seed)
    return config


def _load_hierarchy(config: RunConfig) -> LabelHierarchy:
    source = config.require("paths.hierarchy")
    try:
        return resolve_hierarchy(source)
    except HierarchyError as e:
        raise HierarchyError(f"paths.hierarchy: {e}") from e


def _load_encoder(path: str) -> tuple[EncoderModel, Vocab]:
    """Load a saved encoder together with the vocabulary stored beside it."""
    encoder_path = Path(path)
    vocab_path = encoder_path.parent / VOCAB_FILE
    if not vocab_path.is_file():
        raise CheckpointError(f"paths.encoder: no {VOCAB_FILE} next to {encoder_path}")
    vocab = Vocab.load(vocab_path)
    encoder = load_weights(encoder_path)
    if encoder.config.vocab_size != len(vocab):
        raise CompatibilityError(
            f"paths.encoder: encoder has {encoder.config.vocab_size} tokens, {vocab_path} has {len(vocab)}"
        )
    return encoder, vocab


def build_model(config: RunConfig, hierarchy: LabelHierarchy, corpus: Sequence[str]) -> PemiModel:
    """Build a fresh model: vocabulary from ``corpus`` unless a saved encoder brings its own."""
    if config.paths.encoder:
        encoder, vocab = _load_encoder(config.paths.encoder)
    else:
        vocab = build_vocab(corpus, config.min_count)
        encoder = init_encoder(config.encoder.to_config(len(vocab)))
    return init_model(
        encoder,
        vocab,
        config.template(),
        hierarchy,
        seed=config.train.seed,
        mode=config.verbalizer_mode,
        normalization=config.normalization,
    )


def cmd_train(args: argparse.Namespace) -> int:
    config = _load_config(args)
    hierarchy = _load_hierarchy(config)
    train = parse_dataset(config.require("paths.train"), hierarchy)
    dev = parse_dataset(config.require("paths.dev"), hierarchy)
    test = parse_dataset(config.paths.test, hierarchy) if config.paths.test else None

    out = Path(args.out or config.paths.out)
    out.mkdir(parents=True, exist_ok=True)
    corpus = [text for instance in train for text in (instance.arg1, instance.arg2)]
    model = build_model(config, hierarchy, corpus)
    count = count_trainable_params(ParameterPartition.from_model(model))
    logger.info("training %d parameters (%s)", count.total, count.by_group)

    result = fit(model, train, dev, config.train, log_path=out / TRAIN_LOG_FILE, progress=True)
    save_checkpoint(result.model, out / CHECKPOINT_DIR)
    if test:
        report = evaluate(result.model, test)
        (out / TEST_METRICS_FILE).write_text(report.to_json(), encoding="utf-8")
        print(format_report(report), end="")
    print(json.dumps(result.log[-1]))
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    model = load_checkpoint(_required(args.checkpoint, "--checkpoint"))
    if args.config is not None:
        config = _load_config(args)
        if config.paths.hierarchy:
            check_compatible(model, _load_hierarchy(config))
    data_path = _required(args.data, "--data")
    try:
        instances = parse_dataset(data_path, model.hierarchy)
    except LabelPathError as e:
        raise CompatibilityError(f"dataset labels do not fit the checkpoint hierarchy: {e}") from e

    report = evaluate(model, instances)
    out = Path(args.out) if args.out else Path(args.checkpoint) / EVAL_METRICS_FILE
    out.write_text(report.to_json(), encoding="utf-8")
    print(format_report(report), end="")
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    model = load_checkpoint(_required(args.checkpoint, "--checkpoint"))
    arg1, arg2 = _required(args.arg1, "--arg1"), _required(args.arg2, "--arg2")
    levels = []
    for z, prediction in enumerate(model.predict(arg1, arg2), 1):
        probs = prediction.probs.data.astype(float)
        names = model.hierarchy.labels(z)
        ranked = sorted(range(len(names)), key=lambda i: (-probs[i], i))
        levels.append(
            {
                "level": z,
                "label": names[ranked[0]],
                "probability": float(probs[ranked[0]]),
                "top3": [[names[i], float(probs[i])] for i in ranked[:3]],
            }
        )
    for entry in levels:
        top = ", ".join(f"{name} {p:.4f}" for name, p in entry["top3"])
        print(f"level {entry['level']}: {entry['label']} ({entry['probability']:.4f})  top-3: {top}")
    if args.out:
        Path(args.out).write_text(json.dumps({"levels": levels}, indent=2) + "\n", encoding="utf-8")
    return 0


def cmd_gen_synth(args: argparse.Namespace) -> int:
    config = _load_config(args, required=False)
    hierarchy = _load_hierarchy(config) if config.paths.hierarchy else planted_hierarchy()
    synth = config.synth
    bundle = generate_synthetic(
        hierarchy,
        n_per_label=synth.n_per_label,
        vocab_size=synth.vocab_size,
        seed=synth.seed,
        signature_size=synth.signature_size,
    )
    out = Path(args.out or config.paths.out)
    out.mkdir(parents=True, exist_ok=True)
    for split, instances in bundle.splits().items():
        write_dataset(out / f"{split}.jsonl", instances)
    hierarchy.save(out / "hierarchy.json")
    (out / "stats.txt").write_text(format_stats(class_stats(bundle, hierarchy)), encoding="utf-8")
    (out / RUN_CONFIG_FILE).write_text(
        "\n".join(
            [
                f"# {bundle.provenance}",
                "paths.hierarchy = hierarchy.json",
                "paths.train = train.jsonl",
                "paths.dev = dev.jsonl",
                "paths.test = test.jsonl",
                f"train.seed = {config.train.seed}",
                "",
            ]
        ),
        encoding="utf-8",
    )
    print(f"wrote {sum(len(s) for s in bundle.splits().values())} instances to {out}")
    return 0


def cmd_inspect_weights(args: argparse.Namespace) -> int:
    model = load_checkpoint(_required(args.checkpoint, "--checkpoint"))
    depth = model.hierarchy.depth
    if depth < 2:
        raise ConfigError("inspect-weights needs a hierarchy with at least two levels")
    upper, lower = parse_level_range(args.level, depth, default=(1, 2))
    if lower != upper + 1:
        raise ConfigError(f"--level must name adjacent levels A..A+1, got {args.level}")
    rows = weight_table(model.verbalizer, upper)
    print(format_weight_table(rows, f"Level {upper}", f"Level {lower}"), end="")
    return 0


def cmd_export_embeddings(args: argparse.Namespace) -> int:
    model = load_checkpoint(_required(args.checkpoint, "--checkpoint"))
    depth = model.hierarchy.depth
    first, last = parse_level_range(args.level, depth, default=(1, depth))
    embeddings = LabelEmbeddings.from_verbalizer(model.verbalizer, first, last)
    coords = pca_2d(embeddings.vectors)

    out = Path(args.out) if args.out else Path(args.checkpoint) / "embeddings"
    out.mkdir(parents=True, exist_ok=True)
    write_embeddings_csv(out / "embeddings.csv", embeddings.levels, embeddings.labels, embeddings.vectors, coords)
    write_scatter_svg(create_embedding_svg(embeddings.levels, embeddings.labels, coords), out / "embeddings.svg")
    write_scatter_html(
        create_embedding_scatter(embeddings.levels, embeddings.labels, coords), out / "embeddings.html"
    )
    print(f"wrote {len(embeddings.labels)} label embeddings to {out}")
    return 0


def cmd_count_params(args: argparse.Namespace) -> int:
    if args.checkpoint:
        partition = ParameterPartition.from_model(load_checkpoint(args.checkpoint))
    else:
        config = _load_config(args)
        partition = ParameterPartition.from_layout(
            config.template().n_prompts,
            config.encoder.d_model,
            _load_hierarchy(config),
            config.verbalizer_mode,
        )
    for line in count_trainable_params(partition).lines():
        print(line)
    return 0


def _required(value: Optional[str], flag: str) -> str:
    if not value:
        raise ConfigError(f"{flag} is required for this command")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pemi",
        description="Prompt tuning with hierarchical label refining for multi-level relation classification.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    def add(name: str, handler, help_text: str, flags: Sequence[str]) -> None:
        sub = subparsers.add_parser(name, help=help_text)
        sub.set_defaults(handler=handler)
        for flag in flags:
            sub.add_argument(f"--{flag}", default=None, **_FLAG_OPTIONS[flag])

    add("train", cmd_train, "train prompts and verbalizer, write checkpoint and log", ["config", "out", "seed"])
    add("eval", cmd_eval, "score a checkpoint on a dataset", ["checkpoint", "data", "config", "out", "seed"])
    add("predict", cmd_predict, "predict every level for one argument pair", ["checkpoint", "arg1", "arg2", "out"])
    add("gen-synth", cmd_gen_synth, "write a synthetic dataset with planted structure", ["config", "out", "seed"])
    add("inspect-weights", cmd_inspect_weights, "print normalized parent-child weights", ["checkpoint", "level"])
    add(
        "export-embeddings",
        cmd_export_embeddings,
        "write label embeddings as CSV and an HTML scatter",
        ["checkpoint", "level", "out"],
    )
    add("count-params", cmd_count_params, "report trainable parameters per group", ["config", "checkpoint", "seed"])
    return parser


_FLAG_OPTIONS = {
    "config": dict(metavar="PATH", help="run configuration file"),
    "checkpoint": dict(metavar="PATH", help="checkpoint directory"),
    "data": dict(metavar="PATH", help="dataset (JSON lines)"),
    "out": dict(metavar="PATH", help="output path"),
    "seed": dict(type=int, metavar="N", help="override train.seed and synth.seed"),
    "level": dict(metavar="A..B", help="level range"),
    "arg1": dict(metavar="TEXT", help="first argument"),
    "arg2": dict(metavar="TEXT", help="second argument"),
}


def exit_code(error: PemiError) -> int:
    for family, code in EXIT_CODES:
        if isinstance(error, family):
            return code
    return 1


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command and return its exit code (0, or 2/3/4 by error family)."""
    args = build_parser().parse_args(argv)
    level_name = os.environ.get("PEMI_LOG", DEFAULT_LOG_LEVEL)
    debug = level_name.strip().lower() == "debug"
    try:
        configure_logging(level_name)
        return args.handler(args)
    except PemiError as e:
        if debug:
            logger.exception("command %s failed", args.command)
        print(f"error: {e}", file=sys.stderr)
        return exit_code(e)
    except OSError as e:
        if debug:
            logger.exception("command %s failed", args.command)
        print(f"error: {e}", file=sys.stderr)
        return 1
