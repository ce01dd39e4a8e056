#!/usr/bin/env python
# -*- coding: utf-8 -*-

import json
import logging
import sys
from argparse import ArgumentParser
from pathlib import Path
from typing import Optional

from biparse.agreement import baseline_trees, run_corpus
from biparse.config import RunConfig, load_config
from biparse.corpus import BitextPair, read_bitext, read_conll, write_conll
from biparse.evaluation import (
    compare,
    iteration_sweep,
    read_pp_gold,
    render_table,
    report_tsv,
    validate_instances,
)
from biparse.fixtures import all_fixture_sets, write_fixture_set, write_treebank_fixture
from biparse.parser import train_parser
from biparse.projection import (
    Direction,
    ProjectionModels,
    extract_projection_training,
    read_length_instances,
    train_path_length,
    train_path_predictor,
)
from biparse.store import ModelNotFoundError, ModelStore

OK = 0
INVALID_INPUT = 2
RUNTIME_FAILURE = 3
ERRORS = {
    INVALID_INPUT: "Invalid input",
    RUNTIME_FAILURE: "Runtime failure",
}


def _read_pairs(config: RunConfig) -> list[BitextPair]:
    return read_bitext(
        config.src_conll.read_text(encoding="utf-8"),
        config.tgt_conll.read_text(encoding="utf-8"),
        config.alignments.read_text(encoding="utf-8"),
        config.src_lang,
        config.tgt_lang,
    )


def _read_trees(path: Path, lang: str, strict_root: bool = False):
    if not path.is_file():
        raise ValueError(f"{str(path)!r} does not exist")
    sentences = read_conll(path.read_text(encoding="utf-8"), lang)
    missing = [number for number, (_, tree) in enumerate(sentences, start=1) if tree is None]
    if missing:
        raise ValueError(f"{path}: sentences {missing[:5]} have no HEAD annotation")
    for number, (_, tree) in enumerate(sentences, start=1):
        try:
            tree.validate(strict_single_root=strict_root)
        except ValueError as err:
            raise ValueError(f"{path}: sentence {number}: {err}")
    return sentences


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    logging.info("wrote %s", path)


def train_parser_handler(args, config: RunConfig):
    config.validate(required=("treebank", "model_dir"))
    treebank = _read_trees(config.treebank, config.src_lang)
    if config.epochs == 0:
        logging.warning("epochs=0: writing a zero-weight %s model", config.src_lang)

    print("epoch\taccuracy")
    model = train_parser(
        treebank,
        config.epochs,
        seed=config.seed,
        lang=config.src_lang,
        shuffle=args.shuffle,
        on_epoch=lambda epoch, accuracy: print(f"{epoch}\t{accuracy:.4f}"),
    )
    path = ModelStore(config.model_dir).save_parser(model)
    print(f"model written to {path}")
    return OK


def train_projection_handler(args, config: RunConfig):
    config.validate(required=("src_conll", "tgt_conll", "alignments", "model_dir"))
    pairs = _read_pairs(config)
    store = ModelStore(config.model_dir)
    external = None
    if args.length_instances:
        external = read_length_instances(Path(args.length_instances).read_text(encoding="utf-8"))

    if args.direction == "both":
        directions = [Direction.SRC_TO_TGT, Direction.TGT_TO_SRC]
    else:
        directions = [Direction(args.direction)]
    for direction in directions:
        langs = (config.src_lang, config.tgt_lang)
        edge_lang, path_lang = langs if direction is Direction.SRC_TO_TGT else langs[::-1]
        instances = extract_projection_training(pairs, direction)
        skipped = " ".join(f"{reason}={count}" for reason, count in sorted(instances.skipped.items()))
        print(
            f"{edge_lang}-{path_lang}\tlength_instances={len(instances.lengths)}"
            f"\tpath_instances={len(instances.paths)}\tskipped: {skipped or 'none'}"
        )

        length = train_path_length(
            external if external is not None else instances.lengths, config.epochs, config.seed
        )
        predictor = train_path_predictor(instances.paths, config.epochs, config.seed)
        if predictor.is_zero:
            logging.warning("%s-%s path predictors received no updates", edge_lang, path_lang)
        for path in store.save_projection(edge_lang, path_lang, ProjectionModels(length, predictor)):
            print(f"model written to {path}")
    return OK


def _load_models(config: RunConfig, with_projection=True):
    store = ModelStore(config.model_dir)
    return (
        store.load_language(config.src_lang, config.tgt_lang, with_projection),
        store.load_language(config.tgt_lang, config.src_lang, with_projection),
    )


def infer_handler(args, config: RunConfig):
    config.validate(required=("src_conll", "tgt_conll", "alignments", "model_dir", "out_dir"))
    pairs = _read_pairs(config)
    diagnostics = []
    if args.baseline_only:
        models_e, models_h = _load_models(config, with_projection=False)
        trees = [baseline_trees(pair, models_e, models_h) for pair in pairs]
    else:
        models_e, models_h = _load_models(config)
        results = run_corpus(pairs, models_e, models_h, config.agreement(), jobs=config.jobs)
        trees = [(result.src_tree, result.tgt_tree) for result in results]
        diagnostics = [record for result in results for record in result.diagnostics]

    _write(
        config.out_dir / f"{config.src_lang}.conll",
        write_conll(((pair.src, tree_e) for pair, (tree_e, _) in zip(pairs, trees)), keep_extra=True),
    )
    _write(
        config.out_dir / f"{config.tgt_lang}.conll",
        write_conll(((pair.tgt, tree_h) for pair, (_, tree_h) in zip(pairs, trees)), keep_extra=True),
    )
    if args.diagnostics:
        _write(Path(args.diagnostics), "".join(json.dumps(record) + "\n" for record in diagnostics))
    print(f"{len(pairs)} pairs written to {config.out_dir}")
    return OK


def evaluate_handler(args, config: RunConfig):
    config.validate(required=("gold",))
    baseline = _read_trees(Path(args.baseline), config.src_lang, config.strict_root)
    dd = _read_trees(Path(args.dd), config.src_lang, config.strict_root)
    instances = read_pp_gold(config.gold.read_text(encoding="utf-8"))
    validate_instances(instances, [sentence for sentence, _ in baseline], config.prep_tag)

    report = compare([tree for _, tree in baseline], [tree for _, tree in dd], instances)
    print(render_table(report), end="")
    out = _report_path(args, config, "report.tsv")
    if out:
        _write(out, report_tsv(report))
    return OK


def sweep_handler(args, config: RunConfig):
    config.validate(required=("src_conll", "tgt_conll", "alignments", "model_dir", "gold"))
    pairs = _read_pairs(config)
    instances = read_pp_gold(config.gold.read_text(encoding="utf-8"))
    validate_instances(instances, [pair.src for pair in pairs], config.prep_tag)
    models_e, models_h = _load_models(config)

    result = iteration_sweep(
        pairs, models_e, models_h, instances, config.iters, config.agreement(), jobs=config.jobs
    )
    print(result.tsv(), end="")
    out = _report_path(args, config, "sweep.tsv")
    if out:
        _write(out, result.tsv())
    return OK


def gen_fixtures_handler(args, config: RunConfig):
    out = Path(args.fixture_dir)
    for fixture in all_fixture_sets(config.seed):
        write_fixture_set(fixture, out / fixture.name)
        print(f"{fixture.name}: {len(fixture.pairs)} pairs in {out / fixture.name}")
    write_treebank_fixture(out / "treebank", seed=config.seed)
    print(f"treebank: {out / 'treebank'}")
    return OK


def _report_path(args, config: RunConfig, default_name: str) -> Optional[Path]:
    if args.out_file:
        return Path(args.out_file)
    if config.out_dir:
        return config.out_dir / default_name
    return None


def build_parser() -> ArgumentParser:
    common = ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", action="store", default=None)
    common.add_argument("-l", "--log", action="store", default=None)
    common.add_argument("-v", "--verbose", action="store_true")
    common.add_argument("-j", "--jobs", action="store", type=int, default=None)
    common.add_argument("--seed", action="store", type=int, default=None)

    agreement = ArgumentParser(add_help=False)
    agreement.add_argument("--src-conll", dest="src_conll", default=None)
    agreement.add_argument("--tgt-conll", dest="tgt_conll", default=None)
    agreement.add_argument("--alignments", default=None)
    agreement.add_argument("--src-lang", dest="src_lang", default=None)
    agreement.add_argument("--tgt-lang", dest="tgt_lang", default=None)
    agreement.add_argument("--model-dir", dest="model_dir", default=None)
    agreement.add_argument("--outer-iters", dest="outer_iters", type=int, default=None)
    agreement.add_argument("--inner-iters", dest="inner_iters", type=int, default=None)
    agreement.add_argument("--alpha0", type=float, default=None)
    agreement.add_argument("--alpha-schedule", dest="alpha_schedule", default=None)
    agreement.add_argument("--convergence-mode", dest="convergence_mode", default=None)
    agreement.add_argument("--dual-update", dest="dual_update", default=None)
    agreement.add_argument("--no-abstain", dest="abstain", action="store_const", const=False, default=None)

    parser = ArgumentParser(prog="biparse", description="Bilingual agreement PP-attachment inference")
    commands = parser.add_subparsers(dest="command", required=True)

    train = commands.add_parser("train-parser", parents=[common])
    train.add_argument("--lang", dest="src_lang", default=None)
    train.add_argument("--treebank", default=None)
    train.add_argument("--epochs", type=int, default=None)
    train.add_argument("--out", dest="model_dir", default=None)
    train.add_argument("--shuffle", action="store_true")

    projection = commands.add_parser("train-projection", parents=[common])
    projection.add_argument("--src-conll", dest="src_conll", default=None)
    projection.add_argument("--tgt-conll", dest="tgt_conll", default=None)
    projection.add_argument("--alignments", default=None)
    projection.add_argument("--src-lang", dest="src_lang", default=None)
    projection.add_argument("--tgt-lang", dest="tgt_lang", default=None)
    projection.add_argument("--epochs", type=int, default=None)
    projection.add_argument("--out", dest="model_dir", default=None)
    projection.add_argument("--direction", choices=["both"] + [d.value for d in Direction], default="both")
    projection.add_argument("--length-instances", dest="length_instances", default=None)

    infer = commands.add_parser("infer", parents=[common, agreement])
    infer.add_argument("--out", dest="out_dir", default=None)
    infer.add_argument("--baseline-only", dest="baseline_only", action="store_true")
    infer.add_argument("--diagnostics", default=None)

    evaluate = commands.add_parser("evaluate", parents=[common])
    evaluate.add_argument("--gold", default=None)
    evaluate.add_argument("--baseline", required=True)
    evaluate.add_argument("--dd", required=True)
    evaluate.add_argument("--src-lang", dest="src_lang", default=None)
    evaluate.add_argument("--prep-tag", dest="prep_tag", default=None)
    evaluate.add_argument("--strict-root", dest="strict_root", action="store_const", const=True, default=None)
    evaluate.add_argument("--out", dest="out_file", default=None)

    sweep = commands.add_parser("sweep", parents=[common, agreement])
    sweep.add_argument("--gold", default=None)
    sweep.add_argument("--iters", default=None)
    sweep.add_argument("--prep-tag", dest="prep_tag", default=None)
    sweep.add_argument("--out", dest="out_file", default=None)

    fixtures = commands.add_parser("gen-fixtures", parents=[common])
    fixtures.add_argument("--out", dest="fixture_dir", required=True)
    return parser


def _overrides(args) -> dict[str, object]:
    return {
        name: getattr(args, name)
        for name in RunConfig.fields()
        if getattr(args, name, None) is not None
    }


def main(argv=None) -> int:
    router = {
        "train-parser": train_parser_handler,
        "train-projection": train_projection_handler,
        "infer": infer_handler,
        "evaluate": evaluate_handler,
        "sweep": sweep_handler,
        "gen-fixtures": gen_fixtures_handler,
    }
    args = build_parser().parse_args(argv)

    logging.basicConfig(
        filename=args.log,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="[%(asctime)s] %(levelname).1s %(message)s",
        datefmt="%Y.%m.%d %H:%M:%S",
    )

    try:
        config = load_config(args.config, _overrides(args))
        code = router[args.command](args, config)
    except (ValueError, TypeError, ModelNotFoundError) as err:
        logging.error("%s: %s", args.command, err)
        print(f"{ERRORS[INVALID_INPUT]}: {err}", file=sys.stderr)
        code = INVALID_INPUT
    except Exception as err:
        logging.exception("Unexpected error: %s", err)
        print(f"{ERRORS[RUNTIME_FAILURE]}: {err}", file=sys.stderr)
        code = RUNTIME_FAILURE
    return code


if __name__ == "__main__":
    sys.exit(main())
