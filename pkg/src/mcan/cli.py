"""Command-line entry point: ``mcan {gen,train,eval,fitb,recommend,inspect}``.

Exit codes: 0 success, 1 usage error, 2 bad input data or configuration,
3 failure while running.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, fields

from .data import Dataset, Pools, load_dataset, save_dataset
from .errors import (
    CategoryLookupError,
    CheckpointError,
    ConfigError,
    ContractError,
    McanError,
    ParseError,
    ValidationError,
)
from .evaluator import build_fitb, fitb_accuracy, evaluate, write_metrics
from .model import McanParams, load_checkpoint, save_checkpoint
from .objectives import LEVELS
from .recommender import complete_outfit, dumps_completion, load_query
from .seeding import derive_seed
from .syngen import GenConfig, generate, save_latent
from .trainer import TrainConfig, train

log = logging.getLogger("mcan")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3
DATA_ERRORS = (ParseError, ValidationError, ConfigError, CategoryLookupError, CheckpointError, ContractError, OSError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _add_config_flags(parser, cls, skip=("seed",)):
    """One flag per dataclass field, defaulting to the dataclass default."""
    group = parser.add_argument_group(f"{cls.__name__} fields")
    for f in fields(cls):
        if f.name in skip:
            continue
        if f.type in ("bool", bool):
            group.add_argument(_flag(f.name), type=_parse_bool, default=f.default, metavar="BOOL")
        else:
            kind = {"int": int, "float": float}.get(f.type if isinstance(f.type, str) else f.type.__name__, str)
            group.add_argument(_flag(f.name), type=kind, default=f.default)


def _parse_bool(raw: str) -> bool:
    v = raw.lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {raw!r}")


def _config_from(args, cls, **fixed):
    kw = {f.name: getattr(args, f.name) for f in fields(cls) if hasattr(args, f.name)}
    kw.update(fixed)
    return cls(**kw)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed (default 0)")
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help="suppress progress logging")

    parser = _Parser(prog="mcan", description="Mixed Category Attention Net for conditional outfit recommendation.", parents=[common])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("gen", parents=[common], help="generate a synthetic dataset and its latent record")
    p.add_argument("--out", required=True, help="dataset file to write")
    p.add_argument("--latent", help="latent record file to write")
    _add_config_flags(p, GenConfig)

    p = sub.add_parser("train", parents=[common], help="train a model on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint file to write")
    p.add_argument("--log", help="per-epoch training log (JSON lines)")
    p.add_argument("--resume", help="continue from this checkpoint")
    _add_config_flags(p, TrainConfig)

    p = sub.add_parser("eval", parents=[common], help="FITB accuracy and compatibility AUC")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="metrics report to write (JSON lines)")
    p.add_argument("--split", default="test")
    p.add_argument("--level", action="append", choices=[lv.value for lv in LEVELS], help="repeatable; default all")
    p.add_argument("--shuffled", action="store_true", help="also evaluate on jointly shuffled tuples")
    p.add_argument("--granularity", default="fine", choices=["fine", "coarse"])

    p = sub.add_parser("fitb", parents=[common], help="build and answer fill-in-the-blank questions")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--level", default="easy", choices=[lv.value for lv in LEVELS])
    p.add_argument("--rounds", type=int, default=1, help="questions per outfit")
    p.add_argument("--granularity", default="fine", choices=["fine", "coarse"])

    p = sub.add_parser("recommend", parents=[common], help="complete a partial outfit from a query file")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--out", help="write the completion here instead of stdout")

    p = sub.add_parser("inspect", parents=[common], help="summarize a dataset and/or checkpoint")
    p.add_argument("--data")
    p.add_argument("--checkpoint")
    return parser


def _check_inputs(*paths):
    for path in paths:
        if path is not None and not os.path.isfile(path):
            raise FileNotFoundError(f"no such file: {path}")


def _check_outputs(*paths):
    for path in paths:
        if path is None:
            continue
        parent = os.path.dirname(os.path.abspath(path))
        if not os.path.isdir(parent):
            raise FileNotFoundError(f"output directory does not exist: {parent}")


def _echo(command: str, seed: int, config: dict) -> None:
    print(json.dumps({"command": command, "seed": seed, "config": config}, sort_keys=True), file=sys.stderr)


def _load_pair(args) -> tuple[Dataset, McanParams]:
    ds = load_dataset(args.data)
    p = load_checkpoint(args.checkpoint)
    if (p.config.d_img, p.config.n_fine, p.config.n_coarse) != (ds.d_img, ds.taxonomy.n_fine, ds.taxonomy.n_coarse):
        raise CheckpointError("checkpoint was built for a different feature width or taxonomy")
    return ds, p


def cmd_gen(args) -> int:
    _check_outputs(args.out, args.latent)
    cfg = _config_from(args, GenConfig, seed=derive_seed(args.seed, "gen"))
    cfg.validate()
    _echo("gen", args.seed, asdict(cfg))
    ds, latent = generate(cfg)
    save_dataset(ds, args.out)
    if args.latent:
        save_latent(latent, args.latent)
    log.info("wrote %s", ds)
    return EXIT_OK


def cmd_train(args) -> int:
    _check_inputs(args.data, args.resume)
    _check_outputs(args.out, args.log)
    cfg = _config_from(args, TrainConfig, seed=derive_seed(args.seed, "train"))
    cfg.validate()
    _echo("train", args.seed, asdict(cfg))
    ds = load_dataset(args.data)
    params = load_checkpoint(args.resume) if args.resume else None
    params, tlog = train(cfg, ds, params)
    save_checkpoint(params, args.out)
    if args.log:
        tlog.write(args.log)
    return EXIT_OK


def cmd_eval(args) -> int:
    _check_inputs(args.data, args.checkpoint)
    _check_outputs(args.out)
    levels = args.level or [lv.value for lv in LEVELS]
    orders = ["ordered", "shuffled"] if args.shuffled else ["ordered"]
    seed = derive_seed(args.seed, "eval")
    _echo("eval", args.seed, {"split": args.split, "levels": levels, "orders": orders, "granularity": args.granularity, "eval_seed": seed})
    ds, p = _load_pair(args)
    records = evaluate(p, ds, args.split, levels, seed, orders, args.granularity)
    write_metrics(records, args.out)
    for r in records:
        log.info("%s %s %s %s=%.4f (n=%d)", r.task, r.level, r.order, r.metric, r.value, r.n)
    return EXIT_OK


def cmd_fitb(args) -> int:
    _check_inputs(args.data, args.checkpoint)
    if args.rounds < 1:
        raise ConfigError("--rounds must be at least 1")
    seed = derive_seed(args.seed, "fitb")
    _echo("fitb", args.seed, {"split": args.split, "level": args.level, "rounds": args.rounds, "granularity": args.granularity, "fitb_seed": seed})
    ds, p = _load_pair(args)
    questions = build_fitb(ds, args.split, args.level, seed, args.granularity, args.rounds)
    acc = fitb_accuracy(p, ds, questions)
    print(f"fitb level={args.level} split={args.split} n={len(questions)} accuracy={acc:.4f}")
    return EXIT_OK


def cmd_recommend(args) -> int:
    _check_inputs(args.data, args.checkpoint, args.query)
    _check_outputs(args.out)
    _echo("recommend", args.seed, {"query": args.query})
    ds, p = _load_pair(args)
    q = load_query(args.query)
    for item, _ in q.given.entries:
        if item not in ds.items:
            raise ValidationError(f"query references unknown item {item}")
    for cat, g in q.plan:
        if cat is not None and not 0 <= cat < ds.taxonomy.size(g):
            raise CategoryLookupError(f"query references unknown {g} category {cat}")
    text = dumps_completion(complete_outfit(p, ds, q, Pools(ds)))
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_inspect(args) -> int:
    if not args.data and not args.checkpoint:
        raise UsageError("inspect needs --data and/or --checkpoint")
    _check_inputs(args.data, args.checkpoint)
    if args.data:
        ds = load_dataset(args.data)
        t = ds.taxonomy
        print(f"dataset {args.data}")
        print(f"  items {len(ds.items)}  outfits {len(ds.outfits)}  d_img {ds.d_img}")
        print(f"  fine categories {t.n_fine}  coarse categories {t.n_coarse}")
        for split in ("train", "val", "test"):
            print(f"  {split} {len(ds.splits[split])} outfits")
    if args.checkpoint:
        p = load_checkpoint(args.checkpoint)
        n = sum(t.data.size for t in p)
        print(f"checkpoint {args.checkpoint}")
        for f in fields(p.config):
            print(f"  {f.name} {getattr(p.config, f.name)}")
        print(f"  parameters {n} in {len(p.tensors)} tensors")
    return EXIT_OK


COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "eval": cmd_eval,
    "fitb": cmd_fitb,
    "recommend": cmd_recommend,
    "inspect": cmd_inspect,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    args.seed = getattr(args, "seed", 0)
    args.quiet = getattr(args, "quiet", False)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s", stream=sys.stderr, force=True)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"mcan: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DATA_ERRORS as exc:
        print(f"mcan: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (McanError, ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"mcan: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
