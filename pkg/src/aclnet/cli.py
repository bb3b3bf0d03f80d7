"""Command-line entry point: ``aclnet {analyze,train,infer,augment-preview,eval}``.

Every flag may also come from a ``--config FILE`` of ``key=value`` lines
(keys are flag names without the dashes, ``-`` or ``_`` both accepted).
Precedence: command line, then config file, then built-in defaults.

Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric abort.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import complexity, network, store
from .audio import (
    AugmentConfig,
    AudioClip,
    augment_example,
    eval_input,
    example_rng,
    load_corpus,
    load_index,
    load_wav,
    save_wav,
    split_folds,
)
from .builder import NetworkConfig, build, min_input_len
from .errors import AclNetError, ConfigError, NumericError
from .mixup import MixupConfig
from .trainer import PAPER_LR_PHASES, TrainConfig, cross_validate, evaluate, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
# augmented waveforms are unit-variance; scale down before PCM16 so peaks rarely clip
PREVIEW_SCALE = 1.0 / 16.0


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return v


def _wm(text: str) -> float:
    if "/" in text:
        num, den = text.split("/", 1)
        return _positive_float(str(float(num) / float(den)))
    return _positive_float(text)


def _conv_type(text: str) -> str:
    if text.upper() not in ("SC", "DWSC"):
        raise argparse.ArgumentTypeError(f"conv type must be sc or dwsc, got {text}")
    return text.upper()


def _rate(text: str) -> int:
    v = int(float(text))
    if v not in (16000, 44100):
        raise argparse.ArgumentTypeError(f"rate must be 16000 or 44100, got {text}")
    return v


def _add_model_flags(p, repeat_wm: bool = False):
    p.add_argument("--rate", type=_rate, default=16000)
    p.add_argument("--conv-type", type=_conv_type, default="DWSC")
    if repeat_wm:
        p.add_argument("--wm", type=_wm, action="append", default=None,
                       help="width multiplier; repeat for several rows (accepts 1/32)")
    else:
        p.add_argument("--wm", type=_wm, default=1.0)
    p.add_argument("--c1", type=int, default=None)
    p.add_argument("--s1", type=int, default=None)
    p.add_argument("--s2", type=int, default=None)
    p.add_argument("--classes", type=int, default=50)


def build_parser() -> _Parser:
    parser = _Parser(prog="aclnet", description=__doc__.split("\n")[0])
    parser.add_argument("--config", help="key=value file with flag defaults")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", help="parameter and MAC counts")
    _add_model_flags(p, repeat_wm=True)
    p.add_argument("--input-seconds", type=_positive_float, default=complexity.REFERENCE_WINDOW_SECONDS)
    p.add_argument("--csv", help="also write the rows as CSV to this path")
    p.add_argument("--paper-grid", action="store_true",
                   help="published reference rows plus the full width sweep")
    p.add_argument("--layers", action="store_true", help="print per-layer rows too")

    p = sub.add_parser("train", help="train one fold or all folds")
    _add_model_flags(p)
    p.add_argument("--data", required=True, help="directory holding the wav files")
    p.add_argument("--index", required=True, help="filename,fold,target,category CSV")
    p.add_argument("--fold", default="1", help="held-out fold number or 'all'")
    p.add_argument("--epochs", type=int, default=None, help="stop early (default: full schedule)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=_positive_float, default=None, help="constant rate instead of the phases")
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--weight-decay", type=float, default=2e-4)
    p.add_argument("--alpha", type=_positive_float, default=0.1)
    p.add_argument("--warmup", type=int, default=100)
    p.add_argument("--no-mixup", action="store_true")
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--eval-every", type=int, default=10)
    p.add_argument("--checkpoint-every", type=int, default=50)

    p = sub.add_parser("infer", help="top-K classes for one wav file")
    p.add_argument("--model", required=True)
    p.add_argument("--wav", required=True)
    p.add_argument("--top", type=int, default=5)

    p = sub.add_parser("augment-preview", help="write augmented copies of a wav")
    p.add_argument("--wav", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="accuracy of a saved model on one fold")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--fold", type=int, required=True)
    p.add_argument("--confusion", help="write the confusion matrix CSV here")
    return parser


def read_config_file(path) -> dict[str, str]:
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _subparser(parser, command):
    for action in parser._subparsers._group_actions:
        if command in action.choices:
            return action.choices[command]
    raise UsageError(f"unknown command {command}")


def parse_args(argv):
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    command = next((a for a in argv if a in COMMANDS), None)
    if not known.config or command is None:
        return parser.parse_args(argv)
    sub = _subparser(parser, command)
    dests = {a.dest: a for a in sub._actions if a.option_strings}
    from_file = []
    for key, value in read_config_file(known.config).items():
        action = dests.get(key)
        if action is None or key == "help":
            raise UsageError(f"{known.config}: unknown key {key!r} for {command}")
        if any(a.split("=")[0] in action.option_strings for a in argv):
            continue  # the command line wins
        flag = action.option_strings[-1]
        if isinstance(action, argparse._StoreTrueAction):
            if value.lower() in ("1", "true", "yes", "on"):
                from_file.append(flag)
        else:
            for item in value.split(","):
                from_file += [flag, item.strip()]
    idx = argv.index(command)
    return parser.parse_args(argv[:idx + 1] + from_file + argv[idx + 1:])


def _model_config(args) -> NetworkConfig:
    return NetworkConfig(sample_rate=args.rate, conv_type=args.conv_type, width_multiplier=args.wm,
                         c1=args.c1, s1=args.s1, s2=args.s2, num_classes=args.classes)


# ---------------------------------------------------------------------------
# commands


def cmd_analyze(args) -> int:
    if args.paper_grid:
        configs = complexity.paper_grid_configs()
    else:
        widths = args.wm or [1.0]
        configs = [NetworkConfig(sample_rate=args.rate, conv_type=args.conv_type, width_multiplier=w,
                                 c1=args.c1, s1=args.s1, s2=args.s2, num_classes=args.classes)
                   for w in widths]
    reports = complexity.sweep(configs, args.input_seconds)
    print(complexity.format_table(reports))
    if args.layers:
        for rep in reports:
            print(f"\n{rep.config.label} WM {rep.config.width_multiplier:g}")
            for row in rep.rows:
                if row.params or row.macs:
                    print(f"  {row.name:<9} {row.part}  params {row.params:>10}  MACs {row.macs:>13}")
    if args.csv:
        with open(args.csv, "w", newline="") as f:
            complexity.to_csv(reports, f)
    return EXIT_OK


def _train_config(args, seed: int) -> TrainConfig:
    phases = ((args.lr, args.epochs or 1),) if args.lr else PAPER_LR_PHASES
    return TrainConfig(
        momentum=args.momentum, weight_decay=args.weight_decay, batch_size=args.batch_size,
        lr_phases=phases, seed=seed, epochs=args.epochs,
        mixup=None if args.no_mixup else MixupConfig(args.alpha, args.warmup),
        augment=None if args.no_augment else AugmentConfig(),
        eval_every=args.eval_every, checkpoint_every=args.checkpoint_every,
    )


def cmd_train(args) -> int:
    seed = 0 if args.seed is None else args.seed
    print(f"seed: {seed}")
    model_config = _model_config(args)
    config = _train_config(args, seed)
    index = load_index(args.index, num_classes=model_config.num_classes)
    by_fold = {}
    for fold in index.folds:
        _, test = split_folds(index, fold)
        by_fold[fold] = load_corpus(test, args.data, rate=model_config.sample_rate)
    if args.fold == "all":
        result = cross_validate(model_config, by_fold, config, out_dir=args.out)
        for fold, acc in result.fold_accuracies.items():
            print(f"fold {fold}: accuracy {acc:.4f}")
        print(f"mean accuracy: {result.mean_accuracy:.4f}")
        return EXIT_OK
    fold = int(args.fold)
    if fold not in by_fold:
        raise UsageError(f"fold {fold} not present in the index")
    train_items = [it for f, its in by_fold.items() if f != fold for it in its]
    state = train(model_config, train_items, config, by_fold[fold], out_dir=Path(args.out) / f"fold{fold}")
    acc = state.history[-1]["val_accuracy"]
    print(f"fold {fold}: accuracy {acc:.4f}")
    return EXIT_OK


def cmd_infer(args) -> int:
    config, weights = store.load(args.model)
    clip = load_wav(args.wav)
    if clip.rate != config.sample_rate:
        raise ConfigError(f"{args.wav} is {clip.rate} Hz but the model expects {config.sample_rate} Hz")
    floor = min_input_len(config)
    if len(clip) < floor:
        raise ConfigError(f"{args.wav} has {len(clip)} samples, shorter than one 10 ms frame ({floor})")
    graph = build(config, len(clip))
    probs = network.predict(graph, weights, eval_input(clip))
    k = max(1, min(args.top, probs.size))
    for cls in np.argsort(-probs, kind="stable")[:k]:
        print(f"{cls}\t{probs[cls]:.6f}")
    return EXIT_OK


def preview_name(seed: int, i: int, factor: float, gain_db: float) -> str:
    return f"aug_seed{seed}_{i:03d}_factor{factor:.4f}_gain{gain_db:+.2f}dB.wav"


def cmd_augment_preview(args) -> int:
    seed = 0 if args.seed is None else args.seed
    print(f"seed: {seed}")
    clip = load_wav(args.wav)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = AugmentConfig()
    for i in range(args.count):
        x, draw = augment_example(clip, config, example_rng(seed, i), return_draw=True)
        name = preview_name(seed, i, draw.factor, draw.gain_db)
        save_wav(out / name, AudioClip(x * PREVIEW_SCALE, clip.rate))
        print(name)
    return EXIT_OK


def cmd_eval(args) -> int:
    config, weights = store.load(args.model)
    index = load_index(args.index, num_classes=config.num_classes)
    _, test = split_folds(index, args.fold)
    items = load_corpus(test, args.data, rate=config.sample_rate)
    result = evaluate(build(config, min_input_len(config)), weights, items)
    print(f"fold {args.fold}: accuracy {result.accuracy:.4f} ({int(np.trace(result.confusion))}/{result.total})")
    if args.confusion:
        np.savetxt(args.confusion, result.confusion, fmt="%d", delimiter=",")
    return EXIT_OK


COMMANDS = {
    "analyze": cmd_analyze,
    "train": cmd_train,
    "infer": cmd_infer,
    "augment-preview": cmd_augment_preview,
    "eval": cmd_eval,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        code = EXIT_USAGE if args.command == "analyze" else EXIT_DATA
        print(f"error: {exc}", file=sys.stderr)
        return code
    except NumericError as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (AclNetError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
