"""Experiment command line: train, robust-train, eval, attack, sweep."""

from __future__ import annotations

import argparse
import os
import sys

from . import glm
from .adversary import AttackSpec, GREEDY_KINDS, RANDOM_KINDS, greedy_attack, random_perturb, write_trace_csv
from .decoding import decode
from .experiment import (
    ConfigError,
    load_config_file,
    prepare_data,
    run_experiment,
    train_for_config,
)
from .robust import RobustConfig
from .training import evaluate_accuracy, make_desired_pattern


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="JSON experiment config file")
    p.add_argument("--seed", type=int, default=None, help="override the master seed")
    p.add_argument("--out-dir", default=None, help="override the output directory")
    p.add_argument("--dataset-path", default=None,
                   help="directory holding usps.train and usps.test (overrides config paths)")
    p.add_argument("--workers", type=int, default=None, help="parallel workers for attack sweeps")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="glmsnn",
        description="Probabilistic spiking-network classifier: training, attacks, robustness sweeps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="maximum-likelihood training; writes checkpoint + log")
    _add_common(p_train)

    p_rob = sub.add_parser("robust-train", help="adversarial training (config must have a robust section)")
    _add_common(p_rob)

    p_eval = sub.add_parser("eval", help="clean test accuracy of a saved checkpoint")
    _add_common(p_eval)
    p_eval.add_argument("--checkpoint", required=True)

    p_att = sub.add_parser("attack", help="attack one test example; dump raster and trace")
    _add_common(p_att)
    p_att.add_argument("--checkpoint", required=True)
    p_att.add_argument("--index", type=int, default=0, help="test-example index")
    p_att.add_argument("--kind", default="flip", choices=GREEDY_KINDS + RANDOM_KINDS)
    p_att.add_argument("--epsilon", type=float, required=True)
    p_att.add_argument("--attack-horizon", type=int, default=None)

    p_sweep = sub.add_parser("sweep", help="full pipeline: train, then accuracy-vs-epsilon sweep CSV")
    _add_common(p_sweep)
    return parser


def _load(args) -> "ExperimentConfig":
    return load_config_file(
        args.config, seed=args.seed, out_dir=args.out_dir,
        dataset_path=args.dataset_path, workers=args.workers,
    )


def _out_dir(cfg) -> str:
    out = cfg.out_dir or "."
    os.makedirs(out, exist_ok=True)
    return out


def _train_common(cfg) -> int:
    train_examples, test_examples = prepare_data(cfg)
    params, log = train_for_config(cfg, train_examples)
    out = _out_dir(cfg)
    ckpt = os.path.join(out, "checkpoint.bin")
    glm.save_checkpoint(ckpt, params, horizon=cfg.encoder.horizon, decoding=cfg.decoder.rule)
    log.to_csv(os.path.join(out, "training_log.csv"),
               header_lines=(f"config_sha256={cfg.config_hash()}", f"seed={cfg.seed}"))
    acc = evaluate_accuracy(params, test_examples, cfg.decoder)
    print(f"trained: lr={log.chosen_lr} best_epoch={log.best_epoch} "
          f"val_accuracy={log.best_val_accuracy!r}")
    print(f"checkpoint: {ckpt}")
    print(f"test_accuracy={acc!r}")
    return 0


def cmd_train(args) -> int:
    cfg = _load(args)
    if isinstance(cfg.training, RobustConfig):
        raise ConfigError("robust: remove this section (or use robust-train) for plain training")
    return _train_common(cfg)


def cmd_robust_train(args) -> int:
    cfg = _load(args)
    if not isinstance(cfg.training, RobustConfig):
        raise ConfigError("robust: section required for robust-train")
    return _train_common(cfg)


def cmd_eval(args) -> int:
    cfg = _load(args)
    params, meta = glm.load_checkpoint(args.checkpoint)
    if meta["decoding"] != cfg.decoder.rule:
        raise ConfigError(
            f"decoder.rule: config says {cfg.decoder.rule!r} but checkpoint was "
            f"trained for {meta['decoding']!r}"
        )
    _, test_examples = prepare_data(cfg)
    acc = evaluate_accuracy(params, test_examples, cfg.decoder)
    print(f"test_accuracy={acc!r}")
    return 0


def cmd_attack(args) -> int:
    cfg = _load(args)
    params, meta = glm.load_checkpoint(args.checkpoint)
    _, test_examples = prepare_data(cfg)
    if not 0 <= args.index < len(test_examples):
        raise ConfigError(f"--index: must lie in [0, {len(test_examples)})")
    ex = test_examples[args.index]
    spec = AttackSpec(args.kind, args.epsilon, args.attack_horizon)
    pattern = make_desired_pattern(cfg.encoder.horizon) if cfg.decoder.rule == "rate" else None
    out = _out_dir(cfg)
    header = (f"config_sha256={cfg.config_hash()}", f"seed={cfg.seed}")
    if args.kind in GREEDY_KINDS:
        result = greedy_attack(params, ex.input, ex.label, spec, cfg.decoder.rule, pattern)
        x_adv = result.x_adv
        write_trace_csv(os.path.join(out, "attack_trace.csv"), result, header_lines=header)
        print(f"target_class={result.target_class} steps={len(result.trace)}")
    else:
        x_adv = random_perturb(ex.input, spec, cfg.seed)
    raster_path = os.path.join(out, "adversarial_raster.txt")
    with open(raster_path, "w") as fh:
        fh.write(x_adv.to_text())
    before = decode(params, ex.input, cfg.decoder)
    after = decode(params, x_adv, cfg.decoder)
    print(f"label={ex.label} decoded_clean={before} decoded_attacked={after}")
    print(f"raster: {raster_path}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args)
    if not cfg.sweep_kinds or not cfg.sweep_epsilons:
        raise ConfigError("sweep: kinds and epsilons must be nonempty for the sweep command")
    report = run_experiment(cfg)
    print(f"clean_accuracy={report.clean_accuracy!r}")
    for row in report.rows:
        print(f"{row.kind} epsilon={row.epsilon!r} accuracy={row.accuracy!r}")
    if cfg.out_dir:
        print(f"report: {os.path.join(cfg.out_dir, 'report.csv')}")
    return 0


_COMMANDS = {
    "train": cmd_train,
    "robust-train": cmd_robust_train,
    "eval": cmd_eval,
    "attack": cmd_attack,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
