"""Config-driven experiment pipeline: train, sweep attacks, emit CSV reports."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import multiprocessing
import os
from dataclasses import dataclass, field

import numpy as np

from . import glm
from .adversary import AttackSpec, GREEDY_KINDS, RANDOM_KINDS, greedy_attack, random_perturb
from .dataset import DatasetConfig, load_usps
from .decoding import DecoderConfig, decode
from .encoding import EncoderConfig, encode
from .robust import RobustConfig, adversarial_train
from .spike_core import LabeledExample
from .training import TrainConfig, evaluate_accuracy, make_desired_pattern, train_ml

REPORT_FORMAT = "glmsnn report v1"

# Fixed salts for deriving independent sub-streams from the master seed.
_SALT_ENCODE_TRAIN = 101
_SALT_ENCODE_TEST = 102
_SALT_TRAINING = 103
_SALT_ATTACK = 104


class ConfigError(ValueError):
    """Invalid experiment configuration; message names the offending field."""


def _derive_seed(master: int, salt: int) -> int:
    return int(np.random.SeedSequence([master, salt]).generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class ModelConfig:
    """Basis layout; None fields default to the encoding horizon."""

    k_syn: int | None = None
    k_fb: int | None = None
    tau_syn: int | None = None
    tau_fb: int | None = None

    def build_basis(self, horizon: int) -> glm.BasisSet:
        return glm.BasisSet.raised_cosine(
            k_syn=self.k_syn or horizon,
            tau_syn=self.tau_syn or horizon,
            k_fb=self.k_fb or horizon,
            tau_fb=self.tau_fb or horizon,
        )


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig
    encoder: EncoderConfig
    decoder: DecoderConfig
    training: TrainConfig
    model: ModelConfig = ModelConfig()
    robust_attack: AttackSpec | None = None
    sweep_kinds: tuple[str, ...] = ()
    sweep_epsilons: tuple[float, ...] = ()
    sweep_horizon: int | None = None
    seed: int = 0
    out_dir: str | None = None
    workers: int = 1

    def to_canonical_dict(self) -> dict:
        d = {
            "seed": self.seed,
            "out_dir": self.out_dir,
            "workers": self.workers,
            "dataset": dataclasses.asdict(self.dataset),
            "encoder": dataclasses.asdict(self.encoder),
            "decoder": dataclasses.asdict(self.decoder),
            "model": dataclasses.asdict(self.model),
            "training": dataclasses.asdict(self.training),
            "robust": dataclasses.asdict(self.robust_attack) if self.robust_attack else None,
            "sweep": {
                "kinds": list(self.sweep_kinds),
                "epsilons": list(self.sweep_epsilons),
                "horizon": self.sweep_horizon,
            },
        }
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.to_canonical_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


def _field(section: dict, path: str, key: str, default, caster):
    if key not in section:
        if default is ...:
            raise ConfigError(f"{path}.{key}: required field missing")
        return default
    try:
        return caster(section[key])
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}.{key}: {exc}") from exc


def _check_known_keys(section: dict, path: str, known: set[str]) -> None:
    extra = set(section) - known
    if extra:
        raise ConfigError(f"{path}: unknown fields {sorted(extra)}")


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build and validate an ExperimentConfig; errors name the offending field."""
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be an object")
    _check_known_keys(raw, "config", {
        "seed", "out_dir", "workers", "dataset", "encoder", "decoder",
        "model", "training", "robust", "sweep",
    })
    seed = _field(raw, "config", "seed", 0, int)
    out_dir = raw.get("out_dir")
    workers = _field(raw, "config", "workers", 1, int)
    if workers < 1:
        raise ConfigError("config.workers: must be >= 1")

    ds = raw.get("dataset")
    if not isinstance(ds, dict):
        raise ConfigError("config.dataset: required section missing")
    _check_known_keys(ds, "dataset", {
        "train_path", "test_path", "classes",
        "train_limit_per_class", "test_limit_per_class", "split_seed",
    })
    try:
        dataset = DatasetConfig(
            train_path=_field(ds, "dataset", "train_path", ..., str),
            test_path=_field(ds, "dataset", "test_path", ..., str),
            classes=tuple(_field(ds, "dataset", "classes", (1, 5, 7, 9), list)),
            train_limit_per_class=ds.get("train_limit_per_class"),
            test_limit_per_class=ds.get("test_limit_per_class"),
            split_seed=_field(ds, "dataset", "split_seed", 0, int),
        )
    except ValueError as exc:
        raise ConfigError(f"dataset: {exc}") from exc

    enc = raw.get("encoder", {})
    _check_known_keys(enc, "encoder", {"scheme", "horizon", "rate_scale"})
    try:
        encoder = EncoderConfig(
            scheme=_field(enc, "encoder", "scheme", "rate", str),
            horizon=_field(enc, "encoder", "horizon", 16, int),
            rate_scale=_field(enc, "encoder", "rate_scale", 0.5, float),
            rng_seed=_derive_seed(seed, _SALT_ENCODE_TRAIN),
        )
    except ValueError as exc:
        raise ConfigError(f"encoder: {exc}") from exc

    dec = raw.get("decoder", {})
    _check_known_keys(dec, "decoder", {"rule", "mode", "num_samples"})
    try:
        decoder = DecoderConfig(
            rule=_field(dec, "decoder", "rule", "rate", str),
            mode=_field(dec, "decoder", "mode", "score", str),
            num_samples=_field(dec, "decoder", "num_samples", 100, int),
            rng_seed=_derive_seed(seed, _SALT_ATTACK),
        )
    except ValueError as exc:
        raise ConfigError(f"decoder: {exc}") from exc

    mdl = raw.get("model", {})
    _check_known_keys(mdl, "model", {"k_syn", "k_fb", "tau_syn", "tau_fb"})
    model = ModelConfig(
        k_syn=mdl.get("k_syn"), k_fb=mdl.get("k_fb"),
        tau_syn=mdl.get("tau_syn"), tau_fb=mdl.get("tau_fb"),
    )

    tr = raw.get("training", {})
    _check_known_keys(tr, "training", {
        "lr_candidates", "max_epochs", "holdout_fraction", "patience", "init_range",
    })
    rob = raw.get("robust")
    train_kwargs = dict(
        rule=decoder.rule,
        lr_candidates=tuple(_field(tr, "training", "lr_candidates", [1e-3, 1e-4], list)),
        max_epochs=_field(tr, "training", "max_epochs", 200, int),
        holdout_fraction=_field(tr, "training", "holdout_fraction", 0.2, float),
        patience=_field(tr, "training", "patience", 10, int),
        init_range=_field(tr, "training", "init_range", 1.0, float),
        rng_seed=_derive_seed(seed, _SALT_TRAINING),
    )
    robust_attack = None
    try:
        if rob is not None:
            _check_known_keys(rob, "robust", {"kind", "epsilon", "horizon"})
            robust_attack = AttackSpec(
                kind=_field(rob, "robust", "kind", "flip", str),
                epsilon=_field(rob, "robust", "epsilon", ..., float),
                horizon=rob.get("horizon"),
            )
            training: TrainConfig = RobustConfig(
                attack_kind=robust_attack.kind,
                attack_epsilon=robust_attack.epsilon,
                attack_horizon=robust_attack.horizon,
                **train_kwargs,
            )
        else:
            training = TrainConfig(**train_kwargs)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"training/robust: {exc}") from exc

    sw = raw.get("sweep", {})
    _check_known_keys(sw, "sweep", {"kinds", "epsilons", "horizon"})
    kinds = tuple(_field(sw, "sweep", "kinds", [], list))
    for k in kinds:
        if k not in GREEDY_KINDS + RANDOM_KINDS:
            raise ConfigError(f"sweep.kinds: unknown attack kind {k!r}")
    epsilons = tuple(float(e) for e in _field(sw, "sweep", "epsilons", [], list))
    for i, e in enumerate(epsilons):
        if not 0.0 <= e <= 1.0:
            raise ConfigError(f"sweep.epsilons[{i}]: must lie in [0, 1], got {e}")
    sweep_horizon = sw.get("horizon")
    if sweep_horizon is not None and int(sweep_horizon) < 1:
        raise ConfigError("sweep.horizon: must be >= 1")

    return ExperimentConfig(
        dataset=dataset, encoder=encoder, decoder=decoder, training=training,
        model=model, robust_attack=robust_attack, sweep_kinds=kinds,
        sweep_epsilons=epsilons, sweep_horizon=sweep_horizon,
        seed=seed, out_dir=out_dir, workers=workers,
    )


def load_config_file(path, seed=None, out_dir=None, dataset_path=None, workers=None) -> ExperimentConfig:
    """Parse a JSON config file, applying CLI-style overrides before validation."""
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: not valid JSON ({exc})") from exc
    if seed is not None:
        raw["seed"] = seed
    if out_dir is not None:
        raw["out_dir"] = out_dir
    if workers is not None:
        raw["workers"] = workers
    if dataset_path is not None:
        raw.setdefault("dataset", {})
        raw["dataset"]["train_path"] = os.path.join(dataset_path, "usps.train")
        raw["dataset"]["test_path"] = os.path.join(dataset_path, "usps.test")
    return config_from_dict(raw)


def prepare_data(cfg: ExperimentConfig):
    """Load, filter and encode the dataset into labeled spike-train examples.

    Encoder streams are keyed on each image's source index, so filtering and
    encoding commute; train and test use independent sub-seeds.
    """
    train_imgs, test_imgs = load_usps(cfg.dataset)
    enc_train = cfg.encoder
    enc_test = dataclasses.replace(cfg.encoder, rng_seed=_derive_seed(cfg.seed, _SALT_ENCODE_TEST))
    train = [LabeledExample(encode(im, enc_train, im.source_index), im.label) for im in train_imgs]
    test = [LabeledExample(encode(im, enc_test, im.source_index), im.label) for im in test_imgs]
    return train, test


def train_for_config(cfg: ExperimentConfig, train_examples):
    basis = cfg.model.build_basis(cfg.encoder.horizon)
    if isinstance(cfg.training, RobustConfig):
        return adversarial_train(train_examples, cfg.training, basis=basis)
    return train_ml(train_examples, cfg.training, basis=basis)


@dataclass
class ReportRow:
    kind: str
    epsilon: float
    accuracy: float
    n_examples: int
    seed: int


@dataclass
class ExperimentReport:
    clean_accuracy: float
    rows: list[ReportRow] = field(default_factory=list)
    config_hash: str = ""
    seed: int = 0

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# {REPORT_FORMAT}\n")
            fh.write(f"# config_sha256={self.config_hash}\n")
            fh.write(f"# seed={self.seed}\n")
            fh.write(f"# clean_accuracy={self.clean_accuracy!r}\n")
            writer = csv.writer(fh)
            writer.writerow(["kind", "epsilon", "accuracy", "n_examples", "seed"])
            for r in self.rows:
                writer.writerow([r.kind, repr(r.epsilon), repr(r.accuracy), r.n_examples, r.seed])


_SWEEP_CTX: dict = {}


def _sweep_one(idx: int) -> bool:
    ctx = _SWEEP_CTX
    ex = ctx["examples"][idx]
    kind = ctx["kind"]
    spec = ctx["spec"]
    if spec.budget(ex.input.num_neurons, ex.input.horizon) == 0:
        x = ex.input
    elif kind in GREEDY_KINDS:
        x = greedy_attack(ctx["params"], ex.input, ex.label, spec, ctx["rule"], ctx["pattern"]).x_adv
    else:
        rng = np.random.default_rng(
            np.random.SeedSequence([ctx["seed"], _SALT_ATTACK, ctx["kind_code"], ctx["budget"], idx])
        )
        x = random_perturb(ex.input, spec, rng)
    return decode(ctx["params"], x, ctx["decoder"]) == ex.label


def attacked_accuracy(params, examples, kind: str, epsilon: float, rule: str,
                      decoder_cfg: DecoderConfig, pattern=None, attack_horizon=None,
                      seed: int = 0, workers: int = 1) -> float:
    """Accuracy on examples after perturbing each one with the given attack.

    Greedy attacks are deterministic; random baselines draw a per-example
    stream keyed on (seed, kind, budget, example position), so results do not
    depend on evaluation order or worker count.
    """
    if not examples:
        raise ValueError("cannot evaluate accuracy on an empty dataset")
    spec = AttackSpec(kind, epsilon, attack_horizon)
    all_kinds = GREEDY_KINDS + RANDOM_KINDS
    budget = spec.budget(examples[0].input.num_neurons, examples[0].input.horizon)
    global _SWEEP_CTX
    _SWEEP_CTX = {
        "params": params, "examples": examples, "kind": kind, "spec": spec,
        "rule": rule, "decoder": decoder_cfg, "pattern": pattern,
        "seed": seed, "kind_code": all_kinds.index(kind), "budget": budget,
    }
    try:
        n = len(examples)
        if workers > 1:
            with multiprocessing.get_context("fork").Pool(workers) as pool:
                hits = pool.map(_sweep_one, range(n), chunksize=max(1, n // (workers * 4)))
        else:
            hits = [_sweep_one(i) for i in range(n)]
    finally:
        _SWEEP_CTX = {}
    return sum(hits) / n


def sweep_rows(cfg: ExperimentConfig, params, test_examples, clean_accuracy: float):
    pattern = make_desired_pattern(cfg.encoder.horizon) if cfg.decoder.rule == "rate" else None
    rows = []
    for kind in cfg.sweep_kinds:
        for eps in cfg.sweep_epsilons:
            spec = AttackSpec(kind, eps, cfg.sweep_horizon)
            if spec.budget(test_examples[0].input.num_neurons, cfg.encoder.horizon) == 0:
                acc = clean_accuracy  # zero budget perturbs nothing
            else:
                acc = attacked_accuracy(
                    params, test_examples, kind, eps, cfg.decoder.rule, cfg.decoder,
                    pattern=pattern, attack_horizon=cfg.sweep_horizon,
                    seed=cfg.seed, workers=cfg.workers,
                )
            rows.append(ReportRow(kind, eps, acc, len(test_examples), cfg.seed))
    return rows


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Train per the config, evaluate clean accuracy, sweep attacks, write artifacts."""
    train_examples, test_examples = prepare_data(cfg)
    params, log = train_for_config(cfg, train_examples)
    clean = evaluate_accuracy(params, test_examples, cfg.decoder)
    report = ExperimentReport(
        clean_accuracy=clean,
        rows=sweep_rows(cfg, params, test_examples, clean),
        config_hash=cfg.config_hash(),
        seed=cfg.seed,
    )
    if cfg.out_dir:
        os.makedirs(cfg.out_dir, exist_ok=True)
        glm.save_checkpoint(
            os.path.join(cfg.out_dir, "checkpoint.bin"), params,
            horizon=cfg.encoder.horizon, decoding=cfg.decoder.rule,
        )
        log.to_csv(
            os.path.join(cfg.out_dir, "training_log.csv"),
            header_lines=(f"config_sha256={cfg.config_hash()}", f"seed={cfg.seed}"),
        )
        report.to_csv(os.path.join(cfg.out_dir, "report.csv"))
    return report
