"""Maximum-likelihood SGD training with holdout validation and early stopping."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from . import glm
from .decoding import DecoderConfig, decode
from .spike_core import LabeledExample

_SHUFFLE_SALT = 0x5A17


def make_desired_pattern(horizon: int) -> np.ndarray:
    """Desired output spike train: one spike after every three zeros."""
    if horizon < 4:
        raise ValueError("horizon must be at least one pattern period (4 samples)")
    reps = -(-horizon // 4)
    return np.tile(np.array([0, 0, 0, 1], dtype=np.uint8), reps)[:horizon]


@dataclass(frozen=True)
class DesiredOutputs:
    """Per-class desired rasters: the labeled neuron gets ``pattern``, the rest silence."""

    pattern: np.ndarray

    def __post_init__(self) -> None:
        p = np.asarray(self.pattern, dtype=np.uint8)
        if p.ndim != 1 or not np.isin(p, (0, 1)).all():
            raise ValueError("pattern must be a flat 0/1 vector")
        p.setflags(write=False)
        object.__setattr__(self, "pattern", p)

    def raster_for(self, c: int, n_outputs: int) -> np.ndarray:
        return glm.desired_raster(self.pattern, c, n_outputs)


@dataclass(frozen=True)
class TrainConfig:
    rule: str = "rate"
    lr_candidates: tuple[float, ...] = (1e-3, 1e-4)
    max_epochs: int = 200
    holdout_fraction: float = 0.2
    patience: int = 10
    init_range: float = 1.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.rule not in ("rate", "first_to_spike"):
            raise ValueError(f"unknown rule {self.rule!r}")
        lrs = tuple(float(v) for v in self.lr_candidates)
        if not lrs or any(v <= 0 for v in lrs):
            raise ValueError("lr_candidates must be nonempty positive reals")
        object.__setattr__(self, "lr_candidates", lrs)
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ValueError("holdout_fraction must lie in (0, 1)")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.init_range < 0:
            raise ValueError("init_range must be >= 0")


@dataclass
class EpochRecord:
    epoch: int
    train_nll: float
    val_accuracy: float
    learning_rate: float
    wall_time: float


@dataclass
class TrainingLog:
    records: list[EpochRecord] = field(default_factory=list)
    chosen_lr: float = 0.0
    best_epoch: int = -1
    best_val_accuracy: float = float("nan")

    def to_csv(self, path, header_lines: tuple[str, ...] = ()) -> None:
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_nll", "val_accuracy", "learning_rate", "wall_time"])
            for r in self.records:
                writer.writerow([r.epoch, repr(r.train_nll), repr(r.val_accuracy),
                                 repr(r.learning_rate), f"{r.wall_time:.3f}"])


def init_params(
    n_inputs: int,
    n_outputs: int,
    basis: glm.BasisSet,
    init_range: float = 1.0,
    seed: int = 0,
) -> glm.ModelParams:
    """All weights and biases i.i.d. uniform on [-init_range, +init_range]."""
    rng = np.random.default_rng(seed)
    r = float(init_range)
    return glm.ModelParams(
        weights=rng.uniform(-r, r, size=(n_outputs, n_inputs, basis.k_syn)),
        feedback_weights=rng.uniform(-r, r, size=(n_outputs, basis.k_fb)),
        bias=rng.uniform(-r, r, size=n_outputs),
        basis=basis,
    )


def evaluate_accuracy(params: glm.ModelParams, dataset, decoder_cfg: DecoderConfig) -> float:
    """Fraction of examples whose decoded class equals the label."""
    if not dataset:
        raise ValueError("cannot evaluate accuracy on an empty dataset")
    hits = sum(decode(params, ex.input, decoder_cfg) == ex.label for ex in dataset)
    return hits / len(dataset)


def _infer_dims(dataset) -> tuple[int, int, int]:
    n_in = dataset[0].input.num_neurons
    horizon = dataset[0].input.horizon
    n_out = max(ex.label for ex in dataset) + 1
    for ex in dataset:
        if ex.input.num_neurons != n_in or ex.input.horizon != horizon:
            raise ValueError("all examples must share raster dimensions")
    return n_in, n_out, horizon


def _split_holdout(n: int, fraction: float, rng: np.random.Generator):
    perm = rng.permutation(n)
    n_val = min(n - 1, max(1, int(round(fraction * n)))) if n > 1 else 0
    return perm[n_val:], perm[:n_val]


def _single_run(dataset, train_idx, val_idx, cfg, basis, lr, attack_spec, pattern, n_out):
    # Local import: the adversary module builds on glm but not on this module.
    from .adversary import greedy_attack

    params = init_params(dataset[0].input.num_neurons, n_out, basis, cfg.init_range, cfg.rng_seed)
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([cfg.rng_seed, _SHUFFLE_SALT]))
    val_set = [dataset[i] for i in val_idx]
    decoder_cfg = DecoderConfig(rule=cfg.rule, mode="score")
    log = TrainingLog(chosen_lr=lr)
    best_params = params.copy()
    best_acc = -1.0
    best_epoch = -1
    epochs_since_best = 0
    t0 = time.perf_counter()
    for epoch in range(1, cfg.max_epochs + 1):
        order = shuffle_rng.permutation(len(train_idx))
        nll_sum = 0.0
        for pos in order:
            ex = dataset[train_idx[pos]]
            x = ex.input
            if attack_spec is not None and attack_spec.budget(x.num_neurons, x.horizon) > 0:
                x = greedy_attack(params, x, ex.label, attack_spec, cfg.rule, pattern).x_adv
            delta = glm.grad_log_likelihood(params, x, ex.label, cfg.rule, pattern)
            params.add_scaled(delta, lr)
            nll_sum += -delta.loglik
        val_acc = evaluate_accuracy(params, val_set, decoder_cfg) if val_set else float("nan")
        log.records.append(EpochRecord(
            epoch=epoch,
            train_nll=nll_sum / max(1, len(train_idx)),
            val_accuracy=val_acc,
            learning_rate=lr,
            wall_time=time.perf_counter() - t0,
        ))
        if val_set:
            if val_acc > best_acc:
                best_acc = val_acc
                best_params = params.copy()
                best_epoch = epoch
                epochs_since_best = 0
            else:
                epochs_since_best += 1
            if epochs_since_best >= cfg.patience:
                break
    if not val_set:
        # No holdout possible (dataset of one example): keep the final iterate.
        best_params, best_acc, best_epoch = params, float("nan"), len(log.records)
    log.best_epoch = best_epoch
    log.best_val_accuracy = best_acc
    return best_params, log


def _train_loop(dataset, cfg: TrainConfig, basis=None, attack_spec=None):
    if not dataset:
        raise ValueError("cannot train on an empty dataset")
    n_in, n_out, horizon = _infer_dims(dataset)
    if basis is None:
        basis = glm.BasisSet.raised_cosine(k_syn=horizon, tau_syn=horizon)
    pattern = make_desired_pattern(horizon) if cfg.rule == "rate" else None
    split_rng = np.random.default_rng(np.random.SeedSequence([cfg.rng_seed]))
    train_idx, val_idx = _split_holdout(len(dataset), cfg.holdout_fraction, split_rng)
    best = None
    for lr in cfg.lr_candidates:
        params, log = _single_run(
            dataset, train_idx, val_idx, cfg, basis, lr, attack_spec, pattern, n_out
        )
        key = log.best_val_accuracy
        if best is None or (key == key and key > best[2]):  # NaN-safe comparison
            best = (params, log, key if key == key else -1.0)
    return best[0], best[1]


def train_ml(dataset, cfg: TrainConfig, basis: glm.BasisSet | None = None):
    """Per-example SGD ascent on the decoding rule's log-likelihood.

    Examples are reshuffled every epoch; 20 percent (by default) are held out
    and score-mode validation accuracy drives early stopping and, when several
    learning-rate candidates are given, model selection. Returns the
    best-validation parameters and the winning run's log.
    """
    return _train_loop(dataset, cfg, basis=basis, attack_spec=None)


def full_batch_ascent(dataset, params: glm.ModelParams, lr: float, iterations: int,
                      rule: str = "rate", pattern=None):
    """Diagnostic full-batch gradient ascent; returns per-iteration mean NLL.

    Exists to exercise convexity of the rate objective on tiny datasets; the
    production path is the per-example loop in train_ml.
    """
    if pattern is None and rule == "rate":
        pattern = make_desired_pattern(dataset[0].input.horizon)
    history = []
    for _ in range(iterations):
        total = glm.ParamDelta(
            weights=np.zeros_like(params.weights),
            feedback_weights=np.zeros_like(params.feedback_weights),
            bias=np.zeros_like(params.bias),
        )
        nll = 0.0
        for ex in dataset:
            delta = glm.grad_log_likelihood(params, ex.input, ex.label, rule, pattern)
            total.weights += delta.weights
            total.feedback_weights += delta.feedback_weights
            total.bias += delta.bias
            nll += -delta.loglik
        params.add_scaled(total, lr / len(dataset))
        history.append(nll / len(dataset))
    return params, history
