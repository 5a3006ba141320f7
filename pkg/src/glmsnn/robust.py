"""Adversarial (robust) training: SGD on attacks against the live parameters."""

from __future__ import annotations

from dataclasses import dataclass

from . import glm
from .adversary import AttackSpec, GREEDY_KINDS
from .training import TrainConfig, _train_loop


@dataclass(frozen=True)
class RobustConfig(TrainConfig):
    """TrainConfig plus the attack assumed during training.

    ``attack_epsilon`` and ``attack_horizon`` parameterize the inner greedy
    attack (flip by default); with attack_epsilon = 0 the procedure reduces to
    plain maximum-likelihood training, update for update.
    """

    attack_kind: str = "flip"
    attack_epsilon: float = 0.0
    attack_horizon: int | None = None

    def __post_init__(self) -> None:
        super().__post_init__()
        if self.attack_kind not in GREEDY_KINDS:
            raise ValueError(f"attack_kind must be one of {GREEDY_KINDS}")
        if not 0.0 <= self.attack_epsilon <= 1.0:
            raise ValueError("attack_epsilon must lie in [0, 1]")
        if self.attack_horizon is not None and self.attack_horizon < 1:
            raise ValueError("attack_horizon must be >= 1")


def adversarial_train(dataset, cfg: RobustConfig, basis: glm.BasisSet | None = None):
    """Per-example SGD where each example is replaced by its adversarial version.

    Every iteration attacks the picked example with the greedy method against
    the current parameters, then ascends the log-likelihood of (x_adv, c) with
    the true label. Shuffling, holdout, early stopping and learning-rate
    selection are identical to train_ml.
    """
    spec = AttackSpec(cfg.attack_kind, cfg.attack_epsilon, cfg.attack_horizon)
    return _train_loop(dataset, cfg, basis=basis, attack_spec=spec)
