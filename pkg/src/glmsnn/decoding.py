"""Readout rules mapping output-layer activity to a predicted class."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import glm

RULES = ("rate", "first_to_spike")
MODES = ("score", "sampled")


@dataclass(frozen=True)
class DecoderConfig:
    rule: str = "rate"
    mode: str = "score"
    num_samples: int = 100
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.rule not in RULES:
            raise ValueError(f"rule must be one of {RULES}, got {self.rule!r}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.num_samples < 1:
            raise ValueError("num_samples must be >= 1")


def first_spike_winner(raster: np.ndarray) -> tuple[int, bool]:
    """Earliest-spiking neuron of one output raster.

    Ties at the same sample go to the lowest neuron index. A fully silent
    raster is not a decision; neuron 0 is returned with decisive=False.
    """
    spike_times = np.where(raster.any(axis=1), raster.argmax(axis=1), raster.shape[1])
    t_min = spike_times.min()
    if t_min == raster.shape[1]:
        return 0, False
    return int(spike_times.argmin()), True


def decode_rate(params: glm.ModelParams, x, cfg: DecoderConfig) -> int:
    """Class of the neuron with the largest spike count (ties: lowest index).

    Score mode replaces counts with their deterministic zero-feedback
    expectation sum_t g(u); sampled mode totals counts over num_samples draws.
    """
    if cfg.rule != "rate":
        raise ValueError(f"decode_rate called with rule {cfg.rule!r}")
    if cfg.mode == "score":
        scores = expit(glm.potentials(params, x, None)).sum(axis=1)
    else:
        rng = np.random.default_rng(cfg.rng_seed)
        draws = glm.sample_output_batch(params, x, rng, cfg.num_samples)
        scores = draws.sum(axis=(0, 2))
    return int(np.argmax(scores))


def decode_first_to_spike(params: glm.ModelParams, x, cfg: DecoderConfig) -> int:
    """Class of the neuron that spikes first.

    Score mode picks the class with the largest first-to-spike log-likelihood;
    sampled mode takes a majority vote of per-draw earliest spikers (silent
    draws count for neuron 0). Ties break toward the lowest class index.
    """
    if cfg.rule != "first_to_spike":
        raise ValueError(f"decode_first_to_spike called with rule {cfg.rule!r}")
    if cfg.mode == "score":
        return int(np.argmax(glm.fts_log_likelihood_all(params, x)))
    rng = np.random.default_rng(cfg.rng_seed)
    draws = glm.sample_output_batch(params, x, rng, cfg.num_samples)
    votes = np.zeros(params.n_outputs, dtype=np.int64)
    for raster in draws:
        winner, _ = first_spike_winner(raster)
        votes[winner] += 1
    return int(np.argmax(votes))


def decode(params: glm.ModelParams, x, cfg: DecoderConfig) -> int:
    if cfg.rule == "rate":
        return decode_rate(params, x, cfg)
    return decode_first_to_spike(params, x, cfg)
