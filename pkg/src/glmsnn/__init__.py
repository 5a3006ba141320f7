"""Two-layer probabilistic spiking network classifier with Bernoulli-GLM neurons.

Provides rate/latency spike encoders, maximum-likelihood training under rate
and first-to-spike readouts, white-box greedy spike-train attacks, random
perturbation baselines, adversarial (robust) training, and a config-driven
experiment pipeline.
"""

from .adversary import (
    AttackResult,
    AttackSpec,
    LikelihoodCache,
    StaleCacheError,
    greedy_attack,
    greedy_step_incremental,
    least_likely_class,
    random_perturb,
)
from .decoding import DecoderConfig, decode, decode_first_to_spike, decode_rate
from .encoding import EncoderConfig, encode, encode_rate, encode_time
from .glm import (
    BasisSet,
    ModelParams,
    ParamDelta,
    fts_log_likelihood,
    grad_fts,
    grad_rate,
    load_checkpoint,
    membrane_potential,
    neuron_log_likelihood,
    potentials,
    raised_cosine_basis,
    rate_log_likelihood,
    sample_outputs,
    save_checkpoint,
)
from .dataset import DatasetConfig, load_usps, write_synthetic_usps
from .experiment import ExperimentConfig, ExperimentReport, attacked_accuracy, run_experiment
from .robust import RobustConfig, adversarial_train
from .spike_core import (
    LabeledExample,
    PixelImage,
    SpikeTrain,
    apply_perturbation,
    hamming_distance,
)
from .training import (
    DesiredOutputs,
    TrainConfig,
    TrainingLog,
    evaluate_accuracy,
    init_params,
    make_desired_pattern,
    train_ml,
)

__version__ = "0.1.0"
