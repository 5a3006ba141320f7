"""Bernoulli GLM output neurons: basis-expanded kernels, membrane potentials,
log-likelihoods under rate and first-to-spike readouts, their exact gradients,
and autoregressive sampling.

Conventions used throughout:
  * time indices are 0-based in code; sample t sees input/feedback history
    strictly before t (a window of ``tau`` samples, zero-padded at the start),
  * all probability arithmetic stays in the log domain (softplus, log-sum-exp),
  * the spiking nonlinearity is the logistic sigmoid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logsumexp, softmax

from .spike_core import SpikeTrain

ACTIVATION = "sigmoid"
CHECKPOINT_MAGIC = b"GLMSNN\x01\n"
CHECKPOINT_VERSION = 1


def raised_cosine_basis(num_bases: int, span: int) -> np.ndarray:
    """Raised-cosine bumps on a window of ``span`` samples, one column per basis.

    Centers are evenly spaced over [1, span] and the half-period equals the
    center spacing, so adjacent bumps cross at half height. The phase is clamped
    to [-pi, pi], which keeps every entry in [0, 1] and makes each bump attain 1
    at its center sample whenever the center is integral. With
    num_bases == span the matrix is the identity.
    """
    if num_bases < 1 or span < 1:
        raise ValueError("num_bases and span must be >= 1")
    centers = np.linspace(1.0, float(span), num_bases)
    if num_bases > 1 and centers[1] > centers[0]:
        half_period = centers[1] - centers[0]
    else:
        half_period = max(1.0, float(span) - 1.0)
    t = np.arange(1, span + 1, dtype=np.float64)[:, None]
    phase = np.pi * (t - centers[None, :]) / half_period
    np.clip(phase, -np.pi, np.pi, out=phase)
    return 0.5 * np.cos(phase) + 0.5


@dataclass(frozen=True)
class BasisSet:
    """Fixed basis matrices for the synaptic and feedback kernels.

    ``synaptic`` has shape (tau_syn, k_syn): kernels are linear combinations of
    its columns and act on the tau_syn input samples preceding the current one
    (last kernel entry pairs with the most recent sample). ``feedback`` plays
    the same role for the neuron's own output history.
    """

    synaptic: np.ndarray
    feedback: np.ndarray
    kind: str = "raised_cosine"

    def __post_init__(self) -> None:
        for name in ("synaptic", "feedback"):
            m = np.ascontiguousarray(np.asarray(getattr(self, name), dtype=np.float64))
            if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
                raise ValueError(f"{name} basis must be a nonempty 2-D matrix")
            if not np.isfinite(m).all():
                raise ValueError(f"{name} basis must be finite")
            m.setflags(write=False)
            object.__setattr__(self, name, m)

    @property
    def tau_syn(self) -> int:
        return self.synaptic.shape[0]

    @property
    def k_syn(self) -> int:
        return self.synaptic.shape[1]

    @property
    def tau_fb(self) -> int:
        return self.feedback.shape[0]

    @property
    def k_fb(self) -> int:
        return self.feedback.shape[1]

    @classmethod
    def raised_cosine(
        cls,
        k_syn: int,
        tau_syn: int,
        k_fb: int | None = None,
        tau_fb: int | None = None,
    ) -> "BasisSet":
        k_fb = k_syn if k_fb is None else k_fb
        tau_fb = tau_syn if tau_fb is None else tau_fb
        return cls(
            synaptic=raised_cosine_basis(k_syn, tau_syn),
            feedback=raised_cosine_basis(k_fb, tau_fb),
        )


@dataclass
class ModelParams:
    """Learnable parameters of the output layer.

    weights: (n_outputs, n_inputs, k_syn) synaptic weight vectors
    feedback_weights: (n_outputs, k_fb)
    bias: (n_outputs,)

    Reads (likelihoods, gradients, decoding) are pure and safe to run
    concurrently; updates require exclusive ownership of the instance.
    """

    weights: np.ndarray
    feedback_weights: np.ndarray
    bias: np.ndarray
    basis: BasisSet

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.feedback_weights = np.asarray(self.feedback_weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 3:
            raise ValueError("weights must have shape (n_outputs, n_inputs, k_syn)")
        n_out = self.weights.shape[0]
        if self.weights.shape[2] != self.basis.k_syn:
            raise ValueError("weights trailing dim must match synaptic basis count")
        if self.feedback_weights.shape != (n_out, self.basis.k_fb):
            raise ValueError("feedback_weights must have shape (n_outputs, k_fb)")
        if self.bias.shape != (n_out,):
            raise ValueError("bias must have shape (n_outputs,)")
        for arr in (self.weights, self.feedback_weights, self.bias):
            if not np.isfinite(arr).all():
                raise ValueError("parameters must be finite")

    @property
    def n_outputs(self) -> int:
        return self.weights.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.weights.copy(), self.feedback_weights.copy(), self.bias.copy(), self.basis
        )

    def synaptic_kernels(self) -> np.ndarray:
        """Per-synapse temporal kernels, shape (n_outputs, n_inputs, tau_syn)."""
        return np.einsum("sk,ijk->ijs", self.basis.synaptic, self.weights)

    def feedback_kernels(self) -> np.ndarray:
        """Per-neuron feedback kernels, shape (n_outputs, tau_fb)."""
        return self.feedback_weights @ self.basis.feedback.T

    def add_scaled(self, delta: "ParamDelta", scale: float) -> None:
        """In-place update: params += scale * delta."""
        self.weights += scale * delta.weights
        self.feedback_weights += scale * delta.feedback_weights
        self.bias += scale * delta.bias


@dataclass
class ParamDelta:
    """Gradient (or update direction) with the same structure as ModelParams."""

    weights: np.ndarray
    feedback_weights: np.ndarray
    bias: np.ndarray
    loglik: float = 0.0


def _as_raster(x) -> np.ndarray:
    return x.data if isinstance(x, SpikeTrain) else np.asarray(x)


def windowed_features(raster, basis: np.ndarray) -> np.ndarray:
    """Basis-filtered history features, shape (n_rows, T, K).

    Entry [j, t, k] is the dot product of basis column k with the tau samples
    of row j strictly preceding t (zero-padded before the trial start).
    """
    r = np.asarray(_as_raster(raster), dtype=np.float64)
    n, t_len = r.shape
    tau = basis.shape[0]
    padded = np.zeros((n, t_len + tau), dtype=np.float64)
    padded[:, tau:] = r
    windows = np.lib.stride_tricks.sliding_window_view(padded, tau, axis=1)[:, :t_len]
    return windows @ basis


def potentials(params: ModelParams, x, feedback=None) -> np.ndarray:
    """Membrane potential matrix u of shape (n_outputs, T).

    ``feedback`` is the output raster providing each neuron's own spike
    history; None means an all-zero history (the readout-stage convention).
    """
    f = windowed_features(x, params.basis.synaptic)
    u = np.einsum("jtk,ijk->it", f, params.weights, optimize=True)
    if feedback is not None:
        g = windowed_features(feedback, params.basis.feedback)
        u += np.einsum("itk,ik->it", g, params.feedback_weights)
    return u + params.bias[:, None]


def membrane_potential(params: ModelParams, x, feedback, i: int, t: int) -> float:
    """u_{i,t} for output neuron i at (0-based) sample t."""
    x_arr = _as_raster(x)
    t_len = x_arr.shape[1]
    if not 0 <= t < t_len:
        raise IndexError(f"time index {t} outside [0, {t_len})")
    if not 0 <= i < params.n_outputs:
        raise IndexError(f"output index {i} outside [0, {params.n_outputs})")
    return float(potentials(params, x_arr, feedback)[i, t])


def _bernoulli_loglik(u: np.ndarray, y: np.ndarray) -> np.ndarray:
    # y*log g(u) + (1-y)*log(1-g(u)) == y*u - softplus(u), stable for large |u|
    return y * u - np.logaddexp(0.0, u)


def log_sigmoid(u: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -u)


def log_one_minus_sigmoid(u: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, u)


def neuron_log_likelihood(params: ModelParams, x, y_i, i: int) -> float:
    """Log-probability of output row ``y_i`` for neuron i given input x.

    The neuron's own row supplies the feedback history (its spikes condition
    the later samples), so summing exp of this over all 2^T rows gives 1.
    """
    y = np.asarray(_as_raster(y_i), dtype=np.float64).reshape(-1)
    f = windowed_features(x, params.basis.synaptic)
    u = np.einsum("jtk,jk->t", f, params.weights[i], optimize=True)
    g = windowed_features(y[None, :], params.basis.feedback)[0]
    u = u + g @ params.feedback_weights[i] + params.bias[i]
    return float(_bernoulli_loglik(u, y).sum())


def desired_raster(pattern, c: int, n_outputs: int) -> np.ndarray:
    """Desired output rasters: ``pattern`` on the labeled neuron, zeros elsewhere."""
    pattern = np.asarray(pattern, dtype=np.float64).reshape(-1)
    d = np.zeros((n_outputs, pattern.size), dtype=np.float64)
    d[c] = pattern
    return d


def rate_log_likelihood(params: ModelParams, x, c: int, desired) -> float:
    """Joint log-likelihood of the desired outputs for class c (rate readout).

    ``desired`` is either the length-T spike pattern assigned to the correct
    neuron (all other neurons get silence) or a full (n_outputs, T) raster.
    Feedback is teacher-forced on the desired rows.
    """
    d = np.asarray(_as_raster(desired), dtype=np.float64)
    if d.ndim == 1:
        d = desired_raster(d, c, params.n_outputs)
    u = potentials(params, x, d)
    return float(_bernoulli_loglik(u, d).sum())


def rate_log_likelihood_all(params: ModelParams, x, pattern) -> np.ndarray:
    """Vector of rate log-likelihoods L(x, c') for every class c'.

    Shares the zero-history potentials across classes: only the labeled
    neuron's feedback term differs between class hypotheses.
    """
    pattern = np.asarray(pattern, dtype=np.float64).reshape(-1)
    u0 = potentials(params, x, None)
    g_pat = windowed_features(pattern[None, :], params.basis.feedback)[0]
    u_pat = u0 + params.feedback_weights @ g_pat.T
    silent = log_one_minus_sigmoid(u0).sum(axis=1)
    patterned = _bernoulli_loglik(u_pat, pattern[None, :]).sum(axis=1)
    return silent.sum() - silent + patterned


def _fts_log_terms(params: ModelParams, x):
    u0 = potentials(params, x, None)
    lg = log_sigmoid(u0)
    lgb = log_one_minus_sigmoid(u0)
    return u0, lg, lgb


def fts_log_event_matrix(lg: np.ndarray, lgb: np.ndarray) -> np.ndarray:
    """log p_t(c) for every class c and time t, shape (n_outputs, T).

    p_t(c) is the probability that neuron c emits the first spike at sample t
    while every other neuron stays silent through t, under zero-feedback
    potentials (independent Bernoullis).
    """
    total = lgb.sum(axis=0).cumsum()
    return total[None, :] - lgb + lg


def fts_log_likelihood_all(params: ModelParams, x) -> np.ndarray:
    """Vector of first-to-spike log-likelihoods over classes: log sum_t p_t(c)."""
    _, lg, lgb = _fts_log_terms(params, x)
    return logsumexp(fts_log_event_matrix(lg, lgb), axis=1)


def fts_log_likelihood(params: ModelParams, x, c: int) -> float:
    return float(fts_log_likelihood_all(params, x)[c])


def class_log_likelihoods(params: ModelParams, x, rule: str, pattern=None) -> np.ndarray:
    """Per-class log-likelihood vector under the given readout rule."""
    if rule == "rate":
        if pattern is None:
            raise ValueError("rate rule needs the desired spike pattern")
        return rate_log_likelihood_all(params, x, pattern)
    if rule == "first_to_spike":
        return fts_log_likelihood_all(params, x)
    raise ValueError(f"unknown rule {rule!r}")


def grad_rate(params: ModelParams, x, c: int, desired) -> ParamDelta:
    """Exact gradient of the rate log-likelihood w.r.t. all parameters.

    Per-sample error is (y - g(u)); it is projected on the basis-filtered
    input windows for the synaptic weights, on the filtered desired-output
    windows for the feedback weights, and summed for the biases.
    """
    d = np.asarray(_as_raster(desired), dtype=np.float64)
    if d.ndim == 1:
        d = desired_raster(d, c, params.n_outputs)
    f = windowed_features(x, params.basis.synaptic)
    g = windowed_features(d, params.basis.feedback)
    u = np.einsum("jtk,ijk->it", f, params.weights, optimize=True)
    u += np.einsum("itk,ik->it", g, params.feedback_weights)
    u += params.bias[:, None]
    err = d - expit(u)
    return ParamDelta(
        weights=np.einsum("it,jtk->ijk", err, f, optimize=True),
        feedback_weights=np.einsum("it,itk->ik", err, g, optimize=True),
        bias=err.sum(axis=1),
        loglik=float(_bernoulli_loglik(u, d).sum()),
    )


def grad_fts(params: ModelParams, x, c: int) -> ParamDelta:
    """Exact gradient of the first-to-spike log-likelihood for class c.

    With L = log sum_t p_t the gradient is the p-weighted mix of the per-t
    event gradients; the mixing weights are a softmax over log p_t. Potentials
    carry no output feedback here, so the feedback-weight gradient is zero.
    """
    u0, lg, lgb = _fts_log_terms(params, x)
    q = fts_log_event_matrix(lg, lgb)[c]
    w = softmax(q)
    tail = np.cumsum(w[::-1])[::-1]  # tail[t] = sum_{t' >= t} w_{t'}
    s = expit(u0)
    err = -s * tail[None, :]
    err[c] = w * (1.0 - s[c]) - s[c] * (tail - w)
    f = windowed_features(x, params.basis.synaptic)
    return ParamDelta(
        weights=np.einsum("it,jtk->ijk", err, f, optimize=True),
        feedback_weights=np.zeros_like(params.feedback_weights),
        bias=err.sum(axis=1),
        loglik=float(logsumexp(q)),
    )


def grad_log_likelihood(params: ModelParams, x, c: int, rule: str, pattern=None) -> ParamDelta:
    if rule == "rate":
        if pattern is None:
            raise ValueError("rate rule needs the desired spike pattern")
        return grad_rate(params, x, c, pattern)
    if rule == "first_to_spike":
        return grad_fts(params, x, c)
    raise ValueError(f"unknown rule {rule!r}")


def sample_output_batch(
    params: ModelParams, x, rng: np.random.Generator, num_draws: int
) -> np.ndarray:
    """Draw output rasters autoregressively, shape (num_draws, n_outputs, T).

    At each sample the spiking probability is g(u) with u built from the
    already-sampled feedback history of the same draw.
    """
    x_arr = _as_raster(x)
    t_len = x_arr.shape[1]
    base = potentials(params, x_arr, None)
    beta = params.feedback_kernels()  # (n_outputs, tau_fb)
    tau = beta.shape[1]
    y = np.zeros((num_draws, params.n_outputs, t_len), dtype=np.uint8)
    for t in range(t_len):
        lo = max(0, t - tau)
        if t > lo:
            hist = y[:, :, lo:t].astype(np.float64)
            fb = np.einsum("mih,ih->mi", hist, beta[:, tau - (t - lo):], optimize=True)
        else:
            fb = 0.0
        p = expit(base[None, :, t] + fb)
        y[:, :, t] = rng.random((num_draws, params.n_outputs)) < p
    return y


def sample_outputs(params: ModelParams, x, rng: np.random.Generator) -> SpikeTrain:
    """Draw one output raster from the generative model."""
    return SpikeTrain(sample_output_batch(params, x, rng, 1)[0])


def save_checkpoint(path, params: ModelParams, horizon: int, decoding: str) -> None:
    """Self-describing binary checkpoint; round-trips bit-exactly.

    Layout: magic, uint32 little-endian header length, UTF-8 JSON header, then
    the synaptic basis, feedback basis, weights, feedback_weights and bias as
    float64 little-endian in C order.
    """
    header = {
        "format_version": CHECKPOINT_VERSION,
        "n_inputs": params.n_inputs,
        "n_outputs": params.n_outputs,
        "horizon": int(horizon),
        "k_syn": params.basis.k_syn,
        "k_fb": params.basis.k_fb,
        "tau_syn": params.basis.tau_syn,
        "tau_fb": params.basis.tau_fb,
        "basis_kind": params.basis.kind,
        "activation": ACTIVATION,
        "decoding": decoding,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(np.array(len(blob), dtype="<u4").tobytes())
        fh.write(blob)
        for arr in (
            params.basis.synaptic,
            params.basis.feedback,
            params.weights,
            params.feedback_weights,
            params.bias,
        ):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"not a model checkpoint: {path}")
        (hlen,) = np.frombuffer(fh.read(4), dtype="<u4")
        header = json.loads(fh.read(int(hlen)).decode("utf-8"))
        if header.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header.get('format_version')}")

        def read(shape):
            n = int(np.prod(shape))
            arr = np.frombuffer(fh.read(8 * n), dtype="<f8").astype(np.float64)
            return arr.reshape(shape)

        syn = read((header["tau_syn"], header["k_syn"]))
        fb = read((header["tau_fb"], header["k_fb"]))
        w = read((header["n_outputs"], header["n_inputs"], header["k_syn"]))
        v = read((header["n_outputs"], header["k_fb"]))
        b = read((header["n_outputs"],))
    basis = BasisSet(synaptic=syn, feedback=fb, kind=header["basis_kind"])
    return ModelParams(w, v, b, basis), header
