"""White-box spike-train attacks: least-likely-class targeting, greedy budgeted
perturbation, and random-perturbation baselines.

The greedy attack repeatedly applies the single add/remove/flip that most
increases the target-class log-likelihood. Because an input spike at sample t
only enters potentials at samples t+1 .. t+tau, a candidate change can be
scored by re-evaluating that slice alone; ``LikelihoodCache`` keeps the
potentials of the current raster and scores one candidate (or, vectorized, the
whole candidate grid) without a from-scratch likelihood pass.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import glm
from .spike_core import SpikeTrain

GREEDY_KINDS = ("add", "remove", "flip")
RANDOM_KINDS = ("random_add", "random_remove", "random_flip")


class StaleCacheError(RuntimeError):
    """The cache no longer describes the raster (or parameters) it was built for."""


@dataclass(frozen=True)
class AttackSpec:
    """Attack family, strength and time support.

    ``epsilon`` is the perturbed fraction of the n_inputs * T input samples;
    the step budget is floor(epsilon * n_inputs * T). ``horizon`` limits the
    search to the first T_A samples (None: the full raster horizon).
    """

    kind: str
    epsilon: float
    horizon: int | None = None
    rng_seed: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in GREEDY_KINDS + RANDOM_KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.horizon is not None and self.horizon < 1:
            raise ValueError("attack horizon must be >= 1")

    def budget(self, n_inputs: int, t_len: int) -> int:
        return int(np.floor(self.epsilon * n_inputs * t_len))


@dataclass
class AttackStep:
    step: int
    neuron: int
    time: int  # 0-based sample index
    change: int  # +1 spike added, -1 spike removed
    loglik: float


@dataclass
class AttackResult:
    x_adv: SpikeTrain
    target_class: int
    trace: list[AttackStep] = field(default_factory=list)
    start_loglik: float = 0.0


def least_likely_class(params: glm.ModelParams, x, c: int, rule: str, pattern=None) -> int:
    """The non-label class with the smallest log-likelihood (ties: lowest index)."""
    if params.n_outputs < 2:
        raise ValueError("least-likely class needs at least two output neurons")
    scores = glm.class_log_likelihoods(params, x, rule, pattern).copy()
    scores[c] = np.inf
    return int(np.argmin(scores))


class LikelihoodCache:
    """Target-class log-likelihood of the current raster plus incremental rescoring.

    Holds the membrane potentials for ``x`` (teacher-forced on the target's
    desired raster under the rate rule, zero-feedback under first-to-spike) and
    everything needed to score a single-entry change in O(n_outputs * tau).
    """

    def __init__(self, params: glm.ModelParams, x, target: int, rule: str,
                 pattern=None, attack_horizon: int | None = None) -> None:
        if rule not in ("rate", "first_to_spike"):
            raise ValueError(f"unknown rule {rule!r}")
        self.params = params
        self.rule = rule
        self.target = target
        self.x = np.array(x.data if isinstance(x, SpikeTrain) else x, dtype=np.uint8)
        self.t_len = self.x.shape[1]
        self.t_a = self.t_len if attack_horizon is None else min(attack_horizon, self.t_len)
        kernels = params.synaptic_kernels()  # (n_out, n_in, tau)
        self.tau = kernels.shape[2]
        # alpha_rev[i, j, r]: effect of a spike of input j at t on u_{i, t+1+r}
        self.alpha_rev = np.ascontiguousarray(kernels[:, :, ::-1])
        # Static index grids for the batched candidate scan: candidate sample t0
        # touches potentials at t0 + 1 + r, r < tau, clipped to the horizon.
        t_aff = np.arange(self.t_a)[:, None] + 1 + np.arange(self.tau)[None, :]
        self._scan_valid = t_aff < self.t_len
        self._scan_idx = np.minimum(t_aff, self.t_len - 1)
        if rule == "rate":
            if pattern is None:
                raise ValueError("rate rule needs the desired spike pattern")
            self.desired = glm.desired_raster(pattern, target, params.n_outputs)
            # ll(u, y) = -softplus(sign * u) with sign = 1 - 2y
            self._sign_aff = 1.0 - 2.0 * self.desired[:, self._scan_idx]
            self.u = glm.potentials(params, self.x, self.desired)
            self.ll = glm._bernoulli_loglik(self.u, self.desired)
            self.loglik = float(self.ll.sum())
        else:
            self.u = glm.potentials(params, self.x, None)
            self._refresh_fts()

    def _refresh_fts(self) -> None:
        self.lg = glm.log_sigmoid(self.u)
        self.lgb = glm.log_one_minus_sigmoid(self.u)
        self.q = glm.fts_log_event_matrix(self.lg, self.lgb)[self.target]
        self.loglik = float(logsumexp(self.q))

    def matches(self, x) -> bool:
        data = x.data if isinstance(x, SpikeTrain) else np.asarray(x)
        return data.shape == self.x.shape and bool((data == self.x).all())

    def _affected(self, t: int) -> np.ndarray:
        return np.arange(t + 1, min(t + 1 + self.tau, self.t_len))

    def candidate_loglik(self, j: int, t: int, change: int | None = None) -> float:
        """Target log-likelihood after toggling entry (j, t) of the raster."""
        if change is None:
            change = 1 - 2 * int(self.x[j, t])
        t_aff = self._affected(t)
        if t_aff.size == 0:
            return self.loglik
        u_new = self.u[:, t_aff] + change * self.alpha_rev[:, j, : t_aff.size]
        if self.rule == "rate":
            d = self.desired[:, t_aff]
            ll_new = glm._bernoulli_loglik(u_new, d)
            return self.loglik + float((ll_new - self.ll[:, t_aff]).sum())
        dlgb = glm.log_one_minus_sigmoid(u_new) - self.lgb[:, t_aff]
        dlg_c = glm.log_sigmoid(u_new[self.target]) - self.lg[self.target, t_aff]
        bump = np.zeros(self.t_len)
        bump[t_aff] = dlgb.sum(axis=0)
        q_new = self.q + np.cumsum(bump)
        q_new[t_aff] += dlg_c - dlgb[self.target]
        return float(logsumexp(q_new))

    def scan(self, kind: str) -> tuple[np.ndarray, np.ndarray]:
        """Score every legal candidate in the (neuron, sample < T_A) grid at once.

        Returns (scores, changes), each of shape (n_inputs, t_a); illegal
        candidates score -inf. Matches candidate_loglik up to summation order.
        """
        ta, tau, t_len = self.t_a, self.tau, self.t_len
        x_head = self.x[:, :ta]
        if kind == "flip":
            change = 1.0 - 2.0 * x_head
            legal = np.ones_like(x_head, dtype=bool)
        elif kind == "add":
            change = np.ones(x_head.shape)
            legal = x_head == 0
        elif kind == "remove":
            change = -np.ones(x_head.shape)
            legal = x_head == 1
        else:
            raise ValueError(f"unknown greedy attack kind {kind!r}")

        valid, t_idx = self._scan_valid, self._scan_idx
        u_aff = self.u[:, t_idx]  # (n_out, ta, tau)
        # (n_out, n_in, ta, tau): potentials after each candidate change
        u_new = u_aff[:, None] + change[None, :, :, None] * self.alpha_rev[:, :, None, :]

        if self.rule == "rate":
            ll_new = -np.logaddexp(0.0, self._sign_aff[:, None] * u_new)
            ll_new *= valid
            ll_old_sum = (self.ll[:, t_idx] * valid).sum(axis=(0, 2))  # (ta,)
            scores = self.loglik + ll_new.sum(axis=(0, 3)) - ll_old_sum[None, :]
        else:
            # Split log sum_t exp(q'_t) into three pieces: samples at or before
            # the change (q unchanged), the affected window, and the tail where
            # the cumulative delta is a constant shift.
            q = self.q
            prefix = np.logaddexp.accumulate(q)[: ta]
            rev = np.logaddexp.accumulate(q[::-1])[::-1]  # rev[t] = lse(q[t:])
            tail_start = np.arange(ta) + 1 + tau
            suffix = np.where(tail_start < t_len, rev[np.minimum(tail_start, t_len - 1)], -np.inf)

            dlgb = glm.log_one_minus_sigmoid(u_new) - self.lgb[:, t_idx][:, None]
            dlgb *= valid
            csum = np.cumsum(dlgb.sum(axis=0), axis=2)  # (n_in, ta, tau)
            total = csum[:, :, -1]
            point = (glm.log_sigmoid(u_new[self.target]) - self.lg[self.target, t_idx]) * valid
            point -= dlgb[self.target]
            q_win = np.where(valid, q[t_idx][None] + csum + point, -np.inf)
            m = q_win.max(axis=2)
            finite = m > -np.inf
            with np.errstate(divide="ignore"):
                w = np.where(
                    finite,
                    np.log(np.exp(q_win - np.where(finite, m, 0.0)[:, :, None]).sum(axis=2)) + m,
                    -np.inf,
                )
            scores = np.logaddexp(prefix[None, :], np.logaddexp(w, suffix[None, :] + total))
            if ta == t_len:
                # Last sample affects nothing within the horizon: exact no-op.
                scores[:, -1] = self.loglik
        return np.where(legal, scores, -np.inf), change

    def apply(self, j: int, t: int, change: int) -> None:
        """Commit a single-entry change and refresh the cached state."""
        new_val = int(self.x[j, t]) + change
        if new_val not in (0, 1):
            raise ValueError(f"change {change} illegal at entry with value {self.x[j, t]}")
        self.x[j, t] = new_val
        t_aff = self._affected(t)
        if t_aff.size:
            self.u[:, t_aff] += change * self.alpha_rev[:, j, : t_aff.size]
        if self.rule == "rate":
            if t_aff.size:
                self.ll[:, t_aff] = glm._bernoulli_loglik(self.u[:, t_aff], self.desired[:, t_aff])
            self.loglik = float(self.ll.sum())
        else:
            self._refresh_fts()


def greedy_step_incremental(params: glm.ModelParams, x_current, candidate, rule: str,
                            cache: LikelihoodCache) -> float:
    """Target log-likelihood after the single-entry change at ``candidate`` (j, t).

    Only touches the potential slice the change can reach; exactly equals the
    from-scratch likelihood of the modified raster. The cache must describe
    ``x_current`` (same raster, same params, same rule) and the candidate must
    lie inside the attack horizon.
    """
    j, t = candidate
    if cache.params is not params or cache.rule != rule or not cache.matches(x_current):
        raise StaleCacheError("cache does not describe the given raster/params/rule")
    if t >= cache.t_a:
        raise ValueError(f"candidate sample {t} outside attack horizon {cache.t_a}")
    return cache.candidate_loglik(j, t)


def greedy_attack(params: glm.ModelParams, x: SpikeTrain, c: int, spec: AttackSpec,
                  rule: str, pattern=None) -> AttackResult:
    """Greedy budgeted attack toward the least-likely class.

    The target class is fixed from the clean input. Each of the
    floor(epsilon * n_inputs * T) steps applies the legal single-entry change
    (restricted to samples < T_A) with the highest target log-likelihood,
    breaking ties toward the lexicographically smallest (neuron, sample); the
    attack halts early when no change strictly beats leaving the raster alone.
    """
    if spec.kind not in GREEDY_KINDS:
        raise ValueError(f"greedy_attack needs kind in {GREEDY_KINDS}, got {spec.kind!r}")
    target = least_likely_class(params, x, c, rule, pattern)
    budget = spec.budget(x.num_neurons, x.horizon)
    cache = LikelihoodCache(params, x, target, rule, pattern, spec.horizon)
    result = AttackResult(x_adv=x, target_class=target, start_loglik=cache.loglik)
    for step in range(1, budget + 1):
        scores, changes = cache.scan(spec.kind)
        best = scores.max()
        if not best > cache.loglik:
            break
        j, t = np.unravel_index(int(np.argmax(scores)), scores.shape)
        change = int(changes[j, t])
        cache.apply(j, t, change)
        result.trace.append(AttackStep(step, int(j), int(t), change, cache.loglik))
    result.x_adv = SpikeTrain(cache.x)
    return result


def random_perturb(x: SpikeTrain, spec: AttackSpec, rng=None) -> SpikeTrain:
    """Uniform random baseline: toggle ``budget`` legal positions without replacement.

    Legal positions (within the first T_A samples) are the current zeros for
    random_add, the current ones for random_remove, and everything for
    random_flip. If fewer legal positions exist than the budget, all of them
    are toggled.
    """
    if spec.kind not in RANDOM_KINDS:
        raise ValueError(f"random_perturb needs kind in {RANDOM_KINDS}, got {spec.kind!r}")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(spec.rng_seed if rng is None else rng)
    data = x.data.copy()
    t_a = x.horizon if spec.horizon is None else min(spec.horizon, x.horizon)
    head = data[:, :t_a]
    if spec.kind == "random_add":
        pos = np.argwhere(head == 0)
    elif spec.kind == "random_remove":
        pos = np.argwhere(head == 1)
    else:
        pos = np.argwhere(np.ones_like(head, dtype=bool))
    count = min(spec.budget(x.num_neurons, x.horizon), len(pos))
    if count:
        chosen = pos[rng.choice(len(pos), size=count, replace=False)]
        head[chosen[:, 0], chosen[:, 1]] ^= 1
    return SpikeTrain(data)


def write_trace_csv(path, result: AttackResult, header_lines: tuple[str, ...] = ()) -> None:
    """Attack trace CSV: step, neuron, 1-based sample, change direction, log-likelihood."""
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(["step", "neuron", "time", "change", "target_loglik"])
        for s in result.trace:
            writer.writerow([s.step, s.neuron, s.time + 1, s.change, repr(s.loglik)])
