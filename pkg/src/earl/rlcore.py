"""Entropy-gated group policy optimization.

Implements the clipped-surrogate objective family over groups of rollouts
sharing one prompt: group-normalized advantages, asymmetric (clip-higher)
ratio clipping, token-level normalization by the total retained token count,
an entropy gate restricting updates to tokens above a response-level entropy
quantile, KL regularization to a frozen reference policy, and the dynamic
sampling constraint that keeps only mixed-quality groups (0 < passes < G).

Variants: 'grpo' (symmetric clipping, no gate), 'dapo' (clip-higher, no
gate), 'earl' (clip-higher plus entropy mask), 'ppo-baseline' (symmetric
clipping with group-mean baseline instead of std normalization; stands in
for PPO without a critic). An 'archer-weight' gate mode scales coefficients
by normalized token entropy instead of masking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import policy as pol
from . import reward as rew
from .errors import ConfigError, DegenerateGroup
from .seeds import rng_for

ADV_STD_EPS = 1e-8
VARIANTS = ("grpo", "dapo", "earl", "ppo-baseline")
GATE_MODES = ("none", "mask", "archer-weight")

METRIC_COLUMNS = ("step", "mean_reward", "pass_rate", "clip_rate",
                  "gated_fraction", "mean_kl", "mean_entropy",
                  "retained_groups")


@dataclass(frozen=True)
class GateConfig:
    mode: str = "none"
    rho: float = 0.8

    def validate(self) -> None:
        if self.mode not in GATE_MODES:
            raise ConfigError(f"gate.mode: unknown mode {self.mode!r}")
        if self.mode == "mask" and not 0.0 <= self.rho < 1.0:
            raise ConfigError("gate.rho: must be in [0, 1)")


@dataclass(frozen=True)
class RlConfig:
    group_size: int = 6
    rho: float = 0.8
    eps_low: float = 0.2
    eps_high: float = 0.28
    beta: float = 0.01
    learning_rate: float = 8.0
    temperature: float = 1.0
    max_response_len: int = 256
    batch_prompts: int = 8
    max_resample_attempts: int = 2
    variant: str = "earl"
    steps: int = 500
    seed: int = 0
    gate: GateConfig | None = None
    gated_kl: bool = False

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigError(f"rl.variant: unknown variant {self.variant!r}")
        if self.group_size < 2:
            raise ConfigError("rl.group_size: must be >= 2")
        if self.eps_low <= 0 or self.eps_high <= 0:
            raise ConfigError("rl.eps_low/eps_high: must be > 0")
        if self.temperature <= 0:
            raise ConfigError("rl.temperature: must be > 0")
        if self.max_response_len < 1:
            raise ConfigError("rl.max_response_len: must be >= 1")
        if self.batch_prompts < 1:
            raise ConfigError("rl.batch_prompts: must be >= 1")
        if self.steps < 0:
            raise ConfigError("rl.steps: must be >= 0")
        for name in ("beta", "learning_rate", "rho"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"rl.{name}: must be finite")
        if not 0.0 <= self.rho < 1.0:
            raise ConfigError("rl.rho: must be in [0, 1)")
        if self.gate is not None:
            self.gate.validate()

    def resolved_gate(self) -> GateConfig:
        if self.gate is not None:
            return self.gate
        if self.variant == "earl":
            return GateConfig("mask", self.rho)
        return GateConfig("none", self.rho)

    def resolved_eps(self) -> tuple[float, float]:
        """grpo and ppo-baseline clip symmetrically at eps_low."""
        if self.variant in ("grpo", "ppo-baseline"):
            return self.eps_low, self.eps_low
        return self.eps_low, self.eps_high


@dataclass
class Group:
    task: object
    rollouts: list
    breakdowns: list
    rewards: np.ndarray

    @property
    def pass_count(self) -> int:
        return sum(1 for b in self.breakdowns if rew.is_pass(b))

    @property
    def size(self) -> int:
        return len(self.rollouts)


# --- gating -------------------------------------------------------------------

def entropy_threshold(entropies, rho: float) -> float:
    """Nearest-rank quantile: the ceil(rho*T)-th smallest entropy.

    rho = 0 returns -inf so that every token is selected.
    """
    h = np.asarray(entropies, dtype=float)
    if h.size < 1:
        raise ConfigError("entropy_threshold requires at least one token")
    if not 0.0 <= rho < 1.0:
        raise ConfigError("rho must be in [0, 1)")
    if rho == 0.0:
        return -math.inf
    rank = math.ceil(rho * h.size)
    return float(np.sort(h)[rank - 1])


def entropy_mask(entropies, tau: float) -> np.ndarray:
    """mask_t = 1 iff H_t >= tau (inclusive)."""
    return (np.asarray(entropies, dtype=float) >= tau).astype(float)


def archer_weights(entropies) -> np.ndarray:
    """w_t = H_t / max_s H_s; all-ones when every entropy is zero."""
    h = np.asarray(entropies, dtype=float)
    top = h.max() if h.size else 0.0
    if top <= 0.0:
        return np.ones_like(h)
    return h / top


def gate_values(entropies, gate: GateConfig) -> np.ndarray:
    if gate.mode == "none":
        return np.ones(len(entropies))
    if gate.mode == "mask":
        return entropy_mask(entropies, entropy_threshold(entropies, gate.rho))
    return archer_weights(entropies)


# --- advantages and filtering ---------------------------------------------------

def group_advantages(rewards, baseline: str = "std") -> np.ndarray:
    """Group-normalized advantages (population statistics).

    'std': (R - mean)/(std + 1e-8); raises DegenerateGroup when the spread is
    (near-)zero, which filtered groups cannot exhibit under binary pass
    rewards. 'mean': R - mean (critic-free stand-in for PPO).
    """
    r = np.asarray(rewards, dtype=float)
    if r.size < 2:
        raise ConfigError("group_advantages requires G >= 2")
    mean = r.mean()
    if baseline == "mean":
        return r - mean
    std = r.std()
    if std < 1e-12:
        raise DegenerateGroup(f"zero reward spread in group: {r.tolist()}")
    return (r - mean) / (std + ADV_STD_EPS)


def filter_groups(groups) -> list:
    """Dynamic sampling: retain exactly the mixed groups, 0 < c < G."""
    return [g for g in groups if 0 < g.pass_count < g.size]


# --- surrogate coefficients ------------------------------------------------------

@dataclass
class CoeffDiagnostics:
    tokens: int = 0
    clipped: int = 0
    gated_nonzero: int = 0

    @property
    def clip_rate(self) -> float:
        return self.clipped / self.tokens if self.tokens else 0.0

    @property
    def gated_fraction(self) -> float:
        return self.gated_nonzero / self.tokens if self.tokens else 0.0


def per_token_coefficients(new_logprobs, old_logprobs, advantage: float,
                           gates, eps_low: float, eps_high: float,
                           token_total: int,
                           diag: CoeffDiagnostics | None = None) -> np.ndarray:
    """Per-token scalar coefficients for the log-prob gradient of one rollout.

    surrogate_t = min(r_t*A, clip(r_t, 1-eps_low, 1+eps_high)*A). When the
    unclipped branch is active the gradient coefficient is gate_t*r_t*A /
    token_total; the clipped branch carries zero gradient. Ties count as
    unclipped (the branches agree there).
    """
    r = np.exp(np.asarray(new_logprobs) - np.asarray(old_logprobs))
    clipped_r = np.clip(r, 1.0 - eps_low, 1.0 + eps_high)
    unclipped = r * advantage
    clipped = clipped_r * advantage
    active_unclipped = unclipped <= clipped
    g = np.asarray(gates, dtype=float)
    coeffs = np.where(active_unclipped, g * unclipped / token_total, 0.0)
    if diag is not None:
        diag.tokens += r.size
        diag.clipped += int((~active_unclipped).sum())
        diag.gated_nonzero += int((g > 0).sum())
    return coeffs


def kl_divergence(p, p_ref) -> float:
    """Exact sum over the vocabulary of p*ln(p/p_ref); nonnegative."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(p_ref, dtype=float)
    nz = p > 0
    return float((p[nz] * (np.log(p[nz]) - np.log(q[nz]))).sum())


# --- batch preparation, objective, gradient ---------------------------------------

@dataclass
class PreparedGroup:
    group: Group
    advantages: np.ndarray
    gates: list  # np.ndarray per rollout


@dataclass
class PreparedBatch:
    groups: list  # of PreparedGroup
    token_total: int


def prepare_batch(groups, config: RlConfig) -> PreparedBatch:
    """Advantages and gates for retained groups; drops degenerate ones."""
    gate = config.resolved_gate()
    baseline = "mean" if config.variant == "ppo-baseline" else "std"
    prepared = []
    total = 0
    for g in groups:
        try:
            adv = group_advantages(g.rewards, baseline)
        except DegenerateGroup:
            continue
        gates = [gate_values(r.entropies, gate) for r in g.rollouts]
        prepared.append(PreparedGroup(g, adv, gates))
        total += sum(len(r.response_tokens) for r in g.rollouts)
    return PreparedBatch(prepared, total)


def objective_value(batch: PreparedBatch, pi_new: pol.PolicyParams,
                    pi_old: pol.PolicyParams, pi_ref: pol.PolicyParams,
                    config: RlConfig) -> float:
    """Scalar objective consistent with the assembled gradient: token-level
    normalized gated surrogate minus beta times per-token KL to pi_ref."""
    if batch.token_total == 0:
        return 0.0
    eps_low, eps_high = config.resolved_eps()
    T = config.temperature
    total = 0.0
    for pg in batch.groups:
        for i, rollout in enumerate(pg.group.rollouts):
            prompt, resp = rollout.prompt_tokens, rollout.response_tokens
            new_lp = pol.sequence_logprobs(pi_new, prompt, resp, T)
            old_lp = pol.sequence_logprobs(pi_old, prompt, resp, T)
            r = np.exp(new_lp - old_lp)
            adv = pg.advantages[i]
            surr = np.minimum(r * adv,
                              np.clip(r, 1 - eps_low, 1 + eps_high) * adv)
            gates = pg.gates[i]
            total += float((gates * surr).sum())
            if config.beta != 0.0:
                _, p_new = pol.response_distributions(pi_new, prompt, resp, T)
                _, p_ref = pol.response_distributions(pi_ref, prompt, resp, T)
                kl = (p_new * (np.log(p_new) - np.log(p_ref))).sum(axis=1)
                w = gates if config.gated_kl else 1.0
                total -= config.beta * float((w * kl).sum())
    return total / batch.token_total


def assemble_gradient(batch: PreparedBatch, pi_new: pol.PolicyParams,
                      pi_old: pol.PolicyParams, pi_ref: pol.PolicyParams,
                      config: RlConfig
                      ) -> tuple[pol.GradAccumulator, CoeffDiagnostics, float]:
    """Gradient of the objective in pi_new, summed in (group, rollout, token)
    order. Returns (accumulator, diagnostics, mean per-token KL)."""
    acc = pol.GradAccumulator.zeros_like(pi_new)
    diag = CoeffDiagnostics()
    eps_low, eps_high = config.resolved_eps()
    T = config.temperature
    kl_sum, kl_count = 0.0, 0
    row_chunks, grad_chunks = [], []
    for pg in batch.groups:
        for i, rollout in enumerate(pg.group.rollouts):
            prompt, resp = rollout.prompt_tokens, rollout.response_tokens
            if not resp:
                continue
            rows, p_new = pol.response_distributions(pi_new, prompt, resp, T)
            toks = np.asarray(resp, dtype=np.int64)
            ar = np.arange(len(toks))
            new_lp = np.log(p_new[ar, toks])
            old_lp = pol.sequence_logprobs(pi_old, prompt, resp, T)
            coeffs = per_token_coefficients(new_lp, old_lp, pg.advantages[i],
                                            pg.gates[i], eps_low, eps_high,
                                            batch.token_total, diag)
            # d/dz of coeff * log p(tok): (one-hot - p) * coeff / T
            G = -p_new * coeffs[:, None]
            G[ar, toks] += coeffs
            if config.beta != 0.0:
                _, p_ref = pol.response_distributions(pi_ref, prompt, resp, T)
                s = np.log(p_new) - np.log(p_ref)
                kl = (p_new * s).sum(axis=1)
                w = pg.gates[i] if config.gated_kl else np.ones(len(toks))
                c = -config.beta * w / batch.token_total
                G += p_new * (s - kl[:, None]) * c[:, None]
                kl_sum += float(kl.sum())
                kl_count += len(toks)
            G /= T
            row_chunks.append(rows)
            grad_chunks.append(G)
    if row_chunks:
        from scipy import sparse
        rows = np.concatenate(row_chunks)
        Gall = np.concatenate(grad_chunks)
        n, width = rows.shape
        indptr = np.arange(0, (n + 1) * width, width, dtype=np.int64)
        X = sparse.csr_matrix((np.ones(n * width), rows.ravel(), indptr),
                              shape=(n, pi_new.F))
        acc.dW += (X.T @ Gall).T
        acc.db += Gall.sum(axis=0)
    mean_kl = kl_sum / kl_count if kl_count else 0.0
    return acc, diag, mean_kl


# --- training loop -----------------------------------------------------------

class NoTrainableGroups(Exception):
    """An entire step yielded zero retained groups after max attempts."""


def sample_group(params: pol.PolicyParams, task, config: RlConfig,
                 rng_parts: tuple,
                 schedule: rew.RewardSchedule = rew.DEFAULT_SCHEDULE) -> Group:
    rollouts, breakdowns, rewards = [], [], []
    for g in range(config.group_size):
        rng = rng_for(*rng_parts, g)
        r = pol.sample_rollout(params, task.prompt_tokens, config.temperature,
                               config.max_response_len, rng)
        bd = rew.score(r.response_tokens, task, schedule,
                       params.vocab, truncated=r.truncated)
        rollouts.append(r)
        breakdowns.append(bd)
        rewards.append(bd.reward)
    return Group(task, rollouts, breakdowns, np.array(rewards))


@dataclass
class StepMetrics:
    step: int
    mean_reward: float
    pass_rate: float
    clip_rate: float
    gated_fraction: float
    mean_kl: float
    mean_entropy: float
    retained_groups: int

    def row(self) -> list:
        return [self.step, self.mean_reward, self.pass_rate, self.clip_rate,
                self.gated_fraction, self.mean_kl, self.mean_entropy,
                self.retained_groups]


def metrics_to_csv(metrics) -> str:
    lines = [",".join(METRIC_COLUMNS)]
    for m in metrics:
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v)
                              for v in m.row()))
    return "\n".join(lines) + "\n"


def train_rl(config: RlConfig, params: pol.PolicyParams, train_tasks,
             schedule: rew.RewardSchedule = rew.DEFAULT_SCHEDULE,
             pi_ref: pol.PolicyParams | None = None
             ) -> tuple[pol.PolicyParams, list[StepMetrics]]:
    """Entropy-aware RL from an SFT initialization.

    Per step: snapshot pi_old, sample a prompt batch with G rollouts each,
    score, keep mixed groups (resampling fresh prompts up to
    max_resample_attempts to refill), compute advantages/gates/coefficients,
    ascend the objective, and log one metrics row. pi_ref is frozen to the
    incoming params unless supplied.
    """
    config.validate()
    tasks = list(train_tasks)
    if not tasks:
        raise ConfigError("train_rl requires at least one training task")
    if pi_ref is None:
        pi_ref = params.copy()
    metrics: list[StepMetrics] = []
    for step in range(config.steps):
        pi_old = params.copy()
        groups: list[Group] = []
        retained: list[Group] = []
        attempt = 0
        while attempt <= config.max_resample_attempts:
            prng = rng_for(config.seed, "rl-prompts", step, attempt)
            idx = prng.choice(len(tasks),
                              size=min(config.batch_prompts, len(tasks)),
                              replace=False)
            for pi_idx in idx:
                task = tasks[int(pi_idx)]
                g = sample_group(pi_old, task, config,
                                 (config.seed, "rl-rollout", step, attempt,
                                  int(pi_idx)), schedule)
                groups.append(g)
            retained = filter_groups(groups)
            if len(retained) >= config.batch_prompts:
                break
            attempt += 1

        all_rewards = np.concatenate([g.rewards for g in groups])
        all_pass = sum(g.pass_count for g in groups)
        n_roll = sum(g.size for g in groups)
        ent = np.concatenate([r.entropies for g in groups
                              for r in g.rollouts])
        mean_entropy = float(ent.mean()) if ent.size else 0.0

        batch = prepare_batch(retained, config)
        if batch.groups and batch.token_total > 0:
            acc, diag, mean_kl = assemble_gradient(batch, params, pi_old,
                                                   pi_ref, config)
            pol.apply_update(params, acc, config.learning_rate)
            clip_rate, gated = diag.clip_rate, diag.gated_fraction
        else:
            # NoTrainableGroups: skip the update, log the empty step.
            clip_rate, gated, mean_kl = 0.0, 0.0, 0.0
        metrics.append(StepMetrics(
            step=step,
            mean_reward=float(all_rewards.mean()),
            pass_rate=all_pass / n_roll,
            clip_rate=clip_rate,
            gated_fraction=gated,
            mean_kl=mean_kl,
            mean_entropy=mean_entropy,
            retained_groups=len(batch.groups),
        ))
    return params, metrics
