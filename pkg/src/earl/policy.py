"""Featurized autoregressive softmax policy over the MiniRTL vocabulary.

Architecture: a linear-softmax head over concatenated one-hot features of the
last ``k`` sequence tokens plus 8 coarse response-position buckets, so
F = k*V + 8. Log-probabilities, entropies, and parameter gradients are exact,
which keeps finite-difference verification tractable. A richer architecture
can replace this one behind the same operations without touching the RL core.

Prompts are canonicalized before featurization: PAD tokens are inserted after
BOS to bring every prompt to a fixed length, so specification fields sit at
stable window offsets across tasks. Sampling and scoring share the rule, so
stored and recomputed log-probabilities always agree.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .minirtl.vocab import BOS, EOS, PAD, DEFAULT_VOCAB, Vocab
from .seeds import rng_for

POSITION_BUCKETS = 8
POSITION_BUCKET_SPAN = 4  # bucket = min(position // span, 7)
PROMPT_PAD_LEN = 48

_CKPT_MAGIC = b"EARLCKPT1\n"


@dataclass
class PolicyParams:
    vocab: Vocab
    k: int
    W: np.ndarray  # [V, F]
    b: np.ndarray  # [V]
    version: int = 0

    @property
    def V(self) -> int:
        return self.vocab.size

    @property
    def F(self) -> int:
        return self.k * self.V + POSITION_BUCKETS

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.vocab, self.k, self.W.copy(), self.b.copy(),
                            self.version)


@dataclass(frozen=True)
class Context:
    """Featurization context: last-k window (most recent first) + position."""
    window: tuple[int, ...]
    position: int


@dataclass
class Rollout:
    prompt_tokens: tuple[int, ...]
    response_tokens: tuple[int, ...]
    logprobs: np.ndarray
    entropies: np.ndarray
    temperature: float
    truncated: bool

    def __post_init__(self):
        assert len(self.response_tokens) == len(self.logprobs) \
            == len(self.entropies)


def init_params(vocab: Vocab, k: int, seed: int) -> PolicyParams:
    """Near-zero uniform init in [-0.01, 0.01]; deterministic given seed."""
    if k < 1:
        raise DomainError("context window k must be >= 1")
    rng = rng_for("policy-init", seed)
    V = vocab.size
    F = k * V + POSITION_BUCKETS
    W = rng.uniform(-0.01, 0.01, size=(V, F))
    b = rng.uniform(-0.01, 0.01, size=V)
    return PolicyParams(vocab, k, W, b)


# --- featurization -----------------------------------------------------------

def canonical_prompt(prompt, vocab: Vocab = DEFAULT_VOCAB) -> tuple[int, ...]:
    """Left-pad the prompt body to PROMPT_PAD_LEN by inserting PAD after BOS."""
    prompt = tuple(prompt)
    if len(prompt) >= PROMPT_PAD_LEN or not prompt \
            or vocab.token(prompt[0]) != BOS:
        return prompt
    pad = vocab.id(PAD)
    return (prompt[0],) + (pad,) * (PROMPT_PAD_LEN - len(prompt)) + prompt[1:]


def position_bucket(position: int) -> int:
    return min(position // POSITION_BUCKET_SPAN, POSITION_BUCKETS - 1)


def make_context(seq: tuple[int, ...], position: int, k: int,
                 vocab: Vocab) -> Context:
    pad = vocab.id(PAD)
    window = tuple(seq[len(seq) - 1 - j] if j < len(seq) else pad
                   for j in range(k))
    return Context(window, position)


def response_contexts(params: PolicyParams, prompt, response) -> list[Context]:
    """Context of each response token: shared by sampling and re-scoring."""
    seq = list(canonical_prompt(prompt, params.vocab))
    out = []
    for t, tok in enumerate(response):
        out.append(make_context(tuple(seq), t, params.k, params.vocab))
        seq.append(tok)
    return out


def _feature_indices(params: PolicyParams, ctx: Context) -> np.ndarray:
    V = params.V
    idx = np.empty(params.k + 1, dtype=np.int64)
    idx[:params.k] = np.asarray(ctx.window, dtype=np.int64)
    idx[:params.k] += np.arange(params.k, dtype=np.int64) * V
    idx[params.k] = params.k * V + position_bucket(ctx.position)
    return idx


def _token_feature_rows(params: PolicyParams, prompt, response) -> np.ndarray:
    """Feature-index rows [T, k+1] for each response token, built
    incrementally; row t matches _feature_indices of the t-th context."""
    V, k = params.V, params.k
    pad = params.vocab.id(PAD)
    seq = list(canonical_prompt(prompt, params.vocab))
    slot_base = np.arange(k, dtype=np.int64) * V
    window = np.full(k, pad, dtype=np.int64)
    tail = seq[-k:][::-1]
    window[:len(tail)] = tail
    rows = np.empty((len(response), k + 1), dtype=np.int64)
    for t, tok in enumerate(response):
        rows[t, :k] = slot_base + window
        rows[t, k] = k * V + position_bucket(t)
        window[1:] = window[:-1]
        window[0] = tok
    return rows


def _initial_indices(params: PolicyParams, prompt) -> np.ndarray:
    """Feature indices at response position 0; advanced token by token."""
    seq = tuple(canonical_prompt(prompt, params.vocab))
    return _feature_indices(params, make_context(seq, 0, params.k,
                                                 params.vocab))


def _advance_indices(params: PolicyParams, idx: np.ndarray, token: int,
                     position: int) -> None:
    """Shift the last-k window by one emitted token, in place."""
    V, k = params.V, params.k
    idx[1:k] = idx[:k - 1] + V
    idx[0] = token
    idx[k] = k * V + position_bucket(position)


def logits_at(params: PolicyParams, ctx: Context) -> np.ndarray:
    idx = _feature_indices(params, ctx)
    return params.W[:, idx].sum(axis=1) + params.b


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def next_token_distribution(params: PolicyParams, ctx: Context,
                            temperature: float = 1.0) -> np.ndarray:
    if temperature <= 0:
        raise DomainError("temperature must be > 0")
    return softmax(logits_at(params, ctx) / temperature)


def token_entropy(p: np.ndarray) -> float:
    """Shannon entropy in nats; 0*log(0) contributes 0."""
    p = np.asarray(p, dtype=float)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


# --- sampling and scoring ----------------------------------------------------

def sample_rollout(params: PolicyParams, prompt, temperature: float,
                   max_len: int, rng: np.random.Generator) -> Rollout:
    """Sample until EOS or max_len; records sampling-time logprob and entropy."""
    if temperature <= 0:
        raise DomainError("temperature must be > 0")
    if max_len < 1:
        raise DomainError("max_len must be >= 1")
    eos = params.vocab.id(EOS)
    idx = _initial_indices(params, prompt)
    tokens: list[int] = []
    logprobs: list[float] = []
    entropies: list[float] = []
    truncated = True
    for t in range(max_len):
        z = params.W[:, idx].sum(axis=1) + params.b
        p = softmax(z / temperature)
        tok = int(rng.choice(params.V, p=p))
        tokens.append(tok)
        logprobs.append(float(np.log(p[tok])))
        entropies.append(token_entropy(p))
        _advance_indices(params, idx, tok, t + 1)
        if tok == eos:
            truncated = False
            break
    return Rollout(tuple(prompt), tuple(tokens), np.array(logprobs),
                   np.array(entropies), temperature, truncated)


def greedy_decode(params: PolicyParams, prompt, max_len: int) -> list[int]:
    eos = params.vocab.id(EOS)
    idx = _initial_indices(params, prompt)
    tokens: list[int] = []
    for t in range(max_len):
        tok = int(np.argmax(params.W[:, idx].sum(axis=1) + params.b))
        tokens.append(tok)
        _advance_indices(params, idx, tok, t + 1)
        if tok == eos:
            break
    return tokens


def response_distributions(params: PolicyParams, prompt, response,
                           temperature: float = 1.0
                           ) -> tuple[np.ndarray, np.ndarray]:
    """Next-token distributions at every response position, vectorized.

    Returns (rows, probs): feature-index rows [T, k+1] and probs [T, V].
    """
    if temperature <= 0:
        raise DomainError("temperature must be > 0")
    rows = _token_feature_rows(params, prompt, response)
    z = params.W[:, rows].sum(axis=2).T + params.b[None, :]
    z /= temperature
    z -= z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return rows, e / e.sum(axis=1, keepdims=True)


def sequence_logprobs(params: PolicyParams, prompt, response,
                      temperature: float = 1.0) -> np.ndarray:
    """Per-token log-probabilities under params at the sampling contexts."""
    _, probs = response_distributions(params, prompt, response, temperature)
    toks = np.asarray(response, dtype=np.int64)
    return np.log(probs[np.arange(len(toks)), toks])


# --- gradients ---------------------------------------------------------------

@dataclass
class GradAccumulator:
    dW: np.ndarray
    db: np.ndarray

    @classmethod
    def zeros_like(cls, params: PolicyParams) -> "GradAccumulator":
        return cls(np.zeros_like(params.W), np.zeros_like(params.b))


def accumulate_logprob_grad(params: PolicyParams, ctx: Context, token: int,
                            coeff: float, acc: GradAccumulator,
                            temperature: float = 1.0) -> GradAccumulator:
    """acc += coeff * grad_theta log pi_theta(token | ctx).

    Exact softmax gradient for the linear policy: (one-hot - p) outer phi,
    scaled by 1/temperature.
    """
    if coeff == 0.0:
        return acc
    p = next_token_distribution(params, ctx, temperature)
    g = -p
    g[token] += 1.0
    g *= coeff / temperature
    idx = _feature_indices(params, ctx)
    acc.dW[:, idx] += g[:, None]
    acc.db += g
    return acc


def accumulate_kl_grad(params: PolicyParams, ctx: Context,
                       ref_probs: np.ndarray, coeff: float,
                       acc: GradAccumulator,
                       temperature: float = 1.0) -> GradAccumulator:
    """acc += coeff * grad_theta KL(pi_theta(.|ctx) || ref), exact over V."""
    if coeff == 0.0:
        return acc
    p = next_token_distribution(params, ctx, temperature)
    s = np.log(p) - np.log(ref_probs)
    kl = float((p * s).sum())
    g = p * (s - kl) * (coeff / temperature)
    idx = _feature_indices(params, ctx)
    acc.dW[:, idx] += g[:, None]
    acc.db += g
    return acc


def apply_update(params: PolicyParams, acc: GradAccumulator,
                 step_size: float) -> None:
    """In-place params += step_size * acc (ascent for positive step_size)."""
    params.W += step_size * acc.dW
    params.b += step_size * acc.db
    params.version += 1


# --- supervised fine-tuning ---------------------------------------------------

@dataclass
class SftSchedule:
    peak_lr: float = 1.5
    warmup_steps: int = 15
    epochs: int = 3
    total_steps: int | None = None
    batch_contexts: int = 1024
    seed: int = 0


def lr_at(step: int, schedule: SftSchedule, total_steps: int) -> float:
    """Linear warmup to peak at step == warmup_steps, then cosine decay to 0."""
    w = schedule.warmup_steps
    if step < w:
        return schedule.peak_lr * (step + 1) / (w + 1)
    if total_steps <= w + 1:
        return schedule.peak_lr
    frac = (step - w) / (total_steps - 1 - w)
    return schedule.peak_lr * 0.5 * (1.0 + np.cos(np.pi * min(frac, 1.0)))


def _sft_examples(params: PolicyParams, tasks):
    """Flatten (context window, bucket, target) triples for all tasks."""
    from .minirtl.lexer import tokenize  # local import to avoid cycle
    vocab = params.vocab
    eos = vocab.id(EOS)
    ctx_rows, buckets, targets = [], [], []
    for task in tasks:
        response = tokenize(task.reference_text, vocab) + [eos]
        for ctx, tok in zip(response_contexts(params, task.prompt_tokens,
                                              response), response):
            ctx_rows.append(ctx.window)
            buckets.append(position_bucket(ctx.position))
            targets.append(tok)
    return (np.array(ctx_rows, dtype=np.int64),
            np.array(buckets, dtype=np.int64),
            np.array(targets, dtype=np.int64))


def _batch_logits(params: PolicyParams, ctx: np.ndarray,
                  buckets: np.ndarray) -> np.ndarray:
    V = params.V
    logits = params.b[None, :] + params.W[:, params.k * V + buckets].T
    for j in range(params.k):
        logits = logits + params.W[:, j * V + ctx[:, j]].T
    return logits


def _feature_matrix(params: PolicyParams, ctx: np.ndarray,
                    buckets: np.ndarray):
    """Sparse one-hot design matrix [n, F]; row i has k+1 ones."""
    from scipy import sparse
    n, k = ctx.shape[0], params.k
    V = params.V
    cols = np.empty((n, k + 1), dtype=np.int64)
    cols[:, :k] = ctx + np.arange(k, dtype=np.int64)[None, :] * V
    cols[:, k] = k * V + buckets
    indptr = np.arange(0, (n + 1) * (k + 1), k + 1, dtype=np.int64)
    data = np.ones(n * (k + 1))
    return sparse.csr_matrix((data, cols.ravel(), indptr),
                             shape=(n, params.F))


def train_sft(params: PolicyParams, tasks, schedule: SftSchedule
              ) -> tuple[PolicyParams, list[float]]:
    """Minimize mean per-token NLL of reference responses by gradient descent.

    Deterministic: minibatches are sequential slices of a per-epoch seeded
    permutation. Returns the trained params and the per-step loss log.
    """
    tasks = list(tasks)
    if not tasks:
        raise DomainError("train_sft requires a nonempty corpus")
    ctx, buckets, targets = _sft_examples(params, tasks)
    X = _feature_matrix(params, ctx, buckets)
    n = len(targets)
    bs = min(schedule.batch_contexts, n)
    steps_per_epoch = (n + bs - 1) // bs
    total = (schedule.total_steps if schedule.total_steps is not None
             else schedule.epochs * steps_per_epoch)
    loss_log: list[float] = []
    order = None
    for step in range(total):
        i = step % steps_per_epoch
        if i == 0:
            epoch = step // steps_per_epoch
            order = rng_for("sft-order", schedule.seed, epoch).permutation(n)
        sel = order[i * bs:(i + 1) * bs]
        Xb, btgt = X[sel], targets[sel]
        logits = Xb @ params.W.T + params.b[None, :]
        logits -= logits.max(axis=1, keepdims=True)
        expz = np.exp(logits)
        probs = expz / expz.sum(axis=1, keepdims=True)
        m = len(btgt)
        nll = float(-np.log(probs[np.arange(m), btgt]).mean())
        loss_log.append(nll)

        G = probs
        G[np.arange(m), btgt] -= 1.0
        G /= m
        lr = lr_at(step, schedule, total)
        params.W -= lr * (Xb.T @ G).T
        params.b -= lr * G.sum(axis=0)
        params.version += 1
    return params, loss_log


# --- checkpoints ---------------------------------------------------------------

def save_checkpoint(params: PolicyParams, path) -> None:
    meta = {
        "schema_version": 1,
        "k": params.k,
        "V": params.V,
        "P": POSITION_BUCKETS,
        "vocab_hash": params.vocab.hash,
        "version_counter": params.version,
    }
    header = json.dumps(meta, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(_CKPT_MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        f.write(np.ascontiguousarray(params.b, dtype=np.float64).tobytes())
        f.write(np.ascontiguousarray(params.W, dtype=np.float64).tobytes())


def load_checkpoint(path, vocab: Vocab = DEFAULT_VOCAB) -> PolicyParams:
    with open(path, "rb") as f:
        magic = f.read(len(_CKPT_MAGIC))
        if magic != _CKPT_MAGIC:
            raise DomainError("not a policy checkpoint")
        (hlen,) = struct.unpack("<I", f.read(4))
        meta = json.loads(f.read(hlen))
        if meta.get("schema_version") != 1:
            raise DomainError("unsupported checkpoint schema version")
        if meta["vocab_hash"] != vocab.hash:
            raise DomainError("checkpoint vocab hash does not match")
        V, k = meta["V"], meta["k"]
        F = k * V + POSITION_BUCKETS
        b = np.frombuffer(f.read(8 * V), dtype=np.float64).copy()
        W = np.frombuffer(f.read(8 * V * F),
                          dtype=np.float64).reshape(V, F).copy()
    return PolicyParams(vocab, k, W, b, meta["version_counter"])
