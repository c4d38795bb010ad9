"""Actor-critic agent: shared conv trunk, value head and discrete policy head.

The policy head emits a matrix q of shape (L, K): one categorical
distribution over L discrete steps per filter column.  Actions decode
affinely onto each filter's [a_min, a_max] range.  The agent sees one
64x64 state and commits to a single action vector -- there is no
multi-step episode.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .filters import FILTERS, NUM_FILTERS, FilterSpec
from .image import Image
from .nn import (
    Conv2d,
    Conv1dValid,
    Dense,
    Tensor,
    gather_lk,
    leaky_relu,
    log_softmax_columns,
    mul,
    no_grad,
    reshape,
    softmax_columns,
    square,
    tmean,
    tsum,
)

__all__ = [
    "AgentNet",
    "Reward",
    "decode_action",
    "decode_indices",
    "sample_action",
    "greedy_action",
    "greedy_indices",
    "compute_reward",
    "value_loss",
    "policy_loss",
    "value_loss_graph",
    "policy_loss_graph",
    "agent_forward",
    "DEFAULT_ACTION_STEPS",
]

DEFAULT_ACTION_STEPS = 33
_SLOPE = 0.2
_TRUNK_CHANNELS = (16, 32, 64, 64)


class AgentNet:
    """Shared trunk + value head (dense-64-1) + policy head (dense, two
    valid 1-D convs shrinking L+4 -> L+2 -> L over K channels)."""

    def __init__(self, rng, dtype=np.float32, input_size: int = 64,
                 action_steps: int = DEFAULT_ACTION_STEPS,
                 num_filters: int = NUM_FILTERS,
                 trunk_channels=_TRUNK_CHANNELS, head_width: int = 64,
                 policy_scale: float = 1.0):
        if action_steps < 2:
            raise ValueError(f"need at least 2 action steps, got {action_steps}")
        self.input_size = input_size
        self.action_steps = action_steps
        self.num_filters = num_filters
        self.head_width = head_width
        self.trunk = []
        c_prev = 3
        size = input_size
        for c in trunk_channels:
            self.trunk.append(Conv2d(c_prev, c, 5, 2, rng, dtype))
            c_prev = c
            size = (size + 1) // 2
        self.flat = size * size * c_prev
        self.value_fc1 = Dense(self.flat, head_width, rng, dtype)
        self.value_fc2 = Dense(head_width, 1, rng, dtype)
        seq = action_steps + 4
        self.policy_fc = Dense(self.flat, seq * head_width, rng, dtype)
        self.policy_conv1 = Conv1dValid(head_width, head_width, 3, rng, dtype)
        self.policy_conv2 = Conv1dValid(
            head_width, num_filters, 3, rng, dtype, scale=policy_scale
        )

    def _logits_and_value(self, x: Tensor):
        n = x.data.shape[0]
        for conv in self.trunk:
            x = leaky_relu(conv(x), _SLOPE)
        feat = reshape(x, (n, self.flat))
        v = self.value_fc2(leaky_relu(self.value_fc1(feat), _SLOPE))
        seq = self.action_steps + 4
        p = leaky_relu(self.policy_fc(feat), _SLOPE)
        p = reshape(p, (n, seq, self.head_width))
        p = leaky_relu(self.policy_conv1(p), _SLOPE)
        logits = self.policy_conv2(p)  # (N, L, K)
        return logits, v

    def forward_graph(self, batch):
        """Graph forward: returns (q, log q, V) for a (N, S, S, 3) batch."""
        x = batch if isinstance(batch, Tensor) else Tensor(np.asarray(batch))
        s = self.input_size
        if x.data.shape[1:] != (s, s, 3):
            raise ValueError(
                f"agent expects (N, {s}, {s}, 3) input, got {x.data.shape}"
            )
        logits, v = self._logits_and_value(x)
        return softmax_columns(logits), log_softmax_columns(logits), v

    def named_params(self):
        out = []
        for i, conv in enumerate(self.trunk, start=1):
            out += [(f"trunk{i}.{n}", p) for n, p in conv.params()]
        for label, layer in (
            ("value_fc1", self.value_fc1),
            ("value_fc2", self.value_fc2),
            ("policy_fc", self.policy_fc),
            ("policy_conv1", self.policy_conv1),
            ("policy_conv2", self.policy_conv2),
        ):
            out += [(f"{label}.{n}", p) for n, p in layer.params()]
        return out

    def params(self):
        return [p for _, p in self.named_params()]


def agent_forward(net: AgentNet, state):
    """Policy matrix and value estimate for one state (no graph)."""
    pixels = state.pixels if isinstance(state, Image) else np.asarray(state)
    s = net.input_size
    if pixels.shape != (s, s, 3):
        raise ValueError(f"agent_forward expects a {s}x{s} RGB state, got {pixels.shape}")
    with no_grad():
        q, _, v = net.forward_graph(pixels[None].astype(np.float32, copy=False))
    return q.data[0], float(v.data[0, 0])


# -- action coding ---------------------------------------------------------


def decode_action(l: int, spec: FilterSpec, steps: int) -> float:
    """Map a 1-based step index onto the filter's parameter range."""
    if steps < 2:
        raise ValueError(f"need at least 2 steps, got {steps}")
    if not 1 <= l <= steps:
        raise ValueError(f"step index {l} outside 1..{steps}")
    return spec.a_min + (spec.a_max - spec.a_min) * (l - 1) / (steps - 1)


def decode_indices(indices: np.ndarray, steps: int) -> np.ndarray:
    """Vector version of :func:`decode_action` over all K filters (1-based)."""
    return np.array(
        [decode_action(int(l), spec, steps) for l, spec in zip(indices, FILTERS)],
        dtype=np.float32,
    )


def _check_policy_matrix(q: np.ndarray):
    if q.ndim != 2 or q.shape[1] != NUM_FILTERS:
        raise ValueError(f"policy matrix must be (L, {NUM_FILTERS}), got {q.shape}")
    sums = q.sum(axis=0)
    if not np.allclose(sums, 1.0, atol=1e-5) or q.min() < 0:
        raise ValueError("policy matrix columns are not probability distributions")


def sample_action(q: np.ndarray, rng: np.random.Generator):
    """Draw one index per column from its categorical; returns (indices, action).

    Indices are 1-based, matching :func:`decode_action`.
    """
    _check_policy_matrix(q)
    steps = q.shape[0]
    cdf = np.cumsum(q, axis=0)
    u = rng.random(q.shape[1])
    zero_based = np.minimum((cdf < u[None, :]).sum(axis=0), steps - 1)
    indices = (zero_based + 1).astype(np.int64)
    return indices, decode_indices(indices, steps)


def greedy_indices(q: np.ndarray) -> np.ndarray:
    """1-based argmax per column; ties break toward the smallest index."""
    _check_policy_matrix(q)
    return np.argmax(q, axis=0).astype(np.int64) + 1


def greedy_action(q: np.ndarray) -> np.ndarray:
    return decode_indices(greedy_indices(q), q.shape[0])


# -- reward & losses --------------------------------------------------------


@dataclass(frozen=True)
class Reward:
    """Scalar reward with its two components kept for logging."""

    value: float
    score: float
    mse_penalty: float


def compute_reward(score: float, mse_value: float, alpha: float) -> Reward:
    """R = score - alpha * mse, on the 64x64 state/edit pair."""
    if mse_value < 0:
        raise ValueError(f"mse cannot be negative, got {mse_value}")
    penalty = alpha * mse_value
    return Reward(value=score - penalty, score=score, mse_penalty=penalty)


def value_loss(v: float, reward: float) -> float:
    """Squared regression error (V - R)^2 / 2."""
    if not (np.isfinite(v) and np.isfinite(reward)):
        raise ValueError("value_loss needs finite inputs")
    return 0.5 * (v - reward) ** 2


def policy_loss(q: np.ndarray, indices: np.ndarray, reward: float, v: float,
                entropy_weight: float) -> float:
    """Reference A2C policy objective (scalar form).

    sum over columns of  -ln q[l_k, k] * (R - V)  -  beta * H_k,
    with the advantage (R - V) treated as a constant and column entropy
    H_k = -sum_l q ln q in natural log.  The trainer re-expresses this
    on the graph; this closed form is the ground truth it is tested
    against.  Accepts any number of columns, not just the 12-filter case.
    """
    q = np.asarray(q)
    steps, k = q.shape
    if not np.allclose(q.sum(axis=0), 1.0, atol=1e-5) or q.min() <= 0:
        raise ValueError("policy matrix columns are not positive distributions")
    if len(indices) != k or np.any(indices < 1) or np.any(indices > steps):
        raise ValueError("chosen indices out of range")
    adv = reward - v
    picked = q[np.asarray(indices) - 1, np.arange(k)]
    logp = np.log(picked)
    entropy = -(q * np.log(q)).sum(axis=0)
    return float((-logp * adv - entropy_weight * entropy).sum())


def value_loss_graph(v: Tensor, rewards: np.ndarray) -> Tensor:
    """Batched (V - R)^2 / 2 on the graph; rewards enter as constants."""
    target = Tensor(np.asarray(rewards, v.data.dtype).reshape(-1, 1))
    return tmean(square(v - target)) * 0.5


def policy_loss_graph(q: Tensor, logq: Tensor, indices0: np.ndarray,
                      advantage: np.ndarray, entropy_weight: float) -> Tensor:
    """Batched policy objective on the graph.

    ``indices0`` are zero-based chosen steps (N, K); ``advantage`` is a
    detached (N,) array, so no gradient reaches the value head through
    this term.  Per-sample losses are averaged over the batch.
    """
    adv = Tensor(np.asarray(advantage, q.data.dtype).reshape(-1, 1))
    chosen_logp = gather_lk(logq, indices0)          # (N, K)
    entropy = tsum(mul(q, logq), axis=1) * -1.0      # (N, K)
    per_sample = tsum(
        chosen_logp * adv * -1.0 - entropy * entropy_weight, axis=1
    )
    return tmean(per_sample)
