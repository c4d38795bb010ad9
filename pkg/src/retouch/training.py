"""Alternating adversarial training: one policy update, then U critic updates.

Determinism contract: a single ``np.random.Generator`` seeded from the
config drives everything random, in a fixed order -- agent init, critic
init, source-batch selection, per-sample action draws, interpolation
factors, gradient-penalty directions and replay-buffer sampling.  Two
runs with the same seed therefore produce byte-identical checkpoints.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import asdict, dataclass, fields

import numpy as np

from .agent import (
    AgentNet,
    compute_reward,
    policy_loss_graph,
    sample_action,
    value_loss_graph,
)
from .critic import (
    CriticNet,
    critic_loss,
    interpolate,
    penalty_from_scores,
    perturbation_pairs,
)
from .filters import apply_pipeline
from .image import Image, load_image, resize_bicubic
from .nn import (
    Adam,
    BETA1,
    BETA2,
    EPS,
    CheckpointError,
    TrainingError,
    load_checkpoint,
    no_grad,
    save_checkpoint,
    take_rows,
)

__all__ = [
    "TrainConfig",
    "ReplayBuffer",
    "Dataset",
    "Trainer",
    "GenStats",
    "run_training",
    "load_agent",
    "STATE_SIZE",
]

STATE_SIZE = 64
_IMAGE_EXTS = (".png", ".ppm", ".jpg", ".jpeg")


@dataclass
class TrainConfig:
    """Hyperparameters; every field can come from a config file or CLI flag."""

    gp_weight: float = 10.0        # gradient-penalty coefficient
    mse_weight: float = 100.0      # reward regularizer toward the input
    entropy_weight: float = 0.001  # exploration bonus in the policy loss
    action_steps: int = 33         # discretization levels per filter
    critic_updates: int = 5        # critic steps per generator step
    lr: float = 1e-4
    batch_size: int = 8
    generator_steps: int = 2000
    replay_capacity: int = 2048
    seed: int = 0
    gp_samples: int = 2            # interpolates probed per critic step
    gp_directions: int = 4         # finite-difference directions per probe
    checkpoint_every: int = 0      # 0 = final checkpoint only

    def validate(self):
        positive = (
            "gp_weight", "mse_weight", "entropy_weight", "lr",
            "batch_size", "critic_updates", "replay_capacity",
            "gp_samples", "gp_directions",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.action_steps < 2:
            raise ValueError(f"action_steps must be >= 2, got {self.action_steps}")
        if self.generator_steps < 0 or self.checkpoint_every < 0 or self.seed < 0:
            raise ValueError("generator_steps, checkpoint_every and seed must be >= 0")
        if self.gp_samples > self.batch_size:
            raise ValueError(
                f"gp_samples ({self.gp_samples}) cannot exceed batch_size "
                f"({self.batch_size})"
            )

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        """Parse flat ``key = value`` lines; '#' starts a comment."""
        known = {f.name: f.type for f in fields(cls)}
        values = {}
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected 'key = value'")
                key, _, val = line.partition("=")
                key, val = key.strip(), val.strip()
                if key not in known:
                    raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
                caster = int if known[key] in ("int", int) else float
                try:
                    values[key] = caster(val)
                except ValueError as e:
                    raise ValueError(f"{path}:{lineno}: bad value for {key}: {val!r}") from e
        cfg = cls(**values)
        cfg.validate()
        return cfg


class ReplayBuffer:
    """Fixed-capacity ring of generated 64x64 images, oldest evicted first."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._store = None
        self.size = 0
        self._cursor = 0

    def __len__(self):
        return self.size

    def push(self, images: np.ndarray):
        images = np.asarray(images, dtype=np.float32)
        if images.ndim != 4:
            raise ValueError(f"expected (B, H, W, 3) batch, got {images.shape}")
        if self._store is None:
            self._store = np.empty((self.capacity,) + images.shape[1:], np.float32)
        if images.shape[0] > self.capacity:
            images = images[-self.capacity:]
        idx = (self._cursor + np.arange(images.shape[0])) % self.capacity
        self._store[idx] = images
        self._cursor = int((self._cursor + images.shape[0]) % self.capacity)
        self.size = min(self.size + images.shape[0], self.capacity)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.size == 0:
            raise ValueError("cannot sample from an empty replay buffer")
        idx = rng.integers(0, self.size, size=n)
        return self._store[idx].copy()


class Dataset:
    """Unpaired source/target image paths plus cached 64x64 states."""

    def __init__(self, source_paths, target_paths):
        self.source_paths = list(source_paths)
        self.target_paths = list(target_paths)
        if not self.source_paths:
            raise ValueError("source image list is empty")
        if not self.target_paths:
            raise ValueError("target image list is empty")
        self._source_states = None
        self._target_states = None

    @classmethod
    def from_dirs(cls, source_dir, target_dir) -> "Dataset":
        return cls(_scan_images(source_dir), _scan_images(target_dir))

    @staticmethod
    def _ingest(paths) -> np.ndarray:
        states = np.empty((len(paths), STATE_SIZE, STATE_SIZE, 3), np.float32)
        for i, p in enumerate(paths):
            img = load_image(p)
            if img.pixels.shape[:2] != (STATE_SIZE, STATE_SIZE):
                img = resize_bicubic(img, STATE_SIZE, STATE_SIZE)
            states[i] = img.pixels
        return states

    def source_states(self) -> np.ndarray:
        if self._source_states is None:
            self._source_states = self._ingest(self.source_paths)
        return self._source_states

    def target_states(self) -> np.ndarray:
        if self._target_states is None:
            self._target_states = self._ingest(self.target_paths)
        return self._target_states


def _scan_images(directory):
    directory = os.fspath(directory)
    if not os.path.isdir(directory):
        raise ValueError(f"not a directory: {directory}")
    paths = sorted(
        os.path.join(directory, name)
        for name in os.listdir(directory)
        if name.lower().endswith(_IMAGE_EXTS)
    )
    if not paths:
        raise ValueError(f"no images found in {directory}")
    return paths


@dataclass
class GenStats:
    mean_reward: float
    value_loss: float
    policy_loss: float


class Trainer:
    """Owns both networks, their optimizers, the buffer and the RNG."""

    def __init__(self, config: TrainConfig, dataset: Dataset):
        config.validate()
        self.config = config
        self.dataset = dataset
        self.rng = np.random.default_rng(config.seed)
        # init order is part of the determinism contract: agent, then critic
        self.agent = AgentNet(self.rng, action_steps=config.action_steps)
        self.critic = CriticNet(self.rng)
        self.agent_opt = Adam(self.agent.named_params(), lr=config.lr)
        self.critic_opt = Adam(self.critic.named_params(), lr=config.lr)
        self.buffer = ReplayBuffer(config.replay_capacity)
        self.generator_steps_done = 0
        self.critic_steps_done = 0

    # -- steps ---------------------------------------------------------

    def next_source_batch(self) -> np.ndarray:
        states = self.dataset.source_states()
        idx = self.rng.integers(0, states.shape[0], size=self.config.batch_size)
        return states[idx]

    def generator_step(self, states: np.ndarray) -> GenStats:
        """Sample actions, edit, score, and take one A2C step on the agent."""
        cfg = self.config
        n = states.shape[0]
        q_t, logq_t, v_t = self.agent.forward_graph(states)

        indices0 = np.empty((n, q_t.data.shape[2]), np.int64)
        edited = np.empty_like(states)
        for i in range(n):
            idx1, action = sample_action(q_t.data[i], self.rng)
            indices0[i] = idx1 - 1
            edited[i] = apply_pipeline(Image(states[i]), action).pixels

        with no_grad():
            scores = self.critic.scores(edited).data[:, 0]
        mses = np.mean(
            (edited.astype(np.float64) - states.astype(np.float64)) ** 2,
            axis=(1, 2, 3),
        )
        rewards = np.array(
            [compute_reward(float(s), float(m), cfg.mse_weight).value
             for s, m in zip(scores, mses)]
        )
        advantage = rewards - v_t.data[:, 0].astype(np.float64)

        vloss = value_loss_graph(v_t, rewards)
        ploss = policy_loss_graph(q_t, logq_t, indices0, advantage, cfg.entropy_weight)
        total = vloss + ploss
        if not np.isfinite(total.data):
            raise TrainingError(
                f"non-finite generator loss at step {self.generator_steps_done + 1}: "
                f"value={float(vloss.data)!r} policy={float(ploss.data)!r} "
                f"rewards={rewards!r}"
            )
        self.agent_opt.zero_grad()
        total.backward()
        self.agent_opt.step()
        self.buffer.push(edited)
        self.generator_steps_done += 1
        return GenStats(
            mean_reward=float(rewards.mean()),
            value_loss=float(vloss.data),
            policy_loss=float(ploss.data),
        )

    def critic_step(self):
        """One Wasserstein update: reals up, buffered fakes down, GP on.

        Returns the loss, or None when the buffer is still empty (warned
        and skipped).  Real images are drawn uniformly with replacement
        from the target set; the gradient penalty probes ``gp_samples``
        interpolates with ``gp_directions`` directions each, all scored
        in a single batched forward pass.
        """
        cfg = self.config
        if len(self.buffer) == 0:
            warnings.warn("critic step skipped: replay buffer is empty")
            return None
        targets = self.dataset.target_states()
        b = cfg.batch_size
        fakes = self.buffer.sample(b, self.rng)
        reals = targets[self.rng.integers(0, targets.shape[0], size=b)]

        s = cfg.gp_samples
        eps = self.rng.random(s)
        interp = np.stack(
            [interpolate(reals[j], fakes[j], float(eps[j])) for j in range(s)]
        )
        plus, minus = perturbation_pairs(
            interp, self.rng, cfg.gp_directions, fd_eps=1e-3
        )
        stacked = np.concatenate([reals, fakes, plus, minus], axis=0)
        scores = self.critic.scores(stacked)
        rn = cfg.gp_directions * s
        s_real = take_rows(scores, slice(0, b))
        s_fake = take_rows(scores, slice(b, 2 * b))
        s_plus = take_rows(scores, slice(2 * b, 2 * b + rn))
        s_minus = take_rows(scores, slice(2 * b + rn, 2 * b + 2 * rn))
        term, _ = penalty_from_scores(s_plus, s_minus, cfg.gp_directions, s, 1e-3)
        loss = critic_loss(s_real, s_fake, term, cfg.gp_weight)
        if not np.isfinite(loss.data):
            raise TrainingError(
                f"non-finite critic loss at update {self.critic_steps_done + 1}"
            )
        self.critic_opt.zero_grad()
        loss.backward()
        self.critic_opt.step()
        self.critic_steps_done += 1
        return float(loss.data)

    # -- persistence -----------------------------------------------------

    def to_checkpoint(self):
        header = {
            "kind": "retouch-agent",
            "config": asdict(self.config),
            "optimizer": {
                "beta1": BETA1,
                "beta2": BETA2,
                "eps": EPS,
                "agent_t": self.agent_opt.t,
                "critic_t": self.critic_opt.t,
            },
            "progress": {
                "generator_steps": self.generator_steps_done,
                "critic_steps": self.critic_steps_done,
            },
        }
        arrays = {}
        for name, p in self.agent.named_params():
            arrays[f"agent/{name}"] = p.data
        for name, p in self.critic.named_params():
            arrays[f"critic/{name}"] = p.data
        arrays.update(self.agent_opt.state_arrays("opt/agent/"))
        arrays.update(self.critic_opt.state_arrays("opt/critic/"))
        return header, arrays

    def restore(self, header: dict, arrays: dict):
        try:
            for name, p in self.agent.named_params():
                p.data = arrays[f"agent/{name}"].astype(p.data.dtype).copy()
            for name, p in self.critic.named_params():
                p.data = arrays[f"critic/{name}"].astype(p.data.dtype).copy()
            opt = header["optimizer"]
            self.agent_opt.load_state_arrays("opt/agent/", arrays, opt["agent_t"])
            self.critic_opt.load_state_arrays("opt/critic/", arrays, opt["critic_t"])
            self.generator_steps_done = int(header["progress"]["generator_steps"])
            self.critic_steps_done = int(header["progress"]["critic_steps"])
        except KeyError as e:
            raise CheckpointError(f"checkpoint missing entry {e.args[0]!r}") from e


def run_training(config: TrainConfig, dataset: Dataset, out_path=None,
                 on_step=None):
    """Full schedule: per step, 1 generator update then ``critic_updates``
    critic updates.  Returns ``(header, arrays)``; also written to
    ``out_path`` when given (periodically too, if configured)."""
    trainer = Trainer(config, dataset)
    for step in range(1, config.generator_steps + 1):
        gstats = trainer.generator_step(trainer.next_source_batch())
        closses = []
        for _ in range(config.critic_updates):
            loss = trainer.critic_step()
            if loss is not None:
                closses.append(loss)
        if on_step is not None:
            on_step({
                "step": step,
                "reward": gstats.mean_reward,
                "value_loss": gstats.value_loss,
                "policy_loss": gstats.policy_loss,
                "critic_loss": float(np.mean(closses)) if closses else float("nan"),
            })
        if (
            out_path is not None
            and config.checkpoint_every
            and step % config.checkpoint_every == 0
        ):
            header, arrays = trainer.to_checkpoint()
            save_checkpoint(out_path, header, arrays)
    header, arrays = trainer.to_checkpoint()
    if out_path is not None:
        save_checkpoint(out_path, header, arrays)
    return header, arrays


def load_agent(path):
    """Rebuild the policy network from a checkpoint; returns (net, header)."""
    header, arrays = load_checkpoint(path)
    try:
        steps = int(header["config"]["action_steps"])
    except (KeyError, TypeError) as e:
        raise CheckpointError(f"{os.fspath(path)}: header missing config.action_steps") from e
    net = AgentNet(np.random.default_rng(0), action_steps=steps)
    try:
        for name, p in net.named_params():
            p.data = arrays[f"agent/{name}"].astype(p.data.dtype).copy()
    except KeyError as e:
        raise CheckpointError(f"checkpoint missing agent weights: {e.args[0]!r}") from e
    return net, header
