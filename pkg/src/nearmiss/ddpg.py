"""Actor-critic training over the kinematic environment.

Both networks embed the smoothed state-space block over the 10-step
state window. The actor maps the window to a bounded acceleration pair;
the critic scores (window, action). Targets are tracked with soft
updates and transitions replayed uniformly from a FIFO ring buffer.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .curvttc import CriticalEvent, event_to_dict
from .env import (
    ACTION_LIMIT,
    STATE_DIM,
    TERMINAL_COLLISION,
    TERMINAL_GOAL,
    EpisodeConfig,
    Episode,
    EventFrames,
    RewardVariant,
    Transition,
    event_frames,
)
from .errors import (
    ConfigError,
    ContractError,
    InsufficientDataError,
    TrainingError,
)
from .nn import ParamStore, adam_step, dense, glorot_uniform, write_json_atomic
from .smamba import SmambaConfig, SmambaParams, smamba_block

VEHICLE_TYPES = ("AV", "HDV")
CHECKPOINT_KIND = "nearmiss-policy"
ROLLING_WINDOW = 50


@dataclass
class TrainConfig:
    episodes: int = 3000
    batch: int = 256
    lr_actor: float = 0.0005
    lr_critic: float = 0.001
    gamma: float = 0.9
    tau: float = 0.01
    noise_sigma: float = 0.01
    buffer_capacity: int = 10000
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError("gamma must lie in (0, 1)")
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError("tau must lie in (0, 1]")
        for name in ("episodes", "batch", "buffer_capacity"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("lr_actor", "lr_critic", "noise_sigma"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")


class ActorNet:
    """Window -> bounded acceleration: state lift, SMamba block, two 256-unit
    layers, tanh output scaled to the action limit."""

    def __init__(
        self,
        rng: np.random.Generator | None = None,
        smamba: SmambaConfig | None = None,
        action_limit: float = ACTION_LIMIT,
    ):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.cfg = smamba or SmambaConfig()
        self.action_limit = action_limit
        self.store = ParamStore()
        d = self.cfg.d_model
        self.store.add("lift/w", glorot_uniform(rng, STATE_DIM, d))
        self.store.add("lift/b", np.zeros(d))
        self.smamba = SmambaParams.create(self.store, rng, self.cfg)
        self.store.add("fc1/w", glorot_uniform(rng, d, 256))
        self.store.add("fc1/b", np.zeros(256))
        self.store.add("fc2/w", glorot_uniform(rng, 256, 256))
        self.store.add("fc2/b", np.zeros(256))
        self.store.add("out/w", glorot_uniform(rng, 256, 2))
        self.store.add("out/b", np.zeros(2))

    def __call__(self, windows: np.ndarray, masks: np.ndarray) -> Tensor:
        x = dense(windows, self.store["lift/w"], self.store["lift/b"])
        h = smamba_block(self.smamba, x, masks)
        h = dense(h, self.store["fc1/w"], self.store["fc1/b"], "relu")
        h = dense(h, self.store["fc2/w"], self.store["fc2/b"], "relu")
        raw = dense(h, self.store["out/w"], self.store["out/b"], "tanh")
        return raw * self.action_limit

    def policy(self):
        """Deterministic (window, mask) -> action callable for rollouts."""

        def act(window, mask):
            with ad.no_grad():
                out = self(window[None], mask[None])
            return out.data[0]

        return act


class CriticNet:
    """(window, action) -> scalar value. The state branch reuses the SMamba
    block then 16- and 32-unit layers, the action branch mirrors the sizes,
    and the merged features pass through two 256-unit layers."""

    def __init__(
        self,
        rng: np.random.Generator | None = None,
        smamba: SmambaConfig | None = None,
    ):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.cfg = smamba or SmambaConfig()
        self.store = ParamStore()
        d = self.cfg.d_model
        self.store.add("lift/w", glorot_uniform(rng, STATE_DIM, d))
        self.store.add("lift/b", np.zeros(d))
        self.smamba = SmambaParams.create(self.store, rng, self.cfg)
        for name, fan_in, fan_out in (
            ("s1", d, 16),
            ("s2", 16, 32),
            ("a1", 2, 16),
            ("a2", 16, 32),
            ("fc1", 64, 256),
            ("fc2", 256, 256),
            ("out", 256, 1),
        ):
            self.store.add(f"{name}/w", glorot_uniform(rng, fan_in, fan_out))
            self.store.add(f"{name}/b", np.zeros(fan_out))

    def __call__(self, windows: np.ndarray, masks: np.ndarray, actions) -> Tensor:
        x = dense(windows, self.store["lift/w"], self.store["lift/b"])
        s = smamba_block(self.smamba, x, masks)
        s = dense(s, self.store["s1/w"], self.store["s1/b"], "relu")
        s = dense(s, self.store["s2/w"], self.store["s2/b"], "relu")
        a = dense(actions, self.store["a1/w"], self.store["a1/b"], "relu")
        a = dense(a, self.store["a2/w"], self.store["a2/b"], "relu")
        h = ad.concatenate([s, a], axis=1)
        h = dense(h, self.store["fc1/w"], self.store["fc1/b"], "relu")
        h = dense(h, self.store["fc2/w"], self.store["fc2/b"], "relu")
        q = dense(h, self.store["out/w"], self.store["out/b"])
        return ad.reshape(q, (q.shape[0],))


@dataclass
class Batch:
    states: np.ndarray
    masks: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    next_masks: np.ndarray
    terminal: np.ndarray  # 1.0 where the transition ended in collision/goal


class ReplayBuffer:
    """FIFO ring of transitions with a uniform sampler."""

    def __init__(self, capacity: int = 10000):
        if capacity <= 0:
            raise ConfigError("buffer capacity must be positive")
        self.capacity = capacity
        self._items: list[Transition] = []
        self._next = 0

    def __len__(self) -> int:
        return len(self._items)

    def push(self, transition: Transition):
        if len(self._items) < self.capacity:
            self._items.append(transition)
        else:
            self._items[self._next] = transition
            self._next = (self._next + 1) % self.capacity

    def sample(self, rng: np.random.Generator, batch: int) -> Batch:
        if len(self._items) < batch:
            raise ContractError(
                f"buffer holds {len(self._items)} transitions, need {batch}"
            )
        idx = rng.integers(0, len(self._items), size=batch)
        chosen = [self._items[i] for i in idx]
        return Batch(
            states=np.stack([t.state for t in chosen]),
            masks=np.stack([t.mask for t in chosen]),
            actions=np.stack([t.action for t in chosen]),
            rewards=np.array([t.reward for t in chosen]),
            next_states=np.stack([t.next_state for t in chosen]),
            next_masks=np.stack([t.next_mask for t in chosen]),
            terminal=np.array(
                [t.terminal in (TERMINAL_COLLISION, TERMINAL_GOAL) for t in chosen],
                dtype=np.float64,
            ),
        )


def critic_target(
    batch: Batch, target_actor: ActorNet, target_critic: CriticNet, gamma: float
) -> np.ndarray:
    """Bootstrapped targets; collision/goal transitions use the bare reward."""
    with ad.no_grad():
        next_actions = target_actor(batch.next_states, batch.next_masks)
        next_q = target_critic(batch.next_states, batch.next_masks, next_actions)
    return batch.rewards + gamma * next_q.data * (1.0 - batch.terminal)


def update_critic(batch: Batch, targets: np.ndarray, critic: CriticNet, lr: float) -> float:
    """One Adam step on the mean squared target error; returns the pre-step loss."""
    critic.store.zero_grad()
    q = critic(batch.states, batch.masks, batch.actions)
    residual = q - Tensor(targets)
    loss = (residual * residual).mean()
    value = loss.item()
    if not np.isfinite(value):
        raise TrainingError(f"critic loss is non-finite: {value}")
    loss.backward()
    adam_step(critic.store, critic.store.gradients(), lr)
    return value


def update_actor(batch: Batch, actor: ActorNet, critic: CriticNet, lr: float) -> float:
    """Ascend mean Q(s, actor(s)) through the frozen critic; returns the
    pre-step objective."""
    actor.store.zero_grad()
    critic.store.zero_grad()
    actions = actor(batch.states, batch.masks)
    q = critic(batch.states, batch.masks, actions)
    objective = q.mean()
    value = objective.item()
    if not np.isfinite(value):
        raise TrainingError(f"actor objective is non-finite: {value}")
    (-objective).backward()
    adam_step(actor.store, actor.store.gradients(), lr)
    critic.store.zero_grad()  # critic stays frozen in this step
    return value


def soft_update(main: ParamStore, target: ParamStore, tau: float):
    """target <- tau*main + (1 - tau)*target, elementwise per parameter."""
    if main.names() != target.names():
        raise ContractError("parameter stores hold different names")
    for name, src in main.items():
        dst = target[name]
        dst.data *= 1.0 - tau
        dst.data += tau * src.data


def _clone_actor(actor: ActorNet) -> ActorNet:
    clone = ActorNet(np.random.default_rng(0), actor.cfg, actor.action_limit)
    clone.store.copy_values_from(actor.store)
    return clone


def _clone_critic(critic: CriticNet) -> CriticNet:
    clone = CriticNet(np.random.default_rng(0), critic.cfg)
    clone.store.copy_values_from(critic.store)
    return clone


@dataclass
class PolicyCheckpoint:
    """Everything needed to restore bit-identical inference."""

    actor: dict
    critic: dict
    target_actor: dict
    target_critic: dict
    config: TrainConfig
    vehicle_type: str
    reward_kind: str
    corpus_digest: str
    smamba: SmambaConfig = field(default_factory=SmambaConfig)
    action_limit: float = ACTION_LIMIT

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "kind": CHECKPOINT_KIND,
            "vehicle_type": self.vehicle_type,
            "reward_kind": self.reward_kind,
            "corpus_digest": self.corpus_digest,
            "config": asdict(self.config),
            "smamba": asdict(self.smamba),
            "action_limit": self.action_limit,
            "actor": self.actor,
            "critic": self.critic,
            "target_actor": self.target_actor,
            "target_critic": self.target_critic,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "PolicyCheckpoint":
        if payload.get("kind") != CHECKPOINT_KIND:
            raise ConfigError(f"not a policy checkpoint: kind={payload.get('kind')!r}")
        return cls(
            actor=payload["actor"],
            critic=payload["critic"],
            target_actor=payload["target_actor"],
            target_critic=payload["target_critic"],
            config=TrainConfig(**payload["config"]),
            vehicle_type=payload["vehicle_type"],
            reward_kind=payload["reward_kind"],
            corpus_digest=payload["corpus_digest"],
            smamba=SmambaConfig(**payload["smamba"]),
            action_limit=float(payload["action_limit"]),
        )

    def save(self, path: str):
        write_json_atomic(self.to_dict(), path)

    @classmethod
    def load(cls, path: str) -> "PolicyCheckpoint":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def build_actor(self) -> ActorNet:
        actor = ActorNet(np.random.default_rng(0), self.smamba, self.action_limit)
        actor.store.copy_values_from(ParamStore.from_dict(self.actor))
        return actor

    def build_critic(self) -> CriticNet:
        critic = CriticNet(np.random.default_rng(0), self.smamba)
        critic.store.copy_values_from(ParamStore.from_dict(self.critic))
        return critic


def corpus_digest(corpus: list[CriticalEvent]) -> str:
    blob = json.dumps([event_to_dict(e) for e in corpus], sort_keys=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class RewardPoint:
    episode: int
    raw_reward: float
    rolling_mean: float


def train(
    corpus: list[CriticalEvent],
    variant: RewardVariant,
    cfg: TrainConfig,
    vehicle_type: str,
    episode_cfg: EpisodeConfig = EpisodeConfig(),
    debug: bool = False,
    progress=None,
) -> tuple[PolicyCheckpoint, list[RewardPoint]]:
    """Run the full training loop over the event corpus.

    Episodes cycle the corpus in order. Each environment step stores a
    transition; once the buffer can fill a batch, every step also runs a
    critic update, an actor update, and soft target updates. Fully
    deterministic given cfg.seed.
    """
    if vehicle_type not in VEHICLE_TYPES:
        raise ConfigError(f"vehicle_type must be one of {VEHICLE_TYPES}")
    if not corpus:
        raise ConfigError("training corpus is empty")

    frames: list[EventFrames] = []
    skipped = 0
    for event in corpus:
        try:
            frames.append(event_frames(event))
        except InsufficientDataError:
            skipped += 1
    if not frames:
        raise ConfigError(f"no usable events in corpus ({skipped} degenerate)")

    rng = np.random.default_rng(cfg.seed)
    actor = ActorNet(rng, SmambaConfig())
    critic = CriticNet(rng, SmambaConfig())
    target_actor = _clone_actor(actor)
    target_critic = _clone_critic(critic)
    buffer = ReplayBuffer(cfg.buffer_capacity)

    curve: list[RewardPoint] = []
    recent: list[float] = []
    for e in range(cfg.episodes):
        episode = Episode(frames[e % len(frames)], variant, episode_cfg)
        total = 0.0
        while not episode.done:
            window, mask = episode.observation()
            with ad.no_grad():
                action = actor(window[None], mask[None]).data[0]
            action = action + rng.normal(0.0, cfg.noise_sigma, 2)
            transition = episode.step(action[0], action[1])
            total += transition.reward
            buffer.push(transition)
            if len(buffer) >= cfg.batch:
                batch = buffer.sample(rng, cfg.batch)
                targets = critic_target(batch, target_actor, target_critic, cfg.gamma)
                update_critic(batch, targets, critic, cfg.lr_critic)
                update_actor(batch, actor, critic, cfg.lr_actor)
                soft_update(actor.store, target_actor.store, cfg.tau)
                soft_update(critic.store, target_critic.store, cfg.tau)
                if debug:
                    for net in (actor, critic):
                        for name, p in net.store.items():
                            if not np.all(np.isfinite(p.data)):
                                raise TrainingError(
                                    f"non-finite parameter {name!r} after update"
                                )
        recent.append(total)
        if len(recent) > ROLLING_WINDOW:
            recent.pop(0)
        curve.append(
            RewardPoint(
                episode=e,
                raw_reward=total,
                rolling_mean=float(np.mean(recent)),
            )
        )
        if progress is not None:
            progress(curve[-1])

    checkpoint = PolicyCheckpoint(
        actor=actor.store.to_dict(),
        critic=critic.store.to_dict(),
        target_actor=target_actor.store.to_dict(),
        target_critic=target_critic.store.to_dict(),
        config=cfg,
        vehicle_type=vehicle_type,
        reward_kind=variant.kind,
        corpus_digest=corpus_digest(corpus),
    )
    return checkpoint, curve


@dataclass
class Reconstruction:
    """Closed-loop rollout of a trained policy over one recorded event."""

    t: np.ndarray  # (T,) frame times, recorded grid
    sim_xy: np.ndarray  # (T, 2) simulated pedestrian positions
    sim_v: np.ndarray  # (T, 2) simulated (vx, vy)
    actions: np.ndarray  # (T-1, 2) applied (alon, alat)
    rel_xy: np.ndarray  # (T, 2) dynamics-state (dlat, dlon)
    terminal: str


def reconstruct(
    checkpoint: PolicyCheckpoint,
    event: CriticalEvent,
    episode_cfg: EpisodeConfig = EpisodeConfig(),
) -> Reconstruction:
    """Zero-noise rollout from the recorded onset state."""
    frames = event_frames(event)
    actor = checkpoint.build_actor()
    policy = actor.policy()
    variant = RewardVariant(kind=checkpoint.reward_kind)
    episode = Episode(frames, variant, episode_cfg)
    xs = [frames.ped_xy[0].copy()]
    vs = [frames.ped_v[0].copy()]
    rel = [np.array([episode.state.dlat, episode.state.dlon])]
    actions = []
    terminal = TERMINAL_COLLISION
    while not episode.done:
        window, mask = episode.observation()
        transition = episode.step(*policy(window, mask))
        actions.append(transition.action)
        xs.append(episode.sim_xy.copy())
        vs.append(np.array([episode.state.vlat_ped, episode.state.vlon_ped]))
        rel.append(np.array([episode.state.dlat, episode.state.dlon]))
        terminal = transition.terminal
    n = len(xs)
    return Reconstruction(
        t=frames.t[:n],
        sim_xy=np.stack(xs),
        sim_v=np.stack(vs),
        actions=np.stack(actions),
        rel_xy=np.stack(rel),
        terminal=terminal,
    )
