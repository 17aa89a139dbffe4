"""PPO actor-critic training of rule weights, networks, and the blender.

Rollouts are collected from a synchronous vector env, advantages come from
GAE(lambda), and the update optimizes the clipped surrogate plus value loss,
policy entropy bonus, and the blending-entropy regularizer that keeps beta
away from the extremes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import torch

from .envs import VectorEnv
from .policy import BlendedPolicy, sample_action

PARAM_GROUPS = ("neural", "logic", "blender")


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    gamma: float = 0.99
    learning_rate: float = 2.5e-4
    clip_coef: float = 0.1
    ent_coef: float = 0.01
    blend_ent_coef: float = 0.01
    vf_coef: float = 0.5
    max_grad_norm: float = 0.5
    num_envs: int = 8
    num_steps: int = 128
    total_timesteps: int = 65536
    gae_lambda: float = 0.95
    update_epochs: int = 4
    num_minibatches: int = 4
    seed: int = 0
    advantage_norm: bool = True

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma {self.gamma} outside (0, 1]")
        for name in ("clip_coef", "ent_coef", "blend_ent_coef", "vf_coef",
                     "max_grad_norm", "learning_rate"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def batch_size(self) -> int:
        return self.num_envs * self.num_steps

    @property
    def minibatch_size(self) -> int:
        return self.batch_size // self.num_minibatches

    @property
    def num_iterations(self) -> int:
        return self.total_timesteps // self.batch_size


@dataclass
class RolloutBuffer:
    """Preallocated (num_steps, num_envs, ...) trajectory storage."""

    z: torch.Tensor
    x: torch.Tensor
    actions: torch.Tensor
    logprobs: torch.Tensor
    rewards: torch.Tensor
    dones: torch.Tensor
    values: torch.Tensor
    betas: torch.Tensor

    @classmethod
    def allocate(cls, num_steps, num_envs, z_shape, x_shape):
        f64 = dict(dtype=torch.float64)
        return cls(
            z=torch.zeros((num_steps, num_envs, *z_shape), **f64),
            x=torch.zeros((num_steps, num_envs, *x_shape), **f64),
            actions=torch.zeros((num_steps, num_envs), dtype=torch.long),
            logprobs=torch.zeros((num_steps, num_envs), **f64),
            rewards=torch.zeros((num_steps, num_envs), **f64),
            dones=torch.zeros((num_steps, num_envs), **f64),
            values=torch.zeros((num_steps, num_envs), **f64),
            betas=torch.zeros((num_steps, num_envs), **f64),
        )


def compute_advantages(rewards, values, dones, next_value, gamma, gae_lambda):
    """GAE(lambda) advantages and returns; done transitions cut bootstrapping.

    dones[t] flags that the transition taken at step t ended the episode.
    """
    num_steps = rewards.shape[0]
    advantages = torch.zeros_like(rewards)
    lastgaelam = torch.zeros_like(next_value)
    for t in reversed(range(num_steps)):
        nextvalue = next_value if t == num_steps - 1 else values[t + 1]
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * nextvalue * nonterminal - values[t]
        lastgaelam = delta + gamma * gae_lambda * nonterminal * lastgaelam
        advantages[t] = lastgaelam
    return advantages, advantages + values


def _f64(x) -> torch.Tensor:
    return x.double() if torch.is_tensor(x) else torch.as_tensor(x, dtype=torch.float64)


def blend_entropy(beta) -> torch.Tensor:
    """Binary entropy of beta, elementwise, with 0*log(0) = 0."""
    beta = _f64(beta)
    if torch.any(beta < 0) or torch.any(beta > 1):
        raise ValueError("beta outside [0,1]")
    return -(torch.special.xlogy(beta, beta) + torch.special.xlogy(1 - beta, 1 - beta))


def clipped_surrogate(ratio, advantage, clip_coef):
    """Per-sample PPO surrogate min(r*A, clip(r)*A)."""
    ratio = _f64(ratio)
    advantage = _f64(advantage)
    clipped = torch.clamp(ratio, 1.0 - clip_coef, 1.0 + clip_coef)
    return torch.minimum(ratio * advantage, clipped * advantage)


def ppo_loss(newlogprob, oldlogprob, advantages, newvalue, returns,
             entropy, beta, cfg: TrainConfig):
    """All loss terms for one minibatch. Advantages arrive pre-normalized."""
    ratio = torch.exp(newlogprob - oldlogprob)
    pg_loss = -clipped_surrogate(ratio, advantages, cfg.clip_coef).mean()
    v_loss = ((newvalue - returns) ** 2).mean()
    ent = entropy.mean()
    blend_reg = blend_entropy(beta).mean()
    loss = (pg_loss + cfg.vf_coef * v_loss
            - cfg.ent_coef * ent - cfg.blend_ent_coef * blend_reg)
    if not torch.isfinite(loss):
        raise TrainingError(
            f"non-finite loss: pg={pg_loss.detach()} v={v_loss.detach()} "
            f"ent={ent.detach()} blend={blend_reg.detach()}"
        )
    return loss, {
        "loss_policy": pg_loss.detach().item(),
        "loss_value": v_loss.detach().item(),
        "entropy": ent.detach().item(),
        "blend_reg": blend_reg.detach().item(),
    }


class Trainer:
    """Single-process training loop with deterministic, resumable state."""

    def __init__(self, policy: BlendedPolicy, envs: VectorEnv, cfg: TrainConfig,
                 freeze=(), run_dir=None, log_fn=None):
        torch.set_num_threads(1)  # tiny tensors; also keeps reductions bit-stable
        self.policy = policy
        self.envs = envs
        self.cfg = cfg
        self.freeze = tuple(freeze)
        self.run_dir = run_dir
        self.log_fn = log_fn

        unknown = [g for g in self.freeze if g not in PARAM_GROUPS]
        if unknown:
            raise TrainingError(f"unknown freeze groups {unknown}")
        groups = policy.param_groups()
        self.trainable = []
        for name in PARAM_GROUPS:
            for p in groups[name]:
                p.requires_grad_(name not in self.freeze)
                if name not in self.freeze:
                    self.trainable.append(p)
        if not self.trainable:
            raise TrainingError("every parameter group is frozen")
        self.optimizer = torch.optim.Adam(
            self.trainable, lr=cfg.learning_rate, fused=True
        )
        self.track_grad_norm = False  # tests flip this on; costs a sync per update

        self.sampler = torch.Generator()
        self.sampler.manual_seed(cfg.seed)
        self.iteration = 0
        self.global_step = 0
        self.metrics: list[dict] = []
        self.last_postclip_grad_norm = 0.0
        self._next_x = None
        self._next_z = None

    # -- rollout -------------------------------------------------------------

    def _ensure_obs(self):
        if self._next_x is None:
            self._next_x, self._next_z = self.envs.reset()
        self._x_shape = tuple(self._next_x.shape[1:])
        self._z_shape = tuple(self._next_z.shape[1:])

    def collect_rollout(self) -> tuple[RolloutBuffer, torch.Tensor, list]:
        cfg = self.cfg
        self._ensure_obs()
        buf = RolloutBuffer.allocate(cfg.num_steps, cfg.num_envs,
                                     self._z_shape, self._x_shape)
        finished = []
        for t in range(cfg.num_steps):
            buf.z[t] = self._next_z
            buf.x[t] = self._next_x
            with torch.no_grad():
                out = self.policy(self._next_z, self._next_x)
                action, logp = sample_action(out, self.sampler)
            buf.actions[t] = action
            buf.logprobs[t] = logp
            buf.values[t] = out.value
            buf.betas[t] = out.beta
            raw, z, rewards, dones, done_eps = self.envs.step(action.tolist())
            buf.rewards[t] = rewards
            buf.dones[t] = dones
            finished.extend(done_eps)
            self._next_x, self._next_z = raw, z
            self.global_step += cfg.num_envs
        with torch.no_grad():
            next_value = self.policy(self._next_z, self._next_x).value
        return buf, next_value, finished

    # -- update --------------------------------------------------------------

    def update(self, buf: RolloutBuffer, next_value) -> dict:
        cfg = self.cfg
        advantages, returns = compute_advantages(
            buf.rewards, buf.values, buf.dones, next_value,
            cfg.gamma, cfg.gae_lambda,
        )
        b = cfg.batch_size
        b_z = buf.z.reshape(b, *self._z_shape)
        b_x = buf.x.reshape(b, *self._x_shape)
        b_actions = buf.actions.reshape(b)
        b_logprobs = buf.logprobs.reshape(b)
        b_adv = advantages.reshape(b)
        b_returns = returns.reshape(b)

        stats = {"loss_policy": 0.0, "loss_value": 0.0,
                 "entropy": 0.0, "blend_reg": 0.0}
        n_updates = 0
        for _ in range(cfg.update_epochs):
            perm = torch.randperm(b, generator=self.sampler)
            for start in range(0, b, cfg.minibatch_size):
                mb = perm[start:start + cfg.minibatch_size]
                mb_adv = b_adv[mb]
                if cfg.advantage_norm:
                    mb_adv = (mb_adv - mb_adv.mean()) / (mb_adv.std() + 1e-8)
                logp, entropy, value, beta = self.policy.evaluate_actions(
                    b_z[mb], b_x[mb], b_actions[mb]
                )
                loss, terms = ppo_loss(
                    logp, b_logprobs[mb], mb_adv, value, b_returns[mb],
                    entropy, beta, cfg,
                )
                self.optimizer.zero_grad()
                loss.backward()
                torch.nn.utils.clip_grad_norm_(self.trainable, cfg.max_grad_norm)
                if self.track_grad_norm:
                    with torch.no_grad():
                        sq = sum(
                            float(p.grad.pow(2).sum())
                            for p in self.trainable if p.grad is not None
                        )
                        self.last_postclip_grad_norm = sq ** 0.5
                self.optimizer.step()
                for k, v in terms.items():
                    stats[k] += v
                n_updates += 1
        return {k: v / n_updates for k, v in stats.items()}

    # -- loop ----------------------------------------------------------------

    def train(self, checkpoint_interval: int = 0, checkpoint_fn=None):
        """Run until total_timesteps; returns the list of metric dicts."""
        while self.iteration < self.cfg.num_iterations:
            self.step_iteration()
            at_interval = (
                checkpoint_interval and self.iteration % checkpoint_interval == 0
            )
            if checkpoint_fn is not None and at_interval:
                checkpoint_fn(self)
        if checkpoint_fn is not None:
            checkpoint_fn(self)
        return self.metrics

    def step_iteration(self) -> dict:
        buf, next_value, finished = self.collect_rollout()
        stats = self.update(buf, next_value)
        self.iteration += 1
        ep_returns = [r for (_, r, _) in finished]
        with torch.no_grad():
            betas = buf.betas
            record = {
                "iteration": self.iteration,
                "global_step": self.global_step,
                "mean_return": (
                    sum(ep_returns) / len(ep_returns) if ep_returns else None
                ),
                "beta_mean": float(betas.mean()),
                "beta_entropy": float(blend_entropy(betas).mean()),
                "logic_usage_frac": float((betas < 0.5).double().mean()),
                **stats,
            }
        self.metrics.append(record)
        if self.log_fn is not None:
            self.log_fn(json.dumps(record))
        return record

    # -- snapshot ------------------------------------------------------------

    def state_dict(self) -> dict:
        self._ensure_obs()
        return {
            "iteration": self.iteration,
            "global_step": self.global_step,
            "policy": self.policy.state_dict(),
            "optimizer": self.optimizer.state_dict(),
            "sampler": self.sampler.get_state(),
            "envs": self.envs.state_dict(),
            "next_x": self._next_x,
            "next_z": self._next_z,
        }

    def load_state_dict(self, state: dict):
        self.iteration = state["iteration"]
        self.global_step = state["global_step"]
        self.policy.load_state_dict(state["policy"])
        self.optimizer.load_state_dict(state["optimizer"])
        self.sampler.set_state(state["sampler"])
        self.envs.load_state_dict(state["envs"])
        self._next_x = state["next_x"]
        self._next_z = state["next_z"]
