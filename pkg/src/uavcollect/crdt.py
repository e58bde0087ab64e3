"""Critic-regularized decision transformer: model, losses, training and rollout."""
from __future__ import annotations

import copy
import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .config import TrainConfig
from .datasets import Dataset, Trajectory, compute_rtg
from .env import UavDataEnv
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.layers import MLP, CausalTransformer, is_lora_param
from .nn.optim import AdamW, clip_grad_norm

ACT_DIM = 3
METRIC_FIELDS = ["epoch", "dt_loss", "q_regularizer", "critic1_loss", "critic2_loss",
                 "eval_return_mean", "eval_return_std", "eval_energy_efficiency"]


class DecisionTransformer(nn.Module):
    """Interleaves (return-to-go, state, action) tokens and decodes actions
    from the state positions. Actions live in normalized units [0, 1]^3."""

    def __init__(self, state_dim: int, max_timestep: int, hidden: int = 64, n_layers: int = 2,
                 n_heads: int = 2, lora_rank: int = 0, lora_alpha: float = 1.0,
                 context_k: int | None = None):
        super().__init__()
        self.state_dim = state_dim
        self.context_k = context_k
        self.max_timestep = max_timestep
        self.rtg_encoder = nn.Linear(1, hidden)
        self.state_encoder = nn.Linear(state_dim, hidden)
        self.action_encoder = nn.Linear(ACT_DIM, hidden)
        self.time_embedding = nn.Embedding(max_timestep, hidden)
        self.backbone = CausalTransformer(hidden, n_layers, n_heads, lora_rank, lora_alpha)
        self.action_decoder = nn.Linear(hidden, ACT_DIM)

    def forward(self, rtg, states, actions, timesteps, valid=None):
        B, K = states.shape[:2]
        if self.context_k is not None and K > self.context_k:
            raise ValueError(f"segment of {K} steps exceeds the context length {self.context_k}")
        if valid is None:
            valid = torch.ones(B, K, dtype=torch.bool)
        t_emb = self.time_embedding(timesteps)
        tokens = torch.stack([
            self.rtg_encoder(rtg) + t_emb,
            self.state_encoder(states) + t_emb,
            self.action_encoder(actions) + t_emb,
        ], dim=2).reshape(B, 3 * K, -1)
        out = self.backbone(tokens, valid.repeat_interleave(3, dim=1))
        state_out = out.reshape(B, K, 3, -1)[:, :, 1]
        return torch.sigmoid(self.action_decoder(state_out))

    def backbone_parameter_names(self) -> list[str]:
        return [n for n, _ in self.named_parameters() if n.startswith("backbone.") and not is_lora_param(n)]


class Critic(nn.Module):
    def __init__(self, state_dim: int, width: int = 256):
        super().__init__()
        self.net = MLP(state_dim + ACT_DIM, width, 1, n_hidden=3)

    def forward(self, states, actions):
        return self.net(torch.cat([states, actions], dim=-1)).squeeze(-1)


class CriticPair(nn.Module):
    def __init__(self, state_dim: int, width: int = 256):
        super().__init__()
        self.q1 = Critic(state_dim, width)
        self.q2 = Critic(state_dim, width)
        self.q1_target = copy.deepcopy(self.q1).requires_grad_(False)
        self.q2_target = copy.deepcopy(self.q2).requires_grad_(False)

    def target_min(self, states, actions):
        return torch.minimum(self.q1_target(states, actions), self.q2_target(states, actions))


def set_freeze_policy(model: DecisionTransformer, mode: str) -> list[str]:
    """``full`` trains everything; ``lora`` freezes the backbone except adapters.
    Returns the names of trainable parameters."""
    frozen = set(model.backbone_parameter_names()) if mode == "lora" else set()
    for name, p in model.named_parameters():
        p.requires_grad_(name not in frozen)
    return [n for n, p in model.named_parameters() if p.requires_grad]


# --- losses --------------------------------------------------------------------

def dt_loss(predicted, target, mask) -> torch.Tensor:
    """Per-segment sum of squared action errors over valid steps, averaged over the batch."""
    per_step = ((predicted - target) ** 2).sum(-1) * mask
    return per_step.sum(-1).mean() if per_step.dim() > 1 else per_step.sum()


def td_targets(rewards, q_boot, gamma: float) -> torch.Tensor:
    """n-step targets for every segment position except the last.

    ``rewards``: (B, K); ``q_boot``: (B,) = min target Q at the last step.
    target_i = sum_{j=i}^{K-2} gamma^(j-i) r_j + gamma^(K-1-i) q_boot.
    """
    K = rewards.shape[-1]
    out = torch.empty_like(rewards[..., : K - 1])
    acc = q_boot
    for i in range(K - 2, -1, -1):
        acc = rewards[..., i] + gamma * acc
        out[..., i] = acc
    return out


def critic_loss(critic, states, actions, targets, mask) -> torch.Tensor:
    """Sum over the first K-1 positions of (target - Q(s_i, a_i))^2, batch mean."""
    q = critic(states[:, :-1], actions[:, :-1])
    return (((targets.detach() - q) ** 2) * mask[:, :-1]).sum(-1).mean()


def q_regularizer(critic, states, predicted, mask) -> torch.Tensor:
    """Batch mean of sum_i Q1(s_i, a_hat_i) over valid positions."""
    return (critic(states, predicted) * mask).sum(-1).mean()


def regularized_dt_loss(predicted, target, mask, critic, states, lam: float) -> tuple[torch.Tensor, torch.Tensor]:
    """L_DT - lambda * sum Q1(s, a_hat). Critic weights receive no gradient."""
    l_dt = dt_loss(predicted, target, mask)
    if lam == 0:
        return l_dt, torch.zeros(())
    flags = [p.requires_grad for p in critic.parameters()]
    critic.requires_grad_(False)
    try:
        q = q_regularizer(critic, states, predicted, mask)
    finally:
        for p, f in zip(critic.parameters(), flags):
            p.requires_grad_(f)
    return l_dt - lam * q, q


@torch.no_grad()
def soft_update(online: nn.Module, target: nn.Module, rho: float) -> None:
    for p, tp in zip(online.parameters(), target.parameters()):
        tp.mul_(1.0 - rho).add_(p, alpha=rho)


# --- segments ------------------------------------------------------------------

@dataclass
class Segment:
    """Batch of K-step windows, left-padded; all tensors are (B, K, ...)."""

    rtg: torch.Tensor
    states: torch.Tensor
    actions: torch.Tensor
    rewards: torch.Tensor
    timesteps: torch.Tensor
    valid: torch.Tensor

    @property
    def mask(self) -> torch.Tensor:
        return self.valid.to(self.rewards.dtype)


class TrainingData:
    """Dataset arrays in model units: normalized actions, rewards / reward_norm."""

    def __init__(self, ds: Dataset, env: UavDataEnv):
        self.norm = ds.reward_norm
        self.states = [t.states.astype(np.float32) for t in ds.trajectories]
        self.actions = [env.normalize_action(t.actions).astype(np.float32) for t in ds.trajectories]
        self.rewards = [(t.rewards / self.norm).astype(np.float32) for t in ds.trajectories]
        self.rtg = [(t.rtg / self.norm).astype(np.float32) for t in ds.trajectories]
        self.lengths = np.array([len(t) for t in ds.trajectories])
        self.state_dim = self.states[0].shape[1]

    def segments(self, episodes, ends, K: int) -> Segment:
        B = len(episodes)
        S = self.state_dim
        rtg = np.zeros((B, K, 1), np.float32)
        states = np.zeros((B, K, S), np.float32)
        actions = np.zeros((B, K, ACT_DIM), np.float32)
        rewards = np.zeros((B, K), np.float32)
        steps = np.zeros((B, K), np.int64)
        valid = np.zeros((B, K), bool)
        for b, (e, t) in enumerate(zip(episodes, ends)):
            lo = max(0, t - K + 1)
            n = t + 1 - lo
            sl = slice(K - n, K)
            rtg[b, sl, 0] = self.rtg[e][lo:t + 1]
            states[b, sl] = self.states[e][lo:t + 1]
            actions[b, sl] = self.actions[e][lo:t + 1]
            rewards[b, sl] = self.rewards[e][lo:t + 1]
            steps[b, sl] = np.arange(lo, t + 1)
            valid[b, sl] = True
        return Segment(*(torch.from_numpy(a) for a in (rtg, states, actions, rewards, steps, valid)))

    def sample(self, rng: np.random.Generator, batch: int, K: int) -> Segment:
        episodes = rng.integers(0, len(self.lengths), batch)
        ends = np.array([rng.integers(0, self.lengths[e]) for e in episodes])
        return self.segments(episodes, ends, K)


# --- training -------------------------------------------------------------------

def build_model(cfg: TrainConfig, state_dim: int, horizon: int) -> DecisionTransformer:
    rank = cfg.lora_rank if cfg.mode == "lora" else 0
    return DecisionTransformer(state_dim, horizon, cfg.hidden, cfg.n_layers, cfg.n_heads,
                               rank, cfg.lora_alpha, cfg.context_k)


class Trainer:
    """Alternates critic and policy updates; one epoch is ``steps_per_epoch`` of them."""

    def __init__(self, dataset: Dataset, cfg: TrainConfig, backbone: dict[str, np.ndarray] | None = None):
        self.cfg = cfg
        self.dataset = dataset
        self.env = UavDataEnv(dataset.scenario)
        self.data = TrainingData(dataset, self.env)
        torch.manual_seed(cfg.seed)
        self.model = build_model(cfg, self.data.state_dim, dataset.scenario.horizon)
        if backbone is not None:
            load_backbone(self.model, backbone)
        self.trainable = set_freeze_policy(self.model, cfg.mode)
        self.target = copy.deepcopy(self.model).requires_grad_(False)
        self.critics = CriticPair(self.data.state_dim, cfg.critic_width)
        params = dict(self.model.named_parameters())
        self.dt_opt = AdamW([(n, params[n]) for n in self.trainable], cfg.lr_dt, cfg.weight_decay)
        self.q_opts = [AdamW(c.named_parameters(), cfg.lr_critic, cfg.weight_decay)
                       for c in (self.critics.q1, self.critics.q2)]
        self.rng = np.random.default_rng([cfg.seed, 2])
        self.epoch = 0
        self.history: list[dict] = []
        self.events: list[str] = []  # update order, for inspection

    @property
    def target_rtg(self) -> float:
        return float(self.dataset.returns().max())

    def critic_step(self, seg: Segment) -> tuple[float, float]:
        with torch.no_grad():
            a_hat = self.target(seg.rtg, seg.states, seg.actions, seg.timesteps, seg.valid)[:, -1]
            q_boot = self.critics.target_min(seg.states[:, -1], a_hat)
            targets = td_targets(seg.rewards, q_boot, self.cfg.gamma)
        losses = []
        for critic, opt in zip((self.critics.q1, self.critics.q2), self.q_opts):
            opt.zero_grad()
            loss = critic_loss(critic, seg.states, seg.actions, targets, seg.mask)
            loss.backward()
            opt.step()
            losses.append(loss.item())
        self.events.append("critic")
        return losses[0], losses[1]

    def policy_step(self, seg: Segment) -> tuple[float, float]:
        self.dt_opt.zero_grad()
        pred = self.model(seg.rtg, seg.states, seg.actions, seg.timesteps, seg.valid)
        lam = self.cfg.lambda_reg if self.cfg.use_critic else 0.0
        loss, q = regularized_dt_loss(pred, seg.actions, seg.mask, self.critics.q1, seg.states, lam)
        loss.backward()
        clip_grad_norm(self.dt_opt.params.values(), 1.0)
        self.dt_opt.step()
        self.events.append("policy")
        return float(dt_loss(pred.detach(), seg.actions, seg.mask)), q.item()

    def train_step(self) -> dict[str, float]:
        seg = self.data.sample(self.rng, self.cfg.batch_b, self.cfg.context_k)
        c1 = c2 = 0.0
        if self.cfg.use_critic:
            c1, c2 = self.critic_step(seg)
        l_dt, q = self.policy_step(seg)
        if self.cfg.use_critic:
            rho = self.cfg.rho_soft
            soft_update(self.model, self.target, rho)
            soft_update(self.critics.q1, self.critics.q1_target, rho)
            soft_update(self.critics.q2, self.critics.q2_target, rho)
        return {"dt_loss": l_dt, "q_regularizer": q, "critic1_loss": c1, "critic2_loss": c2}

    def finetune_epoch(self, evaluate: bool | None = None) -> dict:
        rows = [self.train_step() for _ in range(self.cfg.steps_per_epoch)]
        self.epoch += 1
        metrics = {"epoch": self.epoch}
        for key in rows[0]:
            metrics[key] = float(np.mean([r[key] for r in rows]))
        if evaluate is None:
            every = self.cfg.eval_every
            evaluate = self.epoch == self.cfg.epochs or (every > 0 and self.epoch % every == 0)
        metrics.update(eval_return_mean="", eval_return_std="", eval_energy_efficiency="")
        if evaluate and self.cfg.eval_episodes > 0:
            metrics.update(self.evaluate())
        self.history.append(metrics)
        return metrics

    def fit(self, metrics_path: str | Path | None = None) -> list[dict]:
        while self.epoch < self.cfg.epochs:
            self.finetune_epoch()
        if metrics_path is not None:
            write_metrics(self.history, metrics_path)
        return self.history

    def evaluate(self, episodes: int | None = None, seed: int | None = None) -> dict:
        n = self.cfg.eval_episodes if episodes is None else episodes
        seed = self.cfg.seed if seed is None else seed
        return evaluate_policy(self.model, self.env, self.data.norm, self.target_rtg,
                               self.cfg.context_k, eval_seeds(seed, n))

    def save(self, path: str | Path) -> None:
        save_model(self.model, self.cfg, path, meta={
            "reward_norm": self.data.norm, "target_rtg": self.target_rtg,
            "scenario": self.dataset.scenario.to_dict(), "epoch": self.epoch})


def eval_seeds(seed: int, n: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence([seed, 0xE7A1]).generate_state(n)]


def write_metrics(history: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRIC_FIELDS, lineterminator="\n")
        writer.writeheader()
        for row in history:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


# --- inference --------------------------------------------------------------------

@torch.no_grad()
def predict_action(model: DecisionTransformer, rtgs, states, actions, t: int, K: int,
                   reward_norm: float) -> np.ndarray:
    """Normalized action for the latest step given the history lists (current step last)."""
    n = min(K, len(states))
    lo = len(states) - n
    S = model.state_dim
    rtg = torch.zeros(1, K, 1)
    st = torch.zeros(1, K, S)
    ac = torch.zeros(1, K, ACT_DIM)
    ts = torch.zeros(1, K, dtype=torch.long)
    valid = torch.zeros(1, K, dtype=torch.bool)
    rtg[0, K - n:, 0] = torch.tensor(np.asarray(rtgs[lo:], dtype=np.float32) / reward_norm)
    st[0, K - n:] = torch.from_numpy(np.asarray(states[lo:], dtype=np.float32))
    if n > 1:
        ac[0, K - n:K - 1] = torch.from_numpy(np.asarray(actions[lo:len(states) - 1], dtype=np.float32))
    ts[0, K - n:] = torch.arange(t - n + 1, t + 1)
    valid[0, K - n:] = True
    return model(rtg, st, ac, ts, valid)[0, -1].numpy().astype(float)


@dataclass
class RolloutResult:
    trajectory: Trajectory
    conditioned_rtg: np.ndarray  # R_1 .. R_{T+1}, one longer than the trajectory

    @property
    def episode_return(self) -> float:
        return self.trajectory.episode_return


def rollout(model: DecisionTransformer, env: UavDataEnv, target_rtg: float, context_k: int,
            reward_norm: float, seed: int = 0) -> RolloutResult:
    """Autoregressive control loop; the return-to-go is decremented by each reward.

    The window holds the current (RTG, state) plus up to K-1 completed steps,
    which matches the K-step segments seen in training.
    """
    obs = env.reset(seed)
    rtgs, states, actions, rewards, energy, collected = [target_rtg], [obs], [], [], [], []
    physical = []
    was_training = model.training
    model.eval()
    t = 0
    while True:
        u = predict_action(model, rtgs, states, actions, t, context_k, reward_norm)
        act = env.denormalize_action(u)
        out = env.step(act)
        actions.append(env.normalize_action(act.as_tuple()))
        physical.append(act.as_tuple())
        rewards.append(out.reward)
        energy.append(out.energy)
        collected.append(out.collected)
        rtgs.append(rtgs[-1] - out.reward)
        t += 1
        if out.done:
            break
        states.append(out.next_obs)
    model.train(was_training)
    r = np.array(rewards)
    traj = Trajectory(np.array(states), np.array(physical), r, compute_rtg(r), seed=seed,
                      policy_tag="dt", scenario_hash=env.scenario.content_hash(),
                      energy=np.array(energy), collected=np.array(collected))
    return RolloutResult(traj, np.array(rtgs))


def evaluate_policy(model, env, reward_norm, target_rtg, context_k, seeds) -> dict:
    returns, effs = [], []
    for s in seeds:
        tr = rollout(model, env, target_rtg, context_k, reward_norm, s).trajectory
        returns.append(tr.episode_return)
        effs.append(float(tr.collected.sum() / tr.energy.sum()))
    return {"eval_return_mean": float(np.mean(returns)), "eval_return_std": float(np.std(returns)),
            "eval_energy_efficiency": float(np.mean(effs))}


# --- persistence ------------------------------------------------------------------

def save_model(model: DecisionTransformer, cfg: TrainConfig, path, meta: dict | None = None) -> None:
    config = {"train": cfg.to_dict(), "state_dim": model.state_dim, "max_timestep": model.max_timestep}
    save_checkpoint(path, dict(model.state_dict()), config, meta)


def load_model(path) -> tuple[DecisionTransformer, TrainConfig, dict]:
    arrays, header = load_checkpoint(path)
    cfg = TrainConfig(**header["config"]["train"])
    model = build_model(cfg, header["config"]["state_dim"], header["config"]["max_timestep"])
    model.load_state_dict({k: torch.from_numpy(v) for k, v in arrays.items()})
    return model, cfg, header["meta"]


def load_backbone(model: DecisionTransformer, arrays: dict[str, np.ndarray]) -> None:
    """Copy every non-adapter weight present in ``arrays`` (e.g. a pretrained model)."""
    state = model.state_dict()
    for name, arr in arrays.items():
        if name in state and not is_lora_param(name):
            if tuple(state[name].shape) != arr.shape:
                raise ValueError(f"shape mismatch for {name}: {arr.shape} vs {tuple(state[name].shape)}")
            state[name] = torch.from_numpy(arr)
    model.load_state_dict(state)


def count_parameters(model: nn.Module) -> tuple[int, int]:
    total = sum(p.numel() for p in model.parameters())
    trainable = sum(p.numel() for p in model.parameters() if p.requires_grad)
    return total, trainable

