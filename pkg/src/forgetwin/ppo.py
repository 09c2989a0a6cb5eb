"""Proximal policy optimisation with a clipped surrogate objective.

The learner alternates two phases: collect ``steps_per_epoch`` transitions
with the current stochastic policy, then fit the policy (clipped surrogate,
KL early stop) and the critic (mean-squared error to the GAE returns).
"""
from __future__ import annotations

import csv
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ._accel import HAS_NUMBA, njit
from .nn import Adam, GaussianPolicy, Mlp, load_checkpoint, save_checkpoint
from .seeding import substream

log = logging.getLogger(__name__)

METRICS_HEADER = ["epoch", "steps", "mean_return", "trailing100_return", "pi_loss", "v_loss", "kl", "clip_frac"]


@dataclass
class PpoConfig:
    clip_ratio: float = 0.02
    lr_pi: float = 1e-4
    lr_v: float = 1e-3
    gamma: float = 0.99
    lam: float = 0.97
    steps_per_epoch: int = 4000
    epochs: int = 50
    train_pi_iters: int = 80
    train_v_iters: int = 80
    target_kl: float = 0.01
    hidden: tuple = (64, 64)
    init_log_std: float = math.log(0.5)
    seed: int = 1
    max_ep_len: int = 1200

    def __post_init__(self):
        if not 0 < self.clip_ratio < 1:
            raise ValueError("clip_ratio must lie in (0, 1)")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0 <= self.lam <= 1:
            raise ValueError("lam must lie in [0, 1]")

    @classmethod
    def from_run_config(cls, cfg) -> "PpoConfig":
        p = cfg.ppo
        return cls(clip_ratio=p.clip_ratio, lr_pi=p.lr_pi, lr_v=p.lr_v, gamma=p.gamma, lam=p.lam,
                   steps_per_epoch=p.steps_per_epoch, epochs=p.epochs, train_pi_iters=p.train_pi_iters,
                   train_v_iters=p.train_v_iters, target_kl=p.target_kl, hidden=tuple(p.hidden),
                   init_log_std=p.init_log_std, seed=cfg.seed, max_ep_len=cfg.reward.horizon_steps)


# --- advantage estimation ---------------------------------------------------------

@njit(cache=True)
def _gae_kernel(rewards, values, dones, gamma, lam):
    n = rewards.shape[0]
    adv = np.empty(n)
    acc = 0.0
    for t in range(n - 1, -1, -1):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * values[t + 1] * live - values[t]
        acc = delta + gamma * lam * live * acc
        adv[t] = acc
    return adv


def _gae_numpy(rewards, values, dones, gamma, lam):
    # backward recursion; cut at episode ends so nothing leaks across them
    live = 1.0 - dones
    deltas = rewards + gamma * values[1:] * live - values[:-1]
    adv = np.empty_like(deltas)
    acc = 0.0
    coef = gamma * lam * live
    for t in range(len(deltas) - 1, -1, -1):
        acc = deltas[t] + coef[t] * acc
        adv[t] = acc
    return adv


_gae = _gae_kernel if HAS_NUMBA else _gae_numpy


def compute_gae(rewards, values, dones, gamma: float, lam: float):
    """GAE advantages and returns.

    ``values`` has one more entry than ``rewards``: the last one is the
    bootstrap value of the state after the final transition (0 at a true
    episode end). ``dones[t]`` marks that transition ``t`` ended an episode.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    if values.shape != (len(rewards) + 1,) or dones.shape != rewards.shape:
        raise ValueError("need len(values) == len(rewards) + 1 == len(dones) + 1")
    adv = _gae(rewards, values, dones, float(gamma), float(lam))
    return adv, adv + values[:-1]


# --- objective --------------------------------------------------------------------

def clipped_objective(logp_new, logp_old, adv, clip_ratio: float):
    """Negated clipped surrogate and its gradient w.r.t. ``logp_new``.

    Returns ``(loss, dloss_dlogp, info)``; ``info`` has the KL estimate
    ``mean(logp_old - logp_new)`` and the clipped fraction.
    """
    logp_new = np.asarray(logp_new, dtype=np.float64)
    adv = np.asarray(adv, dtype=np.float64)
    ratio = np.exp(logp_new - np.asarray(logp_old, dtype=np.float64))
    clipped = np.clip(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio)
    surr = ratio * adv
    surr_clip = clipped * adv
    obj = np.minimum(surr, surr_clip)
    n = len(adv)
    # gradient flows only where the unclipped term is the active one
    active = surr <= surr_clip
    grad = np.where(active, -surr / n, 0.0)
    clip_frac = float(np.mean((ratio > 1.0 + clip_ratio) | (ratio < 1.0 - clip_ratio)))
    info = {"kl": float(np.mean(np.asarray(logp_old) - logp_new)), "clip_frac": clip_frac}
    return -float(obj.mean()), grad, info


# --- buffer -----------------------------------------------------------------------

class TrajectoryBuffer:
    """Fixed-capacity store of one epoch of transitions."""

    def __init__(self, obs_dim: int, act_dim: int, size: int, gamma: float = 0.99, lam: float = 0.97):
        self.obs = np.zeros((size, obs_dim))
        self.act = np.zeros((size, act_dim))
        self.logp = np.zeros(size)
        self.rew = np.zeros(size)
        self.val = np.zeros(size)
        self.done = np.zeros(size)
        self.adv = np.zeros(size)
        self.ret = np.zeros(size)
        self.gamma, self.lam = gamma, lam
        self.size = size
        self.ptr = 0
        self.path_start = 0

    @property
    def full(self) -> bool:
        return self.ptr >= self.size

    def store(self, obs, act, logp, rew, val) -> None:
        if self.full:
            raise IndexError("buffer full")
        i = self.ptr
        self.obs[i], self.act[i], self.logp[i], self.rew[i], self.val[i] = obs, act, logp, rew, val
        self.ptr += 1

    def finish_path(self, last_val: float = 0.0) -> None:
        """Close the current trajectory; ``last_val`` bootstraps a cut-off one."""
        sl = slice(self.path_start, self.ptr)
        if sl.start == sl.stop:
            return
        vals = np.append(self.val[sl], last_val)
        dones = np.zeros(sl.stop - sl.start)
        self.adv[sl], self.ret[sl] = compute_gae(self.rew[sl], vals, dones, self.gamma, self.lam)
        if last_val == 0.0:
            self.done[sl.stop - 1] = 1.0
        self.path_start = self.ptr

    def get(self) -> dict[str, np.ndarray]:
        if not self.full:
            raise RuntimeError("buffer must be full before an update")
        if self.path_start != self.ptr:
            raise RuntimeError("unfinished trajectory in buffer")
        adv = self.adv.copy()
        std = adv.std()
        adv = (adv - adv.mean()) / (std if std > 0 else 1.0)
        data = {"obs": self.obs, "act": self.act, "logp": self.logp, "adv": adv, "ret": self.ret}
        self.ptr = self.path_start = 0
        return data


# --- update -----------------------------------------------------------------------

@dataclass
class UpdateStats:
    pi_loss: float
    v_loss: float
    kl: float
    clip_frac: float
    pi_iters: int
    v_loss_after: float


def value_loss(critic: Mlp, obs, ret):
    v, cache = critic.forward(obs)
    err = v[:, 0] - ret
    return float(np.mean(err**2)), cache, err


def update(data, policy: GaussianPolicy, critic: Mlp, pi_opt: Adam, v_opt: Adam, cfg: PpoConfig) -> UpdateStats:
    obs, act, logp_old, adv, ret = data["obs"], data["act"], data["logp"], data["adv"], data["ret"]
    pi_loss0 = kl = clip_frac = None
    iters = 0
    for i in range(cfg.train_pi_iters):
        logp, cache = policy.log_prob(obs, act)
        loss, dlogp, info = clipped_objective(logp, logp_old, adv, cfg.clip_ratio)
        if not math.isfinite(loss):
            raise FloatingPointError(f"non-finite policy loss at iteration {i}")
        if i == 0:
            pi_loss0 = loss
        kl, clip_frac = info["kl"], info["clip_frac"]
        if kl > cfg.target_kl:
            log.debug("early stop at pi iter %d, kl %.4g", i, kl)
            break
        pi_opt.step(policy.log_prob_grads(obs, act, dlogp, cache))
        iters += 1

    n = len(ret)
    v_loss0 = None
    for _ in range(cfg.train_v_iters):
        loss, cache, err = value_loss(critic, obs, ret)
        if not math.isfinite(loss):
            raise FloatingPointError("non-finite value loss")
        if v_loss0 is None:
            v_loss0 = loss
        v_opt.step(critic.backward(cache, (2.0 / n) * err[:, None]))
    v_after = value_loss(critic, obs, ret)[0]
    return UpdateStats(pi_loss0, v_loss0 if v_loss0 is not None else v_after, kl, clip_frac, iters, v_after)


# --- training loop ----------------------------------------------------------------

@dataclass
class TrainResult:
    policy: GaussianPolicy
    critic: Mlp
    metrics: list[dict]
    episode_returns: list[float]
    best_checkpoint: Path | None = None
    final_checkpoint: Path | None = None
    pi_opt: Adam | None = None
    v_opt: Adam | None = None


def make_agent(obs_dim: int, act_dim: int, cfg: PpoConfig):
    rng = substream(cfg.seed, "init")
    policy = GaussianPolicy(obs_dim, act_dim, cfg.hidden, rng, cfg.init_log_std)
    critic = Mlp([obs_dim, *cfg.hidden, 1], rng)
    return policy, critic, Adam(policy.params, cfg.lr_pi), Adam(critic.params, cfg.lr_v)


def train(env_factory: Callable, cfg: PpoConfig, out_dir=None, meta: dict | None = None,
          progress: Callable | None = None) -> TrainResult:
    """Run ``cfg.epochs`` collect/update cycles on a fresh env from ``env_factory``.

    With ``out_dir`` set, writes ``metrics.csv``, ``best.npz`` (highest
    trailing-100 return) and ``final.npz``.
    """
    env = env_factory()
    policy, critic, pi_opt, v_opt = make_agent(env.obs_dim, env.act_dim, cfg)
    buf = TrajectoryBuffer(env.obs_dim, env.act_dim, cfg.steps_per_epoch, cfg.gamma, cfg.lam)
    noise_rng = substream(cfg.seed, "rollout-worker", 0)
    episode_seeds = substream(cfg.seed, "episodes")
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    meta = dict(meta or {})

    returns: list[float] = []
    trailing: deque = deque(maxlen=100)
    metrics: list[dict] = []
    best = -math.inf
    best_path = final_path = None
    total_steps = 0

    def new_episode():
        return env.reset(seed=int(episode_seeds.integers(2**31)))

    o, ep_ret, ep_len = new_episode(), 0.0, 0
    for epoch in range(cfg.epochs):
        epoch_returns = []
        for t in range(cfg.steps_per_epoch):
            mu, _ = policy.mean_net.forward(o)
            a = mu + np.exp(policy.log_std) * noise_rng.standard_normal(env.act_dim)
            logp = float(np.sum(-0.5 * ((a - mu) / np.exp(policy.log_std)) ** 2 - policy.log_std
                                - 0.5 * math.log(2 * math.pi)))
            v = float(critic(o)[0])
            try:
                o2, r, done, info = env.step(a)
            except Exception as exc:
                raise RuntimeError(f"env failure in epoch {epoch}, episode step {ep_len}: {exc}") from exc
            buf.store(o, a, logp, r, v)
            ep_ret += r
            ep_len += 1
            o = o2
            truncated = bool(info.get("truncated", False)) or ep_len >= cfg.max_ep_len
            epoch_end = t == cfg.steps_per_epoch - 1
            if done or truncated or epoch_end:
                terminal = done and not info.get("truncated", False)
                buf.finish_path(0.0 if terminal else float(critic(o)[0]))
                if done or truncated:
                    returns.append(ep_ret)
                    trailing.append(ep_ret)
                    epoch_returns.append(ep_ret)
                    o, ep_ret, ep_len = new_episode(), 0.0, 0
        total_steps += cfg.steps_per_epoch
        stats = update(buf.get(), policy, critic, pi_opt, v_opt, cfg)
        row = {
            "epoch": epoch,
            "steps": total_steps,
            "mean_return": float(np.mean(epoch_returns)) if epoch_returns else float("nan"),
            "trailing100_return": float(np.mean(trailing)) if trailing else float("nan"),
            "pi_loss": stats.pi_loss,
            "v_loss": stats.v_loss,
            "kl": stats.kl,
            "clip_frac": stats.clip_frac,
        }
        metrics.append(row)
        if progress is not None:
            progress(row)
        log.info("epoch %d ret %.2f trail %.2f kl %.4f iters %d", epoch, row["mean_return"],
                 row["trailing100_return"], stats.kl, stats.pi_iters)
        if out is not None:
            if trailing and row["trailing100_return"] > best:
                best = row["trailing100_return"]
                best_path = save_checkpoint(out / "best.npz", policy, critic, pi_opt, v_opt,
                                            {**meta, "epoch": epoch})
    if out is not None:
        final_path = save_checkpoint(out / "final.npz", policy, critic, pi_opt, v_opt, {**meta, "epoch": cfg.epochs})
        write_metrics_csv(metrics, out / "metrics.csv")
    return TrainResult(policy, critic, metrics, returns, best_path, final_path, pi_opt, v_opt)


def evaluate(policy, env_factory: Callable, n_episodes: int, stochastic: bool = True, seed: int = 0):
    """Roll out ``n_episodes`` fresh episodes and return their outcomes.

    ``policy`` may be a :class:`GaussianPolicy` or a checkpoint path.
    """
    if not isinstance(policy, GaussianPolicy):
        policy = load_checkpoint(policy)[0]
    if n_episodes <= 0:
        return []
    env = env_factory()
    if policy.mean_net.sizes[0] != env.obs_dim or policy.mean_net.sizes[-1] != env.act_dim:
        raise ValueError(
            f"checkpoint expects obs/act dims {policy.mean_net.sizes[0]}/{policy.mean_net.sizes[-1]}, "
            f"env has {env.obs_dim}/{env.act_dim}"
        )
    seeds = substream(seed, "eval-episodes")
    noise = substream(seed, "eval-noise")
    std = np.exp(policy.log_std)
    outcomes = []
    for _ in range(n_episodes):
        o = env.reset(seed=int(seeds.integers(2**31)))
        done = False
        while not done:
            a = policy.mean(o)
            if stochastic:
                a = a + std * noise.standard_normal(env.act_dim)
            o, _, done, _ = env.step(a)
        outcomes.append(env.outcome())
    return outcomes


def write_metrics_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRICS_HEADER)
        for r in rows:
            w.writerow([r["epoch"], r["steps"]] + [repr(float(r[k])) for k in METRICS_HEADER[2:]])


def read_metrics_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        if rd.fieldnames != METRICS_HEADER:
            raise ValueError(f"{path}: unexpected header {rd.fieldnames}")
        return [{"epoch": int(r["epoch"]), "steps": int(r["steps"]),
                 **{k: float(r[k]) for k in METRICS_HEADER[2:]}} for r in rd]
