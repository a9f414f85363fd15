"""Online soft actor-critic: twin critics, squashed-Gaussian actor,
auto-tuned entropy temperature.

One training step is one environment sample followed by one minibatch
gradient update; warm-up environment steps (uniform random actions that
seed the replay buffer) are not counted, so ``total_steps`` equals the
number of gradient updates exactly — the accounting the offline trainer
mirrors for fair comparison.
"""
from __future__ import annotations

import time
from dataclasses import replace

import numpy as np

from ..checkpoint import Checkpoint
from ..config import EpisodeConfig, NormConstants, SacConfig
from ..nn import sample_squashed, split_actor_output, squashed_backward
from ..policies import ActorPolicy
from .common import ActorCritic, TrainLog, check_finite
from .replay import Batch, ReplayBuffer


def bellman_targets(nets: ActorCritic, batch: Batch, gamma: float,
                    alpha_ent: float, rng: np.random.Generator) -> np.ndarray:
    """y = r + gamma * (1 - done) * (min target-Q(s', a') - alpha * log pi(a'))."""
    out = nets.actor.forward(batch.next_obs)
    mean, log_std = split_actor_output(out)
    eps = rng.standard_normal(mean.shape)
    a2, logp2, _ = sample_squashed(mean, log_std, eps)
    x2 = np.concatenate([batch.next_obs, a2], axis=1)
    q1 = nets.target1.forward(x2)[:, 0]
    q2 = nets.target2.forward(x2)[:, 0]
    soft_q = np.minimum(q1, q2) - alpha_ent * logp2
    return batch.rewards + gamma * (1.0 - batch.dones) * soft_q


def critic_bellman_step(nets: ActorCritic, batch: Batch, y: np.ndarray):
    """Loss, gradients, and caches of the twin-critic MSE toward ``y``.

    Gradients are returned (not applied) so callers can add penalty
    terms before the optimizer step.
    """
    b = len(batch)
    x = np.concatenate([batch.obs, batch.actions], axis=1)
    q1, cache1 = nets.critic1.forward_cached(x)
    q2, cache2 = nets.critic2.forward_cached(x)
    q1, q2 = q1[:, 0], q2[:, 0]
    loss = float(np.mean((q1 - y) ** 2) + np.mean((q2 - y) ** 2))
    g1, _ = nets.critic1.backward(cache1, ((2.0 / b) * (q1 - y))[:, None])
    g2, _ = nets.critic2.backward(cache2, ((2.0 / b) * (q2 - y))[:, None])
    return loss, g1 + g2, (q1, q2)


def actor_step(nets: ActorCritic, obs: np.ndarray, alpha_ent: float,
               rng: np.random.Generator) -> tuple[float, np.ndarray]:
    """One gradient step on E[alpha * log pi(a|s) - min Q(s, a)], a ~ pi."""
    b = obs.shape[0]
    out, actor_cache = nets.actor.forward_cached(obs)
    mean, log_std = split_actor_output(out)
    eps = rng.standard_normal(mean.shape)
    action, logp, head_cache = sample_squashed(mean, log_std, eps)
    x = np.concatenate([obs, action], axis=1)
    q1, c1 = nets.critic1.forward_cached(x)
    q2, c2 = nets.critic2.forward_cached(x)
    q1, q2 = q1[:, 0], q2[:, 0]
    qmin = np.minimum(q1, q2)
    loss = float(np.mean(alpha_ent * logp - qmin))
    # route -dL/dq through whichever critic realized the min
    take1 = (q1 <= q2).astype(np.float64)
    dq1 = (-take1 / b)[:, None]
    dq2 = (-(1.0 - take1) / b)[:, None]
    _, dx1 = nets.critic1.backward(c1, dq1)
    _, dx2 = nets.critic2.backward(c2, dq2)
    d_action = (dx1 + dx2)[:, obs.shape[1]:]
    d_logp = np.full(b, alpha_ent / b)
    d_mean, d_log_std = squashed_backward(head_cache, d_action, d_logp)
    grads, _ = nets.actor.backward(
        actor_cache, np.concatenate([d_mean, d_log_std], axis=1)
    )
    nets.actor_opt.step(grads)
    return loss, logp


def sac_update(nets: ActorCritic, batch: Batch, cfg: SacConfig,
               rng: np.random.Generator, target_entropy: float) -> dict:
    """One full SAC update: critics, actor, temperature, targets."""
    alpha = nets.alpha
    y = bellman_targets(nets, batch, cfg.gamma, alpha, rng)
    critic_loss, critic_grads, (q1, _) = critic_bellman_step(nets, batch, y)
    nets.critic_opt.step(critic_grads)

    actor_loss, logp = actor_step(nets, batch.obs, alpha, rng)

    alpha_loss = 0.0
    if nets.alpha_opt is not None:
        # d/dlog_alpha of -log_alpha * mean(logp + target_entropy)
        gap = float(np.mean(logp) + target_entropy)
        alpha_loss = -float(nets.log_alpha[0]) * gap
        nets.alpha_opt.step([np.array([-gap])])

    nets.polyak_targets(cfg.tau)
    check_finite("critic loss", critic_loss)
    check_finite("actor loss", actor_loss)
    return {
        "critic_loss": critic_loss,
        "actor_loss": actor_loss,
        "alpha_loss": alpha_loss,
        "alpha": alpha,
        "mean_q": float(np.mean(q1)),
    }


def train_online(env, cfg: SacConfig, total_steps: int, seed: int = 0,
                 eval_fn=None, episode_template: EpisodeConfig | None = None,
                 log_every: int = 100) -> tuple[Checkpoint, TrainLog]:
    """Train SAC against a live environment.

    ``eval_fn(policy) -> float``, when given, is called every
    ``cfg.eval_interval`` updates with a deterministic actor policy and
    its result logged under ``eval_return``.
    """
    cfg.validate()
    ss = np.random.SeedSequence(seed)
    net_ss, act_ss, upd_ss, ep_ss = ss.spawn(4)
    net_rng = np.random.Generator(np.random.PCG64(net_ss))
    act_rng = np.random.Generator(np.random.PCG64(act_ss))
    upd_rng = np.random.Generator(np.random.PCG64(upd_ss))
    ep_rng = np.random.Generator(np.random.PCG64(ep_ss))

    nets = ActorCritic(env.obs_dim, env.action_dim, cfg.hidden_dim,
                       cfg.actor_lr, cfg.critic_lr, net_rng,
                       alpha_lr=cfg.alpha_lr)
    target_entropy = (
        cfg.target_entropy if cfg.target_entropy is not None
        else -float(env.action_dim)
    )
    buf = ReplayBuffer(cfg.replay_capacity, env.obs_dim, env.action_dim)
    log = TrainLog()
    template = episode_template or EpisodeConfig()

    def next_episode():
        return env.reset(replace(template, seed=int(ep_rng.integers(2**31 - 1))))

    def policy_action(obs):
        out = nets.actor.forward(obs[None, :])
        mean, log_std = split_actor_output(out)
        a, _, _ = sample_squashed(mean, log_std, act_rng.standard_normal(mean.shape))
        return a[0]

    obs = next_episode()
    for _ in range(cfg.warmup_steps):
        a = act_rng.random(env.action_dim)
        nobs, r, done, _ = env.step(a)
        buf.add(obs, a, r, nobs, done)
        obs = next_episode() if done else nobs

    env_ms = 0.0
    update_ms = 0.0
    pending: list[dict] = []
    for step in range(1, total_steps + 1):
        t0 = time.perf_counter()
        a = policy_action(obs)
        nobs, r, done, _ = env.step(a)
        buf.add(obs, a, r, nobs, done)
        obs = next_episode() if done else nobs
        t1 = time.perf_counter()
        batch = buf.sample(cfg.batch_size, upd_rng)
        losses = sac_update(nets, batch, cfg, upd_rng, target_entropy)
        t2 = time.perf_counter()
        env_ms += (t1 - t0) * 1e3
        update_ms += (t2 - t1) * 1e3
        pending.append(losses)

        at_eval = eval_fn is not None and step % cfg.eval_interval == 0
        if step % log_every == 0 or step == total_steps or at_eval:
            row = {
                "step": step,
                "critic_loss": float(np.mean([p["critic_loss"] for p in pending])),
                "actor_loss": float(np.mean([p["actor_loss"] for p in pending])),
                "alpha": losses["alpha"],
                "mean_q": losses["mean_q"],
                "env_ms": env_ms,
                "update_ms": update_ms,
                "wall_ms": env_ms + update_ms,
            }
            if at_eval:
                ckpt = _checkpoint(nets, env, cfg, seed, step, "sac")
                row["eval_return"] = float(eval_fn(ActorPolicy(ckpt)))
            log.append(**row)
            pending = []
    return _checkpoint(nets, env, cfg, seed, total_steps, "sac"), log


def _checkpoint(nets: ActorCritic, env, cfg, seed: int, steps: int,
                algo: str) -> Checkpoint:
    norms = getattr(env, "norms", None) or NormConstants()
    return nets.checkpoint(
        num_slices=getattr(env, "num_slices", env.action_dim + 1),
        norms=norms,
        meta={"algo": algo, "steps": steps, "seed": seed,
              "gamma": cfg.gamma},
    )
