"""Offline conservative Q-learning on relabeled transition datasets.

The critic loss is the SAC Bellman MSE plus a conservative penalty that
pushes Q down on out-of-data actions: ``cql_weight * (logsumexp_k
Q(s, a_k) - Q(s, a_data))`` with the sampled actions half uniform on the
action box and half drawn from the current policy (each policy sample's
Q corrected by its log-density, importance-sampling style).  The actor
update is SAC's with a fixed small entropy temperature; nothing here
ever touches an environment — the trainer holds only the dataset.
"""
from __future__ import annotations

import math
import time

import numpy as np

from ..checkpoint import Checkpoint
from ..config import CqlConfig, NormConstants, RewardParams
from ..datasets import Dataset, TransitionSet, relabel
from ..errors import ConfigError
from ..nn import sample_squashed, split_actor_output
from ..policies import ActorPolicy
from .common import ActorCritic, TrainLog, check_finite
from .replay import Batch, ReplayBuffer
from .sac import actor_step, bellman_targets, critic_bellman_step


def conservative_penalty(q_samples: np.ndarray, q_data: np.ndarray):
    """mean_b [ logsumexp_k q_samples[b, k] - q_data[b] ] and its gradients.

    ``q_samples`` already carries any importance corrections.  Returns
    ``(value, d_q_samples, d_q_data)`` where the gradients are of the
    batch-mean value (softmax weights over samples, -1/B on the data Q).
    """
    q_samples = np.asarray(q_samples, dtype=np.float64)
    q_data = np.asarray(q_data, dtype=np.float64)
    if q_samples.ndim != 2 or q_samples.shape[0] != q_data.shape[0]:
        raise ConfigError(
            f"penalty shapes disagree: {q_samples.shape} vs {q_data.shape}"
        )
    b = q_samples.shape[0]
    m = q_samples.max(axis=1, keepdims=True)
    z = np.exp(q_samples - m)
    zsum = z.sum(axis=1)
    lse = m[:, 0] + np.log(zsum)
    value = float(np.mean(lse - q_data))
    d_q_samples = z / zsum[:, None] / b
    d_q_data = np.full(b, -1.0 / b)
    return value, d_q_samples, d_q_data


def _sampled_actions(nets: ActorCritic, obs: np.ndarray, k_total: int,
                     rng: np.random.Generator):
    """Penalty proposals: half uniform box samples, half policy samples.

    Returns ``(actions (B, K, A), corrections (B, K))`` where the
    correction is the proposal log-density to subtract from Q (uniform
    density on the unit box is 1, so its correction is 0).
    """
    b = obs.shape[0]
    a_dim = nets.action_dim
    k_unif = k_total // 2
    k_pol = k_total - k_unif
    unif = rng.random((b, k_unif, a_dim))
    out = nets.actor.forward(obs)
    mean, log_std = split_actor_output(out)
    mean = np.broadcast_to(mean[:, None, :], (b, k_pol, a_dim))
    log_std = np.broadcast_to(log_std[:, None, :], (b, k_pol, a_dim))
    eps = rng.standard_normal((b, k_pol, a_dim))
    pol, logp, _ = sample_squashed(mean, log_std, eps)
    actions = np.concatenate([unif, pol], axis=1)
    corrections = np.concatenate([np.zeros((b, k_unif)), logp], axis=1)
    return actions, corrections


def cql_update(nets: ActorCritic, batch: Batch, cfg: CqlConfig,
               rng: np.random.Generator) -> dict:
    """One offline update: penalized critics, SAC-style actor, targets.

    The entropy temperature is ``exp(nets.log_alpha)``, held fixed (the
    nets carry no temperature optimizer offline).  With ``cql_weight ==
    0`` the penalty branch is skipped entirely and the update coincides
    bit-for-bit with SAC's on the same nets, batch, and rng.
    """
    b = len(batch)
    alpha = nets.alpha
    y = bellman_targets(nets, batch, cfg.gamma, alpha, rng)
    bellman_loss, critic_grads, (q1d, q2d) = critic_bellman_step(nets, batch, y)

    penalty_value = 0.0
    if cfg.cql_weight > 0.0:
        actions, corrections = _sampled_actions(
            nets, batch.obs, cfg.num_sampled_actions, rng
        )
        k = actions.shape[1]
        obs_wide = np.broadcast_to(
            batch.obs[:, None, :], (b, k, batch.obs.shape[1])
        )
        x = np.concatenate([obs_wide, actions], axis=2).reshape(b * k, -1)
        for critic, q_data in ((nets.critic1, q1d), (nets.critic2, q2d)):
            q_flat, cache = critic.forward_cached(x)
            q_corr = q_flat[:, 0].reshape(b, k) - corrections
            value, d_samples, d_data = conservative_penalty(q_corr, q_data)
            penalty_value += value
            g_pen, _ = critic.backward(
                cache, (cfg.cql_weight * d_samples).reshape(b * k, 1)
            )
            # data-action term flows through the same cached forward used
            # by the Bellman step; recompute its backward contribution
            xd = np.concatenate([batch.obs, batch.actions], axis=1)
            _, cache_d = critic.forward_cached(xd)
            g_dat, _ = critic.backward(
                cache_d, (cfg.cql_weight * d_data)[:, None]
            )
            offset = 0 if critic is nets.critic1 else len(g_pen)
            for i, (gp, gd) in enumerate(zip(g_pen, g_dat)):
                critic_grads[offset + i] = critic_grads[offset + i] + gp + gd
    nets.critic_opt.step(critic_grads)

    actor_loss, _ = actor_step(nets, batch.obs, alpha, rng)
    nets.polyak_targets(cfg.tau)
    critic_loss = bellman_loss + cfg.cql_weight * penalty_value
    check_finite("critic loss", critic_loss)
    check_finite("actor loss", actor_loss)
    return {
        "critic_loss": critic_loss,
        "bellman_loss": bellman_loss,
        "cql_penalty": penalty_value,
        "actor_loss": actor_loss,
        "mean_q": float(np.mean(q1d)),
    }


def train_offline(dataset: Dataset | TransitionSet, reward_params: RewardParams,
                  cfg: CqlConfig, total_steps: int, seed: int = 0,
                  eval_fn=None, norms: NormConstants | None = None,
                  log_every: int = 100) -> tuple[Checkpoint, TrainLog]:
    """Train CQL on a fixed dataset; rewards come from ``relabel``.

    ``dataset`` may be a stored dataset (relabeled here under
    ``reward_params``) or an already-relabeled ``TransitionSet``.
    """
    cfg.validate()
    norms = norms if norms is not None else NormConstants()
    if isinstance(dataset, TransitionSet):
        transitions = dataset
    else:
        transitions = relabel(dataset, reward_params, norms)
    if len(transitions) == 0:
        raise ConfigError("cannot train on an empty dataset")
    if len(transitions) < cfg.batch_size:
        raise ConfigError(
            f"dataset has {len(transitions)} transitions, "
            f"batch size {cfg.batch_size} needs at least that many"
        )

    ss = np.random.SeedSequence(seed)
    net_ss, upd_ss = ss.spawn(2)
    net_rng = np.random.Generator(np.random.PCG64(net_ss))
    upd_rng = np.random.Generator(np.random.PCG64(upd_ss))

    obs_dim = transitions.obs.shape[1]
    action_dim = transitions.actions.shape[1]
    nets = ActorCritic(obs_dim, action_dim, cfg.hidden_dim,
                       cfg.actor_lr, cfg.critic_lr, net_rng,
                       alpha_lr=None, init_log_alpha=math.log(cfg.fixed_alpha))
    buf = ReplayBuffer.from_arrays(
        transitions.obs, transitions.actions, transitions.rewards,
        transitions.next_obs, transitions.dones,
    )
    log = TrainLog()
    update_ms = 0.0
    pending: list[dict] = []

    def checkpoint(steps):
        return nets.checkpoint(
            num_slices=transitions.num_slices,
            norms=norms,
            meta={
                "algo": "cql", "steps": steps, "seed": seed,
                "gamma": cfg.gamma, "cql_weight": cfg.cql_weight,
                "dataset_size": len(transitions),
                "reward_delay_weight": reward_params.delay_weight,
                "reward_util_weight": reward_params.util_weight,
            },
        )

    for step in range(1, total_steps + 1):
        t0 = time.perf_counter()
        batch = buf.sample(cfg.batch_size, upd_rng)
        losses = cql_update(nets, batch, cfg, upd_rng)
        update_ms += (time.perf_counter() - t0) * 1e3
        pending.append(losses)

        at_eval = eval_fn is not None and step % cfg.eval_interval == 0
        if step % log_every == 0 or step == total_steps or at_eval:
            row = {
                "step": step,
                "critic_loss": float(np.mean([p["critic_loss"] for p in pending])),
                "bellman_loss": float(np.mean([p["bellman_loss"] for p in pending])),
                "cql_penalty": float(np.mean([p["cql_penalty"] for p in pending])),
                "actor_loss": float(np.mean([p["actor_loss"] for p in pending])),
                "mean_q": losses["mean_q"],
                "env_ms": 0.0,
                "update_ms": update_ms,
                "wall_ms": update_ms,
            }
            if at_eval:
                row["eval_return"] = float(eval_fn(ActorPolicy(checkpoint(step))))
            log.append(**row)
            pending = []
    return checkpoint(total_steps), log
