"""Decision-process wrapper tests: normalization, reward, episode protocol."""
import numpy as np
import pytest

from slicelab.config import EpisodeConfig, NormConstants, RewardParams, SimConfig
from slicelab.env import (
    METRIC_FIELDS,
    OBS_FIELDS,
    SliceEnv,
    normalize,
    observation_layout,
    reward_of,
)
from slicelab.errors import ProtocolError


def raw_row(t_rx=0.0, t_tx=0.0, util=0.0, d_vio=0.0, d_avg=0.0):
    return [t_rx, t_tx, util, d_vio, d_avg]


class TestNormalize:
    def test_scaling_by_hand(self):
        norms = NormConstants(rate_cap_mbps=50.0, delay_cap_ms=500.0)
        out = normalize(raw_row(t_rx=10.0, t_tx=80.0, util=0.3, d_vio=0.37, d_avg=250.0), norms)
        # 10/50 = 0.2; 80/50 clips to 1; fractions pass through; 250/500 = 0.5
        assert out.tolist() == [0.2, 1.0, 0.3, 0.37, 0.5]

    def test_always_in_unit_interval(self):
        norms = NormConstants()
        rng = np.random.default_rng(0)
        raw = rng.random((100, 5)) * np.array([100.0, 100.0, 1.0, 1.0, 600.0])
        out = normalize(raw, norms)
        assert (out >= 0.0).all() and (out <= 1.0).all()

    def test_layout_names(self):
        names = observation_layout(3)
        assert len(names) == 15
        assert names[0] == "slice0_t_rx_norm"
        assert names[5] == "slice1_t_rx_norm"
        assert names[14] == "slice2_d_avg_norm"
        assert len(METRIC_FIELDS) == len(OBS_FIELDS) == 5


class TestRewardOf:
    def test_hand_evaluated_case(self):
        # rate_cap 40: t_rx 32 -> 0.8 and 24 -> 0.6
        # slice0: 0.8 - 4*0.1 - 1*0.5 = -0.1 ; slice1: 0.6 - 0 - 0.4 = 0.2
        # R = 0.5*(-0.1) + 0.5*0.2 = 0.05
        params = RewardParams(priorities=(0.5, 0.5, 0.0))
        norms = NormConstants(rate_cap_mbps=40.0)
        raw = [
            raw_row(t_rx=32.0, util=0.5, d_vio=0.1),
            raw_row(t_rx=24.0, util=0.4, d_vio=0.0),
            raw_row(t_rx=39.0, util=0.9, d_vio=1.0),  # background, weight 0
        ]
        r = reward_of(raw, params, norms)
        assert abs(r - 0.05) < 1e-12, r

    def test_all_zero_metrics(self):
        params = RewardParams.default(3)
        assert reward_of(np.zeros((3, 5)), params, NormConstants()) == 0.0

    def test_linear_in_priorities(self):
        rng = np.random.default_rng(3)
        raw = rng.random((3, 5)) * np.array([40.0, 40.0, 1.0, 1.0, 500.0])
        norms = NormConstants()
        p1 = RewardParams(priorities=(1.0, 0.0, 0.0))
        p2 = RewardParams(priorities=(0.0, 1.0, 0.0))
        for lam in (0.0, 0.25, 0.7, 1.0):
            mix = RewardParams(priorities=(lam, 1.0 - lam, 0.0))
            want = lam * reward_of(raw, p1, norms) + (1 - lam) * reward_of(raw, p2, norms)
            assert abs(reward_of(raw, mix, norms) - want) < 1e-12

    def test_zero_weights_leave_throughput_term(self):
        raw = [raw_row(t_rx=20.0, util=0.9, d_vio=1.0)] * 3
        params = RewardParams(priorities=(0.5, 0.5, 0.0), delay_weight=0.0, util_weight=0.0)
        assert abs(reward_of(raw, params, NormConstants()) - 0.5) < 1e-12


class TestSliceEnv:
    def test_reset_is_reproducible(self):
        env = SliceEnv()
        a = env.reset(EpisodeConfig(seed=42))
        counts_a = env.sim.cfg.ue_counts
        b = env.reset(EpisodeConfig(seed=42))
        assert np.array_equal(a, b)
        assert env.sim.cfg.ue_counts == counts_a

    def test_ue_counts_vary_with_seed_and_stay_in_range(self):
        env = SliceEnv()
        totals = set()
        for seed in range(30):
            env.reset(EpisodeConfig(seed=seed))
            pri = env.sim.cfg.ue_counts[:-1]
            assert env.sim.cfg.ue_counts[-1] == 5
            assert all(c >= 1 for c in pri)
            assert 6 <= sum(pri) <= 20
            totals.add(sum(pri))
        assert len(totals) > 5  # the draw actually varies

    def test_observation_shape_and_range(self):
        env = SliceEnv()
        obs = env.reset(EpisodeConfig(seed=1))
        assert obs.shape == (15,)
        for _ in range(5):
            obs, r, done, raw = env.step([0.4, 0.3])
            assert obs.shape == (15,)
            assert raw.shape == (3, 5)
            assert (obs >= 0.0).all() and (obs <= 1.0).all()
            assert np.isfinite(r)

    def test_reward_matches_returned_raw(self):
        env = SliceEnv()
        env.reset(EpisodeConfig(seed=3))
        obs, r, done, raw = env.step([0.5, 0.2])
        assert r == reward_of(raw, env.reward_params, env.norms)

    def test_episode_ends_after_configured_steps(self):
        cfg = SimConfig(steps_per_episode=7)
        env = SliceEnv(cfg)
        env.reset(EpisodeConfig(seed=0))
        flags = [env.step([0.3, 0.3])[2] for _ in range(7)]
        assert flags == [False] * 6 + [True]
        with pytest.raises(ProtocolError):
            env.step([0.3, 0.3])

    def test_action_clamping_matches_explicit_bounds(self):
        # (-1, 2) must behave exactly like (0, 1)
        def run(action):
            env = SliceEnv()
            env.reset(EpisodeConfig(seed=5))
            return env.step(action)[0]

        assert np.array_equal(run([-1.0, 2.0]), run([0.0, 1.0]))

    def test_symmetric_slices_get_similar_service(self):
        # equal UE counts, equal thresholds, equal shares: time-averaged
        # service of the two prioritized slices should roughly agree
        cfg = SimConfig(delay_thresholds_ms=(50.0, 50.0, 10.0))
        env = SliceEnv(cfg)
        env.reset(EpisodeConfig(seed=9, ue_counts=(7, 7)))
        rx = np.zeros(2)
        for _ in range(30):
            _, _, _, raw = env.step([0.5, 0.5])
            rx += raw[:2, 0]
        assert abs(rx[0] - rx[1]) / max(rx.max(), 1e-9) < 0.1, rx

    def test_zero_traffic_observation(self):
        cfg = SimConfig(per_ue_rate_bps=0.0)
        env = SliceEnv(cfg)
        obs = env.reset(EpisodeConfig(seed=0))
        mat = obs.reshape(3, 5)
        assert (mat[:, 0] == 0.0).all()  # no throughput
        assert (mat[:, 3] == 0.0).all()  # no violations

    def test_fixed_counts_and_threshold_override(self):
        env = SliceEnv()
        env.reset(
            EpisodeConfig(seed=2, ue_counts=(4, 9), delay_thresholds_ms=(30.0, 50.0, 10.0))
        )
        assert env.sim.cfg.ue_counts == (4, 9, 5)
        assert env.sim.cfg.delay_thresholds_ms == (30.0, 50.0, 10.0)
        meta = env.episode_meta()
        assert meta["ue_counts"] == [4, 9, 5]
        assert meta["delay_thresholds_ms"][0] == 30.0

    def test_protocol_errors(self):
        env = SliceEnv()
        env.reset(EpisodeConfig(seed=0))
        with pytest.raises(ProtocolError):
            env.step([0.1])  # wrong arity
        with pytest.raises(ProtocolError):
            env.step([np.nan, 0.3])
