"""Dataset pipeline tests: collection determinism, storage round-trips,
reward relabeling, merging, and the validation report."""
import json

import numpy as np
import pytest

from slicelab.config import EpisodeConfig, NormConstants, RewardParams, SimConfig
from slicelab.datasets import (
    Dataset,
    DatasetHeader,
    collect,
    load_dataset,
    merge,
    relabel,
    schema_hash,
    validate_file,
)
from slicelab.env import normalize
from slicelab.errors import DatasetError
from slicelab.policies import DelayBasedPolicy, LoadBasedPolicy

SMALL_SIM = SimConfig(steps_per_episode=30, ttis_per_step=20)
TWO_SLICE_SIM = SimConfig(
    num_slices=2,
    ue_counts=(5, 5),
    delay_thresholds_ms=(50.0, 50.0),
    steps_per_episode=10,
    ttis_per_step=20,
)


@pytest.fixture(scope="module")
def base_dataset():
    return collect(LoadBasedPolicy(), episodes=2,
                   episode_template=EpisodeConfig(seed=31), sim_config=SMALL_SIM)


@pytest.fixture(scope="module")
def second_dataset():
    return collect(DelayBasedPolicy(), episodes=1,
                   episode_template=EpisodeConfig(seed=77), sim_config=SMALL_SIM)


class TestSchema:

    def test_hash_is_stable_and_discriminates(self):
        assert schema_hash(3, 2) == schema_hash(3, 2)
        assert schema_hash(3, 2) != schema_hash(4, 3)
        assert len(schema_hash(3, 2)) == 16

    def test_header_round_trip(self):
        header = DatasetHeader(num_slices=3, action_dim=2, record_count=12)
        again = DatasetHeader.from_json(header.to_json())
        assert again == header

    def test_tampered_hash_rejected(self):
        header = DatasetHeader(num_slices=3, action_dim=2, record_count=0)
        obj = json.loads(header.to_json())
        obj["schema_hash"] = "0" * 16
        with pytest.raises(DatasetError):
            DatasetHeader.from_json(json.dumps(obj))

    def test_wrong_kind_rejected(self):
        with pytest.raises(DatasetError):
            DatasetHeader.from_json(json.dumps({"kind": "something-else"}))


class TestCollect:

    def test_record_count(self, base_dataset):
        # 2 episodes x 30 steps
        assert len(base_dataset) == 60
        assert base_dataset.header.record_count == 60
        assert base_dataset.raw.shape == (60, 3, 5)
        assert base_dataset.actions.shape == (60, 2)

    def test_zero_episodes_valid_empty(self, tmp_path):
        out = tmp_path / "empty.jsonl"
        ds = collect(LoadBasedPolicy(), episodes=0,
                     episode_template=EpisodeConfig(seed=1),
                     sim_config=SMALL_SIM, out_path=out)
        assert len(ds) == 0
        assert ds.header.record_count == 0
        again = load_dataset(out)
        assert len(again) == 0
        assert again.header.hash == ds.header.hash

    def test_recollect_byte_identical(self):
        kwargs = dict(episodes=1, episode_template=EpisodeConfig(seed=5),
                      sim_config=SMALL_SIM)
        a = collect(LoadBasedPolicy(), **kwargs)
        b = collect(LoadBasedPolicy(), **kwargs)
        assert list(a.record_lines()) == list(b.record_lines())

    def test_saved_bytes_deterministic(self, base_dataset, tmp_path):
        p1 = tmp_path / "a.jsonl"
        p2 = tmp_path / "b.jsonl"
        base_dataset.save(p1)
        base_dataset.save(p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_partial_marker_removed_on_success(self, tmp_path):
        out = tmp_path / "ok.jsonl"
        collect(LoadBasedPolicy(), episodes=1,
                episode_template=EpisodeConfig(seed=2),
                sim_config=SMALL_SIM, out_path=out)
        assert out.exists()
        assert not (tmp_path / "ok.jsonl.partial").exists()

    def test_episode_metadata_recorded(self, base_dataset):
        assert set(base_dataset.policies) == {"load"}
        assert base_dataset.ue_counts.shape == (60, 3)
        assert (base_dataset.ue_counts[:, -1] == 5).all()
        # both episodes share the template SLA
        assert (base_dataset.thresholds == (100.0, 50.0, 10.0)).all()
        # step indices restart per episode
        assert base_dataset.step_indices[0] == 0
        assert base_dataset.step_indices[30] == 0

    def test_done_flag_terminal_only(self, base_dataset):
        dones = base_dataset.dones.reshape(2, 30)
        assert not dones[:, :-1].any()
        assert dones[:, -1].all()


class TestRoundTrip:

    def test_jsonl_value_identity(self, base_dataset, tmp_path):
        out = tmp_path / "ds.jsonl"
        base_dataset.save(out)
        again = load_dataset(out)
        assert np.array_equal(again.raw, base_dataset.raw)
        assert np.array_equal(again.next_raw, base_dataset.next_raw)
        assert np.array_equal(again.actions, base_dataset.actions)
        assert np.array_equal(again.dones, base_dataset.dones)
        assert np.array_equal(again.episode_ids, base_dataset.episode_ids)
        assert np.array_equal(again.step_indices, base_dataset.step_indices)
        assert np.array_equal(again.ue_counts, base_dataset.ue_counts)
        assert np.array_equal(again.thresholds, base_dataset.thresholds)
        assert again.policies == base_dataset.policies
        assert again.header.hash == base_dataset.header.hash

    def test_npz_twin_matches(self, base_dataset, tmp_path):
        out = tmp_path / "ds.jsonl"
        base_dataset.save(out, npz_twin=True)
        twin = tmp_path / "ds.jsonl.npz"
        assert twin.exists()
        a = load_dataset(out)
        b = load_dataset(twin)
        assert np.array_equal(a.raw, b.raw)
        assert np.array_equal(a.next_raw, b.next_raw)
        assert np.array_equal(a.actions, b.actions)
        assert np.array_equal(a.dones, b.dones)
        assert a.policies == b.policies

    def test_missing_file(self, tmp_path):
        with pytest.raises(DatasetError):
            load_dataset(tmp_path / "nothing.jsonl")

    def test_garbled_record_line_reports_position(self, base_dataset, tmp_path):
        out = tmp_path / "bad.jsonl"
        base_dataset.save(out)
        lines = out.read_text().splitlines()
        lines[3] = "{not json"
        out.write_text("\n".join(lines) + "\n")
        with pytest.raises(DatasetError, match=":4:"):
            load_dataset(out)


class TestRelabel:

    def test_pure_and_repeatable(self, base_dataset):
        raw_before = base_dataset.raw.copy()
        params = RewardParams.default(3)
        a = relabel(base_dataset, params)
        b = relabel(base_dataset, params)
        assert np.array_equal(base_dataset.raw, raw_before)
        assert np.array_equal(a.rewards, b.rewards)
        assert np.array_equal(a.obs, b.obs)
        assert len(a) == len(base_dataset)
        assert a.obs.shape == (60, 15)
        assert a.actions.shape == (60, 2)

    def test_rewards_follow_next_metrics(self, base_dataset):
        from slicelab.env import reward_of
        params = RewardParams.default(3)
        ts = relabel(base_dataset, params)
        for i in (0, 17, 59):
            assert ts.rewards[i] == pytest.approx(
                reward_of(base_dataset.next_raw[i], params, NormConstants()),
                abs=1e-12,
            )

    def test_weight_variants_differ(self, base_dataset):
        heavy = RewardParams(priorities=(0.5, 0.5, 0.0),
                             delay_weight=4.0, util_weight=1.0)
        light = RewardParams(priorities=(0.5, 0.5, 0.0),
                             delay_weight=0.5, util_weight=0.5)
        r_heavy = relabel(base_dataset, heavy).rewards
        r_light = relabel(base_dataset, light).rewards
        # util is nonzero whenever traffic flows, so the weightings differ
        assert not np.allclose(r_heavy, r_light)

    def test_zero_weights_reduce_to_mean_throughput(self, base_dataset):
        params = RewardParams(priorities=(0.5, 0.5, 0.0),
                              delay_weight=0.0, util_weight=0.0)
        ts = relabel(base_dataset, params)
        norm = normalize(base_dataset.next_raw, NormConstants())
        expected = norm[:, :2, 0].mean(axis=1)
        assert np.allclose(ts.rewards, expected, atol=1e-12)

    def test_priority_length_guard(self, base_dataset):
        bad = RewardParams(priorities=(1.0, 0.0), delay_weight=0.0,
                           util_weight=0.0)
        with pytest.raises(DatasetError):
            relabel(base_dataset, bad)


class TestMerge:

    def test_counts_and_episode_reindex(self, base_dataset, second_dataset):
        merged = merge([base_dataset, second_dataset])
        assert len(merged) == 90
        assert merged.header.record_count == 90
        # episodes 0,1 from the first dataset, 2 from the second
        assert sorted(np.unique(merged.episode_ids).tolist()) == [0, 1, 2]
        assert set(merged.policies) == {"load", "delay"}

    def test_single_input_identity(self, base_dataset):
        merged = merge([base_dataset])
        assert np.array_equal(merged.raw, base_dataset.raw)
        assert np.array_equal(merged.episode_ids, base_dataset.episode_ids)
        assert merged.policies == base_dataset.policies

    def test_mismatched_slice_count_rejected(self, base_dataset):
        other = collect(LoadBasedPolicy(num_slices=2), episodes=1,
                        episode_template=EpisodeConfig(
                            seed=3, delay_thresholds_ms=(50.0, 50.0)),
                        sim_config=TWO_SLICE_SIM)
        with pytest.raises(DatasetError):
            merge([base_dataset, other])

    def test_relabel_commutes_with_merge(self, base_dataset, second_dataset):
        params = RewardParams.default(3)
        merged = relabel(merge([base_dataset, second_dataset]), params)
        parts = [relabel(base_dataset, params), relabel(second_dataset, params)]
        assert np.array_equal(merged.rewards,
                              np.concatenate([p.rewards for p in parts]))
        assert np.array_equal(merged.obs,
                              np.concatenate([p.obs for p in parts]))
        assert np.array_equal(merged.dones,
                              np.concatenate([p.dones for p in parts]))

    def test_empty_list_rejected(self):
        with pytest.raises(DatasetError):
            merge([])


class TestValidateFile:

    def test_fresh_file_passes(self, base_dataset, tmp_path):
        out = tmp_path / "fresh.jsonl"
        base_dataset.save(out)
        report = validate_file(out)
        names = [name for name, _, _ in report]
        assert "d_vio_range" in names
        assert "step_indices_monotone" in names
        assert all(ok for _, ok, _ in report)

    def test_injected_out_of_range_fails(self, base_dataset, tmp_path):
        out = tmp_path / "tampered.jsonl"
        base_dataset.save(out)
        tampered = load_dataset(out)
        tampered.raw[0, 0, 3] = 1.5
        tampered.save(out)
        report = {name: ok for name, ok, _ in validate_file(out)}
        assert report["d_vio_range"] is False
        assert report["loadable"] is True

    def test_truncated_file_fails(self, base_dataset, tmp_path):
        out = tmp_path / "trunc.jsonl"
        base_dataset.save(out)
        lines = out.read_text().splitlines()
        out.write_text("\n".join(lines[:-5]) + "\n")
        report = validate_file(out)
        assert not all(ok for _, ok, _ in report)

    def test_missing_file_raises(self, tmp_path):
        with pytest.raises(DatasetError):
            validate_file(tmp_path / "absent.jsonl")
