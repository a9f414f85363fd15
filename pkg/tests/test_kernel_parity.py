"""Compiled and pure-Python kernels must agree bit for bit.

Every metric value and every piece of carried-over state (positions,
queues, round-robin pointers) is compared with exact equality across a
grid of modes, loads, and seeds.  If the compiled extension is not
built, the suite skips rather than fails (the package still works on
the fallback).
"""
import numpy as np
import pytest

from slicelab.config import SimConfig
import slicelab.sim.core as simcore
from slicelab.sim import _kernel_py

_kernel_cy = pytest.importorskip(
    "slicelab.sim._kernel_cy", reason="compiled kernel not built"
)


def episode_trace(kernel, seed, mode, ue_counts, n_steps=10):
    n = len(ue_counts)
    cfg = SimConfig(
        num_slices=n,
        ue_counts=ue_counts,
        delay_thresholds_ms=tuple([50.0] * n),
        slicing_mode=mode,
    )
    sim = simcore.create_sim(cfg, seed=seed)
    saved = simcore.run_interval
    simcore.run_interval = kernel
    rows = []
    try:
        rng = np.random.default_rng(seed + 1000)
        for _ in range(n_steps):
            plan = simcore.AllocationPlan.from_action(
                rng.random(cfg.num_prioritized), cfg.num_rbgs
            )
            rows.append(
                np.concatenate([m.as_array() for m in simcore.step_interval(sim, plan)])
            )
    finally:
        simcore.run_interval = saved
    state = {
        "pos": sim.pos.copy(),
        "way": sim.way.copy(),
        "speed": sim.speed.copy(),
        "q_head": sim.q_head.copy(),
        "q_len": sim.q_len.copy(),
        "q_arr": sim.q_arr.copy(),
        "q_bits": sim.q_bits.copy(),
        "rr_slice": sim.rr_slice.copy(),
        "rr_global": sim.rr_global.copy(),
        "arrived": sim.arrived_packets.copy(),
        "delivered": sim.delivered_packets.copy(),
        "audit_granted": sim.last_audit[0].copy(),
        "audit_backlog": sim.last_audit[1].copy(),
    }
    return np.array(rows), state


class TestKernelParity:
    @pytest.mark.parametrize("mode", ["limited_soft", "hard"])
    @pytest.mark.parametrize("seed", [0, 1, 2])
    @pytest.mark.parametrize("ue_counts", [(5, 5, 5), (18, 14, 5), (1, 2, 5)])
    def test_bit_identical_traces(self, mode, seed, ue_counts):
        mp, sp = episode_trace(_kernel_py.run_interval, seed, mode, ue_counts)
        mc, sc = episode_trace(_kernel_cy.run_interval, seed, mode, ue_counts)
        assert np.array_equal(mp, mc), f"metric traces diverge ({mode}, seed {seed})"
        for key in sp:
            assert np.array_equal(sp[key], sc[key]), f"state field {key!r} diverges"

    def test_four_slice_cell(self):
        mp, sp = episode_trace(
            _kernel_py.run_interval, 4, "limited_soft", (4, 4, 4, 5), n_steps=6
        )
        mc, sc = episode_trace(
            _kernel_cy.run_interval, 4, "limited_soft", (4, 4, 4, 5), n_steps=6
        )
        assert np.array_equal(mp, mc)
        for key in sp:
            assert np.array_equal(sp[key], sc[key]), key
