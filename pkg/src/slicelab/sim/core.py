"""Deterministic one-cell slicing simulator.

A ``SimState`` advances in decision intervals of ``ttis_per_step`` TTIs.
Per interval the caller supplies an ``AllocationPlan`` (prioritized RBG
shares); the simulator returns one ``SliceMetrics`` per slice, aggregated
over the interval.  All randomness derives from the creation seed through
named generator streams, so identical (config, seed, action trace) yields
bit-identical metric streams.

Link rates are sampled once per decision interval from current UE
positions (distances move at most ~0.2 m per interval at walking speed)
and quantized to whole bits per RBG-TTI with a floor of 1 bit, which
keeps the residual scheduling pass work-conserving.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..config import SimConfig
from ..errors import ConfigError
from .kernel import run_interval

# delay histogram: one bin per whole ms, 0..500, plus one overflow bin
DELAY_BINS_MS = 501
HIST_SIZE = DELAY_BINS_MS + 1
WAYPOINT_POOL = 8  # pre-drawn waypoint draws per UE per interval


@dataclass
class SliceMetrics:
    """Raw per-slice observables for one decision interval."""

    t_rx_mbps: float   # delivered (served) throughput
    t_tx_mbps: float   # arrived traffic load
    util: float        # fraction of the interval's RBG-TTI grants consumed
    d_vio: float       # delivered packets above the delay threshold
    d_avg_ms: float    # mean delivered delay

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.t_rx_mbps, self.t_tx_mbps, self.util, self.d_vio, self.d_avg_ms]
        )


class DelayHistogram:
    """Packet delay counts at 1 ms granularity, overflow bin last.

    Bin ``b < 501`` counts packets delivered with delay exactly ``b`` ms
    (delays are whole ms because service completes on TTI boundaries);
    the final bin collects everything above 500 ms.
    """

    def __init__(self, counts: np.ndarray):
        self.counts = np.asarray(counts, dtype=np.int64)

    @property
    def delivered(self) -> int:
        return int(self.counts.sum())

    def violation_rate(self, threshold_ms: float) -> float:
        total = self.delivered
        if total == 0:
            return 0.0
        values = np.arange(HIST_SIZE)
        violated = int(self.counts[values > threshold_ms].sum())
        return violated / total

    def mean_delay_ms(self) -> float:
        total = self.delivered
        if total == 0:
            return 0.0
        values = np.arange(HIST_SIZE, dtype=np.float64)
        return float(self.counts @ values) / total


def delay_violation_rate(hist: DelayHistogram, threshold_ms: float) -> float:
    """Fraction of delivered packets with delay above the threshold.

    Zero-delivery windows report 0 by convention.
    """
    if threshold_ms <= 0:
        raise ConfigError("threshold must be > 0")
    return hist.violation_rate(threshold_ms)


@dataclass
class AllocationPlan:
    """Clamped, normalized prioritized shares and their RBG counts."""

    shares: np.ndarray      # (N-1,) in [0,1], sum <= 1
    rbg_counts: np.ndarray  # (N-1,) ints, sum <= num_rbgs

    @classmethod
    def from_action(cls, action, num_rbgs: int) -> "AllocationPlan":
        shares = np.clip(np.asarray(action, dtype=np.float64), 0.0, 1.0)
        total = shares.sum()
        if total > 1.0:
            shares = shares / total
        counts = np.floor(shares * num_rbgs + 0.5).astype(np.int64)
        # rounding can push the sum one past the budget; trim largest first
        while counts.sum() > num_rbgs:
            counts[int(np.argmax(counts))] -= 1
        return cls(shares=shares, rbg_counts=counts)


class SimState:
    """One cell with N slices; single-threaded, externally synchronized."""

    def __init__(self, cfg: SimConfig, seed):
        cfg.validate()
        self.cfg = cfg
        self.seed = seed
        if isinstance(seed, np.random.SeedSequence):
            ss = seed
        else:
            ss = np.random.SeedSequence(seed)
        place_ss, traffic_ss, motion_ss = ss.spawn(3)
        self._traffic_rng = np.random.Generator(np.random.PCG64(traffic_ss))
        self._motion_rng = np.random.Generator(np.random.PCG64(motion_ss))
        place_rng = np.random.Generator(np.random.PCG64(place_ss))

        n = cfg.num_slices
        counts = list(cfg.ue_counts)
        self.num_ues = sum(counts)
        u = self.num_ues
        self.ue_slice = np.repeat(np.arange(n, dtype=np.int32), counts)
        self.slice_start = np.zeros(n + 1, dtype=np.int32)
        self.slice_start[1:] = np.cumsum(counts)

        w, h = cfg.area_m
        self.pos = np.empty((u, 2), dtype=np.float64)
        self.pos[:, 0] = place_rng.random(u) * w
        self.pos[:, 1] = place_rng.random(u) * h
        self.way = np.empty((u, 2), dtype=np.float64)
        self.way[:, 0] = place_rng.random(u) * w
        self.way[:, 1] = place_rng.random(u) * h
        lo, hi = cfg.ue_speed_range
        self.speed = lo + place_rng.random(u) * (hi - lo)
        self._wp_used = np.zeros(u, dtype=np.int32)

        self._qcap = 64
        self.q_arr = np.zeros((u, self._qcap), dtype=np.int64)
        self.q_bits = np.zeros((u, self._qcap), dtype=np.int64)
        self.q_head = np.zeros(u, dtype=np.int32)
        self.q_len = np.zeros(u, dtype=np.int32)

        self.rr_slice = np.zeros(n, dtype=np.int32)
        self.rr_global = np.zeros(1, dtype=np.int32)

        self.tti = 0
        self.arrived_packets = np.zeros(n, dtype=np.int64)
        self.delivered_packets = np.zeros(n, dtype=np.int64)
        self.last_hists: list[DelayHistogram] | None = None
        self.last_audit: tuple[np.ndarray, np.ndarray] | None = None

    # -- channel ------------------------------------------------------

    def link_rate_bits(self) -> np.ndarray:
        """Integer bits per RBG-TTI for every UE at its current position."""
        cfg = self.cfg
        bx, by = cfg.base_position()
        d = np.hypot(self.pos[:, 0] - bx, self.pos[:, 1] - by)
        rate = link_rate_array(
            d,
            tx_power_dbm=cfg.tx_power_dbm,
            noise_dbm=cfg.noise_dbm,
            pathloss_ref_db=cfg.pathloss_ref_db,
            pathloss_exponent=cfg.pathloss_exponent,
            ref_distance_m=cfg.ref_distance_m,
            rbg_bandwidth_hz=cfg.rbg_bandwidth_hz,
            max_spectral_efficiency=cfg.max_spectral_efficiency,
            tti_s=cfg.tti_s,
        )
        return np.maximum(np.floor(rate), 1.0).astype(np.int64)

    # -- queue helpers --------------------------------------------------

    def _ensure_capacity(self, incoming_per_ue: np.ndarray) -> None:
        if self.num_ues == 0:
            return
        need = int((self.q_len + incoming_per_ue).max())
        if need <= self._qcap:
            return
        new_cap = self._qcap
        while new_cap < need:
            new_cap *= 2
        u = self.num_ues
        new_arr = np.zeros((u, new_cap), dtype=np.int64)
        new_bits = np.zeros((u, new_cap), dtype=np.int64)
        for i in range(u):
            ln = int(self.q_len[i])
            if ln:
                idx = (int(self.q_head[i]) + np.arange(ln)) % self._qcap
                new_arr[i, :ln] = self.q_arr[i, idx]
                new_bits[i, :ln] = self.q_bits[i, idx]
        self.q_arr, self.q_bits = new_arr, new_bits
        self.q_head[:] = 0
        self._qcap = new_cap

    def queued_packets(self) -> np.ndarray:
        """Per-slice count of packets still waiting (incl. partly served)."""
        out = np.zeros(self.cfg.num_slices, dtype=np.int64)
        np.add.at(out, self.ue_slice, self.q_len.astype(np.int64))
        return out


def create_sim(config: SimConfig, seed) -> SimState:
    """Build a simulator; identical (config, seed) gives identical runs.

    ``seed`` is an int or a ``numpy.random.SeedSequence`` (the env wrapper
    passes a spawned child so episode seeds stay independent).
    """
    return SimState(config, seed)


def step_interval(sim: SimState, plan: AllocationPlan) -> list[SliceMetrics]:
    """Advance one decision interval under the given allocation plan."""
    cfg = sim.cfg
    n = cfg.num_slices
    k = cfg.ttis_per_step
    u = sim.num_ues

    lam = cfg.per_ue_rate_bps * cfg.tti_s / cfg.packet_bits
    arrivals = sim._traffic_rng.poisson(lam, size=(k, u)).astype(np.int64)
    wp_pool = sim._motion_rng.random((u, WAYPOINT_POOL, 3))
    sim._wp_used[:] = 0
    sim._ensure_capacity(arrivals.sum(axis=0))
    rate_bits = sim.link_rate_bits()

    hist = np.zeros((n, HIST_SIZE), dtype=np.int64)
    served_bits = np.zeros(n, dtype=np.int64)
    grants = np.zeros(n, dtype=np.int64)
    audit_granted = np.zeros(k, dtype=np.int32)
    audit_backlog = np.zeros(k, dtype=np.int32)

    lo, hi = cfg.ue_speed_range
    run_interval(
        n,
        cfg.num_rbgs,
        k,
        sim.tti,
        cfg.tti_ms,
        1 if cfg.slicing_mode == "hard" else 0,
        sim.ue_slice,
        sim.slice_start,
        plan.rbg_counts.astype(np.int32),
        rate_bits,
        arrivals,
        cfg.packet_bits,
        sim.pos,
        sim.way,
        sim.speed,
        wp_pool,
        sim._wp_used,
        lo,
        hi,
        cfg.area_m[0],
        cfg.area_m[1],
        cfg.tti_s,
        sim.q_arr,
        sim.q_bits,
        sim.q_head,
        sim.q_len,
        sim.rr_slice,
        sim.rr_global,
        hist,
        served_bits,
        grants,
        audit_granted,
        audit_backlog,
    )
    sim.tti += k

    arrived_pkts = np.zeros(n, dtype=np.int64)
    np.add.at(arrived_pkts, sim.ue_slice, arrivals.sum(axis=0))
    sim.arrived_packets += arrived_pkts
    sim.delivered_packets += hist.sum(axis=1)
    sim.last_hists = [DelayHistogram(hist[i]) for i in range(n)]
    sim.last_audit = (audit_granted, audit_backlog)

    interval_s = k * cfg.tti_s
    rbg_ttis = cfg.num_rbgs * k
    metrics = []
    for i in range(n):
        h = sim.last_hists[i]
        metrics.append(
            SliceMetrics(
                t_rx_mbps=float(served_bits[i]) / interval_s / 1e6,
                t_tx_mbps=float(arrived_pkts[i]) * cfg.packet_bits / interval_s / 1e6,
                util=float(grants[i]) / rbg_ttis,
                d_vio=h.violation_rate(cfg.delay_thresholds_ms[i]),
                d_avg_ms=h.mean_delay_ms(),
            )
        )
    return metrics


def link_rate(
    ue_pos,
    base_pos,
    *,
    tx_power_dbm: float = 10.0,
    noise_dbm: float = -90.0,
    pathloss_ref_db: float = 38.0,
    pathloss_exponent: float = 3.0,
    ref_distance_m: float = 1.0,
    rbg_bandwidth_hz: float = 500e3,
    max_spectral_efficiency: float = 3.6,
    tti_s: float = 1e-3,
) -> float:
    """Bits one RBG carries in one TTI at the given UE position.

    Log-distance path loss, Shannon efficiency capped at the top
    modulation order; monotonically non-increasing in distance.
    """
    d = math.hypot(ue_pos[0] - base_pos[0], ue_pos[1] - base_pos[1])
    return float(
        link_rate_array(
            np.array([d]),
            tx_power_dbm=tx_power_dbm,
            noise_dbm=noise_dbm,
            pathloss_ref_db=pathloss_ref_db,
            pathloss_exponent=pathloss_exponent,
            ref_distance_m=ref_distance_m,
            rbg_bandwidth_hz=rbg_bandwidth_hz,
            max_spectral_efficiency=max_spectral_efficiency,
            tti_s=tti_s,
        )[0]
    )


def link_rate_array(
    distances_m: np.ndarray,
    *,
    tx_power_dbm: float,
    noise_dbm: float,
    pathloss_ref_db: float,
    pathloss_exponent: float,
    ref_distance_m: float,
    rbg_bandwidth_hz: float,
    max_spectral_efficiency: float,
    tti_s: float,
) -> np.ndarray:
    d = np.maximum(np.asarray(distances_m, dtype=np.float64), ref_distance_m)
    pathloss_db = pathloss_ref_db + 10.0 * pathloss_exponent * np.log10(
        d / ref_distance_m
    )
    snr_db = tx_power_dbm - pathloss_db - noise_dbm
    snr = 10.0 ** (snr_db / 10.0)
    efficiency = np.minimum(np.log2(1.0 + snr), max_spectral_efficiency)
    return rbg_bandwidth_hz * efficiency * tti_s
