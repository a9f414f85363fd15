"""Pure-Python scheduling kernel: one decision interval of per-TTI work.

This is the reference implementation; ``_kernel_cy`` is its compiled twin
and must produce bit-identical results.  Keep arithmetic expressions and
iteration order in the two files literally in sync: every float operation
is IEEE double in the same order, every counter is an exact integer.

Per TTI the kernel
  1. appends pre-drawn Poisson packet arrivals to UE queues,
  2. advances random-waypoint motion (waypoint draws come from a
     pre-drawn pool so no RNG is consumed inside the loop),
  3. grants RBGs in two passes: a priority pass honoring each
     prioritized slice's share, then (limited-soft mode) a
     work-conserving residual pass round-robin over every backlogged UE.
     Hard mode instead dedicates the remaining RBGs to the background
     slice and lets unused grants idle.
  4. serves queue bytes per grant at the UE's link rate and logs each
     fully delivered packet into the slice delay histogram.

A granted RBG whose UE drains mid-grant still counts as one consumed
grant (padding waste, as in a real scheduler).
"""
from __future__ import annotations

import math


def run_interval(
    n_slices,
    num_rbgs,
    n_ttis,
    tti_start,
    tti_ms,
    mode_hard,
    ue_slice,      # (U,)   int32  slice id per UE, grouped by slice
    slice_start,   # (N+1,) int32  UE index range of slice i = [s[i], s[i+1])
    m_counts,      # (N-1,) int32  prioritized RBG counts
    rate_bits,     # (U,)   int64  bits served per RBG-TTI, >= 1
    arrivals,      # (K,U)  int64  pre-drawn packet arrivals
    pkt_bits,
    pos,           # (U,2)  f64    in/out
    way,           # (U,2)  f64    in/out
    speed,         # (U,)   f64    in/out
    wp_pool,       # (U,P,3) f64   pre-drawn waypoint draws (x, y, speed), unit range
    wp_used,       # (U,)   int32  in/out, reset each interval by the caller
    speed_lo,
    speed_hi,
    area_w,
    area_h,
    tti_s,
    q_arr,         # (U,C)  int64  ring buffer: arrival TTI per packet
    q_bits,        # (U,C)  int64  ring buffer: bits remaining per packet
    q_head,        # (U,)   int32  in/out
    q_len,         # (U,)   int32  in/out
    rr_slice,      # (N,)   int32  in/out round-robin pointers (offset in slice)
    rr_global,     # (1,)   int32  in/out residual-pass pointer (UE index)
    hist,          # (N,H)  int64  out, delay histogram per slice, last bin overflow
    served_bits,   # (N,)   int64  out
    grants,        # (N,)   int64  out
    audit_granted,  # (K,)  int32  out, grants issued per TTI
    audit_backlog,  # (K,)  int32  out, backlogged UEs after scheduling per TTI
):
    n_ues = len(ue_slice)
    cap = q_arr.shape[1] if n_ues else 0
    n_hist = hist.shape[1]
    overflow_bin = n_hist - 1
    pool_size = wp_pool.shape[1] if n_ues else 0
    n_pri = n_slices - 1

    # mutable scalars as plain Python ints/floats for exact arithmetic
    ue_slice_l = [int(v) for v in ue_slice]
    slice_start_l = [int(v) for v in slice_start]
    m_l = [int(v) for v in m_counts]
    rate_l = [int(v) for v in rate_bits]
    arrivals_l = arrivals.tolist()
    q_head_l = [int(v) for v in q_head]
    q_len_l = [int(v) for v in q_len]
    rr_slice_l = [int(v) for v in rr_slice]
    rr_g = int(rr_global[0])
    wp_used_l = [int(v) for v in wp_used]
    px = [float(pos[u, 0]) for u in range(n_ues)]
    py = [float(pos[u, 1]) for u in range(n_ues)]
    wx = [float(way[u, 0]) for u in range(n_ues)]
    wy = [float(way[u, 1]) for u in range(n_ues)]
    sp = [float(speed[u]) for u in range(n_ues)]
    served_l = [0] * n_slices
    grants_l = [0] * n_slices
    hist_l = [[0] * n_hist for _ in range(n_slices)]
    pkt_bits = int(pkt_bits)
    tti_ms = int(tti_ms)

    backlog_slice = [0] * n_slices
    for u in range(n_ues):
        if q_len_l[u] > 0:
            backlog_slice[ue_slice_l[u]] += 1
    backlog_total = sum(backlog_slice)

    def serve_one(u, cur_tti):
        """Grant one RBG to UE u; returns nothing, updates queue state."""
        nonlocal backlog_total
        budget = rate_l[u]
        sl = ue_slice_l[u]
        while budget > 0 and q_len_l[u] > 0:
            h = q_head_l[u]
            remaining = int(q_bits[u, h])
            take = budget if budget < remaining else remaining
            remaining -= take
            q_bits[u, h] = remaining
            budget -= take
            served_l[sl] += take
            if remaining == 0:
                delay_ms = (cur_tti - int(q_arr[u, h])) * tti_ms
                b = delay_ms if delay_ms < overflow_bin else overflow_bin
                hist_l[sl][b] += 1
                h += 1
                if h == cap:
                    h = 0
                q_head_l[u] = h
                q_len_l[u] -= 1
                if q_len_l[u] == 0:
                    backlog_slice[sl] -= 1
                    backlog_total -= 1
        grants_l[sl] += 1

    for t in range(n_ttis):
        cur_tti = tti_start + t

        # 1. arrivals
        row = arrivals_l[t]
        for u in range(n_ues):
            a = row[u]
            if a == 0:
                continue
            tail = q_head_l[u] + q_len_l[u]
            if tail >= cap:
                tail -= cap
            for _ in range(a):
                q_arr[u, tail] = cur_tti
                q_bits[u, tail] = pkt_bits
                tail += 1
                if tail == cap:
                    tail = 0
            if q_len_l[u] == 0:
                backlog_slice[ue_slice_l[u]] += 1
                backlog_total += 1
            q_len_l[u] += a

        # 2. motion (random waypoint; pool-fed draws, pause when exhausted)
        for u in range(n_ues):
            dx = wx[u] - px[u]
            dy = wy[u] - py[u]
            dist = math.sqrt(dx * dx + dy * dy)
            step_len = sp[u] * tti_s
            if dist <= step_len:
                px[u] = wx[u]
                py[u] = wy[u]
                j = wp_used_l[u]
                if j < pool_size:
                    wx[u] = float(wp_pool[u, j, 0]) * area_w
                    wy[u] = float(wp_pool[u, j, 1]) * area_h
                    sp[u] = speed_lo + float(wp_pool[u, j, 2]) * (speed_hi - speed_lo)
                    wp_used_l[u] = j + 1
            else:
                px[u] = px[u] + dx / dist * step_len
                py[u] = py[u] + dy / dist * step_len

        # 3. scheduling
        granted = 0

        # pass 1: each prioritized slice gets up to its share
        for i in range(n_pri):
            budget = m_l[i]
            if budget == 0 or backlog_slice[i] == 0:
                continue
            start = slice_start_l[i]
            cnt = slice_start_l[i + 1] - start
            ptr = rr_slice_l[i]
            while budget > 0 and backlog_slice[i] > 0:
                off = ptr
                while q_len_l[start + off] == 0:
                    off += 1
                    if off == cnt:
                        off = 0
                serve_one(start + off, cur_tti)
                budget -= 1
                granted += 1
                ptr = off + 1
                if ptr == cnt:
                    ptr = 0
            rr_slice_l[i] = ptr

        if mode_hard:
            # dedicated leftover for the background slice; idle otherwise
            budget = num_rbgs
            for i in range(n_pri):
                budget -= m_l[i]
            bg = n_slices - 1
            if budget > 0 and backlog_slice[bg] > 0:
                start = slice_start_l[bg]
                cnt = slice_start_l[bg + 1] - start
                ptr = rr_slice_l[bg]
                while budget > 0 and backlog_slice[bg] > 0:
                    off = ptr
                    while q_len_l[start + off] == 0:
                        off += 1
                        if off == cnt:
                            off = 0
                    serve_one(start + off, cur_tti)
                    budget -= 1
                    granted += 1
                    ptr = off + 1
                    if ptr == cnt:
                        ptr = 0
                rr_slice_l[bg] = ptr
        else:
            # pass 2: residual grants shared work-conservingly by all slices
            left = num_rbgs - granted
            if left > 0 and backlog_total > 0:
                ptr = rr_g
                while left > 0 and backlog_total > 0:
                    u = ptr
                    while q_len_l[u] == 0:
                        u += 1
                        if u == n_ues:
                            u = 0
                    serve_one(u, cur_tti)
                    left -= 1
                    granted += 1
                    ptr = u + 1
                    if ptr == n_ues:
                        ptr = 0
                rr_g = ptr

        audit_granted[t] = granted
        audit_backlog[t] = backlog_total

    # write mutable state back
    for u in range(n_ues):
        pos[u, 0] = px[u]
        pos[u, 1] = py[u]
        way[u, 0] = wx[u]
        way[u, 1] = wy[u]
        speed[u] = sp[u]
        q_head[u] = q_head_l[u]
        q_len[u] = q_len_l[u]
        wp_used[u] = wp_used_l[u]
    for i in range(n_slices):
        rr_slice[i] = rr_slice_l[i]
        served_bits[i] = served_l[i]
        grants[i] = grants_l[i]
        for b in range(n_hist):
            hist[i, b] = hist_l[i][b]
    rr_global[0] = rr_g
