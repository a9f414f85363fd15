# cython: language_level=3, boundscheck=False, wraparound=False
# cython: initializedcheck=False, cdivision=True
"""Compiled twin of ``_kernel_py.run_interval``.

Arithmetic expressions and iteration order mirror the pure-Python
reference line for line; together with ``-ffp-contract=off`` at build
time that makes the two backends bit-identical.  Change one file only
in lockstep with the other (the parity test enforces this).
"""
from libc.math cimport sqrt

import numpy as np


cdef inline void _serve_one(
    int u,
    long long cur_tti,
    long long tti_ms,
    int cap,
    int overflow_bin,
    int[::1] ue_slice,
    long long[::1] rate_bits,
    long long[:, ::1] q_arr,
    long long[:, ::1] q_bits,
    int[::1] q_head,
    int[::1] q_len,
    long long[::1] backlog_slice,
    long long* backlog_total,
    long long[::1] served_bits,
    long long[::1] grants,
    long long[:, ::1] hist,
) noexcept:
    cdef long long budget = rate_bits[u]
    cdef int sl = ue_slice[u]
    cdef long long remaining, take, delay_ms
    cdef int h, b
    while budget > 0 and q_len[u] > 0:
        h = q_head[u]
        remaining = q_bits[u, h]
        take = budget if budget < remaining else remaining
        remaining -= take
        q_bits[u, h] = remaining
        budget -= take
        served_bits[sl] += take
        if remaining == 0:
            delay_ms = (cur_tti - q_arr[u, h]) * tti_ms
            b = <int> delay_ms if delay_ms < overflow_bin else overflow_bin
            hist[sl, b] += 1
            h += 1
            if h == cap:
                h = 0
            q_head[u] = h
            q_len[u] -= 1
            if q_len[u] == 0:
                backlog_slice[sl] -= 1
                backlog_total[0] -= 1
    grants[sl] += 1


def run_interval(
    int n_slices,
    int num_rbgs,
    int n_ttis,
    long long tti_start,
    long long tti_ms,
    int mode_hard,
    int[::1] ue_slice,
    int[::1] slice_start,
    int[::1] m_counts,
    long long[::1] rate_bits,
    long long[:, ::1] arrivals,
    long long pkt_bits,
    double[:, ::1] pos,
    double[:, ::1] way,
    double[::1] speed,
    double[:, :, ::1] wp_pool,
    int[::1] wp_used,
    double speed_lo,
    double speed_hi,
    double area_w,
    double area_h,
    double tti_s,
    long long[:, ::1] q_arr,
    long long[:, ::1] q_bits,
    int[::1] q_head,
    int[::1] q_len,
    int[::1] rr_slice,
    int[::1] rr_global,
    long long[:, ::1] hist,
    long long[::1] served_bits,
    long long[::1] grants,
    int[::1] audit_granted,
    int[::1] audit_backlog,
):
    cdef int n_ues = ue_slice.shape[0]
    cdef int cap = q_arr.shape[1] if n_ues else 0
    cdef int n_hist = hist.shape[1]
    cdef int overflow_bin = n_hist - 1
    cdef int pool_size = wp_pool.shape[1] if n_ues else 0
    cdef int n_pri = n_slices - 1

    backlog_np = np.zeros(n_slices, dtype=np.int64)
    cdef long long[::1] backlog_slice = backlog_np
    cdef long long backlog_total = 0
    cdef int u, i, t, j, ptr, off, start, cnt, granted, tail
    cdef long long a, k2, cur_tti, budget, left
    cdef double dx, dy, dist, step_len

    for u in range(n_ues):
        if q_len[u] > 0:
            backlog_slice[ue_slice[u]] += 1
            backlog_total += 1

    for t in range(n_ttis):
        cur_tti = tti_start + t

        # 1. arrivals
        for u in range(n_ues):
            a = arrivals[t, u]
            if a == 0:
                continue
            tail = q_head[u] + q_len[u]
            if tail >= cap:
                tail -= cap
            for k2 in range(a):
                q_arr[u, tail] = cur_tti
                q_bits[u, tail] = pkt_bits
                tail += 1
                if tail == cap:
                    tail = 0
            if q_len[u] == 0:
                backlog_slice[ue_slice[u]] += 1
                backlog_total += 1
            q_len[u] += <int> a

        # 2. motion (random waypoint; pool-fed draws, pause when exhausted)
        for u in range(n_ues):
            dx = way[u, 0] - pos[u, 0]
            dy = way[u, 1] - pos[u, 1]
            dist = sqrt(dx * dx + dy * dy)
            step_len = speed[u] * tti_s
            if dist <= step_len:
                pos[u, 0] = way[u, 0]
                pos[u, 1] = way[u, 1]
                j = wp_used[u]
                if j < pool_size:
                    way[u, 0] = wp_pool[u, j, 0] * area_w
                    way[u, 1] = wp_pool[u, j, 1] * area_h
                    speed[u] = speed_lo + wp_pool[u, j, 2] * (speed_hi - speed_lo)
                    wp_used[u] = j + 1
            else:
                pos[u, 0] = pos[u, 0] + dx / dist * step_len
                pos[u, 1] = pos[u, 1] + dy / dist * step_len

        # 3. scheduling
        granted = 0

        # pass 1: each prioritized slice gets up to its share
        for i in range(n_pri):
            budget = m_counts[i]
            if budget == 0 or backlog_slice[i] == 0:
                continue
            start = slice_start[i]
            cnt = slice_start[i + 1] - start
            ptr = rr_slice[i]
            while budget > 0 and backlog_slice[i] > 0:
                off = ptr
                while q_len[start + off] == 0:
                    off += 1
                    if off == cnt:
                        off = 0
                _serve_one(start + off, cur_tti, tti_ms, cap, overflow_bin,
                           ue_slice, rate_bits, q_arr, q_bits, q_head, q_len,
                           backlog_slice, &backlog_total, served_bits, grants,
                           hist)
                budget -= 1
                granted += 1
                ptr = off + 1
                if ptr == cnt:
                    ptr = 0
            rr_slice[i] = ptr

        if mode_hard:
            # dedicated leftover for the background slice; idle otherwise
            budget = num_rbgs
            for i in range(n_pri):
                budget -= m_counts[i]
            i = n_slices - 1
            if budget > 0 and backlog_slice[i] > 0:
                start = slice_start[i]
                cnt = slice_start[i + 1] - start
                ptr = rr_slice[i]
                while budget > 0 and backlog_slice[i] > 0:
                    off = ptr
                    while q_len[start + off] == 0:
                        off += 1
                        if off == cnt:
                            off = 0
                    _serve_one(start + off, cur_tti, tti_ms, cap, overflow_bin,
                               ue_slice, rate_bits, q_arr, q_bits, q_head,
                               q_len, backlog_slice, &backlog_total,
                               served_bits, grants, hist)
                    budget -= 1
                    granted += 1
                    ptr = off + 1
                    if ptr == cnt:
                        ptr = 0
                rr_slice[i] = ptr
        else:
            # pass 2: residual grants shared work-conservingly by all slices
            left = num_rbgs - granted
            if left > 0 and backlog_total > 0:
                ptr = rr_global[0]
                while left > 0 and backlog_total > 0:
                    u = ptr
                    while q_len[u] == 0:
                        u += 1
                        if u == n_ues:
                            u = 0
                    _serve_one(u, cur_tti, tti_ms, cap, overflow_bin,
                               ue_slice, rate_bits, q_arr, q_bits, q_head,
                               q_len, backlog_slice, &backlog_total,
                               served_bits, grants, hist)
                    left -= 1
                    granted += 1
                    ptr = u + 1
                    if ptr == n_ues:
                        ptr = 0
                rr_global[0] = ptr

        audit_granted[t] = granted
        audit_backlog[t] = <int> backlog_total
