"""Compiled flow, drift and RK4 kernels shared by netmodel, regions and sim.

Topology codes: 0 single, 1 tandem, 2 merge. ``cap`` is (n_queues, m).
"""

import math

import numpy as np
from numba import njit

SINGLE, TANDEM, MERGE = 0, 1, 2


@njit(cache=True)
def flows_into(topo, mode, q, v, w, theta, cap, inflow, out):
    if topo == SINGLE:
        c = cap[0, mode]
        if q[0] > 0.0:
            out[0] = c
        else:
            out[0] = min(c, inflow[0])
    elif topo == TANDEM:
        send = min(v * q[0], cap[0, mode])
        receive = w * (theta - q[1])
        out[0] = min(send, receive)
        out[1] = min(v * q[1], cap[1, mode])
    else:
        total = q[0] + q[1]
        receive = w * (theta - q[2])
        share1 = 0.0
        share2 = 0.0
        if total > 0.0:
            share1 = q[0] / total * receive
            share2 = q[1] / total * receive
        out[0] = min(v * q[0], share1, cap[0, mode])
        out[1] = min(v * q[1], share2, cap[1, mode])
        out[2] = min(v * q[2], cap[2, mode])


@njit(cache=True)
def net_from_flows(topo, f, inflow, out):
    if topo == SINGLE:
        out[0] = inflow[0] - f[0]
    elif topo == TANDEM:
        out[0] = inflow[0] - f[0]
        out[1] = f[0] - f[1]
    else:
        out[0] = inflow[0] - f[0]
        out[1] = inflow[1] - f[1]
        out[2] = f[0] + f[1] - f[2]


@njit(cache=True)
def drift_into(topo, mode, q, v, w, theta, cap, inflow, fbuf, out):
    flows_into(topo, mode, q, v, w, theta, cap, inflow, fbuf)
    net_from_flows(topo, fbuf, inflow, out)


@njit(cache=True)
def flows_batch(topo, modes, Q, v, w, theta, cap, inflow):
    n = Q.shape[0]
    k = Q.shape[1]
    F = np.empty((n, k))
    buf = np.empty(k)
    for r in range(n):
        flows_into(topo, modes[r], Q[r], v, w, theta, cap, inflow, buf)
        for j in range(k):
            F[r, j] = buf[j]
    return F


@njit(cache=True)
def drift_batch(topo, modes, Q, v, w, theta, cap, inflow):
    n = Q.shape[0]
    k = Q.shape[1]
    D = np.empty((n, k))
    fbuf = np.empty(k)
    buf = np.empty(k)
    for r in range(n):
        drift_into(topo, modes[r], Q[r], v, w, theta, cap, inflow, fbuf, buf)
        for j in range(k):
            D[r, j] = buf[j]
    return D


@njit(cache=True)
def flow_sum_grid(topo, mode, g1, g2, g3, v, w, theta, cap, inflow):
    """Minimum of the summed flows over the tensor grid g1 x g2 (x g3 for merge)."""
    k = 2 if topo == TANDEM else 3
    q = np.empty(k)
    f = np.empty(k)
    best = np.inf
    arg = np.zeros(k)
    if topo == TANDEM:
        for a in range(g1.size):
            q[0] = g1[a]
            for b in range(g2.size):
                q[1] = g2[b]
                flows_into(topo, mode, q, v, w, theta, cap, inflow, f)
                s = f[0] + f[1]
                if s < best:
                    best = s
                    arg[0] = q[0]
                    arg[1] = q[1]
    else:
        for a in range(g1.size):
            q[0] = g1[a]
            for b in range(g2.size):
                q[1] = g2[b]
                for c in range(g3.size):
                    q[2] = g3[c]
                    flows_into(topo, mode, q, v, w, theta, cap, inflow, f)
                    s = f[0] + f[1] + f[2]
                    if s < best:
                        best = s
                        arg[0] = q[0]
                        arg[1] = q[1]
                        arg[2] = q[2]
    return best, arg


@njit(cache=True)
def segment_steps(t0, t1, dt):
    n = int(math.ceil((t1 - t0) / dt - 1e-9))
    return max(n, 1)


@njit(cache=True)
def _project(topo, q, theta, out):
    for j in range(q.size):
        x = q[j]
        if x < 0.0:
            x = 0.0
        if (topo == TANDEM and j == 1) or (topo == MERGE and j == 2):
            if x > theta:
                x = theta
        out[j] = x


@njit(cache=True)
def integrate(topo, v, w, theta, cap, inflow, q0, edges, modes, dt, stride,
              out_t, out_mode, out_q, out_f, clamp_vec):
    """Fixed-step RK4 between mode jumps with exact landing on each jump time.

    ``edges`` holds segment boundaries (0, jumps..., horizon). Samples are
    right-continuous: a sample taken at a jump time carries the new mode.
    Returns the cumulative absolute projection applied after steps.
    """
    k = q0.size
    q = q0.copy()
    f = np.empty(k)
    k1 = np.empty(k)
    k2 = np.empty(k)
    k3 = np.empty(k)
    k4 = np.empty(k)
    tmp = np.empty(k)
    stage = np.empty(k)
    raw = np.empty(k)
    clamp_abs = 0.0

    out_t[0] = 0.0
    out_mode[0] = modes[0]
    out_q[0] = q
    flows_into(topo, modes[0], q, v, w, theta, cap, inflow, f)
    out_f[0] = f
    rec = 1
    step = 0
    nseg = modes.size
    for s in range(nseg):
        mode = modes[s]
        t0 = edges[s]
        t1 = edges[s + 1]
        n = segment_steps(t0, t1, dt)
        t = t0
        for i in range(n):
            t_next = t1 if i == n - 1 else t0 + (i + 1) * dt
            h = t_next - t
            if topo == SINGLE:
                # constant field away from 0; projection is the exact boundary rule
                raw[0] = q[0] + h * (inflow[0] - cap[0, mode])
                if q[0] <= 0.0 and raw[0] < 0.0:
                    raw[0] = q[0] + h * max(inflow[0] - cap[0, mode], 0.0)
            else:
                drift_into(topo, mode, q, v, w, theta, cap, inflow, f, k1)
                for j in range(k):
                    tmp[j] = q[j] + 0.5 * h * k1[j]
                _project(topo, tmp, theta, stage)
                drift_into(topo, mode, stage, v, w, theta, cap, inflow, f, k2)
                for j in range(k):
                    tmp[j] = q[j] + 0.5 * h * k2[j]
                _project(topo, tmp, theta, stage)
                drift_into(topo, mode, stage, v, w, theta, cap, inflow, f, k3)
                for j in range(k):
                    tmp[j] = q[j] + h * k3[j]
                _project(topo, tmp, theta, stage)
                drift_into(topo, mode, stage, v, w, theta, cap, inflow, f, k4)
                for j in range(k):
                    raw[j] = q[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
            _project(topo, raw, theta, q)
            for j in range(k):
                d = q[j] - raw[j]
                clamp_vec[j] += d
                clamp_abs += abs(d)
            t = t_next
            step += 1
            if step % stride == 0:
                rec_mode = mode
                if i == n - 1 and s + 1 < nseg:
                    rec_mode = modes[s + 1]
                out_t[rec] = t
                out_mode[rec] = rec_mode
                out_q[rec] = q
                flows_into(topo, rec_mode, q, v, w, theta, cap, inflow, f)
                out_f[rec] = f
                rec += 1
    return clamp_abs
