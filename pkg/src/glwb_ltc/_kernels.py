"""Compiled inner loops of the backward induction."""

import math

import numba
import numpy as np

from .joint import solve_joint


@numba.njit(cache=True)
def _extrapolate_edges(row, A, j_max):
    # linear in A through the two nearest interior nodes
    row[1] = row[2] + (row[3] - row[2]) / (A[3] - A[2]) * (A[1] - A[2])
    row[j_max] = row[j_max - 1] + (row[j_max - 2] - row[j_max - 1]) / (
        A[j_max - 2] - A[j_max - 1]) * (A[j_max] - A[j_max - 1])


@numba.njit(cache=True)
def backward_year(V, i_hi, N, offset, k_min, k_max, R, kd, ku, p_up, jump, probs,
                  A, step, dt, rho_sig, theta_lo, surrender, out):
    """Roll ``V`` (health x rate band at step ``i_hi`` x account) back ``N`` sub-steps.

    ``kd``/``ku`` hold absolute successor indices. A negative ``surrender``
    disables the intra-year surrender check; otherwise values are floored at
    ``A_j * surrender``. ``out`` must have room for the widest band; the two
    buffers are swapped internally and the array holding step ``i_hi - N`` is
    returned.
    """
    H = V.shape[0]
    J = V.shape[2]
    j_max = J - 1
    cur = V
    nxt = out
    ed = math.exp(-step)
    for i in range(i_hi - 1, i_hi - N - 1, -1):
        base_next = k_min[i + 1]
        nq = k_max[i] - k_min[i] + 1
        for q in range(nq):
            p = offset[i] + q
            r = R[p]
            disc = math.exp(-r * dt)
            qd = kd[p] - base_next
            qu = ku[p] - base_next
            m = jump[p]
            pdd = probs[p, 0] * disc
            pdu = probs[p, 1] * disc
            pud = probs[p, 2] * disc
            puu = probs[p, 3] * disc
            pr_u = p_up[p]
            j_free = j_max - m  # largest j whose up-move stays on the grid
            for h in range(H):
                vd = cur[h, qd]
                vu = cur[h, qu]
                row = nxt[h, q]
                row[0] = disc * ((1.0 - pr_u) * vd[0] + pr_u * vu[0])
                top = min(j_free, j_max - 1)
                for j in range(2, top + 1):
                    row[j] = (pdd * vd[j - 1] + pdu * vu[j - 1]
                              + pud * vd[j + m] + puu * vu[j + m])
                for j in range(max(top + 1, 2), j_max):
                    # up-move capped at the top node: re-solve with the actual spacing
                    eu = A[j_max] / A[j]
                    drifted = 1.0 + r * dt
                    pA = min(max((drifted - ed) / (eu - ed), 0.0), 1.0)
                    a_dd, a_du, a_ud, a_uu, _ = solve_joint(
                        pA, pr_u, ed - 1.0, eu - 1.0,
                        R[offset[i + 1] + qd] - r, R[offset[i + 1] + qu] - r,
                        rho_sig * math.sqrt(r) * dt, r < theta_lo)
                    row[j] = disc * (a_dd * vd[j - 1] + a_du * vu[j - 1]
                                     + a_ud * vd[j_max] + a_uu * vu[j_max])
                _extrapolate_edges(row, A, j_max)
                if surrender >= 0.0:
                    for j in range(J):
                        floor = A[j] * surrender
                        if row[j] < floor:
                            row[j] = floor
        cur, nxt = nxt, cur
    return cur


def check_finite(V, n):
    bad = ~np.isfinite(V)
    if bad.any():
        h, q, j = np.argwhere(bad)[0]
        raise FloatingPointError(
            f"non-finite contract value at anniversary {n}, health {h + 1}, rate slot {q}, account node {j}")
