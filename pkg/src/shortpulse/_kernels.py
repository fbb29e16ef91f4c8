"""Compiled inner loops: diamond marching and masked nonuniform differences."""

import numpy as np
from numba import njit

OUTSIDE, VALID, GHOST, INVALID = 0, 1, 2, 3

TRIG_NONE, TRIG_THRESHOLD, TRIG_NONFINITE, TRIG_DIVERGENCE = 0, 1, 2, 3


@njit(cache=True)
def _center_rq(nN, nE, nW, nS, du, dub, rc, tgt, tj, tk, cc, rq, lb_c):
    """r*Q at the cell centre for all fields; also fills |Lb phi| at the centre."""
    nf = nN.shape[0]
    lp = np.empty(nf)
    lb = np.empty(nf)
    for f in range(nf):
        pc = 0.25 * (nN[f] + nE[f] + nW[f] + nS[f]) / rc
        p_ub = ((nE[f] - nS[f]) + (nN[f] - nW[f])) / (2.0 * dub)
        p_u = ((nW[f] - nS[f]) + (nN[f] - nE[f])) / (2.0 * du)
        lp[f] = (p_ub - pc) / rc
        lb[f] = (p_u + pc) / rc
        lb_c[f] = abs(lb[f])
        rq[f] = 0.0
    for k in range(tgt.shape[0]):
        a = tj[k]
        b = tk[k]
        rq[tgt[k]] += rc * (cc[k, 0] * lp[a] * lp[b] + cc[k, 1] * lp[a] * lb[b]
                            + cc[k, 2] * lb[a] * lp[b] + cc[k, 3] * lb[a] * lb[b])


@njit(cache=True)
def march(psi, status, xu, xb, sig_jj, i_half, jj_start, jj_stop, i_lim,
          tgt, tj, tk, cc, max_iter, tol, threshold, div_ratio,
          last_rq, peak_level, stats, det, err):
    """Advance ubar-levels jj_start..jj_stop-1 in place; returns the updated u-limit.

    stats: [cells, corrector iterations, max iterations at one cell]
    det:   [detected, t*, u*, ubar*, peak, trigger]  (earliest t* kept)
    err:   [code, i, jj]  code 1 = corrector stalled without blow-up
    """
    nf, nu, nb = psi.shape
    nonlinear = tgt.shape[0] > 0
    nE = np.empty(nf)
    nW = np.empty(nf)
    nS = np.empty(nf)
    nN = np.empty(nf)
    nNew = np.empty(nf)
    rq = np.empty(nf)
    lb_c = np.empty(nf)
    for jj in range(jj_start, jj_stop):
        j = jj + i_half
        dub = xb[jj] - xb[jj - 1]
        ubc = 0.5 * (xb[jj] + xb[jj - 1])
        peak = 0.0
        i = 1
        while i < nu and i < i_lim and i <= j:
            if i <= i_half and jj <= sig_jj[i]:
                i += 1
                continue
            if i == j:
                for f in range(nf):
                    psi[f, i, jj] = 0.0
                status[i, jj] = VALID
                i += 1
                continue
            du = xu[i] - xu[i - 1]
            rc = ubc - 0.5 * (xu[i] + xu[i - 1])
            scale = 0.0
            for f in range(nf):
                nE[f] = psi[f, i - 1, jj]
                nW[f] = psi[f, i, jj - 1]
                nS[f] = psi[f, i - 1, jj - 1]
                nN[f] = nE[f] + nW[f] - nS[f] - du * dub * last_rq[f, i]
                scale = max(scale, abs(nE[f]), abs(nW[f]), abs(nS[f]))
            trigger = TRIG_NONE
            iters = 0
            if nonlinear:
                converged = False
                prev = -1.0
                ratio = 0.0
                for it in range(max_iter):
                    _center_rq(nN, nE, nW, nS, du, dub, rc, tgt, tj, tk, cc, rq, lb_c)
                    diff = 0.0
                    sc = scale
                    for f in range(nf):
                        nNew[f] = nE[f] + nW[f] - nS[f] - du * dub * rq[f]
                        diff = max(diff, abs(nNew[f] - nN[f]))
                        sc = max(sc, abs(nNew[f]))
                        nN[f] = nNew[f]
                    iters = it + 1
                    if not np.isfinite(diff):
                        break
                    if diff <= tol * sc:
                        converged = True
                        break
                    if prev > 0.0:
                        ratio = diff / prev
                    prev = diff
                if converged:
                    for f in range(nf):
                        last_rq[f, i] = rq[f]
                else:
                    finite = True
                    for f in range(nf):
                        if not np.isfinite(nN[f]):
                            finite = False
                    if not finite:
                        trigger = TRIG_NONFINITE
                    elif ratio >= div_ratio:
                        trigger = TRIG_DIVERGENCE
                    else:
                        err[0] = 1
                        err[1] = i
                        err[2] = jj
                        return i_lim
            else:
                pc = 0.0
                for f in range(nf):
                    pc = 0.25 * (nN[f] + nE[f] + nW[f] + nS[f]) / rc
                    p_u = ((nW[f] - nS[f]) + (nN[f] - nE[f])) / (2.0 * du)
                    lb_c[f] = abs((p_u + pc) / rc)
            stats[0] += 1
            stats[1] += iters
            if iters > stats[2]:
                stats[2] = iters
            lbm = 0.0
            for f in range(nf):
                if not np.isfinite(nN[f]) or not np.isfinite(lb_c[f]):
                    if trigger == TRIG_NONE:
                        trigger = TRIG_NONFINITE
                else:
                    lbm = max(lbm, lb_c[f])
            if trigger == TRIG_NONE and lbm > threshold:
                trigger = TRIG_THRESHOLD
            if trigger != TRIG_NONE:
                t_here = xu[i] + xb[jj]
                if det[0] == 0.0 or t_here < det[1]:
                    det[0] = 1.0
                    det[1] = t_here
                    det[2] = xu[i]
                    det[3] = xb[jj]
                    # a non-finite cell has no usable |Lb phi|; fall back to the last finite peak
                    pk = max(lbm, peak)
                    if jj > 0:
                        pk = max(pk, peak_level[jj - 1])
                    det[4] = pk
                    det[5] = trigger
                i_lim = i
                break
            for f in range(nf):
                psi[f, i, jj] = nN[f]
            status[i, jj] = VALID
            if lbm > peak:
                peak = lbm
            i += 1
        peak_level[jj] = peak
        if i_lim <= 1:
            return i_lim
    return i_lim


@njit(cache=True)
def _d3(x0, x1, x2, f0, f1, f2, where):
    """Derivative from three nonuniform points at x0 (where=0), x1 (1) or x2 (2)."""
    h1 = x1 - x0
    h2 = x2 - x1
    if where == 1:
        return -h2 / (h1 * (h1 + h2)) * f0 + (h2 - h1) / (h1 * h2) * f1 + h1 / (h2 * (h1 + h2)) * f2
    if where == 0:
        return -(2 * h1 + h2) / (h1 * (h1 + h2)) * f0 + (h1 + h2) / (h1 * h2) * f1 - h1 / (h2 * (h1 + h2)) * f2
    return h2 / (h1 * (h1 + h2)) * f0 - (h1 + h2) / (h1 * h2) * f1 + (2 * h2 + h1) / (h2 * (h1 + h2)) * f2


@njit(cache=True)
def masked_diff(f, mask, x, axis):
    """Second-order derivative of f along axis (0 or 1) on nonuniform nodes x, using masked nodes only."""
    n0, n1 = f.shape
    out = np.full((n0, n1), np.nan)
    if axis == 1:
        for a in range(n0):
            for b in range(n1):
                if not mask[a, b]:
                    continue
                lv = b > 0 and mask[a, b - 1]
                rv = b + 1 < n1 and mask[a, b + 1]
                if lv and rv:
                    out[a, b] = _d3(x[b - 1], x[b], x[b + 1], f[a, b - 1], f[a, b], f[a, b + 1], 1)
                elif rv and b + 2 < n1 and mask[a, b + 2]:
                    out[a, b] = _d3(x[b], x[b + 1], x[b + 2], f[a, b], f[a, b + 1], f[a, b + 2], 0)
                elif lv and b > 1 and mask[a, b - 2]:
                    out[a, b] = _d3(x[b - 2], x[b - 1], x[b], f[a, b - 2], f[a, b - 1], f[a, b], 2)
                elif rv:
                    out[a, b] = (f[a, b + 1] - f[a, b]) / (x[b + 1] - x[b])
                elif lv:
                    out[a, b] = (f[a, b] - f[a, b - 1]) / (x[b] - x[b - 1])
    else:
        for a in range(n0):
            for b in range(n1):
                if not mask[a, b]:
                    continue
                lv = a > 0 and mask[a - 1, b]
                rv = a + 1 < n0 and mask[a + 1, b]
                if lv and rv:
                    out[a, b] = _d3(x[a - 1], x[a], x[a + 1], f[a - 1, b], f[a, b], f[a + 1, b], 1)
                elif rv and a + 2 < n0 and mask[a + 2, b]:
                    out[a, b] = _d3(x[a], x[a + 1], x[a + 2], f[a, b], f[a + 1, b], f[a + 2, b], 0)
                elif lv and a > 1 and mask[a - 2, b]:
                    out[a, b] = _d3(x[a - 2], x[a - 1], x[a], f[a - 2, b], f[a - 1, b], f[a, b], 2)
                elif rv:
                    out[a, b] = (f[a + 1, b] - f[a, b]) / (x[a + 1] - x[a])
                elif lv:
                    out[a, b] = (f[a, b] - f[a - 1, b]) / (x[a] - x[a - 1])
    return out


@njit(cache=True)
def phi_from_psi(psi, mask, xu, xb, i_half):
    """phi = psi / r off the axis; on the axis a two-point extrapolation in r**2 along the row."""
    n0, n1 = psi.shape
    out = np.full((n0, n1), np.nan)
    for a in range(n0):
        for b in range(n1):
            if not mask[a, b]:
                continue
            r = xb[b] - xu[a]
            if r > 0.0:
                out[a, b] = psi[a, b] / r
    for a in range(i_half, n0):
        b = a - i_half
        if b < 0 or b >= n1 or not mask[a, b]:
            continue
        if b + 2 < n1 and mask[a, b + 1] and mask[a, b + 2]:
            r1 = xb[b + 1] - xu[a]
            r2 = xb[b + 2] - xu[a]
            p1 = psi[a, b + 1] / r1
            p2 = psi[a, b + 2] / r2
            out[a, b] = (p1 * r2 * r2 - p2 * r1 * r1) / (r2 * r2 - r1 * r1)
        elif b + 1 < n1 and mask[a, b + 1]:
            out[a, b] = psi[a, b + 1] / (xb[b + 1] - xu[a])
    return out
