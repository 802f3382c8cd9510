"""Numba-compiled hot loops: neighbor sums and clipped Voronoi cells.

All kernels walk bucket-grid cells in a fixed row-major order and accumulate
per query point sequentially, so results are bitwise reproducible and do not
depend on the number of threads (parallelism is only across query points).
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

OP_INTERP = 0
OP_GRAD = 1
OP_LAP = 2


@njit(cache=True, inline="always")
def _profile_value(u, breaks, coefs, minexps):
    """Piecewise-polynomial profile at u in [0, 1); caller guarantees u < 1."""
    k = 0
    last = coefs.shape[0] - 1
    while k < last and u >= breaks[k + 1]:
        k += 1
    acc = 0.0
    for j in range(coefs.shape[1] - 1, -1, -1):
        acc = acc * u + coefs[k, j]
    m = minexps[k]
    if m > 0:
        for _ in range(m):
            acc *= u
    elif m < 0:
        for _ in range(-m):
            acc /= u
    return acc


@njit(cache=True, parallel=True)
def op_batch_2d(queries, fq, pts, vols, vals, cell_start, ncx, ncy,
                lox, loy, csx, csy, h, breaks, coefs, minexps, which, out):
    h2 = h * h
    inv_h = 1.0 / h
    hpow = 1.0 / h2  # h^(-d) for d = 2
    for q in prange(queries.shape[0]):
        x0 = queries[q, 0]
        x1 = queries[q, 1]
        fx = fq[q]
        c0lo = int(np.floor((x0 - h - lox) / csx))
        c0hi = int(np.floor((x0 + h - lox) / csx))
        c1lo = int(np.floor((x1 - h - loy) / csy))
        c1hi = int(np.floor((x1 + h - loy) / csy))
        if c0lo < 0:
            c0lo = 0
        if c1lo < 0:
            c1lo = 0
        if c0hi > ncx - 1:
            c0hi = ncx - 1
        if c1hi > ncy - 1:
            c1hi = ncy - 1
        acc0 = 0.0
        acc1 = 0.0
        for a in range(c0lo, c0hi + 1):
            base = a * ncy
            s = cell_start[base + c1lo]
            e = cell_start[base + c1hi + 1]
            for t in range(s, e):
                dx = pts[t, 0] - x0
                dy = pts[t, 1] - x1
                r2 = dx * dx + dy * dy
                if r2 >= h2:
                    continue
                if which == OP_INTERP:
                    r = np.sqrt(r2)
                    wv = _profile_value(r * inv_h, breaks, coefs, minexps) * hpow
                    acc0 += vols[t] * vals[t] * wv
                else:
                    if r2 <= 0.0:
                        continue
                    r = np.sqrt(r2)
                    wv = _profile_value(r * inv_h, breaks, coefs, minexps) * hpow
                    c = vols[t] * (vals[t] - fx) * wv / r2
                    if which == OP_GRAD:
                        acc0 += c * dx
                        acc1 += c * dy
                    else:
                        acc0 += c
        if which == OP_INTERP:
            out[q, 0] = acc0
        elif which == OP_GRAD:
            out[q, 0] = 2.0 * acc0
            out[q, 1] = 2.0 * acc1
        else:
            out[q, 0] = 4.0 * acc0


@njit(cache=True, parallel=True)
def op_batch_1d(queries, fq, pts, vols, vals, cell_start, ncx,
                lox, csx, h, breaks, coefs, minexps, which, out):
    h2 = h * h
    inv_h = 1.0 / h
    hpow = inv_h  # h^(-d) for d = 1
    for q in prange(queries.shape[0]):
        x0 = queries[q, 0]
        fx = fq[q]
        c0lo = int(np.floor((x0 - h - lox) / csx))
        c0hi = int(np.floor((x0 + h - lox) / csx))
        if c0lo < 0:
            c0lo = 0
        if c0hi > ncx - 1:
            c0hi = ncx - 1
        acc0 = 0.0
        s = cell_start[c0lo]
        e = cell_start[c0hi + 1]
        for t in range(s, e):
            dx = pts[t, 0] - x0
            r2 = dx * dx
            if r2 >= h2:
                continue
            if which == OP_INTERP:
                r = np.sqrt(r2)
                wv = _profile_value(r * inv_h, breaks, coefs, minexps) * hpow
                acc0 += vols[t] * vals[t] * wv
            else:
                if r2 <= 0.0:
                    continue
                r = np.sqrt(r2)
                wv = _profile_value(r * inv_h, breaks, coefs, minexps) * hpow
                c = vols[t] * (vals[t] - fx) * wv / r2
                if which == OP_GRAD:
                    acc0 += c * dx
                else:
                    acc0 += c
        if which == OP_INTERP or which == OP_GRAD:
            out[q, 0] = acc0
        else:
            out[q, 0] = 2.0 * acc0


@njit(cache=True, inline="always")
def _clip_halfplane(px, py, plab, qx, qy, qlab, nv, mx, my, nx_, ny_, label,
                    max_verts):
    """Clip a convex polygon by (v - m).n <= 0 in place; returns new count.

    Edge labels travel with the vertex the edge leaves; the chord created by
    the cut carries the cutter's label.  q* are caller scratch buffers.
    Returns -1 on buffer overflow.
    """
    m = 0
    for k in range(nv):
        k1 = k + 1
        if k1 == nv:
            k1 = 0
        g0 = (px[k] - mx) * nx_ + (py[k] - my) * ny_
        g1 = (px[k1] - mx) * nx_ + (py[k1] - my) * ny_
        if g0 <= 0.0:
            if m >= max_verts:
                return -1
            qx[m] = px[k]
            qy[m] = py[k]
            qlab[m] = plab[k]
            m += 1
            if g1 > 0.0:
                t = g0 / (g0 - g1)
                if m >= max_verts:
                    return -1
                qx[m] = px[k] + t * (px[k1] - px[k])
                qy[m] = py[k] + t * (py[k1] - py[k])
                qlab[m] = label
                m += 1
        elif g1 <= 0.0:
            t = g0 / (g0 - g1)
            if m >= max_verts:
                return -1
            qx[m] = px[k] + t * (px[k1] - px[k])
            qy[m] = py[k] + t * (py[k1] - py[k])
            qlab[m] = plab[k]
            m += 1
    for k in range(m):
        px[k] = qx[k]
        py[k] = qy[k]
        plab[k] = qlab[k]
    return m


@njit(cache=True, parallel=True)
def voronoi_cells_2d(sites, start, count, pts_sorted, order, cell_start,
                     ncx, ncy, lox, loy, csx, csy,
                     box_lox, box_loy, box_hix, box_hiy, r_init,
                     verts_out, labels_out, nverts_out, vols_out, ok_out):
    """Clipped Voronoi cells for sites[start : start + count].

    Candidate neighbors are taken from the bucket grid within an adaptive
    radius, doubled until every site able to cut the current cell has been
    considered (a site at distance >= 2 * max vertex distance cannot cut).
    Candidates are clipped as the ring scan visits them; a fixed traversal
    order keeps results deterministic.
    """
    max_verts = verts_out.shape[1]
    diam2 = ((box_hix - box_lox) ** 2 + (box_hiy - box_loy) ** 2)
    for qi in prange(count):
        i = start + qi
        sx = sites[i, 0]
        sy = sites[i, 1]
        px = np.empty(max_verts)
        py = np.empty(max_verts)
        plab = np.empty(max_verts, dtype=np.int64)
        qx = np.empty(max_verts)
        qy = np.empty(max_verts)
        qlab = np.empty(max_verts, dtype=np.int64)
        px[0] = box_lox
        py[0] = box_loy
        px[1] = box_hix
        py[1] = box_loy
        px[2] = box_hix
        py[2] = box_hiy
        px[3] = box_lox
        py[3] = box_hiy
        for k in range(4):
            plab[k] = -1
        nv = 4
        rmax2 = 0.0
        for k in range(nv):
            dd = (px[k] - sx) ** 2 + (py[k] - sy) ** 2
            if dd > rmax2:
                rmax2 = dd

        r_prev = 0.0
        radius = r_init
        ok = True
        while True:
            # clip by bisectors of sites with r_prev < dist <= radius
            r2hi = radius * radius
            r2lo = r_prev * r_prev
            c0lo = int(np.floor((sx - radius - lox) / csx))
            c0hi = int(np.floor((sx + radius - lox) / csx))
            c1lo = int(np.floor((sy - radius - loy) / csy))
            c1hi = int(np.floor((sy + radius - loy) / csy))
            if c0lo < 0:
                c0lo = 0
            if c1lo < 0:
                c1lo = 0
            if c0hi > ncx - 1:
                c0hi = ncx - 1
            if c1hi > ncy - 1:
                c1hi = ncy - 1
            for a in range(c0lo, c0hi + 1):
                base = a * ncy
                s = cell_start[base + c1lo]
                e = cell_start[base + c1hi + 1]
                for t in range(s, e):
                    j = order[t]
                    if j == i:
                        continue
                    jx = pts_sorted[t, 0]
                    jy = pts_sorted[t, 1]
                    d2 = (jx - sx) ** 2 + (jy - sy) ** 2
                    if d2 <= r2lo or d2 > r2hi or d2 >= 4.0 * rmax2:
                        continue
                    nv = _clip_halfplane(px, py, plab, qx, qy, qlab, nv,
                                         0.5 * (sx + jx), 0.5 * (sy + jy),
                                         jx - sx, jy - sy, j, max_verts)
                    if nv < 0:
                        ok = False
                        break
                    rmax2 = 0.0
                    for k in range(nv):
                        dd = (px[k] - sx) ** 2 + (py[k] - sy) ** 2
                        if dd > rmax2:
                            rmax2 = dd
                if not ok:
                    break
            if not ok:
                break
            if radius * radius >= 4.0 * rmax2 or radius * radius >= diam2:
                break
            r_prev = radius
            radius = 2.0 * radius

        if not ok:
            ok_out[qi] = False
            nverts_out[qi] = 0
            vols_out[qi] = 0.0
            continue
        ok_out[qi] = True
        nverts_out[qi] = nv
        area = 0.0
        for k in range(nv):
            k1 = k + 1
            if k1 == nv:
                k1 = 0
            area += px[k] * py[k1] - px[k1] * py[k]
        vols_out[qi] = 0.5 * abs(area)
        for k in range(nv):
            verts_out[qi, k, 0] = px[k]
            verts_out[qi, k, 1] = py[k]
            labels_out[qi, k] = plab[k]
