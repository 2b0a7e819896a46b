# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the fallback kernels.

Bit-exactness contract with ``_fallback``: SLIC keeps the same distance
expression order, strict-less center updates in ascending index, and
row-major sequential accumulation for center means; flood fill uses the
same level-order truncation with row-major partial levels; the warps use
identical sampling formulas. The CG solver matches to tolerance only
(reduction order differs from BLAS).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, floor, sqrt, INFINITY
from libc.stdlib cimport qsort

cnp.import_array()


cdef int _cmp_long(const void* a, const void* b) noexcept nogil:
    cdef long x = (<const long*> a)[0]
    cdef long y = (<const long*> b)[0]
    if x < y:
        return -1
    if x > y:
        return 1
    return 0


def slic_iterate(double[:, :, ::1] lab, double[:, ::1] centers, double S, double m, int iters):
    cdef Py_ssize_t h = lab.shape[0]
    cdef Py_ssize_t w = lab.shape[1]
    cdef Py_ssize_t k = centers.shape[0]
    cdef double ratio = (m * m) / (S * S)
    labels_arr = np.full((h, w), -1, dtype=np.int32)
    best_arr = np.empty((h, w), dtype=np.float64)
    cdef int[:, ::1] labels = labels_arr
    cdef double[:, ::1] best = best_arr
    sums_arr = np.zeros((k, 5), dtype=np.float64)
    counts_arr = np.zeros(k, dtype=np.int64)
    cdef double[:, ::1] sums = sums_arr
    cdef long[::1] counts = counts_arr

    cdef Py_ssize_t it, ki, x, y, x0, x1, y0, y1, col
    cdef double cl, ca, cb, cx, cy, dl, da, db, dy, dx, d, dxy, mb
    cdef int ml

    for it in range(iters):
        for y in range(h):
            for x in range(w):
                best[y, x] = INFINITY
                labels[y, x] = -1
        for ki in range(k):
            cl = centers[ki, 0]
            ca = centers[ki, 1]
            cb = centers[ki, 2]
            cx = centers[ki, 3]
            cy = centers[ki, 4]
            x0 = <Py_ssize_t> ceil(cx - S)
            if x0 < 0:
                x0 = 0
            x1 = <Py_ssize_t> floor(cx + S)
            if x1 > w - 1:
                x1 = w - 1
            y0 = <Py_ssize_t> ceil(cy - S)
            if y0 < 0:
                y0 = 0
            y1 = <Py_ssize_t> floor(cy + S)
            if y1 > h - 1:
                y1 = h - 1
            if x0 > x1 or y0 > y1:
                continue
            for y in range(y0, y1 + 1):
                dy = <double> y - cy
                for x in range(x0, x1 + 1):
                    dl = lab[y, x, 0] - cl
                    da = lab[y, x, 1] - ca
                    db = lab[y, x, 2] - cb
                    dx = <double> x - cx
                    d = ((dl * dl + da * da) + db * db) + ratio * (dy * dy + dx * dx)
                    if d < best[y, x]:
                        best[y, x] = d
                        labels[y, x] = <int> ki

        # rescue pixels outside every window: nearest center spatially
        for y in range(h):
            for x in range(w):
                if labels[y, x] < 0:
                    mb = INFINITY
                    ml = 0
                    for ki in range(k):
                        dy = <double> y - centers[ki, 4]
                        dx = <double> x - centers[ki, 3]
                        dxy = dy * dy + dx * dx
                        if dxy < mb:
                            mb = dxy
                            ml = <int> ki
                    labels[y, x] = ml

        for ki in range(k):
            counts[ki] = 0
            for col in range(5):
                sums[ki, col] = 0.0
        for y in range(h):
            for x in range(w):
                ki = labels[y, x]
                sums[ki, 0] += lab[y, x, 0]
                sums[ki, 1] += lab[y, x, 1]
                sums[ki, 2] += lab[y, x, 2]
                sums[ki, 3] += <double> x
                sums[ki, 4] += <double> y
                counts[ki] += 1
        for ki in range(k):
            if counts[ki] > 0:
                for col in range(5):
                    centers[ki, col] = sums[ki, col] / <double> counts[ki]

    return labels_arr


cdef inline bint _within(const unsigned char[:, :, ::1] img, Py_ssize_t y, Py_ssize_t x,
                         int sr, int sg, int sb, int tol) noexcept nogil:
    cdef int dr = <int> img[y, x, 0] - sr
    cdef int dg = <int> img[y, x, 1] - sg
    cdef int db = <int> img[y, x, 2] - sb
    if dr < 0:
        dr = -dr
    if dg < 0:
        dg = -dg
    if db < 0:
        db = -db
    return dr <= tol and dg <= tol and db <= tol


def flood_fill(const unsigned char[:, :, ::1] img, Py_ssize_t seed_y, Py_ssize_t seed_x,
               int tol, int connectivity, long max_px):
    cdef Py_ssize_t h = img.shape[0]
    cdef Py_ssize_t w = img.shape[1]
    cdef int sr = img[seed_y, seed_x, 0]
    cdef int sg = img[seed_y, seed_x, 1]
    cdef int sb = img[seed_y, seed_x, 2]

    out_arr = np.zeros((h, w), dtype=np.uint8)
    cdef unsigned char[:, ::1] out = out_arr
    cur_arr = np.empty(h * w, dtype=np.int64)
    nxt_arr = np.empty(h * w, dtype=np.int64)
    cdef long[::1] cur = cur_arr
    cdef long[::1] nxt = nxt_arr

    cdef long taken = 1
    cdef Py_ssize_t ncur = 1, nnxt, i, y, x, ny, nx, j
    cdef long idx, room
    cdef int ndirs = 8 if connectivity == 8 else 4
    cdef long[8] dys
    cdef long[8] dxs
    dys[0] = -1; dxs[0] = 0
    dys[1] = 1; dxs[1] = 0
    dys[2] = 0; dxs[2] = -1
    dys[3] = 0; dxs[3] = 1
    dys[4] = -1; dxs[4] = -1
    dys[5] = -1; dxs[5] = 1
    dys[6] = 1; dxs[6] = -1
    dys[7] = 1; dxs[7] = 1

    out[seed_y, seed_x] = 1
    cur[0] = seed_y * w + seed_x

    while taken < max_px and ncur > 0:
        nnxt = 0
        for i in range(ncur):
            idx = cur[i]
            y = idx // w
            x = idx % w
            for j in range(ndirs):
                ny = y + dys[j]
                nx = x + dxs[j]
                if ny < 0 or ny >= h or nx < 0 or nx >= w:
                    continue
                if out[ny, nx]:
                    continue
                if _within(img, ny, nx, sr, sg, sb, tol):
                    out[ny, nx] = 1  # mark at push so duplicates never enqueue
                    nxt[nnxt] = ny * w + nx
                    nnxt += 1
        if nnxt == 0:
            break
        qsort(&nxt[0], nnxt, sizeof(long), _cmp_long)
        room = max_px - taken
        if nnxt > room:
            # unmark the overflow beyond the row-major prefix
            for i in range(room, nnxt):
                idx = nxt[i]
                out[idx // w, idx % w] = 0
            nnxt = <Py_ssize_t> room
        taken += nnxt
        cur, nxt = nxt, cur
        ncur = nnxt

    return out_arr


def label_components(int[:, ::1] labels):
    cdef Py_ssize_t h = labels.shape[0]
    cdef Py_ssize_t w = labels.shape[1]
    comp_arr = np.full((h, w), -1, dtype=np.int32)
    cdef int[:, ::1] comp = comp_arr
    stack_arr = np.empty(h * w, dtype=np.int64)
    cdef long[::1] stack = stack_arr
    cdef Py_ssize_t y, x, yy, xx, ny, nx, top
    cdef int n = 0
    cdef int v
    cdef long idx

    for y in range(h):
        for x in range(w):
            if comp[y, x] >= 0:
                continue
            v = labels[y, x]
            comp[y, x] = n
            stack[0] = y * w + x
            top = 1
            while top > 0:
                top -= 1
                idx = stack[top]
                yy = idx // w
                xx = idx % w
                if yy > 0 and comp[yy - 1, xx] < 0 and labels[yy - 1, xx] == v:
                    comp[yy - 1, xx] = n
                    stack[top] = (yy - 1) * w + xx
                    top += 1
                if yy < h - 1 and comp[yy + 1, xx] < 0 and labels[yy + 1, xx] == v:
                    comp[yy + 1, xx] = n
                    stack[top] = (yy + 1) * w + xx
                    top += 1
                if xx > 0 and comp[yy, xx - 1] < 0 and labels[yy, xx - 1] == v:
                    comp[yy, xx - 1] = n
                    stack[top] = yy * w + xx - 1
                    top += 1
                if xx < w - 1 and comp[yy, xx + 1] < 0 and labels[yy, xx + 1] == v:
                    comp[yy, xx + 1] = n
                    stack[top] = yy * w + xx + 1
                    top += 1
            n += 1
    return comp_arr, n


def warp_bilinear_rgb(const unsigned char[:, :, ::1] src, double[::1] inv,
                      Py_ssize_t out_h, Py_ssize_t out_w):
    cdef double a = inv[0], b = inv[1], c = inv[2], d = inv[3], e = inv[4], f = inv[5]
    cdef Py_ssize_t h = src.shape[0]
    cdef Py_ssize_t w = src.shape[1]
    out_arr = np.zeros((out_h, out_w, 3), dtype=np.uint8)
    cdef unsigned char[:, :, ::1] out = out_arr
    cdef Py_ssize_t x, y, ch, x0i, y0i, x1i, y1i
    cdef double sx, sy, fx, fy, v00, v01, v10, v11, t0, t1, val
    cdef bint ok00, ok01, ok10, ok11

    for y in range(out_h):
        for x in range(out_w):
            sx = a * <double> x + b * <double> y + c
            sy = d * <double> x + e * <double> y + f
            x0i = <Py_ssize_t> floor(sx)
            y0i = <Py_ssize_t> floor(sy)
            fx = sx - floor(sx)
            fy = sy - floor(sy)
            x1i = x0i + 1
            y1i = y0i + 1
            ok00 = 0 <= x0i < w and 0 <= y0i < h
            ok01 = 0 <= x1i < w and 0 <= y0i < h
            ok10 = 0 <= x0i < w and 0 <= y1i < h
            ok11 = 0 <= x1i < w and 0 <= y1i < h
            if not (ok00 or ok01 or ok10 or ok11):
                continue
            for ch in range(3):
                v00 = <double> src[y0i, x0i, ch] if ok00 else 0.0
                v01 = <double> src[y0i, x1i, ch] if ok01 else 0.0
                v10 = <double> src[y1i, x0i, ch] if ok10 else 0.0
                v11 = <double> src[y1i, x1i, ch] if ok11 else 0.0
                t0 = v00 * (1.0 - fx) + v01 * fx
                t1 = v10 * (1.0 - fx) + v11 * fx
                val = t0 * (1.0 - fy) + t1 * fy
                val = floor(val + 0.5)
                if val < 0.0:
                    val = 0.0
                elif val > 255.0:
                    val = 255.0
                out[y, x, ch] = <unsigned char> val
    return out_arr


def warp_nearest_mask(const unsigned char[:, ::1] src, double[::1] inv,
                      Py_ssize_t out_h, Py_ssize_t out_w):
    cdef double a = inv[0], b = inv[1], c = inv[2], d = inv[3], e = inv[4], f = inv[5]
    cdef Py_ssize_t h = src.shape[0]
    cdef Py_ssize_t w = src.shape[1]
    out_arr = np.zeros((out_h, out_w), dtype=np.uint8)
    cdef unsigned char[:, ::1] out = out_arr
    cdef Py_ssize_t x, y, xi, yi

    for y in range(out_h):
        for x in range(out_w):
            xi = <Py_ssize_t> floor(a * <double> x + b * <double> y + c + 0.5)
            yi = <Py_ssize_t> floor(d * <double> x + e * <double> y + f + 0.5)
            if 0 <= xi < w and 0 <= yi < h:
                out[y, x] = src[yi, xi]
    return out_arr


def cg_masked_laplacian(const unsigned char[:, ::1] unknown, double[::1] b, double[::1] x0,
                        double tol, long max_iters):
    cdef Py_ssize_t h = unknown.shape[0]
    cdef Py_ssize_t w = unknown.shape[1]
    cdef Py_ssize_t i, y, x, n = 0

    idx_arr = np.full((h, w), -1, dtype=np.int64)
    cdef long[:, ::1] idx = idx_arr
    for y in range(h):
        for x in range(w):
            if unknown[y, x]:
                idx[y, x] = n
                n += 1
    if n == 0:
        return np.zeros(0), 0, 0.0

    deg_arr = np.empty(n, dtype=np.float64)
    nbr_arr = np.full((n, 4), -1, dtype=np.int64)
    cdef double[::1] deg = deg_arr
    cdef long[:, ::1] nbr = nbr_arr
    cdef Py_ssize_t k = 0
    for y in range(h):
        for x in range(w):
            if not unknown[y, x]:
                continue
            deg[k] = (1.0 if y > 0 else 0.0) + (1.0 if y < h - 1 else 0.0) \
                + (1.0 if x > 0 else 0.0) + (1.0 if x < w - 1 else 0.0)
            if y > 0:
                nbr[k, 0] = idx[y - 1, x]
            if y < h - 1:
                nbr[k, 1] = idx[y + 1, x]
            if x > 0:
                nbr[k, 2] = idx[y, x - 1]
            if x < w - 1:
                nbr[k, 3] = idx[y, x + 1]
            k += 1

    cdef double bnorm = 0.0
    for i in range(n):
        bnorm += b[i] * b[i]
    bnorm = sqrt(bnorm)
    if bnorm == 0.0:
        return np.zeros(n), 0, 0.0

    x_arr = np.array(x0, dtype=np.float64, copy=True)
    r_arr = np.empty(n, dtype=np.float64)
    z_arr = np.empty(n, dtype=np.float64)
    p_arr = np.empty(n, dtype=np.float64)
    ap_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] xv = x_arr
    cdef double[::1] r = r_arr
    cdef double[::1] z = z_arr
    cdef double[::1] p = p_arr
    cdef double[::1] ap = ap_arr

    cdef long iters = 0
    cdef double relres = INFINITY
    cdef double rz, rz_new, pap, alpha, beta, rnorm, s
    cdef Py_ssize_t j
    cdef long nb

    while iters < max_iters:
        # true residual and restart
        for i in range(n):
            s = deg[i] * xv[i]
            for j in range(4):
                nb = nbr[i, j]
                if nb >= 0:
                    s -= xv[nb]
            r[i] = b[i] - s
        rnorm = 0.0
        for i in range(n):
            rnorm += r[i] * r[i]
        relres = sqrt(rnorm) / bnorm
        if relres <= tol:
            return x_arr, iters, relres
        rz = 0.0
        for i in range(n):
            z[i] = r[i] / deg[i]
            p[i] = z[i]
            rz += r[i] * z[i]
        while iters < max_iters:
            iters += 1
            pap = 0.0
            for i in range(n):
                s = deg[i] * p[i]
                for j in range(4):
                    nb = nbr[i, j]
                    if nb >= 0:
                        s -= p[nb]
                ap[i] = s
                pap += p[i] * s
            if pap <= 0.0:
                break
            alpha = rz / pap
            rnorm = 0.0
            for i in range(n):
                xv[i] += alpha * p[i]
                r[i] -= alpha * ap[i]
                rnorm += r[i] * r[i]
            if sqrt(rnorm) <= tol * bnorm:
                break
            rz_new = 0.0
            for i in range(n):
                z[i] = r[i] / deg[i]
                rz_new += r[i] * z[i]
            beta = rz_new / rz
            for i in range(n):
                p[i] = z[i] + beta * p[i]
            rz = rz_new

    for i in range(n):
        s = deg[i] * xv[i]
        for j in range(4):
            nb = nbr[i, j]
            if nb >= 0:
                s -= xv[nb]
        r[i] = b[i] - s
    rnorm = 0.0
    for i in range(n):
        rnorm += r[i] * r[i]
    relres = sqrt(rnorm) / bnorm
    return x_arr, iters, relres
