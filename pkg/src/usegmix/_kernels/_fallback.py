"""Pure numpy/scipy implementations of the hot kernels.

Semantics contract shared with the compiled twin:

* ``slic_iterate`` is bit-exact against the native version: distance
  expressions keep the same operation order, assignments scan centers in
  ascending index with strict-less updates, and center updates accumulate
  in row-major pixel order (``np.bincount`` adds sequentially in input
  order, matching the native accumulation loop).
* ``flood_fill`` and the warps are integer-exact by construction.
* ``cg_masked_laplacian`` agrees with the native solver to the requested
  tolerance (dot-product reduction order differs, bit equality does not).
"""

import numpy as np
from scipy import ndimage

_CONN8 = np.ones((3, 3), dtype=bool)


def slic_iterate(lab, centers, S, m, iters):
    """Run the SLIC assign/update loop and return the final int32 label map.

    ``lab`` is the CIELAB image (H, W, 3) float64; ``centers`` is (K, 5)
    float64 with columns (l, a, b, x, y). Pixels outside every center
    window are rescued by spatial distance. Labels of the last assignment
    pass are returned; ``centers`` is updated in place.
    """
    h, w, _ = lab.shape
    k = centers.shape[0]
    ratio = (m * m) / (S * S)
    xs = np.arange(w, dtype=np.float64)
    ys = np.arange(h, dtype=np.float64)
    xgrid = np.broadcast_to(xs[None, :], (h, w))
    ygrid = np.broadcast_to(ys[:, None], (h, w))
    labels = np.full((h, w), -1, dtype=np.int32)

    for _ in range(iters):
        best = np.full((h, w), np.inf, dtype=np.float64)
        labels = np.full((h, w), -1, dtype=np.int32)
        for ki in range(k):
            cl, ca, cb, cx, cy = centers[ki]
            x0 = max(0, int(np.ceil(cx - S)))
            x1 = min(w - 1, int(np.floor(cx + S)))
            y0 = max(0, int(np.ceil(cy - S)))
            y1 = min(h - 1, int(np.floor(cy + S)))
            if x0 > x1 or y0 > y1:
                continue
            win = lab[y0 : y1 + 1, x0 : x1 + 1]
            dl = win[:, :, 0] - cl
            da = win[:, :, 1] - ca
            db = win[:, :, 2] - cb
            dy = ys[y0 : y1 + 1] - cy
            dx = xs[x0 : x1 + 1] - cx
            d = ((dl * dl + da * da) + db * db) + ratio * (
                (dy * dy)[:, None] + (dx * dx)[None, :]
            )
            bwin = best[y0 : y1 + 1, x0 : x1 + 1]
            upd = d < bwin
            bwin[upd] = d[upd]
            labels[y0 : y1 + 1, x0 : x1 + 1][upd] = ki

        # pixels no window reached: nearest center spatially, low index wins
        miss = labels < 0
        if miss.any():
            my = ygrid[miss]
            mx = xgrid[miss]
            mbest = np.full(my.shape, np.inf)
            mlab = np.zeros(my.shape, dtype=np.int32)
            for ki in range(k):
                dxy = (my - centers[ki, 4]) ** 2 + (mx - centers[ki, 3]) ** 2
                upd = dxy < mbest
                mbest[upd] = dxy[upd]
                mlab[upd] = ki
            labels[miss] = mlab

        flat = labels.ravel()
        counts = np.bincount(flat, minlength=k).astype(np.float64)
        for col, field in ((0, lab[:, :, 0]), (1, lab[:, :, 1]), (2, lab[:, :, 2]), (3, xgrid), (4, ygrid)):
            sums = np.bincount(flat, weights=field.ravel(), minlength=k)
            nz = counts > 0
            centers[nz, col] = sums[nz] / counts[nz]

    return labels


def _grow(cur, connectivity):
    nxt = np.zeros_like(cur)
    nxt[1:, :] |= cur[:-1, :]
    nxt[:-1, :] |= cur[1:, :]
    nxt[:, 1:] |= cur[:, :-1]
    nxt[:, :-1] |= cur[:, 1:]
    if connectivity == 8:
        nxt[1:, 1:] |= cur[:-1, :-1]
        nxt[1:, :-1] |= cur[:-1, 1:]
        nxt[:-1, 1:] |= cur[1:, :-1]
        nxt[:-1, :-1] |= cur[1:, 1:]
    return nxt


def flood_fill(img, seed_y, seed_x, tol, connectivity, max_px):
    """Region grow from the seed pixel over the seed-color tolerance set.

    Returns the connected component (4- or 8-connectivity) of pixels whose
    channels all differ from the seed color by at most ``tol``, truncated
    to ``max_px`` pixels in breadth-first level order (row-major inside a
    partial level). uint8 {0, 1} output.
    """
    h, w, _ = img.shape
    seed = img[seed_y, seed_x].astype(np.int16)
    within = (np.abs(img.astype(np.int16) - seed) <= tol).all(axis=2)
    structure = _CONN8 if connectivity == 8 else None
    comp, _ = ndimage.label(within, structure=structure)
    region = comp == comp[seed_y, seed_x]
    size = int(region.sum())
    if size <= max_px:
        return region.astype(np.uint8)

    out = np.zeros((h, w), dtype=bool)
    out[seed_y, seed_x] = True
    cur = np.zeros((h, w), dtype=bool)
    cur[seed_y, seed_x] = True
    taken = 1
    while taken < max_px:
        nxt = _grow(cur, connectivity) & region & ~out
        idxs = np.flatnonzero(nxt)
        if idxs.size == 0:
            break
        room = max_px - taken
        if idxs.size > room:
            idxs = idxs[:room]
        out.ravel()[idxs] = True
        taken += idxs.size
        cur = nxt
    return out.astype(np.uint8)


def label_components(labels):
    """4-connected components of equal-valued runs in an int32 label map.

    Returns (comp, n) where comp holds component ids 0..n-1. Numbering is
    implementation-defined; callers normalize by scan order.
    """
    comp = np.full(labels.shape, -1, dtype=np.int32)
    n = 0
    for v in np.unique(labels):
        m = labels == v
        sub, k = ndimage.label(m)
        comp[m] = sub[m] + (n - 1)
        n += int(k)
    return comp, n


def warp_bilinear_rgb(src, inv, out_h, out_w):
    """Inverse-map warp of an RGB uint8 image with bilinear sampling.

    ``inv`` holds (a, b, c, d, e, f) of the output->source transform;
    samples falling outside the source raster contribute black.
    """
    a, b, c, d, e, f = (float(v) for v in inv)
    h, w, _ = src.shape
    xs = np.arange(out_w, dtype=np.float64)
    ys = np.arange(out_h, dtype=np.float64)
    sx = a * xs[None, :] + b * ys[:, None] + c
    sy = d * xs[None, :] + e * ys[:, None] + f
    x0 = np.floor(sx)
    y0 = np.floor(sy)
    fx = sx - x0
    fy = sy - y0
    x0i = x0.astype(np.int64)
    y0i = y0.astype(np.int64)

    srcf = src.astype(np.float64)
    out = np.empty((out_h, out_w, 3), dtype=np.uint8)

    def corner(yi, xi):
        valid = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
        v = srcf[np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)]
        v[~valid] = 0.0
        return v

    v00 = corner(y0i, x0i)
    v01 = corner(y0i, x0i + 1)
    v10 = corner(y0i + 1, x0i)
    v11 = corner(y0i + 1, x0i + 1)
    fx3 = fx[:, :, None]
    fy3 = fy[:, :, None]
    t0 = v00 * (1.0 - fx3) + v01 * fx3
    t1 = v10 * (1.0 - fx3) + v11 * fx3
    val = t0 * (1.0 - fy3) + t1 * fy3
    np.clip(np.floor(val + 0.5), 0.0, 255.0, out=val)
    out[...] = val.astype(np.uint8)
    return out


def warp_nearest_mask(src, inv, out_h, out_w):
    """Inverse-map warp of a uint8 mask with nearest-neighbor sampling."""
    a, b, c, d, e, f = (float(v) for v in inv)
    h, w = src.shape
    xs = np.arange(out_w, dtype=np.float64)
    ys = np.arange(out_h, dtype=np.float64)
    sx = a * xs[None, :] + b * ys[:, None] + c
    sy = d * xs[None, :] + e * ys[:, None] + f
    xi = np.floor(sx + 0.5).astype(np.int64)
    yi = np.floor(sy + 0.5).astype(np.int64)
    valid = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
    out = np.zeros((out_h, out_w), dtype=np.uint8)
    out[valid] = src[yi[valid], xi[valid]]
    return out


def _neighbor_tables(unknown):
    h, w = unknown.shape
    idx = np.full((h, w), -1, dtype=np.int64)
    flat = np.flatnonzero(unknown.ravel())
    n = flat.size
    idx.ravel()[flat] = np.arange(n)
    ys, xs = np.divmod(flat, w)
    deg = (
        (ys > 0).astype(np.float64)
        + (ys < h - 1)
        + (xs > 0)
        + (xs < w - 1)
    )
    nbr = np.full((n, 4), -1, dtype=np.int64)
    for j, (dy, dx) in enumerate(((-1, 0), (1, 0), (0, -1), (0, 1))):
        ny = ys + dy
        nx = xs + dx
        ok = (ny >= 0) & (ny < h) & (nx >= 0) & (nx < w)
        nbr[ok, j] = idx[ny[ok], nx[ok]]
    return deg, nbr


def cg_masked_laplacian(unknown, b, x0, tol, max_iters):
    """Jacobi-preconditioned CG on the 5-point Laplacian over a pixel mask.

    Solves deg(p)*x_p - sum(x_q for unknown neighbors q) = b_p with
    unknowns in row-major order. Returns (x, iterations, relative
    residual); the residual is re-verified against the true system before
    returning, restarting the recurrence if it drifted.
    """
    un = unknown.astype(bool)
    deg, nbr = _neighbor_tables(un)
    n = deg.size
    if n == 0:
        return np.zeros(0), 0, 0.0
    bnorm = float(np.sqrt(np.dot(b, b)))
    if bnorm == 0.0:
        return np.zeros(n), 0, 0.0

    masks = [nbr[:, j] >= 0 for j in range(4)]
    gathers = [np.where(masks[j], nbr[:, j], 0) for j in range(4)]

    def matvec(v):
        s = deg * v
        for j in range(4):
            s -= np.where(masks[j], v[gathers[j]], 0.0)
        return s

    x = x0.astype(np.float64).copy()
    iters = 0
    relres = np.inf
    while iters < max_iters:
        r = b - matvec(x)
        relres = float(np.sqrt(np.dot(r, r))) / bnorm
        if relres <= tol:
            return x, iters, relres
        z = r / deg
        p = z.copy()
        rz = float(np.dot(r, z))
        while iters < max_iters:
            iters += 1
            ap = matvec(p)
            pap = float(np.dot(p, ap))
            if pap <= 0.0:
                break
            alpha = rz / pap
            x += alpha * p
            r -= alpha * ap
            if float(np.sqrt(np.dot(r, r))) <= tol * bnorm:
                break
            z = r / deg
            rz_new = float(np.dot(r, z))
            p = z + (rz_new / rz) * p
            rz = rz_new

    r = b - matvec(x)
    relres = float(np.sqrt(np.dot(r, r))) / bnorm
    return x, iters, relres
