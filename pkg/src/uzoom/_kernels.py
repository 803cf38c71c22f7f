"""Hot numeric kernels: separable bicubic gather passes and ZNCC search.

Two implementations live side by side: numba ``@njit`` loops and vectorized
numpy. The active path is chosen at import time; set ``UZ_NO_NUMBA=1`` (or
numba's own ``NUMBA_DISABLE_JIT``) to force the numpy fallback. Both paths
are kept importable so benchmarks can compare them directly.
"""

import os

import numpy as np

NUMBA_AVAILABLE = False
if not os.environ.get("UZ_NO_NUMBA") and not os.environ.get("NUMBA_DISABLE_JIT"):
    try:
        import numba
        from numba import njit, prange

        NUMBA_AVAILABLE = True
    except ImportError:
        NUMBA_AVAILABLE = False


def catmull_rom_weights(t):
    """Catmull-Rom kernel (a = -0.5) evaluated at |t|."""
    t = np.abs(t)
    w = np.zeros_like(t)
    m1 = t < 1.0
    m2 = (t >= 1.0) & (t < 2.0)
    w[m1] = 1.5 * t[m1] ** 3 - 2.5 * t[m1] ** 2 + 1.0
    w[m2] = -0.5 * t[m2] ** 3 + 2.5 * t[m2] ** 2 - 4.0 * t[m2] + 2.0
    return w


def axis_taps(n_in, n_out, scale, offset=0.0):
    """Tap indices and weights for one resampling axis.

    Output sample i reads source coordinate ``offset + (i + 0.5) * scale - 0.5``;
    four Catmull-Rom taps, indices clamped to the source range, weights
    normalized to sum 1 so constants are reproduced exactly.
    """
    i = np.arange(n_out, dtype=np.float64)
    src = offset + (i + 0.5) * scale - 0.5
    base = np.floor(src).astype(np.int64)
    frac = src - base
    # taps at base-1 .. base+2
    idx = base[:, None] + np.arange(-1, 3)[None, :]
    t = idx - src[:, None]
    wts = catmull_rom_weights(t)
    wts /= wts.sum(axis=1, keepdims=True)
    idx = np.clip(idx, 0, n_in - 1)
    return idx.astype(np.int64), wts.astype(np.float32), frac


# ---------------------------------------------------------------------------
# bicubic gather passes


def _gather_rows_np(img, idx, wts):
    out = wts[:, 0, None, None] * img[idx[:, 0]]
    out += wts[:, 1, None, None] * img[idx[:, 1]]
    out += wts[:, 2, None, None] * img[idx[:, 2]]
    out += wts[:, 3, None, None] * img[idx[:, 3]]
    return out


def _gather_cols_np(img, idx, wts):
    out = wts[None, :, 0, None] * img[:, idx[:, 0]]
    out += wts[None, :, 1, None] * img[:, idx[:, 1]]
    out += wts[None, :, 2, None] * img[:, idx[:, 2]]
    out += wts[None, :, 3, None] * img[:, idx[:, 3]]
    return out


if NUMBA_AVAILABLE:

    @njit(cache=True, parallel=True)
    def _gather_rows_nb(img, idx, wts, out):
        n_out, width, chans = out.shape
        for i in prange(n_out):
            i0, i1, i2, i3 = idx[i, 0], idx[i, 1], idx[i, 2], idx[i, 3]
            w0, w1, w2, w3 = wts[i, 0], wts[i, 1], wts[i, 2], wts[i, 3]
            for x in range(width):
                for c in range(chans):
                    out[i, x, c] = (
                        w0 * img[i0, x, c]
                        + w1 * img[i1, x, c]
                        + w2 * img[i2, x, c]
                        + w3 * img[i3, x, c]
                    )

    @njit(cache=True, parallel=True)
    def _gather_cols_nb(img, idx, wts, out):
        height, n_out, chans = out.shape
        for y in prange(height):
            for i in range(n_out):
                i0, i1, i2, i3 = idx[i, 0], idx[i, 1], idx[i, 2], idx[i, 3]
                w0, w1, w2, w3 = wts[i, 0], wts[i, 1], wts[i, 2], wts[i, 3]
                for c in range(chans):
                    out[y, i, c] = (
                        w0 * img[y, i0, c]
                        + w1 * img[y, i1, c]
                        + w2 * img[y, i2, c]
                        + w3 * img[y, i3, c]
                    )

    def gather_rows_numba(img, idx, wts):
        out = np.empty((idx.shape[0], img.shape[1], img.shape[2]), dtype=np.float32)
        _gather_rows_nb(img, idx, wts, out)
        return out

    def gather_cols_numba(img, idx, wts):
        out = np.empty((img.shape[0], idx.shape[0], img.shape[2]), dtype=np.float32)
        _gather_cols_nb(img, idx, wts, out)
        return out


gather_rows_numpy = _gather_rows_np
gather_cols_numpy = _gather_cols_np

if NUMBA_AVAILABLE:
    gather_rows = gather_rows_numba
    gather_cols = gather_cols_numba
else:
    gather_rows = gather_rows_numpy
    gather_cols = gather_cols_numpy


# ---------------------------------------------------------------------------
# ZNCC template search (frame-to-frame point tracking)


def _zncc_search_np(prev, nxt, pts, active, r, s, min_score):
    height, width = prev.shape
    n = pts.shape[0]
    new_pts = pts.copy()
    ok = np.zeros(n, dtype=np.bool_)
    scores = np.zeros(n, dtype=np.float32)
    tw = 2 * r + 1
    for p in range(n):
        if not active[p]:
            continue
        x, y = pts[p, 0], pts[p, 1]
        cx = int(round(x))
        cy = int(round(y))
        if cx - r < 0 or cx + r > width - 1 or cy - r < 0 or cy + r > height - 1:
            continue
        dx_lo = max(-s, r - cx)
        dx_hi = min(s, width - 1 - r - cx)
        dy_lo = max(-s, r - cy)
        dy_hi = min(s, height - 1 - r - cy)
        if dx_lo > dx_hi or dy_lo > dy_hi:
            continue
        tpl = prev[cy - r : cy + r + 1, cx - r : cx + r + 1].astype(np.float64)
        tz = tpl - tpl.mean()
        tvar = float((tz * tz).sum())
        if tvar <= 1e-12:
            continue
        area = nxt[
            cy + dy_lo - r : cy + dy_hi + r + 1, cx + dx_lo - r : cx + dx_hi + r + 1
        ].astype(np.float64)
        win = np.lib.stride_tricks.sliding_window_view(area, (tw, tw))
        # sum(tz) == 0, so tensordot against tz already removes the window mean
        cross = np.tensordot(win, tz, axes=([2, 3], [0, 1]))
        wsum = np.tensordot(win, np.ones_like(tz), axes=([2, 3], [0, 1]))
        wsq = np.tensordot(win * win, np.ones_like(tz), axes=([2, 3], [0, 1]))
        wvar = wsq - wsum * wsum / (tw * tw)
        denom = np.sqrt(np.maximum(tvar * wvar, 0.0))
        score = np.where(denom > 1e-12, cross / np.maximum(denom, 1e-12), 0.0)
        by, bx = np.unravel_index(np.argmax(score), score.shape)
        best = float(score[by, bx])
        scores[p] = best
        if best < min_score:
            continue
        dx = dx_lo + bx
        dy = dy_lo + by
        sub_x = 0.0
        sub_y = 0.0
        # a perfect match cannot be improved; refinement would only add the
        # asymmetry bias of the correlation surface
        if best >= 1.0 - 1e-7:
            new_pts[p, 0] = x + dx
            new_pts[p, 1] = y + dy
            ok[p] = True
            continue
        if 0 < bx < score.shape[1] - 1:
            sm, s0, sp = score[by, bx - 1], score[by, bx], score[by, bx + 1]
            den = sm - 2.0 * s0 + sp
            if den < -1e-12:
                sub_x = float(np.clip(0.5 * (sm - sp) / den, -1.0, 1.0))
        if 0 < by < score.shape[0] - 1:
            sm, s0, sp = score[by - 1, bx], score[by, bx], score[by + 1, bx]
            den = sm - 2.0 * s0 + sp
            if den < -1e-12:
                sub_y = float(np.clip(0.5 * (sm - sp) / den, -1.0, 1.0))
        new_pts[p, 0] = x + dx + sub_x
        new_pts[p, 1] = y + dy + sub_y
        ok[p] = True
    return new_pts, ok, scores


if NUMBA_AVAILABLE:

    @njit(cache=True, parallel=True)
    def _zncc_search_nb(prev, nxt, pts, active, r, s, min_score, new_pts, ok, scores):
        height, width = prev.shape
        n = pts.shape[0]
        for p in prange(n):
            ok[p] = False
            scores[p] = 0.0
            new_pts[p, 0] = pts[p, 0]
            new_pts[p, 1] = pts[p, 1]
            if not active[p]:
                continue
            x = pts[p, 0]
            y = pts[p, 1]
            cx = int(round(x))
            cy = int(round(y))
            if cx - r < 0 or cx + r > width - 1 or cy - r < 0 or cy + r > height - 1:
                continue
            dx_lo = max(-s, r - cx)
            dx_hi = min(s, width - 1 - r - cx)
            dy_lo = max(-s, r - cy)
            dy_hi = min(s, height - 1 - r - cy)
            if dx_lo > dx_hi or dy_lo > dy_hi:
                continue
            tw = 2 * r + 1
            npix = tw * tw
            tmean = 0.0
            for i in range(tw):
                for j in range(tw):
                    tmean += prev[cy - r + i, cx - r + j]
            tmean /= npix
            tvar = 0.0
            for i in range(tw):
                for j in range(tw):
                    d = prev[cy - r + i, cx - r + j] - tmean
                    tvar += d * d
            if tvar <= 1e-12:
                continue
            ny = dy_hi - dy_lo + 1
            nx = dx_hi - dx_lo + 1
            score = np.empty((ny, nx), dtype=np.float64)
            for oy in range(ny):
                for ox in range(nx):
                    wy = cy + dy_lo + oy
                    wx = cx + dx_lo + ox
                    wsum = 0.0
                    wsq = 0.0
                    cross = 0.0
                    for i in range(tw):
                        for j in range(tw):
                            v = nxt[wy - r + i, wx - r + j]
                            t = prev[cy - r + i, cx - r + j] - tmean
                            wsum += v
                            wsq += v * v
                            cross += v * t
                    wvar = wsq - wsum * wsum / npix
                    denom = tvar * wvar
                    if denom > 1e-12:
                        score[oy, ox] = cross / np.sqrt(denom)
                    else:
                        score[oy, ox] = 0.0
            by = 0
            bx = 0
            best = score[0, 0]
            for oy in range(ny):
                for ox in range(nx):
                    if score[oy, ox] > best:
                        best = score[oy, ox]
                        by = oy
                        bx = ox
            scores[p] = best
            if best < min_score:
                continue
            if best >= 1.0 - 1e-7:
                new_pts[p, 0] = x + dx_lo + bx
                new_pts[p, 1] = y + dy_lo + by
                ok[p] = True
                continue
            sub_x = 0.0
            sub_y = 0.0
            if 0 < bx < nx - 1:
                sm = score[by, bx - 1]
                s0 = score[by, bx]
                sp = score[by, bx + 1]
                den = sm - 2.0 * s0 + sp
                if den < -1e-12:
                    sub_x = 0.5 * (sm - sp) / den
                    if sub_x > 1.0:
                        sub_x = 1.0
                    elif sub_x < -1.0:
                        sub_x = -1.0
            if 0 < by < ny - 1:
                sm = score[by - 1, bx]
                s0 = score[by, bx]
                sp = score[by + 1, bx]
                den = sm - 2.0 * s0 + sp
                if den < -1e-12:
                    sub_y = 0.5 * (sm - sp) / den
                    if sub_y > 1.0:
                        sub_y = 1.0
                    elif sub_y < -1.0:
                        sub_y = -1.0
            new_pts[p, 0] = x + dx_lo + bx + sub_x
            new_pts[p, 1] = y + dy_lo + by + sub_y
            ok[p] = True

    def zncc_search_numba(prev, nxt, pts, active, r, s, min_score):
        n = pts.shape[0]
        new_pts = np.empty_like(pts)
        ok = np.zeros(n, dtype=np.bool_)
        scores = np.zeros(n, dtype=np.float32)
        _zncc_search_nb(
            prev.astype(np.float64),
            nxt.astype(np.float64),
            pts,
            active,
            r,
            s,
            min_score,
            new_pts,
            ok,
            scores,
        )
        return new_pts, ok, scores


zncc_search_numpy = _zncc_search_np

if NUMBA_AVAILABLE:
    zncc_search = zncc_search_numba
else:
    zncc_search = zncc_search_numpy
