"""Reference kernels written against numpy and the standard library.

These are the fallback implementations used when the compiled extension
(``_fast``) is unavailable or disabled with ``CASMLAB_PURE=1``.  Both backends
must produce bit-identical results; ``tests/test_kernels.py`` checks this.
"""

import heapq
import math
from collections import deque

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

KNOWN = 0
BAND = 1
INSIDE = 2
T_INSIDE = 1.0e6

_NEIGHBORS_4 = ((-1, 0), (0, -1), (0, 1), (1, 0))
_NEIGHBORS_8 = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


def im2col(xpad, kh, kw, stride):
    """Gather sliding windows of a padded ``[N, C, Hp, Wp]`` array.

    Returns a C-contiguous ``[N, Ho, Wo, C, kh, kw]`` array.
    """
    win = sliding_window_view(xpad, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5))


def col2im(dcols, hp, wp, stride):
    """Adjoint of :func:`im2col`: scatter-add window gradients back."""
    n, ho, wo, c, kh, kw = dcols.shape
    out = np.zeros((n, c, hp, wp))
    g = dcols.transpose(0, 3, 4, 5, 1, 2)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += g[:, :, i, j]
    return out


def label_components(binary, connectivity=4):
    """Label connected components of ones.

    Labels start at 1 and are assigned in row-major order of each component's
    first pixel.  Returns ``(labels, count)``.
    """
    b = np.asarray(binary, dtype=bool)
    h, w = b.shape
    offsets = _NEIGHBORS_4 if connectivity == 4 else _NEIGHBORS_8
    labels = np.zeros((h, w), dtype=np.int32)
    count = 0
    queue = deque()
    for i in range(h):
        for j in range(w):
            if not b[i, j] or labels[i, j]:
                continue
            count += 1
            labels[i, j] = count
            queue.append((i, j))
            while queue:
                y, x = queue.popleft()
                for dy, dx in offsets:
                    v, u = y + dy, x + dx
                    if 0 <= v < h and 0 <= u < w and b[v, u] and not labels[v, u]:
                        labels[v, u] = count
                        queue.append((v, u))
    return labels, count


def _solve(flag, t, h, w, i1, j1, i2, j2):
    in1 = 0 <= i1 < h and 0 <= j1 < w and flag[i1, j1] != INSIDE
    in2 = 0 <= i2 < h and 0 <= j2 < w and flag[i2, j2] != INSIDE
    a11 = t[i1, j1] if in1 else T_INSIDE
    a22 = t[i2, j2] if in2 else T_INSIDE
    if in1 and in2:
        if abs(a11 - a22) >= 1.0:
            return 1.0 + min(a11, a22)
        return (a11 + a22 + math.sqrt(2.0 - (a11 - a22) * (a11 - a22))) * 0.5
    if in1:
        return 1.0 + a11
    if in2:
        return 1.0 + a22
    return 1.0 + min(a11, a22)


def _avail(flag, h, w, i, j):
    return 0 <= i < h and 0 <= j < w and flag[i, j] != INSIDE


def telea_inpaint(image, mask, radius):
    """Fast-marching inpainting of ``image[:, mask]``.

    ``image`` is ``[C, H, W]`` float64, ``mask`` is ``[H, W]`` with nonzero
    entries marking pixels to reconstruct.  Each masked pixel becomes a
    normalized weighted average of already-known pixels within ``radius``.
    Returns ``(out, degenerate)``; ``degenerate`` is true when no pixel was
    known and the mask was filled with the per-channel image mean.
    """
    img = np.ascontiguousarray(image, dtype=np.float64)
    m = np.asarray(mask).astype(bool)
    c, h, w = img.shape
    out = img.copy()
    if not m.any():
        return out, False
    if m.all():
        out[:, m] = img.reshape(c, -1).mean(axis=1)[:, None]
        return out, True

    flag = np.where(m, INSIDE, KNOWN).astype(np.uint8)
    t = np.where(m, T_INSIDE, 0.0)
    heap = []
    seq = 0
    for i in range(h):
        for j in range(w):
            if flag[i, j] != KNOWN:
                continue
            for di, dj in _NEIGHBORS_4:
                v, u = i + di, j + dj
                if 0 <= v < h and 0 <= u < w and flag[v, u] == INSIDE:
                    flag[i, j] = BAND
                    heapq.heappush(heap, (0.0, seq, i, j))
                    seq += 1
                    break

    r2 = radius * radius
    while heap:
        _, _, i, j = heapq.heappop(heap)
        flag[i, j] = KNOWN
        for di, dj in _NEIGHBORS_4:
            y, x = i + di, j + dj
            if not (0 <= y < h and 0 <= x < w) or flag[y, x] != INSIDE:
                continue
            tp = min(
                _solve(flag, t, h, w, y - 1, x, y, x - 1),
                _solve(flag, t, h, w, y + 1, x, y, x - 1),
                _solve(flag, t, h, w, y - 1, x, y, x + 1),
                _solve(flag, t, h, w, y + 1, x, y, x + 1),
            )
            t[y, x] = tp

            right = _avail(flag, h, w, y, x + 1)
            left = _avail(flag, h, w, y, x - 1)
            if right and left:
                gx = (t[y, x + 1] - t[y, x - 1]) * 0.5
            elif right:
                gx = t[y, x + 1] - tp
            elif left:
                gx = tp - t[y, x - 1]
            else:
                gx = 0.0
            down = _avail(flag, h, w, y + 1, x)
            up = _avail(flag, h, w, y - 1, x)
            if down and up:
                gy = (t[y + 1, x] - t[y - 1, x]) * 0.5
            elif down:
                gy = t[y + 1, x] - tp
            elif up:
                gy = tp - t[y - 1, x]
            else:
                gy = 0.0
            gnorm = math.sqrt(gx * gx + gy * gy)

            # Accumulate offsets from the first contributing pixel so constants are reproduced exactly.
            acc = [0.0] * c
            ref = None
            s = 0.0
            for k in range(max(0, y - radius), min(h, y + radius + 1)):
                for l in range(max(0, x - radius), min(w, x + radius + 1)):
                    if flag[k, l] == INSIDE:
                        continue
                    dy = y - k
                    dx = x - l
                    d2 = dy * dy + dx * dx
                    if d2 > r2:
                        continue
                    if gnorm > 0.0:
                        cosang = abs(dy * gy + dx * gx) / (math.sqrt(d2) * gnorm)
                    else:
                        cosang = 1.0
                    if cosang < 1e-6:
                        cosang = 1e-6
                    wgt = cosang / d2 / (1.0 + abs(t[k, l] - tp))
                    if ref is None:
                        ref = [out[ch, k, l] for ch in range(c)]
                    for ch in range(c):
                        acc[ch] += wgt * (out[ch, k, l] - ref[ch])
                    s += wgt
            for ch in range(c):
                out[ch, y, x] = ref[ch] + acc[ch] / s

            flag[y, x] = BAND
            heapq.heappush(heap, (tp, seq, y, x))
            seq += 1
    return out, False
