# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels mirroring :mod:`casmlab._kernels.pure` operation for operation."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef enum:
    KNOWN = 0
    BAND = 1
    INSIDE = 2

cdef double T_INSIDE = 1.0e6


def im2col(double[:, :, :, ::1] xpad, int kh, int kw, int stride):
    cdef Py_ssize_t n = xpad.shape[0], c = xpad.shape[1]
    cdef Py_ssize_t hp = xpad.shape[2], wp = xpad.shape[3]
    cdef Py_ssize_t ho = (hp - kh) // stride + 1, wo = (wp - kw) // stride + 1
    out_arr = np.empty((n, ho, wo, c, kh, kw), dtype=np.float64)
    cdef double[:, :, :, :, :, ::1] out = out_arr
    cdef Py_ssize_t b, y, x, ch, i, j, y0, x0
    for b in range(n):
        for y in range(ho):
            y0 = y * stride
            for x in range(wo):
                x0 = x * stride
                for ch in range(c):
                    for i in range(kh):
                        for j in range(kw):
                            out[b, y, x, ch, i, j] = xpad[b, ch, y0 + i, x0 + j]
    return out_arr


def col2im(double[:, :, :, :, :, ::1] dcols, int hp, int wp, int stride):
    cdef Py_ssize_t n = dcols.shape[0], ho = dcols.shape[1], wo = dcols.shape[2]
    cdef Py_ssize_t c = dcols.shape[3], kh = dcols.shape[4], kw = dcols.shape[5]
    out_arr = np.zeros((n, c, hp, wp), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t b, y, x, ch, i, j
    # Same accumulation order as the numpy fallback: kernel offset outermost.
    for i in range(kh):
        for j in range(kw):
            for b in range(n):
                for ch in range(c):
                    for y in range(ho):
                        for x in range(wo):
                            out[b, ch, y * stride + i, x * stride + j] += dcols[b, y, x, ch, i, j]
    return out_arr


def label_components(binary, int connectivity=4):
    cdef cnp.uint8_t[:, ::1] b = np.ascontiguousarray(binary, dtype=np.uint8)
    cdef Py_ssize_t h = b.shape[0], w = b.shape[1]
    labels_arr = np.zeros((h, w), dtype=np.int32)
    cdef int[:, ::1] labels = labels_arr
    cdef int count = 0
    cdef Py_ssize_t npix = h * w
    cdef int *queue = <int *> malloc(max(npix, 1) * sizeof(int))
    cdef int dy4[4]
    cdef int dx4[4]
    cdef int dy8[8]
    cdef int dx8[8]
    dy4[:] = [-1, 0, 0, 1]
    dx4[:] = [0, -1, 1, 0]
    dy8[:] = [-1, -1, -1, 0, 0, 1, 1, 1]
    dx8[:] = [-1, 0, 1, -1, 1, -1, 0, 1]
    cdef int *dys
    cdef int *dxs
    cdef int nn
    if connectivity == 4:
        dys = &dy4[0]
        dxs = &dx4[0]
        nn = 4
    else:
        dys = &dy8[0]
        dxs = &dx8[0]
        nn = 8
    cdef Py_ssize_t i, j, head, tail, y, x, v, u
    cdef int k
    try:
        for i in range(h):
            for j in range(w):
                if b[i, j] == 0 or labels[i, j] != 0:
                    continue
                count += 1
                labels[i, j] = count
                head = 0
                tail = 0
                queue[tail] = <int>(i * w + j)
                tail += 1
                while head < tail:
                    y = queue[head] // w
                    x = queue[head] % w
                    head += 1
                    for k in range(nn):
                        v = y + dys[k]
                        u = x + dxs[k]
                        if 0 <= v < h and 0 <= u < w and b[v, u] != 0 and labels[v, u] == 0:
                            labels[v, u] = count
                            queue[tail] = <int>(v * w + u)
                            tail += 1
    finally:
        free(queue)
    return labels_arr, count


# Binary min-heap keyed by (t, seq).
cdef struct HeapItem:
    double t
    long seq
    int i
    int j


cdef inline bint _less(HeapItem a, HeapItem b) nogil:
    if a.t < b.t:
        return True
    if a.t > b.t:
        return False
    return a.seq < b.seq


cdef void _push(HeapItem *heap, Py_ssize_t *size, HeapItem item) nogil:
    cdef Py_ssize_t pos = size[0]
    cdef Py_ssize_t parent
    size[0] += 1
    while pos > 0:
        parent = (pos - 1) >> 1
        if _less(item, heap[parent]):
            heap[pos] = heap[parent]
            pos = parent
        else:
            break
    heap[pos] = item


cdef HeapItem _pop(HeapItem *heap, Py_ssize_t *size) nogil:
    cdef HeapItem top = heap[0]
    cdef HeapItem last
    cdef Py_ssize_t n, pos, child
    size[0] -= 1
    n = size[0]
    if n > 0:
        last = heap[n]
        pos = 0
        while True:
            child = 2 * pos + 1
            if child >= n:
                break
            if child + 1 < n and _less(heap[child + 1], heap[child]):
                child += 1
            if _less(heap[child], last):
                heap[pos] = heap[child]
                pos = child
            else:
                break
        heap[pos] = last
    return top


cdef inline bint _avail(cnp.uint8_t[:, ::1] flag, Py_ssize_t h, Py_ssize_t w,
                        Py_ssize_t i, Py_ssize_t j) nogil:
    return 0 <= i < h and 0 <= j < w and flag[i, j] != INSIDE


cdef double _solve(cnp.uint8_t[:, ::1] flag, double[:, ::1] t, Py_ssize_t h, Py_ssize_t w,
                   Py_ssize_t i1, Py_ssize_t j1, Py_ssize_t i2, Py_ssize_t j2) nogil:
    cdef bint in1 = _avail(flag, h, w, i1, j1)
    cdef bint in2 = _avail(flag, h, w, i2, j2)
    cdef double a11 = t[i1, j1] if in1 else T_INSIDE
    cdef double a22 = t[i2, j2] if in2 else T_INSIDE
    if in1 and in2:
        if fabs(a11 - a22) >= 1.0:
            return 1.0 + (a11 if a11 < a22 else a22)
        return (a11 + a22 + sqrt(2.0 - (a11 - a22) * (a11 - a22))) * 0.5
    if in1:
        return 1.0 + a11
    if in2:
        return 1.0 + a22
    return 1.0 + (a11 if a11 < a22 else a22)


def telea_inpaint(image, mask, int radius):
    img_arr = np.ascontiguousarray(image, dtype=np.float64)
    m_arr = np.asarray(mask).astype(bool)
    cdef Py_ssize_t c = img_arr.shape[0], h = img_arr.shape[1], w = img_arr.shape[2]
    out_arr = img_arr.copy()
    if not m_arr.any():
        return out_arr, False
    if m_arr.all():
        out_arr[:, m_arr] = img_arr.reshape(c, -1).mean(axis=1)[:, None]
        return out_arr, True

    cdef double[:, :, ::1] out = out_arr
    flag_arr = np.where(m_arr, INSIDE, KNOWN).astype(np.uint8)
    t_arr = np.where(m_arr, T_INSIDE, 0.0)
    cdef cnp.uint8_t[:, ::1] flag = flag_arr
    cdef double[:, ::1] t = t_arr
    acc_arr = np.zeros(c, dtype=np.float64)
    cdef double[::1] acc = acc_arr
    ref_arr = np.zeros(c, dtype=np.float64)
    cdef double[::1] ref = ref_arr
    cdef bint have_ref

    cdef HeapItem *heap = <HeapItem *> malloc(h * w * sizeof(HeapItem))
    cdef Py_ssize_t size = 0
    cdef long seq = 0
    cdef HeapItem item
    cdef int dy4[4]
    cdef int dx4[4]
    dy4[:] = [-1, 0, 0, 1]
    dx4[:] = [0, -1, 1, 0]
    cdef Py_ssize_t i, j, y, x, v, u, k, l, ch, dy, dx, d2
    cdef Py_ssize_t r2 = radius * radius
    cdef int q
    cdef double tp, a, gx, gy, gnorm, cosang, wgt, s
    cdef bint left, right, up, down
    try:
        for i in range(h):
            for j in range(w):
                if flag[i, j] != KNOWN:
                    continue
                for q in range(4):
                    v = i + dy4[q]
                    u = j + dx4[q]
                    if 0 <= v < h and 0 <= u < w and flag[v, u] == INSIDE:
                        flag[i, j] = BAND
                        item.t = 0.0
                        item.seq = seq
                        item.i = <int>i
                        item.j = <int>j
                        _push(heap, &size, item)
                        seq += 1
                        break

        while size > 0:
            item = _pop(heap, &size)
            i = item.i
            j = item.j
            flag[i, j] = KNOWN
            for q in range(4):
                y = i + dy4[q]
                x = j + dx4[q]
                if not (0 <= y < h and 0 <= x < w) or flag[y, x] != INSIDE:
                    continue
                tp = _solve(flag, t, h, w, y - 1, x, y, x - 1)
                a = _solve(flag, t, h, w, y + 1, x, y, x - 1)
                if a < tp:
                    tp = a
                a = _solve(flag, t, h, w, y - 1, x, y, x + 1)
                if a < tp:
                    tp = a
                a = _solve(flag, t, h, w, y + 1, x, y, x + 1)
                if a < tp:
                    tp = a
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
                gnorm = sqrt(gx * gx + gy * gy)

                for ch in range(c):
                    acc[ch] = 0.0
                have_ref = False
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
                            cosang = fabs(<double>(dy) * gy + <double>(dx) * gx) / (sqrt(<double>d2) * gnorm)
                        else:
                            cosang = 1.0
                        if cosang < 1e-6:
                            cosang = 1e-6
                        wgt = cosang / <double>d2 / (1.0 + fabs(t[k, l] - tp))
                        if not have_ref:
                            for ch in range(c):
                                ref[ch] = out[ch, k, l]
                            have_ref = True
                        for ch in range(c):
                            acc[ch] += wgt * (out[ch, k, l] - ref[ch])
                        s += wgt
                for ch in range(c):
                    out[ch, y, x] = ref[ch] + acc[ch] / s

                flag[y, x] = BAND
                item.t = tp
                item.seq = seq
                item.i = <int>y
                item.j = <int>x
                _push(heap, &size, item)
                seq += 1
    finally:
        free(heap)
    return out_arr, False
