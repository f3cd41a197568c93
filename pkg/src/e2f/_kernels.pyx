# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: event accumulation and threshold-event simulation.

Arithmetic mirrors e2f._kernels_py operation for operation so both backends
produce bit-identical results.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport nextafter, trunc

cnp.import_array()


def accumulate(cnp.int64_t[::1] gidx, cnp.int64_t[::1] xs, cnp.int64_t[::1] ys,
               cnp.int64_t[::1] ps, int frames, int height, int width):
    """Sum event polarities into an (frames, 3, H, W) volume."""
    out = np.zeros((frames, 3, height, width), dtype=np.float64)
    cdef double[:, :, :, ::1] o = out
    cdef Py_ssize_t i, n = gidx.shape[0]
    cdef Py_ssize_t f, x, y
    cdef double p
    for i in range(n):
        f = gidx[i]
        x = xs[i]
        y = ys[i]
        p = ps[i]
        o[f, 0, y, x] += p
        if p > 0:
            o[f, 1, y, x] += p
        else:
            o[f, 2, y, x] += p
    return out


def simulate(cnp.float64_t[:, ::1] intensities, cnp.float64_t[::1] times,
             double contrast):
    """Emit threshold-crossing events; see the numpy twin for semantics."""
    cdef Py_ssize_t n_frames = intensities.shape[0]
    cdef Py_ssize_t n_pixels = intensities.shape[1]
    ref_arr = np.array(intensities[0], dtype=np.float64, copy=True)
    cdef double[::1] ref = ref_arr
    steps_arr = np.empty(n_pixels, dtype=np.float64)
    cdef double[::1] steps = steps_arr

    cdef Py_ssize_t k, i, total, pos
    cdef long long count, jj
    cdef double t0, t1, cur, nxt, sgn, target, frac, t, nd

    # Pass 1: total number of crossings (reference evolves identically).
    total = 0
    for k in range(n_frames - 1):
        for i in range(n_pixels):
            nd = trunc((intensities[k + 1, i] - ref[i]) / contrast)
            if nd < 0:
                total += <long long>(-nd)
            else:
                total += <long long>nd
            ref[i] = ref[i] + nd * contrast

    ts = np.empty(total, dtype=np.float64)
    pix = np.empty(total, dtype=np.int64)
    pol = np.empty(total, dtype=np.int8)
    cdef double[::1] ts_v = ts
    cdef cnp.int64_t[::1] pix_v = pix
    cdef cnp.int8_t[::1] pol_v = pol

    # Pass 2: emit, restarting from the first frame's reference.
    for i in range(n_pixels):
        ref[i] = intensities[0, i]
    pos = 0
    for k in range(n_frames - 1):
        t0 = times[k]
        t1 = times[k + 1]
        for i in range(n_pixels):
            cur = intensities[k, i]
            nxt = intensities[k + 1, i]
            nd = trunc((nxt - ref[i]) / contrast)
            if nd != 0:
                if nd < 0:
                    count = <long long>(-nd)
                    sgn = -1.0
                else:
                    count = <long long>nd
                    sgn = 1.0
                for jj in range(1, count + 1):
                    target = ref[i] + (<double>jj) * contrast * sgn
                    frac = (target - cur) / (nxt - cur)
                    t = t0 + frac * (t1 - t0)
                    if t >= t1:
                        t = nextafter(t1, t0)
                    ts_v[pos] = t
                    pix_v[pos] = i
                    pol_v[pos] = <cnp.int8_t>sgn
                    pos += 1
            ref[i] = ref[i] + nd * contrast
    return ts, pix, pol
