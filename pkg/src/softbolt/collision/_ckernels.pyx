# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled assembly of the linearised gain/loss matrices and the bilinear
collision term on a uniform velocity grid.

Conventions shared with ``_kernels_py``:

* ``table[o1, o2, o3]`` holds the cell integral of |w|^varrho for the offset
  ``o - (n - 1)``; a zero entry means the pair is skipped.
* directions are given in a frame whose pole is the relative velocity:
  ``cos_t``, ``sin_t``, ``cos_p``, ``sin_p`` and quadrature weight ``dir_w``
  (which already contains the angular kernel).
* off-grid values are interpolated (exactly for quadratics) in f / sqrt(mu) (``direct = 0``) or in f
  itself with the Maxwellian factor evaluated exactly (``direct = 1``); outside
  the box they are zero.
"""
import numpy as np
cimport numpy as cnp
from cython.parallel import prange
from libc.math cimport sqrt, floor, fabs, exp

cnp.import_array()

cdef double INV_SQRT_2PI = 0.3989422804014327


cdef inline double _sqrt_mu_at(double x, double y, double z) noexcept nogil:
    return INV_SQRT_2PI * exp(-0.25 * (x * x + y * y + z * z))


cdef enum:
    MAXST = 56  # 8 trilinear corners + 3 axes x 4 x 4 curvature points


cdef inline int _stencil(double x, double y, double z, double V, double h, int n,
                         long* idx, double* wt) noexcept nogil:
    """Interpolation stencil exact for quadratics; returns the entry count (0 off-grid).

    Trilinear weights plus, per axis, -theta (1 - theta) / 2 times the second
    difference interpolated linearly from the two cell corners.  At the edge
    of the box the second difference is taken at the nearest interior node.
    """
    cdef double s[3]
    cdef long b[3]
    cdef double f[3]
    cdef long coord[3]
    cdef double cq[4]
    cdef int d, da, db, dc, k, a, o1, o2, d1, d2, q
    cdef long start
    cdef double t, cf, wl
    s[0] = (x + V) / h
    s[1] = (y + V) / h
    s[2] = (z + V) / h
    for d in range(3):
        if s[d] < 0.0 or s[d] > n - 1:
            return 0
        b[d] = <long>floor(s[d])
        if b[d] > n - 2:
            b[d] = n - 2
        f[d] = s[d] - b[d]
    k = 0
    for da in range(2):
        for db in range(2):
            for dc in range(2):
                idx[k] = ((b[0] + da) * n + (b[1] + db)) * n + (b[2] + dc)
                wt[k] = (f[0] if da else 1.0 - f[0]) * (f[1] if db else 1.0 - f[1]) * (f[2] if dc else 1.0 - f[2])
                k += 1
    if n < 3:
        return k
    for a in range(3):
        t = f[a]
        cf = -0.5 * t * (1.0 - t)
        if cf == 0.0:
            continue
        if b[a] == 0 or b[a] + 1 == n - 1:
            start = 0 if b[a] == 0 else b[a] - 1
            cq[0] = 1.0
            cq[1] = -2.0
            cq[2] = 1.0
            cq[3] = 0.0
        else:
            start = b[a] - 1
            cq[0] = 1.0 - t
            cq[1] = -2.0 * (1.0 - t) + t
            cq[2] = (1.0 - t) - 2.0 * t
            cq[3] = t
        o1 = 1 if a == 0 else 0
        o2 = 1 if a == 2 else 2
        for d1 in range(2):
            for d2 in range(2):
                wl = (f[o1] if d1 else 1.0 - f[o1]) * (f[o2] if d2 else 1.0 - f[o2])
                coord[o1] = b[o1] + d1
                coord[o2] = b[o2] + d2
                for q in range(4):
                    if cq[q] == 0.0:
                        continue
                    coord[a] = start + q
                    idx[k] = (coord[0] * n + coord[1]) * n + coord[2]
                    wt[k] = cf * wl * cq[q]
                    k += 1
    return k


cdef inline void _frame(double rx, double ry, double rz, double* e) noexcept nogil:
    """Orthonormal frame e[0:3] = r/|r|, e[3:6], e[6:9]."""
    cdef double r = sqrt(rx * rx + ry * ry + rz * rz)
    cdef double ax, ay, az, t
    e[0] = rx / r
    e[1] = ry / r
    e[2] = rz / r
    # helper axis least aligned with r
    if fabs(e[0]) <= fabs(e[1]) and fabs(e[0]) <= fabs(e[2]):
        ax, ay, az = 1.0, 0.0, 0.0
    elif fabs(e[1]) <= fabs(e[2]):
        ax, ay, az = 0.0, 1.0, 0.0
    else:
        ax, ay, az = 0.0, 0.0, 1.0
    # e1 = normalise(a x e0), e2 = e0 x e1
    e[3] = ay * e[2] - az * e[1]
    e[4] = az * e[0] - ax * e[2]
    e[5] = ax * e[1] - ay * e[0]
    t = sqrt(e[3] * e[3] + e[4] * e[4] + e[5] * e[5])
    e[3] /= t
    e[4] /= t
    e[5] /= t
    e[6] = e[1] * e[5] - e[2] * e[4]
    e[7] = e[2] * e[3] - e[0] * e[5]
    e[8] = e[0] * e[4] - e[1] * e[3]


def assemble(int n, double V, double h,
             const double[::1] sqrt_mu, const double[::1] wq,
             const double[:, :, ::1] table,
             const double[::1] cos_t, const double[::1] sin_t,
             const double[::1] cos_p, const double[::1] sin_p,
             const double[::1] dir_w,
             double[:, ::1] K2, double[:, ::1] K1, double[::1] loss, int direct=0):
    """Accumulate gain (K2), loss-kernel (K1) and loss-frequency entries row by row."""
    cdef long size = n * n * n
    cdef int ndir = dir_w.shape[0]
    cdef long i
    cdef int d
    cdef double dw_tot = 0.0
    cdef double h3 = h * h * h
    for d in range(ndir):
        dw_tot += dir_w[d]
    for i in prange(size, nogil=True, schedule="dynamic"):
        _assemble_row(i, n, V, h, h3, dw_tot, sqrt_mu, wq, table, cos_t, sin_t, cos_p, sin_p, dir_w, K2, K1, loss,
                      direct)


cdef void _assemble_row(long i, int n, double V, double h, double h3, double dw_tot,
                        const double[::1] sqrt_mu, const double[::1] wq,
                        const double[:, :, ::1] table,
                        const double[::1] cos_t, const double[::1] sin_t,
                        const double[::1] cos_p, const double[::1] sin_p,
                        const double[::1] dir_w,
                        double[:, ::1] K2, double[:, ::1] K1, double[::1] loss, int direct) noexcept nogil:
    cdef long size = n * n * n
    cdef int ndir = dir_w.shape[0]
    cdef long j
    cdef int ia, ib, ic, ja, jb, jc, d, s
    cdef double W, base, c, cd, csum, vx, vy, vz, ux, uy, uz, rx, ry, rz, rn, p, ox, oy, oz, gv, gu
    cdef double smi = sqrt_mu[i]
    cdef int nv, nu
    cdef double e[9]
    cdef long iv[MAXST]
    cdef long iu[MAXST]
    cdef double av[MAXST]
    cdef double au[MAXST]
    ia = i // (n * n)
    ib = (i // n) % n
    ic = i % n
    vx = -V + ia * h
    vy = -V + ib * h
    vz = -V + ic * h
    for j in range(size):
        ja = j // (n * n)
        jb = (j // n) % n
        jc = j % n
        W = table[ja - ia + n - 1, jb - ib + n - 1, jc - ic + n - 1]
        if W == 0.0:
            continue
        base = wq[j] / h3 * W * sqrt_mu[j] * sqrt_mu[j]
        if j == i:
            c = base * dw_tot
            K2[i, i] += 2.0 * c
            K1[i, i] += c
            loss[i] += c
            continue
        ux = -V + ja * h
        uy = -V + jb * h
        uz = -V + jc * h
        rx = ux - vx
        ry = uy - vy
        rz = uz - vz
        rn = sqrt(rx * rx + ry * ry + rz * rz)
        _frame(rx, ry, rz, e)
        csum = 0.0
        for d in range(ndir):
            ox = cos_t[d] * e[0] + sin_t[d] * (cos_p[d] * e[3] + sin_p[d] * e[6])
            oy = cos_t[d] * e[1] + sin_t[d] * (cos_p[d] * e[4] + sin_p[d] * e[7])
            oz = cos_t[d] * e[2] + sin_t[d] * (cos_p[d] * e[5] + sin_p[d] * e[8])
            p = rn * cos_t[d]
            c = base * dir_w[d]
            csum = csum + c
            # values outside the box are zero: drop only the off-grid gain part
            if direct:
                cd = c / sqrt_mu[j]
                gv = cd * _sqrt_mu_at(ux - p * ox, uy - p * oy, uz - p * oz)
                gu = cd * _sqrt_mu_at(vx + p * ox, vy + p * oy, vz + p * oz)
            nv = _stencil(vx + p * ox, vy + p * oy, vz + p * oz, V, h, n, iv, av)
            if nv:
                for s in range(nv):
                    if direct:
                        K2[i, iv[s]] += gv * av[s]
                    else:
                        K2[i, iv[s]] += c * smi / sqrt_mu[iv[s]] * av[s]
            nu = _stencil(ux - p * ox, uy - p * oy, uz - p * oz, V, h, n, iu, au)
            if nu:
                for s in range(nu):
                    if direct:
                        K2[i, iu[s]] += gu * au[s]
                    else:
                        K2[i, iu[s]] += c * smi / sqrt_mu[iu[s]] * au[s]
        K1[i, j] += csum * smi / sqrt_mu[j]
        loss[i] += csum


def gamma_batch(int n, double V, double h,
                const double[::1] sqrt_mu, const double[::1] wq,
                const double[:, :, ::1] table,
                const double[::1] cos_t, const double[::1] sin_t,
                const double[::1] cos_p, const double[::1] sin_p,
                const double[::1] dir_w,
                const double[:, ::1] phi_f, const double[:, ::1] phi_g,
                double[:, ::1] out, int direct=0):
    """Bilinear term for m field pairs at once.

    ``phi_f``, ``phi_g`` are field / sqrt(mu) when ``direct = 0`` and the fields
    themselves when ``direct = 1``.
    """
    cdef long size = n * n * n
    cdef long i
    for i in prange(size, nogil=True, schedule="dynamic"):
        _gamma_row(i, n, V, h, sqrt_mu, wq, table, cos_t, sin_t, cos_p, sin_p, dir_w, phi_f, phi_g, out, direct)


cdef void _gamma_row(long i, int n, double V, double h,
                     const double[::1] sqrt_mu, const double[::1] wq,
                     const double[:, :, ::1] table,
                     const double[::1] cos_t, const double[::1] sin_t,
                     const double[::1] cos_p, const double[::1] sin_p,
                     const double[::1] dir_w,
                     const double[:, ::1] phi_f, const double[:, ::1] phi_g,
                     double[:, ::1] out, int direct) noexcept nogil:
    cdef long size = n * n * n
    cdef int ndir = dir_w.shape[0]
    cdef int m = phi_f.shape[0]
    cdef long j
    cdef int ia, ib, ic, ja, jb, jc, d, s, q
    cdef double W, base, c, csum, vx, vy, vz, ux, uy, uz, rx, ry, rz, rn, p, ox, oy, oz, fu, gv
    cdef double h3 = h * h * h
    cdef int nv, nu
    cdef double e[9]
    cdef long iv[MAXST]
    cdef long iu[MAXST]
    cdef double av[MAXST]
    cdef double au[MAXST]
    ia = i // (n * n)
    ib = (i // n) % n
    ic = i % n
    vx = -V + ia * h
    vy = -V + ib * h
    vz = -V + ic * h
    for j in range(size):
        if j == i:
            continue
        ja = j // (n * n)
        jb = (j // n) % n
        jc = j % n
        W = table[ja - ia + n - 1, jb - ib + n - 1, jc - ic + n - 1]
        if W == 0.0:
            continue
        base = wq[j] / h3 * W * sqrt_mu[j] * sqrt_mu[j]
        ux = -V + ja * h
        uy = -V + jb * h
        uz = -V + jc * h
        rx = ux - vx
        ry = uy - vy
        rz = uz - vz
        rn = sqrt(rx * rx + ry * ry + rz * rz)
        _frame(rx, ry, rz, e)
        csum = 0.0
        for d in range(ndir):
            ox = cos_t[d] * e[0] + sin_t[d] * (cos_p[d] * e[3] + sin_p[d] * e[6])
            oy = cos_t[d] * e[1] + sin_t[d] * (cos_p[d] * e[4] + sin_p[d] * e[7])
            oz = cos_t[d] * e[2] + sin_t[d] * (cos_p[d] * e[5] + sin_p[d] * e[8])
            p = rn * cos_t[d]
            c = base * dir_w[d]
            csum = csum + c
            nv = _stencil(vx + p * ox, vy + p * oy, vz + p * oz, V, h, n, iv, av)
            if not nv:
                continue
            nu = _stencil(ux - p * ox, uy - p * oy, uz - p * oz, V, h, n, iu, au)
            if not nu:
                continue
            for q in range(m):
                fu = 0.0
                gv = 0.0
                for s in range(nu):
                    fu = fu + au[s] * phi_f[q, iu[s]]
                for s in range(nv):
                    gv = gv + av[s] * phi_g[q, iv[s]]
                if direct:
                    out[q, i] += c / sqrt_mu[j] * fu * gv
                else:
                    out[q, i] += sqrt_mu[i] * c * fu * gv
        for q in range(m):
            if direct:
                out[q, i] -= phi_g[q, i] * csum / sqrt_mu[j] * phi_f[q, j]
            else:
                out[q, i] -= sqrt_mu[i] * phi_g[q, i] * csum * phi_f[q, j]
