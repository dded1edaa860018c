"""NumPy implementation of the assembly and bilinear kernels.

Same signatures and results as the compiled module; vectorised over the
u-nodes and directions of one row at a time.  Practical for grids up to
about 10 points per axis.
"""
from __future__ import annotations

import numpy as np

_CORNERS = np.array([(a, b, c) for a in (0, 1) for b in (0, 1) for c in (0, 1)])


def _stencils(pts, V, h, n):
    """(inside, indices, weights) of the quadratic-exact stencil, 56 entries per point.

    Unused entries carry weight zero.
    """
    s = (pts + V) / h
    ok = np.all((s >= 0.0) & (s <= n - 1), axis=-1)
    base = np.clip(np.floor(s).astype(np.int64), 0, max(n - 2, 0))
    frac = s - base
    corner = base[..., None, :] + _CORNERS  # (..., 8, 3)
    idx = [(corner[..., 0] * n + corner[..., 1]) * n + corner[..., 2]]
    f = frac[..., None, :]
    wt = [np.prod(np.where(_CORNERS == 1, f, 1.0 - f), axis=-1)]
    if n >= 3:
        for a in range(3):
            t = frac[..., a]
            cf = -0.5 * t * (1.0 - t)
            b = base[..., a]
            edge = (b == 0) | (b + 1 == n - 1)
            start = np.where(b == 0, 0, b - 1)
            cq = np.where(edge[..., None], np.array([1.0, -2.0, 1.0, 0.0]),
                          np.stack([1 - t, -2 * (1 - t) + t, (1 - t) - 2 * t, t], axis=-1))
            o1, o2 = [o for o in range(3) if o != a]
            for d1 in (0, 1):
                for d2 in (0, 1):
                    wl = (frac[..., o1] if d1 else 1 - frac[..., o1]) * (frac[..., o2] if d2 else 1 - frac[..., o2])
                    coord = [None, None, None]
                    coord[o1] = base[..., o1] + d1
                    coord[o2] = base[..., o2] + d2
                    for q in range(4):
                        coord[a] = np.minimum(start + q, n - 1)
                        idx.append((coord[0] * n + coord[1]) * n + coord[2])
                        wt.append(cf * wl * cq[..., q])
    if len(idx) > 1:
        idx = np.concatenate([idx[0], np.stack(idx[1:], axis=-1)], axis=-1)
        wt = np.concatenate([wt[0], np.stack(wt[1:], axis=-1)], axis=-1)
    else:
        idx, wt = idx[0], wt[0]
    return ok, np.where(ok[..., None], idx, 0), wt


def _frames(r):
    rn = np.linalg.norm(r, axis=1)
    e0 = r / rn[:, None]
    k = np.argmin(np.abs(e0), axis=1)
    helper = np.eye(3)[k]
    e1 = np.cross(helper, e0)
    e1 /= np.linalg.norm(e1, axis=1)[:, None]
    e2 = np.cross(e0, e1)
    return rn, e0, e1, e2


def _row_geometry(i, n, V, h, table, cos_t, sin_t, cos_p, sin_p):
    nodes_axis = -V + h * np.arange(n)
    ia, ib, ic = np.unravel_index(i, (n, n, n))
    W = table[n - 1 - ia:2 * n - 1 - ia, n - 1 - ib:2 * n - 1 - ib, n - 1 - ic:2 * n - 1 - ic].reshape(-1)
    js = np.nonzero(W)[0]
    js = js[js != i]
    v = np.array([nodes_axis[ia], nodes_axis[ib], nodes_axis[ic]])
    ja, jb, jc = np.unravel_index(js, (n, n, n))
    u = np.stack([nodes_axis[ja], nodes_axis[jb], nodes_axis[jc]], axis=1)
    if len(js) == 0:
        return W, js, None
    rn, e0, e1, e2 = _frames(u - v)
    omega = (cos_t[None, :, None] * e0[:, None, :]
             + sin_t[None, :, None] * (cos_p[None, :, None] * e1[:, None, :] + sin_p[None, :, None] * e2[:, None, :]))
    p = (rn[:, None] * cos_t[None, :])[..., None]
    vp = v + p * omega
    up = u[:, None, :] - p * omega
    okv, iv, av = _stencils(vp, V, h, n)
    oku, iu, au = _stencils(up, V, h, n)
    return W, js, (okv, iv, av, oku, iu, au, _sqrt_mu_at(vp), _sqrt_mu_at(up))


def _sqrt_mu_at(pts):
    return np.exp(-0.25 * np.sum(pts * pts, axis=-1)) / np.sqrt(2.0 * np.pi)


def assemble(n, V, h, sqrt_mu, wq, table, cos_t, sin_t, cos_p, sin_p, dir_w, K2, K1, loss, direct=0):
    size = n**3
    h3 = h**3
    dw_tot = float(np.sum(dir_w))
    sqrt_mu = np.asarray(sqrt_mu)
    wq = np.asarray(wq)
    table = np.asarray(table)
    dir_w = np.asarray(dir_w)
    for i in range(size):
        W, js, geo = _row_geometry(i, n, V, h, table, *map(np.asarray, (cos_t, sin_t, cos_p, sin_p)))
        smi = sqrt_mu[i]
        if W[i] != 0.0:
            c = wq[i] / h3 * W[i] * sqrt_mu[i] ** 2 * dw_tot
            K2[i, i] += 2.0 * c
            K1[i, i] += c
            loss[i] += c
        if geo is None:
            continue
        okv, iv, av, oku, iu, au, smv, smu = geo
        base = wq[js] / h3 * W[js] * sqrt_mu[js] ** 2
        c = base[:, None] * dir_w[None, :]
        # values outside the box are zero: drop only the off-grid gain part
        if direct:
            cd = c / sqrt_mu[js][:, None]
            gain_v = (np.where(okv, cd * smu, 0.0)[..., None] * av).ravel()
            gain_u = (np.where(oku, cd * smv, 0.0)[..., None] * au).ravel()
        else:
            gain_v = (np.where(okv, c, 0.0)[..., None] * smi / sqrt_mu[iv] * av).ravel()
            gain_u = (np.where(oku, c, 0.0)[..., None] * smi / sqrt_mu[iu] * au).ravel()
        K2[i] += np.bincount(iv.ravel(), gain_v, minlength=size)
        K2[i] += np.bincount(iu.ravel(), gain_u, minlength=size)
        csum = c.sum(axis=1)
        K1[i, js] += csum * smi / sqrt_mu[js]
        loss[i] += csum.sum()


def gamma_batch(n, V, h, sqrt_mu, wq, table, cos_t, sin_t, cos_p, sin_p, dir_w, phi_f, phi_g, out, direct=0):
    size = n**3
    h3 = h**3
    sqrt_mu = np.asarray(sqrt_mu)
    wq = np.asarray(wq)
    table = np.asarray(table)
    dir_w = np.asarray(dir_w)
    phi_f = np.asarray(phi_f)
    phi_g = np.asarray(phi_g)
    for i in range(size):
        W, js, geo = _row_geometry(i, n, V, h, table, *map(np.asarray, (cos_t, sin_t, cos_p, sin_p)))
        if geo is None:
            continue
        okv, iv, av, oku, iu, au, _, _ = geo
        base = wq[js] / h3 * W[js] * sqrt_mu[js] ** 2
        c = base[:, None] * dir_w[None, :]
        if direct:
            c = c / sqrt_mu[js][:, None]
        fu = np.einsum("jds,qjds->qjd", au, phi_f[:, iu])
        gv = np.einsum("jds,qjds->qjd", av, phi_g[:, iv])
        gain = np.einsum("jd,qjd->q", np.where(okv & oku, c, 0.0), fu * gv)
        loss = phi_g[:, i] * (phi_f[:, js] @ c.sum(axis=1))
        out[:, i] += (gain - loss) if direct else sqrt_mu[i] * (gain - loss)
