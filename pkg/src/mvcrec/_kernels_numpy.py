"""Vectorized numpy implementations of the per-ray hot loops.

Mirrors the signatures in _kernels_numba; selected via MVCREC_BACKEND=numpy.
All reductions run in fixed pixel-major order (chunked over contiguous pixel
blocks of constant size) so results do not depend on thread count.
"""

from __future__ import annotations

import numpy as np

_CHUNK = 4096  # pixels per block; fixed so chunking never changes results


def _ray_points(r, t, us, vs, fu, fv, u0, v0, depths):
    """Shape-frame sample points and camera-frame offsets for a pixel block."""
    dirx = (us - u0) / fu
    diry = (vs - v0) / fv
    lx = dirx[:, None] * depths[None, :]
    ly = diry[:, None] * depths[None, :]
    lz = np.broadcast_to(depths[None, :], lx.shape)
    y = np.stack([lx + t[0], ly + t[1], lz + t[2]], axis=-1)  # l + t, (P, N, 3)
    p = y @ r.T
    return p, y


def _trilinear_setup(dims, p):
    g = (p + 0.5) * dims - 0.5
    i0 = np.floor(g).astype(np.int64)
    f = g - i0
    return i0, f


_CORNERS = [(dx, dy, dz) for dx in (0, 1) for dy in (0, 1) for dz in (0, 1)]


def _corner_weight(f, corner):
    dx, dy, dz = corner
    wx = f[..., 0] if dx else 1.0 - f[..., 0]
    wy = f[..., 1] if dy else 1.0 - f[..., 1]
    wz = f[..., 2] if dz else 1.0 - f[..., 2]
    return wx, wy, wz


def _sample_occupancy(values, dims, i0, f):
    o = np.zeros(i0.shape[:-1])
    for corner in _CORNERS:
        idx = i0 + corner
        valid = np.all((idx >= 0) & (idx < dims), axis=-1)
        wx, wy, wz = _corner_weight(f, corner)
        ic = np.clip(idx, 0, dims - 1)
        o += np.where(valid, wx * wy * wz * values[ic[..., 0], ic[..., 1], ic[..., 2]], 0.0)
    return o


def _event_terms(o, depths, is_depth, vobs, d_bg):
    """Per-sample costs psi, escape cost, transmittance-before T_prev, escape T_end."""
    if is_depth:
        psi = np.abs(vobs[:, None] - depths[None, :])
        psi_esc = np.abs(vobs - d_bg)
    else:
        psi = np.broadcast_to(np.abs(vobs - 1.0)[:, None], o.shape)
        psi_esc = vobs
    t_full = np.cumprod(1.0 - o, axis=1)
    t_prev = np.concatenate([np.ones((o.shape[0], 1)), t_full[:, :-1]], axis=1)
    t_end = t_full[:, -1]
    return psi, psi_esc, t_prev, t_end


def _forward_block(values, dims, r, t, us, vs, fu, fv, u0, v0, depths, is_depth, vobs, d_bg):
    p, y = _ray_points(r, t, us, vs, fu, fv, u0, v0, depths)
    i0, f = _trilinear_setup(dims, p)
    o = _sample_occupancy(values, dims, i0, f)
    psi, psi_esc, t_prev, t_end = _event_terms(o, depths, is_depth, vobs, d_bg)
    losses = (o * t_prev * psi).sum(axis=1) + t_end * psi_esc
    return losses, o, psi, psi_esc, t_prev, i0, f, y


def image_forward(values, r, t, us, vs, fu, fv, u0, v0, depths, is_depth, vobs, d_bg):
    """Per-pixel expected event costs, shape (P,)."""
    dims = np.array(values.shape)
    out = np.empty(len(us))
    for s in range(0, len(us), _CHUNK):
        sl = slice(s, s + _CHUNK)
        out[sl] = _forward_block(
            values, dims, r, t, us[sl], vs[sl], fu, fv, u0, v0, depths, is_depth, vobs[sl], d_bg
        )[0]
    return out


def image_forward_backward(
    values, r, t, dra, dre, us, vs, fu, fv, u0, v0, depths,
    is_depth, vobs, d_bg, inv_npix, want_pose,
):
    """Per-pixel losses plus gradients w.r.t. grid cells, angles, and translation.

    The gradient terms are already scaled by inv_npix (the pixel-mean factor);
    the returned pixel losses are identical bits to image_forward's.
    """
    dims = np.array(values.shape)
    n = len(depths)
    out = np.empty(len(us))
    d_grid = np.zeros(values.shape)
    d_az = 0.0
    d_el = 0.0
    d_t = np.zeros(3)

    for s in range(0, len(us), _CHUNK):
        sl = slice(s, s + _CHUNK)
        losses, o, psi, psi_esc, t_prev, i0, f, y = _forward_block(
            values, dims, r, t, us[sl], vs[sl], fu, fv, u0, v0, depths, is_depth, vobs[sl], d_bg
        )
        out[sl] = losses

        # Expected remaining cost given the ray is alive at sample i:
        # G_i = psi_i o_i + (1 - o_i) G_{i+1}, G_{N+1} = psi_esc.
        g_next = np.empty_like(o)
        g_run = np.asarray(psi_esc, dtype=np.float64).copy()
        for i in range(n - 1, -1, -1):
            g_next[:, i] = g_run
            g_run = psi[:, i] * o[:, i] + (1.0 - o[:, i]) * g_run
        coef = t_prev * (psi - g_next) * inv_npix  # dL/do_i, mean-normalized

        if want_pose:
            sg = np.zeros(o.shape + (3,))
        for corner in _CORNERS:
            idx = i0 + corner
            valid = np.all((idx >= 0) & (idx < dims), axis=-1)
            wx, wy, wz = _corner_weight(f, corner)
            sx = 1.0 if corner[0] else -1.0
            sy = 1.0 if corner[1] else -1.0
            sz = 1.0 if corner[2] else -1.0
            contrib = np.where(valid, coef * wx * wy * wz, 0.0)
            ic = np.clip(idx, 0, dims - 1)
            np.add.at(d_grid, (ic[..., 0], ic[..., 1], ic[..., 2]), contrib)
            if want_pose:
                cell = np.where(valid, values[ic[..., 0], ic[..., 1], ic[..., 2]], 0.0)
                sg[..., 0] += sx * wy * wz * cell * dims[0]
                sg[..., 1] += wx * sy * wz * cell * dims[1]
                sg[..., 2] += wx * wy * sz * cell * dims[2]

        if want_pose:
            d_az += float((coef * np.einsum("pnk,pnk->pn", sg, y @ dra.T)).sum())
            d_el += float((coef * np.einsum("pnk,pnk->pn", sg, y @ dre.T)).sum())
            d_t += (coef[..., None] * sg).reshape(-1, 3).sum(axis=0) @ r

    return out, d_grid, d_az, d_el, d_t


def render_march(values, threshold, r, t, us, vs, fu, fv, u0, v0, fine_depths, d_bg):
    """First-solid-sample depth and any-solid mask per pixel (nearest-cell lookups)."""
    dims = np.array(values.shape)
    depth = np.empty(len(us))
    mask = np.empty(len(us))
    for s in range(0, len(us), _CHUNK):
        sl = slice(s, s + _CHUNK)
        p, _ = _ray_points(r, t, us[sl], vs[sl], fu, fv, u0, v0, fine_depths)
        idx = np.floor((p + 0.5) * dims).astype(np.int64)
        valid = np.all((idx >= 0) & (idx < dims), axis=-1)
        ic = np.clip(idx, 0, dims - 1)
        solid = valid & (values[ic[..., 0], ic[..., 1], ic[..., 2]] >= threshold)
        hit = solid.any(axis=1)
        first = np.argmax(solid, axis=1)
        depth[sl] = np.where(hit, fine_depths[first], d_bg)
        mask[sl] = hit.astype(np.float64)
    return depth, mask
