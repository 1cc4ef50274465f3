"""Numba-compiled versions of the per-ray hot loops (default backend).

Same signatures and semantics as _kernels_numpy. Kernels are sequential and
accumulate in pixel-major order, so results are deterministic and independent
of thread count.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True, nogil=True, inline="always")
def _trilinear_value(values, px, py, pz):
    dx, dy, dz = values.shape
    gx = (px + 0.5) * dx - 0.5
    gy = (py + 0.5) * dy - 0.5
    gz = (pz + 0.5) * dz - 0.5
    ix0 = int(math.floor(gx))
    iy0 = int(math.floor(gy))
    iz0 = int(math.floor(gz))
    fx = gx - ix0
    fy = gy - iy0
    fz = gz - iz0
    val = 0.0
    for cx in range(2):
        ix = ix0 + cx
        if ix < 0 or ix >= dx:
            continue
        wx = fx if cx else 1.0 - fx
        for cy in range(2):
            iy = iy0 + cy
            if iy < 0 or iy >= dy:
                continue
            wy = fy if cy else 1.0 - fy
            for cz in range(2):
                iz = iz0 + cz
                if iz < 0 or iz >= dz:
                    continue
                wz = fz if cz else 1.0 - fz
                val += wx * wy * wz * values[ix, iy, iz]
    return val


@njit(cache=True, nogil=True, inline="always")
def _pixel_forward(values, r, t, dirx, diry, depths, is_depth, vp, d_bg, o_buf):
    """Fill o_buf with sampled occupancies and return this pixel's loss."""
    n = depths.shape[0]
    for i in range(n):
        d = depths[i]
        yx = dirx * d + t[0]
        yy = diry * d + t[1]
        yz = d + t[2]
        px = r[0, 0] * yx + r[0, 1] * yy + r[0, 2] * yz
        py = r[1, 0] * yx + r[1, 1] * yy + r[1, 2] * yz
        pz = r[2, 0] * yx + r[2, 1] * yy + r[2, 2] * yz
        o_buf[i] = _trilinear_value(values, px, py, pz)
    t_run = 1.0
    loss = 0.0
    for i in range(n):
        psi = abs(vp - depths[i]) if is_depth else abs(vp - 1.0)
        loss += o_buf[i] * t_run * psi
        t_run *= 1.0 - o_buf[i]
    psi_esc = abs(vp - d_bg) if is_depth else vp
    loss += t_run * psi_esc
    return loss


@njit(cache=True, nogil=True)
def image_forward(values, r, t, us, vs, fu, fv, u0, v0, depths, is_depth, vobs, d_bg):
    npix = us.shape[0]
    out = np.empty(npix)
    o_buf = np.empty(depths.shape[0])
    for p in range(npix):
        dirx = (us[p] - u0) / fu
        diry = (vs[p] - v0) / fv
        out[p] = _pixel_forward(values, r, t, dirx, diry, depths, is_depth, vobs[p], d_bg, o_buf)
    return out


@njit(cache=True, nogil=True)
def image_forward_backward(
    values, r, t, dra, dre, us, vs, fu, fv, u0, v0, depths,
    is_depth, vobs, d_bg, inv_npix, want_pose,
):
    dx, dy, dz = values.shape
    n = depths.shape[0]
    npix = us.shape[0]
    out = np.empty(npix)
    d_grid = np.zeros((dx, dy, dz))
    d_az = 0.0
    d_el = 0.0
    d_t = np.zeros(3)
    o_buf = np.empty(n)
    g_buf = np.empty(n)

    for p in range(npix):
        dirx = (us[p] - u0) / fu
        diry = (vs[p] - v0) / fv
        vp = vobs[p]
        out[p] = _pixel_forward(values, r, t, dirx, diry, depths, is_depth, vp, d_bg, o_buf)

        # g_buf[i] = expected remaining cost if still alive after sample i
        psi_esc = abs(vp - d_bg) if is_depth else vp
        g_run = psi_esc
        for i in range(n - 1, -1, -1):
            g_buf[i] = g_run
            psi = abs(vp - depths[i]) if is_depth else abs(vp - 1.0)
            g_run = psi * o_buf[i] + (1.0 - o_buf[i]) * g_run

        t_run = 1.0
        for i in range(n):
            psi = abs(vp - depths[i]) if is_depth else abs(vp - 1.0)
            coef = t_run * (psi - g_buf[i]) * inv_npix
            t_run *= 1.0 - o_buf[i]

            d = depths[i]
            yx = dirx * d + t[0]
            yy = diry * d + t[1]
            yz = d + t[2]
            px = r[0, 0] * yx + r[0, 1] * yy + r[0, 2] * yz
            py = r[1, 0] * yx + r[1, 1] * yy + r[1, 2] * yz
            pz = r[2, 0] * yx + r[2, 1] * yy + r[2, 2] * yz
            gx = (px + 0.5) * dx - 0.5
            gy = (py + 0.5) * dy - 0.5
            gz = (pz + 0.5) * dz - 0.5
            ix0 = int(math.floor(gx))
            iy0 = int(math.floor(gy))
            iz0 = int(math.floor(gz))
            fx = gx - ix0
            fy = gy - iy0
            fz = gz - iz0
            sgx = 0.0
            sgy = 0.0
            sgz = 0.0
            for cx in range(2):
                ix = ix0 + cx
                if ix < 0 or ix >= dx:
                    continue
                wx = fx if cx else 1.0 - fx
                sx = 1.0 if cx else -1.0
                for cy in range(2):
                    iy = iy0 + cy
                    if iy < 0 or iy >= dy:
                        continue
                    wy = fy if cy else 1.0 - fy
                    sy = 1.0 if cy else -1.0
                    for cz in range(2):
                        iz = iz0 + cz
                        if iz < 0 or iz >= dz:
                            continue
                        wz = fz if cz else 1.0 - fz
                        sz = 1.0 if cz else -1.0
                        d_grid[ix, iy, iz] += coef * wx * wy * wz
                        if want_pose:
                            cell = values[ix, iy, iz]
                            sgx += sx * wy * wz * cell * dx
                            sgy += wx * sy * wz * cell * dy
                            sgz += wx * wy * sz * cell * dz
            if want_pose:
                dax = dra[0, 0] * yx + dra[0, 1] * yy + dra[0, 2] * yz
                day = dra[1, 0] * yx + dra[1, 1] * yy + dra[1, 2] * yz
                daz = dra[2, 0] * yx + dra[2, 1] * yy + dra[2, 2] * yz
                d_az += coef * (sgx * dax + sgy * day + sgz * daz)
                dex = dre[0, 0] * yx + dre[0, 1] * yy + dre[0, 2] * yz
                dey = dre[1, 0] * yx + dre[1, 1] * yy + dre[1, 2] * yz
                dez = dre[2, 0] * yx + dre[2, 1] * yy + dre[2, 2] * yz
                d_el += coef * (sgx * dex + sgy * dey + sgz * dez)
                d_t[0] += coef * (r[0, 0] * sgx + r[1, 0] * sgy + r[2, 0] * sgz)
                d_t[1] += coef * (r[0, 1] * sgx + r[1, 1] * sgy + r[2, 1] * sgz)
                d_t[2] += coef * (r[0, 2] * sgx + r[1, 2] * sgy + r[2, 2] * sgz)

    return out, d_grid, d_az, d_el, d_t


@njit(cache=True, nogil=True)
def render_march(values, threshold, r, t, us, vs, fu, fv, u0, v0, fine_depths, d_bg):
    dx, dy, dz = values.shape
    npix = us.shape[0]
    nfine = fine_depths.shape[0]
    depth = np.empty(npix)
    mask = np.empty(npix)
    for p in range(npix):
        dirx = (us[p] - u0) / fu
        diry = (vs[p] - v0) / fv
        depth[p] = d_bg
        mask[p] = 0.0
        for j in range(nfine):
            d = fine_depths[j]
            yx = dirx * d + t[0]
            yy = diry * d + t[1]
            yz = d + t[2]
            px = r[0, 0] * yx + r[0, 1] * yy + r[0, 2] * yz
            py = r[1, 0] * yx + r[1, 1] * yy + r[1, 2] * yz
            pz = r[2, 0] * yx + r[2, 1] * yy + r[2, 2] * yz
            ix = int(math.floor((px + 0.5) * dx))
            if ix < 0 or ix >= dx:
                continue
            iy = int(math.floor((py + 0.5) * dy))
            if iy < 0 or iy >= dy:
                continue
            iz = int(math.floor((pz + 0.5) * dz))
            if iz < 0 or iz >= dz:
                continue
            if values[ix, iy, iz] >= threshold:
                depth[p] = d
                mask[p] = 1.0
                break
    return depth, mask
