"""
Compiled walk loops.

The kernels consume pre-drawn uniforms one per move (a single step or a box jump)
and hand control back when the buffer runs dry, so the trajectory depends only on
the uniform stream and never on buffer sizes or thread scheduling.
"""
import math

import numpy as np
from numba import njit

from app.models.site_grid import CODE_ESCAPE, CODE_FREE, CODE_REMOVED

STATUS_NEED_UNIFORMS = 0
STATUS_ABSORBED = 1
STATUS_ESCAPED = 2
STATUS_CAP = 3
STATUS_STUCK = 4

SQRT2 = math.sqrt(2.0)

# +x, -x, +y, -y
DX = np.array([1, -1, 0, 0], dtype=np.int64)
DY = np.array([0, 0, 1, -1], dtype=np.int64)


@njit(cache=True, nogil=True)
def in_wedge(x, y, p1, q1, p2, q2):
    if x == 0 and y == 0:
        return True
    if x < 0:
        return False
    return q1 * y - p1 * x >= 0 and p2 * x - q2 * y >= 0


@njit(cache=True, nogil=True)
def site_code(x, y, codes, gx0, gy0, outside_code):
    ix = x - gx0
    iy = y - gy0
    if ix < 0 or iy < 0 or ix >= codes.shape[0] or iy >= codes.shape[1]:
        return outside_code
    return codes[ix, iy]


@njit(cache=True, nogil=True)
def _walkable(x, y, p1, q1, p2, q2, codes, gx0, gy0, outside_code):
    if not in_wedge(x, y, p1, q1, p2, q2):
        return False
    return site_code(x, y, codes, gx0, gy0, outside_code) != CODE_REMOVED


@njit(cache=True, nogil=True)
def _grid_clearance(x, y, clear, gx0, gy0, outside_code):
    ix = x - gx0
    iy = y - gy0
    nx = clear.shape[0]
    ny = clear.shape[1]
    if 0 <= ix < nx and 0 <= iy < ny:
        return clear[ix, iy]
    if outside_code != CODE_FREE:
        return 0
    dx = max(max(-ix, ix - (nx - 1)), 0)
    dy = max(max(-iy, iy - (ny - 1)), 0)
    return max(dx, dy)


@njit(cache=True, nogil=True)
def _box_fits(x, y, k, norm, cl, p1, q1, p2, q2, radial_limit, escape_r):
    # every site of the (2k+1) box must be in the wedge ...
    if x - k < 0:
        return False
    if q1 * y - p1 * x < k * (abs(p1) + abs(q1)):
        return False
    if p2 * x - q2 * y < k * (abs(p2) + abs(q2)):
        return False
    # ... strictly inside the escape ball ...
    if escape_r > 0.0 and norm + k * SQRT2 >= escape_r:
        return False
    # ... and clear of every non-free site
    if radial_limit >= 0.0:
        return norm - k * SQRT2 > radial_limit
    return cl > k


@njit(cache=True, nogil=True)
def pick_box(x, y, ks, clear, gx0, gy0, outside_code, p1, q1, p2, q2, radial_limit, escape_r):
    """Index of the widest box that fits around (x, y), or -1."""
    if ks.shape[0] == 0:
        return -1
    norm = math.sqrt(float(x * x + y * y))
    cl = 0
    if radial_limit < 0.0:
        cl = _grid_clearance(x, y, clear, gx0, gy0, outside_code)
    if not _box_fits(x, y, ks[0], norm, cl, p1, q1, p2, q2, radial_limit, escape_r):
        return -1
    for t in range(ks.shape[0] - 1, 0, -1):
        if _box_fits(x, y, ks[t], norm, cl, p1, q1, p2, q2, radial_limit, escape_r):
            return t
    return 0


@njit(cache=True, nogil=True)
def walk_kernel(state, fstate, p1, q1, p2, q2, codes, gx0, gy0, outside_code,
                clear, radial_limit, escape_r, step_cap,
                ks, cum, exit_dx, exit_dy, n_exits, mean_exit,
                uniforms, u_pos):
    """
    Advance one walker in place.

    state = [x, y, steps, jumps] (int64), fstate = [steps_equivalent] (float64).
    Absorption and escape are only checked after a move, which gives the
    return-time semantics; the caller decides what happens at step 0.
    Returns (status, next unused uniform index).
    """
    x = state[0]
    y = state[1]
    steps = state[2]
    jumps = state[3]
    equiv = fstate[0]
    n_u = uniforms.shape[0]
    esc2 = escape_r * escape_r
    status = STATUS_NEED_UNIFORMS

    while True:
        if steps + jumps >= step_cap:
            status = STATUS_CAP
            break
        if u_pos >= n_u:
            status = STATUS_NEED_UNIFORMS
            break
        u = uniforms[u_pos]
        u_pos += 1

        t = pick_box(x, y, ks, clear, gx0, gy0, outside_code, p1, q1, p2, q2, radial_limit, escape_r)
        if t >= 0:
            n = n_exits[t]
            j = np.searchsorted(cum[t, :n], u, side="right")
            if j >= n:
                j = n - 1
            x += exit_dx[t, j]
            y += exit_dy[t, j]
            jumps += 1
            equiv += mean_exit[t]
        else:
            deg = 0
            for d in range(4):
                if _walkable(x + DX[d], y + DY[d], p1, q1, p2, q2, codes, gx0, gy0, outside_code):
                    deg += 1
            if deg == 0:
                status = STATUS_STUCK
                break
            c = int(u * deg)
            if c >= deg:
                c = deg - 1
            for d in range(4):
                if _walkable(x + DX[d], y + DY[d], p1, q1, p2, q2, codes, gx0, gy0, outside_code):
                    if c == 0:
                        x += DX[d]
                        y += DY[d]
                        break
                    c -= 1
            steps += 1
            equiv += 1.0

        if escape_r > 0.0 and float(x * x + y * y) >= esc2:
            status = STATUS_ESCAPED
            break
        code = site_code(x, y, codes, gx0, gy0, outside_code)
        if code == CODE_ESCAPE:
            status = STATUS_ESCAPED
            break
        if code > 0:
            status = STATUS_ABSORBED
            break

    state[0] = x
    state[1] = y
    state[2] = steps
    state[3] = jumps
    fstate[0] = equiv
    return status, u_pos
