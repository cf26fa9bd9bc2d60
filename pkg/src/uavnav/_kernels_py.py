"""Pure numpy implementations of the hot kernels.

These mirror ``_kernels.pyx`` one for one and are used whenever the compiled
extension is unavailable (or ``UAVNAV_PURE_PYTHON=1`` is set).
"""
import math

import numpy as np

EPS = 1e-10


def received_power(px, py, sx, sy, sh, sp, tilt, bw, gm, uav_h, alpha, scale):
    """Received power from every site at every UAV position.

    Positions are in world units and converted to meters with ``scale``.
    Returns an ``(N, K)`` array in watts.
    """
    px = np.asarray(px, dtype=float).reshape(-1)
    py = np.asarray(py, dtype=float).reshape(-1)
    dx = px[:, None] - np.asarray(sx, dtype=float)[None, :]
    dy = py[:, None] - np.asarray(sy, dtype=float)[None, :]
    d = np.hypot(dx, dy) * scale
    dh = np.asarray(sh, dtype=float)[None, :] - uav_h
    elev = np.degrees(np.arctan2(dh, d))
    att = np.minimum(12.0 * ((elev - np.asarray(tilt)[None, :]) / np.asarray(bw)[None, :]) ** 2,
                     np.asarray(gm)[None, :])
    g_bs = 10.0 ** (-att / 10.0)
    r2 = d * d + dh * dh
    g_uav = np.maximum(-dh / np.sqrt(r2), 0.0)
    return np.asarray(sp)[None, :] * g_bs * g_uav / r2 ** (alpha / 2.0)


def _wrap(a):
    # into (-pi, pi]
    return np.pi - np.mod(np.pi - a, 2.0 * np.pi)


def lookahead_features(own, cand_v, cand_heading, nbr_pos, nbr_vel, nbr_r, nbr_present,
                       gbs_pos, gbs_h, uav_h, scale, sentinel, dt):
    """Next-step joint-state features for every candidate action.

    ``own`` is ``[px, py, gx, gy, v_max, radius]``.  Neighbours move with their
    (filtered) velocities, the agent with each candidate velocity.  Returns
    ``(features, sep, rsum, at_goal)`` where ``sep`` is the minimum
    centre-to-centre distance over ``[0, dt]`` to the neighbour with the least
    clearance and ``rsum`` the matching radius sum.
    """
    px, py, gx, gy, vmax, rad = (float(v) for v in own)
    cand_v = np.asarray(cand_v, dtype=float).reshape(-1, 2)
    heading = np.asarray(cand_heading, dtype=float).reshape(-1)
    n_c = cand_v.shape[0]
    n_j = len(nbr_r)
    n_k = len(gbs_h)
    feats = np.empty((n_c, 6 + 6 * n_j + 3 * n_k))

    qx = px + dt * cand_v[:, 0]
    qy = py + dt * cand_v[:, 1]
    ex = gx - qx
    ey = gy - qy
    dg = np.hypot(ex, ey)
    frame = np.where(dg > EPS, np.arctan2(ey, ex), heading)
    c = np.cos(frame)
    s = np.sin(frame)
    feats[:, 0] = dg
    feats[:, 1] = vmax
    feats[:, 2] = c * cand_v[:, 0] + s * cand_v[:, 1]
    feats[:, 3] = -s * cand_v[:, 0] + c * cand_v[:, 1]
    feats[:, 4] = rad
    feats[:, 5] = _wrap(heading - frame)

    sep = np.full(n_c, np.inf)
    rsum = np.zeros(n_c)
    best_clear = np.full(n_c, np.inf)
    for j in range(n_j):
        col = 6 + 6 * j
        if not nbr_present[j]:
            feats[:, col] = sentinel
            feats[:, col + 1:col + 5] = 0.0
            feats[:, col + 5] = sentinel
            continue
        nvx, nvy = nbr_vel[j]
        nx = nbr_pos[j][0] + dt * nvx
        ny = nbr_pos[j][1] + dt * nvy
        rx = nx - qx
        ry = ny - qy
        feats[:, col] = c * rx + s * ry
        feats[:, col + 1] = -s * rx + c * ry
        feats[:, col + 2] = c * nvx + s * nvy
        feats[:, col + 3] = -s * nvx + c * nvy
        feats[:, col + 4] = nbr_r[j]
        feats[:, col + 5] = np.hypot(rx, ry)
        # closest approach of the relative linear motion over [0, dt]
        wx = nbr_pos[j][0] - px
        wy = nbr_pos[j][1] - py
        ux = nvx - cand_v[:, 0]
        uy = nvy - cand_v[:, 1]
        uu = ux * ux + uy * uy
        tau = np.where(uu > EPS, np.clip(-(wx * ux + wy * uy) / np.where(uu > EPS, uu, 1.0), 0.0, dt), 0.0)
        dmin = np.hypot(wx + tau * ux, wy + tau * uy)
        clear = dmin - rad - nbr_r[j]
        better = clear < best_clear
        best_clear = np.where(better, clear, best_clear)
        sep = np.where(better, dmin, sep)
        rsum = np.where(better, rad + nbr_r[j], rsum)

    if n_k:
        bx = np.asarray(gbs_pos, dtype=float)[:, 0][None, :] - qx[:, None]
        by = np.asarray(gbs_pos, dtype=float)[:, 1][None, :] - qy[:, None]
        dist = np.hypot(bx, by)
        order = np.argsort(dist, axis=1, kind="stable")
        rows = np.arange(n_c)[:, None]
        bx = bx[rows, order]
        by = by[rows, order]
        dist = dist[rows, order] * scale
        hb = np.asarray(gbs_h, dtype=float)[order]
        ang = _wrap(np.arctan2(by, bx) - frame[:, None])
        elev = np.arctan2(hb - uav_h, dist)
        base = 6 + 6 * n_j
        feats[:, base::3] = dist
        feats[:, base + 1::3] = ang
        feats[:, base + 2::3] = elev
    at_goal = dg <= 0.5 * rad
    return feats, sep, rsum, at_goal


def _det(ax, ay, bx, by):
    return ax * by - ay * bx


def _lp1(lines, no, radius, opt, direction_opt):
    (ppx, ppy), (dx, dy) = lines[no]
    dot = ppx * dx + ppy * dy
    disc = dot * dot + radius * radius - (ppx * ppx + ppy * ppy)
    if disc < 0.0:
        return None
    sq = math.sqrt(disc)
    t_left = -dot - sq
    t_right = -dot + sq
    for i in range(no):
        (qx, qy), (ex, ey) = lines[i]
        denom = _det(dx, dy, ex, ey)
        numer = _det(ex, ey, ppx - qx, ppy - qy)
        if abs(denom) <= EPS:
            if numer < 0.0:
                return None
            continue
        t = numer / denom
        if denom >= 0.0:
            t_right = min(t_right, t)
        else:
            t_left = max(t_left, t)
        if t_left > t_right:
            return None
    if direction_opt:
        t = t_right if opt[0] * dx + opt[1] * dy > 0.0 else t_left
    else:
        t = dx * (opt[0] - ppx) + dy * (opt[1] - ppy)
        t = min(max(t, t_left), t_right)
    return (ppx + t * dx, ppy + t * dy)


def _lp2(lines, radius, opt, direction_opt):
    ox, oy = opt
    if direction_opt:
        result = (ox * radius, oy * radius)
    elif ox * ox + oy * oy > radius * radius:
        n = math.hypot(ox, oy)
        result = (ox / n * radius, oy / n * radius)
    else:
        result = (ox, oy)
    for i, ((qx, qy), (dx, dy)) in enumerate(lines):
        if _det(dx, dy, qx - result[0], qy - result[1]) > 0.0:
            new = _lp1(lines, i, radius, opt, direction_opt)
            if new is None:
                return i, result
            result = new
    return len(lines), result


def _lp3(lines, begin, radius, result):
    distance = 0.0
    for i in range(begin, len(lines)):
        (qx, qy), (dx, dy) = lines[i]
        if _det(dx, dy, qx - result[0], qy - result[1]) > distance:
            proj = []
            for j in range(i):
                (rx, ry), (fx, fy) = lines[j]
                determinant = _det(dx, dy, fx, fy)
                if abs(determinant) <= EPS:
                    if dx * fx + dy * fy > 0.0:
                        continue
                    point = (0.5 * (qx + rx), 0.5 * (qy + ry))
                else:
                    t = _det(fx, fy, qx - rx, qy - ry) / determinant
                    point = (qx + t * dx, qy + t * dy)
                ux, uy = fx - dx, fy - dy
                n = math.hypot(ux, uy)
                proj.append((point, (ux / n, uy / n)))
            fail, new = _lp2(proj, radius, (-dy, dx), True)
            if fail >= len(proj):
                result = new
            distance = _det(dx, dy, qx - result[0], qy - result[1])
    return result


def orca_lines(pos, vel, radius, nbr_pos, nbr_vel, nbr_r, nbr_share, tau, dt):
    """Reciprocal half-planes as ``((point_x, point_y), (dir_x, dir_y))``.

    A velocity ``v`` is permitted by a line when ``det(dir, point - v) <= 0``.
    ``nbr_share`` is the fraction of the avoidance effort this agent takes for
    each neighbour (0.5 for reciprocating agents, 1 for static obstacles).
    """
    px, py = float(pos[0]), float(pos[1])
    vx, vy = float(vel[0]), float(vel[1])
    inv_tau = 1.0 / tau
    lines = []
    for j in range(len(nbr_r)):
        rpx = nbr_pos[j][0] - px
        rpy = nbr_pos[j][1] - py
        rvx = vx - nbr_vel[j][0]
        rvy = vy - nbr_vel[j][1]
        dist_sq = rpx * rpx + rpy * rpy
        comb = radius + nbr_r[j]
        comb_sq = comb * comb
        if dist_sq > comb_sq:
            wx = rvx - inv_tau * rpx
            wy = rvy - inv_tau * rpy
            w_sq = wx * wx + wy * wy
            dot1 = wx * rpx + wy * rpy
            if dot1 < 0.0 and dot1 * dot1 > comb_sq * w_sq:
                wl = math.sqrt(w_sq)
                ux_, uy_ = wx / wl, wy / wl
                dx, dy = uy_, -ux_
                ux = (comb * inv_tau - wl) * ux_
                uy = (comb * inv_tau - wl) * uy_
            else:
                leg = math.sqrt(dist_sq - comb_sq)
                if _det(rpx, rpy, wx, wy) > 0.0:
                    dx = (rpx * leg - rpy * comb) / dist_sq
                    dy = (rpx * comb + rpy * leg) / dist_sq
                else:
                    dx = -(rpx * leg + rpy * comb) / dist_sq
                    dy = -(-rpx * comb + rpy * leg) / dist_sq
                dot2 = rvx * dx + rvy * dy
                ux = dot2 * dx - rvx
                uy = dot2 * dy - rvy
        else:
            inv_dt = 1.0 / dt
            wx = rvx - inv_dt * rpx
            wy = rvy - inv_dt * rpy
            wl = math.hypot(wx, wy)
            if wl < EPS:
                wx, wy, wl = -rpx, -rpy, math.hypot(rpx, rpy) or 1.0
            ux_, uy_ = wx / wl, wy / wl
            dx, dy = uy_, -ux_
            ux = (comb * inv_dt - wl) * ux_
            uy = (comb * inv_dt - wl) * uy_
        share = nbr_share[j]
        lines.append(((vx + share * ux, vy + share * uy), (dx, dy)))
    return lines


def orca_velocity(pos, vel, pref, radius, vmax, nbr_pos, nbr_vel, nbr_r, nbr_share, tau, dt):
    """Collision-free velocity closest to ``pref`` under reciprocal half-planes."""
    lines = orca_lines(pos, vel, radius, nbr_pos, nbr_vel, nbr_r, nbr_share, tau, dt)
    fail, result = _lp2(lines, vmax, (float(pref[0]), float(pref[1])), False)
    if fail < len(lines):
        result = _lp3(lines, fail, vmax, result)
    return np.array(result)
