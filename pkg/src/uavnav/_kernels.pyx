# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: link budgets, candidate lookahead features and ORCA.

Semantics match ``_kernels_py`` exactly; see that module for the reference
implementations.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport atan2, sqrt, hypot, pow, cos, sin, fmod, fabs, M_PI, INFINITY
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef double EPS = 1e-10
cdef double RAD2DEG = 180.0 / M_PI


cdef inline double _wrap(double a) nogil:
    # into (-pi, pi]
    cdef double m = fmod(M_PI - a, 2.0 * M_PI)
    if m < 0.0:
        m += 2.0 * M_PI
    return M_PI - m


def received_power(px, py, sx, sy, sh, sp, tilt, bw, gm, double uav_h, double alpha, double scale):
    cdef double[::1] xs = np.ascontiguousarray(px, dtype=np.float64).reshape(-1)
    cdef double[::1] ys = np.ascontiguousarray(py, dtype=np.float64).reshape(-1)
    cdef double[::1] bx = np.ascontiguousarray(sx, dtype=np.float64)
    cdef double[::1] by = np.ascontiguousarray(sy, dtype=np.float64)
    cdef double[::1] bh = np.ascontiguousarray(sh, dtype=np.float64)
    cdef double[::1] bp = np.ascontiguousarray(sp, dtype=np.float64)
    cdef double[::1] bt = np.ascontiguousarray(tilt, dtype=np.float64)
    cdef double[::1] bb = np.ascontiguousarray(bw, dtype=np.float64)
    cdef double[::1] bg = np.ascontiguousarray(gm, dtype=np.float64)
    cdef Py_ssize_t n = xs.shape[0], k = bx.shape[0], i, j
    out = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double d, dh, elev, att, r2, guav, half = alpha / 2.0
    with nogil:
        for i in range(n):
            for j in range(k):
                d = hypot(xs[i] - bx[j], ys[i] - by[j]) * scale
                dh = bh[j] - uav_h
                elev = atan2(dh, d) * RAD2DEG
                att = (elev - bt[j]) / bb[j]
                att = 12.0 * att * att
                if att > bg[j]:
                    att = bg[j]
                r2 = d * d + dh * dh
                guav = -dh / sqrt(r2)
                if guav < 0.0:
                    guav = 0.0
                o[i, j] = bp[j] * pow(10.0, -att / 10.0) * guav / pow(r2, half)
    return out


def lookahead_features(own, cand_v, cand_heading, nbr_pos, nbr_vel, nbr_r, nbr_present,
                       gbs_pos, gbs_h, double uav_h, double scale, double sentinel, double dt):
    cdef double px = own[0], py = own[1], gx = own[2], gy = own[3], vmax = own[4], rad = own[5]
    cdef double[:, ::1] cv = np.ascontiguousarray(cand_v, dtype=np.float64).reshape(-1, 2)
    cdef double[::1] ch = np.ascontiguousarray(cand_heading, dtype=np.float64).reshape(-1)
    cdef Py_ssize_t n_c = cv.shape[0]
    cdef Py_ssize_t n_j = len(nbr_r)
    cdef Py_ssize_t n_k = len(gbs_h)
    cdef double[:, ::1] npos = np.ascontiguousarray(nbr_pos, dtype=np.float64).reshape(n_j, 2)
    cdef double[:, ::1] nvel = np.ascontiguousarray(nbr_vel, dtype=np.float64).reshape(n_j, 2)
    cdef double[::1] nr = np.ascontiguousarray(nbr_r, dtype=np.float64)
    cdef cnp.uint8_t[::1] pres = np.ascontiguousarray(nbr_present, dtype=np.uint8)
    cdef double[:, ::1] gpos = np.ascontiguousarray(gbs_pos, dtype=np.float64).reshape(n_k, 2)
    cdef double[::1] gh = np.ascontiguousarray(gbs_h, dtype=np.float64)

    feats_a = np.empty((n_c, 6 + 6 * n_j + 3 * n_k), dtype=np.float64)
    sep_a = np.empty(n_c, dtype=np.float64)
    rsum_a = np.empty(n_c, dtype=np.float64)
    goal_a = np.empty(n_c, dtype=bool)
    cdef double[:, ::1] f = feats_a
    cdef double[::1] sep = sep_a
    cdef double[::1] rsum = rsum_a
    cdef cnp.npy_bool[::1] at_goal = goal_a

    cdef double *dist = <double *> malloc(max(n_k, 1) * sizeof(double))
    cdef Py_ssize_t *order = <Py_ssize_t *> malloc(max(n_k, 1) * sizeof(Py_ssize_t))
    cdef Py_ssize_t a, j, k, m, col, base = 6 + 6 * n_j, key
    cdef double qx, qy, ex, ey, dg, frame, c, s, vx, vy, nx, ny, rx, ry
    cdef double wx, wy, ux, uy, uu, tau, dmin, clear, best, keyd, bxk, byk
    try:
        with nogil:
            for a in range(n_c):
                vx = cv[a, 0]
                vy = cv[a, 1]
                qx = px + dt * vx
                qy = py + dt * vy
                ex = gx - qx
                ey = gy - qy
                dg = hypot(ex, ey)
                if dg > EPS:
                    frame = atan2(ey, ex)
                else:
                    frame = ch[a]
                c = cos(frame)
                s = sin(frame)
                f[a, 0] = dg
                f[a, 1] = vmax
                f[a, 2] = c * vx + s * vy
                f[a, 3] = -s * vx + c * vy
                f[a, 4] = rad
                f[a, 5] = _wrap(ch[a] - frame)
                at_goal[a] = dg <= 0.5 * rad

                sep[a] = INFINITY
                rsum[a] = 0.0
                best = INFINITY
                for j in range(n_j):
                    col = 6 + 6 * j
                    if not pres[j]:
                        f[a, col] = sentinel
                        f[a, col + 1] = 0.0
                        f[a, col + 2] = 0.0
                        f[a, col + 3] = 0.0
                        f[a, col + 4] = 0.0
                        f[a, col + 5] = sentinel
                        continue
                    nx = npos[j, 0] + dt * nvel[j, 0]
                    ny = npos[j, 1] + dt * nvel[j, 1]
                    rx = nx - qx
                    ry = ny - qy
                    f[a, col] = c * rx + s * ry
                    f[a, col + 1] = -s * rx + c * ry
                    f[a, col + 2] = c * nvel[j, 0] + s * nvel[j, 1]
                    f[a, col + 3] = -s * nvel[j, 0] + c * nvel[j, 1]
                    f[a, col + 4] = nr[j]
                    f[a, col + 5] = hypot(rx, ry)
                    wx = npos[j, 0] - px
                    wy = npos[j, 1] - py
                    ux = nvel[j, 0] - vx
                    uy = nvel[j, 1] - vy
                    uu = ux * ux + uy * uy
                    tau = 0.0
                    if uu > EPS:
                        tau = -(wx * ux + wy * uy) / uu
                        if tau < 0.0:
                            tau = 0.0
                        elif tau > dt:
                            tau = dt
                    dmin = hypot(wx + tau * ux, wy + tau * uy)
                    clear = dmin - rad - nr[j]
                    if clear < best:
                        best = clear
                        sep[a] = dmin
                        rsum[a] = rad + nr[j]

                for k in range(n_k):
                    dist[k] = hypot(gpos[k, 0] - qx, gpos[k, 1] - qy)
                    order[k] = k
                # stable insertion sort on distance
                for k in range(1, n_k):
                    key = order[k]
                    keyd = dist[key]
                    m = k - 1
                    while m >= 0 and dist[order[m]] > keyd:
                        order[m + 1] = order[m]
                        m -= 1
                    order[m + 1] = key
                for k in range(n_k):
                    m = order[k]
                    bxk = gpos[m, 0] - qx
                    byk = gpos[m, 1] - qy
                    f[a, base + 3 * k] = dist[m] * scale
                    f[a, base + 3 * k + 1] = _wrap(atan2(byk, bxk) - frame)
                    f[a, base + 3 * k + 2] = atan2(gh[m] - uav_h, dist[m] * scale)
    finally:
        free(dist)
        free(order)
    return feats_a, sep_a, rsum_a, goal_a


cdef inline double _det(double ax, double ay, double bx, double by) nogil:
    return ax * by - ay * bx


cdef bint _lp1(double *pt, double *dr, Py_ssize_t no, double radius, double ox, double oy,
               bint direction_opt, double *res) nogil:
    cdef double ppx = pt[2 * no], ppy = pt[2 * no + 1], dx = dr[2 * no], dy = dr[2 * no + 1]
    cdef double dot = ppx * dx + ppy * dy
    cdef double disc = dot * dot + radius * radius - (ppx * ppx + ppy * ppy)
    cdef double sq, t_left, t_right, denom, numer, t
    cdef Py_ssize_t i
    if disc < 0.0:
        return False
    sq = sqrt(disc)
    t_left = -dot - sq
    t_right = -dot + sq
    for i in range(no):
        denom = _det(dx, dy, dr[2 * i], dr[2 * i + 1])
        numer = _det(dr[2 * i], dr[2 * i + 1], ppx - pt[2 * i], ppy - pt[2 * i + 1])
        if fabs(denom) <= EPS:
            if numer < 0.0:
                return False
            continue
        t = numer / denom
        if denom >= 0.0:
            if t < t_right:
                t_right = t
        else:
            if t > t_left:
                t_left = t
        if t_left > t_right:
            return False
    if direction_opt:
        if ox * dx + oy * dy > 0.0:
            t = t_right
        else:
            t = t_left
    else:
        t = dx * (ox - ppx) + dy * (oy - ppy)
        if t < t_left:
            t = t_left
        elif t > t_right:
            t = t_right
    res[0] = ppx + t * dx
    res[1] = ppy + t * dy
    return True


cdef Py_ssize_t _lp2(double *pt, double *dr, Py_ssize_t n, double radius, double ox, double oy,
                     bint direction_opt, double *res) nogil:
    cdef double nrm, sx, sy
    cdef Py_ssize_t i
    if direction_opt:
        res[0] = ox * radius
        res[1] = oy * radius
    elif ox * ox + oy * oy > radius * radius:
        nrm = hypot(ox, oy)
        res[0] = ox / nrm * radius
        res[1] = oy / nrm * radius
    else:
        res[0] = ox
        res[1] = oy
    for i in range(n):
        if _det(dr[2 * i], dr[2 * i + 1], pt[2 * i] - res[0], pt[2 * i + 1] - res[1]) > 0.0:
            sx = res[0]
            sy = res[1]
            if not _lp1(pt, dr, i, radius, ox, oy, direction_opt, res):
                res[0] = sx
                res[1] = sy
                return i
    return n


cdef void _lp3(double *pt, double *dr, Py_ssize_t n, Py_ssize_t begin, double radius,
               double *res, double *ppt, double *pdr) nogil:
    cdef double distance = 0.0, determinant, t, ux, uy, nrm, qx, qy, dx, dy
    cdef double tmp[2]
    cdef Py_ssize_t i, j, m
    for i in range(begin, n):
        qx = pt[2 * i]
        qy = pt[2 * i + 1]
        dx = dr[2 * i]
        dy = dr[2 * i + 1]
        if _det(dx, dy, qx - res[0], qy - res[1]) > distance:
            m = 0
            for j in range(i):
                determinant = _det(dx, dy, dr[2 * j], dr[2 * j + 1])
                if fabs(determinant) <= EPS:
                    if dx * dr[2 * j] + dy * dr[2 * j + 1] > 0.0:
                        continue
                    ppt[2 * m] = 0.5 * (qx + pt[2 * j])
                    ppt[2 * m + 1] = 0.5 * (qy + pt[2 * j + 1])
                else:
                    t = _det(dr[2 * j], dr[2 * j + 1], qx - pt[2 * j], qy - pt[2 * j + 1]) / determinant
                    ppt[2 * m] = qx + t * dx
                    ppt[2 * m + 1] = qy + t * dy
                ux = dr[2 * j] - dx
                uy = dr[2 * j + 1] - dy
                nrm = hypot(ux, uy)
                pdr[2 * m] = ux / nrm
                pdr[2 * m + 1] = uy / nrm
                m += 1
            if _lp2(ppt, pdr, m, radius, -dy, dx, True, tmp) >= m:
                res[0] = tmp[0]
                res[1] = tmp[1]
            distance = _det(dx, dy, qx - res[0], qy - res[1])


def orca_velocity(pos, vel, pref, double radius, double vmax, nbr_pos, nbr_vel, nbr_r, nbr_share,
                  double tau, double dt):
    cdef Py_ssize_t n = len(nbr_r), j, fail
    cdef double[:, ::1] npos = np.ascontiguousarray(nbr_pos, dtype=np.float64).reshape(n, 2)
    cdef double[:, ::1] nvel = np.ascontiguousarray(nbr_vel, dtype=np.float64).reshape(n, 2)
    cdef double[::1] nr = np.ascontiguousarray(nbr_r, dtype=np.float64)
    cdef double[::1] share = np.ascontiguousarray(nbr_share, dtype=np.float64)
    cdef double px = pos[0], py = pos[1], vx = vel[0], vy = vel[1]
    cdef double ox = pref[0], oy = pref[1]
    cdef double inv_tau = 1.0 / tau, inv_dt = 1.0 / dt
    cdef double rpx, rpy, rvx, rvy, dist_sq, comb, comb_sq, wx, wy, w_sq, dot1, wl
    cdef double uxn, uyn, dx, dy, ux, uy, leg, dot2
    cdef double res[2]
    cdef double *pt = <double *> malloc(2 * max(n, 1) * sizeof(double))
    cdef double *dr = <double *> malloc(2 * max(n, 1) * sizeof(double))
    cdef double *ppt = <double *> malloc(2 * max(n, 1) * sizeof(double))
    cdef double *pdr = <double *> malloc(2 * max(n, 1) * sizeof(double))
    try:
        with nogil:
            for j in range(n):
                rpx = npos[j, 0] - px
                rpy = npos[j, 1] - py
                rvx = vx - nvel[j, 0]
                rvy = vy - nvel[j, 1]
                dist_sq = rpx * rpx + rpy * rpy
                comb = radius + nr[j]
                comb_sq = comb * comb
                if dist_sq > comb_sq:
                    wx = rvx - inv_tau * rpx
                    wy = rvy - inv_tau * rpy
                    w_sq = wx * wx + wy * wy
                    dot1 = wx * rpx + wy * rpy
                    if dot1 < 0.0 and dot1 * dot1 > comb_sq * w_sq:
                        wl = sqrt(w_sq)
                        uxn = wx / wl
                        uyn = wy / wl
                        dx = uyn
                        dy = -uxn
                        ux = (comb * inv_tau - wl) * uxn
                        uy = (comb * inv_tau - wl) * uyn
                    else:
                        leg = sqrt(dist_sq - comb_sq)
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
                    wx = rvx - inv_dt * rpx
                    wy = rvy - inv_dt * rpy
                    wl = hypot(wx, wy)
                    if wl < EPS:
                        wx = -rpx
                        wy = -rpy
                        wl = hypot(rpx, rpy)
                        if wl == 0.0:
                            wl = 1.0
                    uxn = wx / wl
                    uyn = wy / wl
                    dx = uyn
                    dy = -uxn
                    ux = (comb * inv_dt - wl) * uxn
                    uy = (comb * inv_dt - wl) * uyn
                pt[2 * j] = vx + share[j] * ux
                pt[2 * j + 1] = vy + share[j] * uy
                dr[2 * j] = dx
                dr[2 * j + 1] = dy
            fail = _lp2(pt, dr, n, vmax, ox, oy, False, res)
            if fail < n:
                _lp3(pt, dr, n, fail, vmax, res, ppt, pdr)
        return np.array([res[0], res[1]])
    finally:
        free(pt)
        free(dr)
        free(ppt)
        free(pdr)
