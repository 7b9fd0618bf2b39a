# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled physics kernels; mirrors ``_kernels_py`` function for function."""

from libc.math cimport sqrt, fabs, sin, cos, hypot, isfinite

import numpy as np

BACKEND = "cython"
N_STATS = 13

DEF MAX_BISECT = 200


# ---------------------------------------------------------------------------
# small vector helpers

cdef inline void quat_matrix(const double* q, double* m) noexcept nogil:
    cdef double w = q[0], x = q[1], y = q[2], z = q[3]
    m[0] = 1 - 2 * (y * y + z * z)
    m[1] = 2 * (x * y - w * z)
    m[2] = 2 * (x * z + w * y)
    m[3] = 2 * (x * y + w * z)
    m[4] = 1 - 2 * (x * x + z * z)
    m[5] = 2 * (y * z - w * x)
    m[6] = 2 * (x * z - w * y)
    m[7] = 2 * (y * z + w * x)
    m[8] = 1 - 2 * (x * x + y * y)


cdef inline void mat_vec(const double* m, const double* v, double* out) noexcept nogil:
    out[0] = m[0] * v[0] + m[1] * v[1] + m[2] * v[2]
    out[1] = m[3] * v[0] + m[4] * v[1] + m[5] * v[2]
    out[2] = m[6] * v[0] + m[7] * v[1] + m[8] * v[2]


cdef inline void mat_t_vec(const double* m, const double* v, double* out) noexcept nogil:
    out[0] = m[0] * v[0] + m[3] * v[1] + m[6] * v[2]
    out[1] = m[1] * v[0] + m[4] * v[1] + m[7] * v[2]
    out[2] = m[2] * v[0] + m[5] * v[1] + m[8] * v[2]


cdef inline void cross(const double* a, const double* b, double* out) noexcept nogil:
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


# ---------------------------------------------------------------------------
# signed distance fields, body frame; write normal into n, return distance

cdef inline double sdf_sphere(double r, const double* p, double* n) noexcept nogil:
    cdef double norm = sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2])
    if norm > 0:
        n[0] = p[0] / norm
        n[1] = p[1] / norm
        n[2] = p[2] / norm
    else:
        n[0] = 1.0
        n[1] = 0.0
        n[2] = 0.0
    return norm - r


cdef inline double sdf_box(const double* h, const double* p, double* n) noexcept nogil:
    cdef double q[3]
    cdef double o[3]
    cdef double sgn[3]
    cdef int i, axis = 0
    cdef double out_len2 = 0.0, out_len, qmax
    for i in range(3):
        q[i] = fabs(p[i]) - h[i]
        o[i] = q[i] if q[i] > 0 else 0.0
        sgn[i] = -1.0 if p[i] < 0 else 1.0
        out_len2 += o[i] * o[i]
    out_len = sqrt(out_len2)
    qmax = q[0]
    for i in range(1, 3):
        if q[i] > qmax:
            qmax = q[i]
            axis = i
    if out_len > 0:
        for i in range(3):
            n[i] = sgn[i] * o[i] / out_len
        return out_len
    for i in range(3):
        n[i] = 0.0
    n[axis] = sgn[axis]
    return qmax


cdef inline double sdf_cylinder(double r, double hh, const double* p, double* n) noexcept nogil:
    cdef double rho = hypot(p[0], p[1])
    cdef double dr = rho - r
    cdef double dz = fabs(p[2]) - hh
    cdef double rx, ry, sz, ox, oz, out_len
    if rho > 0:
        rx = p[0] / rho
        ry = p[1] / rho
    else:
        rx = 1.0
        ry = 0.0
    sz = -1.0 if p[2] < 0 else 1.0
    ox = dr if dr > 0 else 0.0
    oz = dz if dz > 0 else 0.0
    out_len = hypot(ox, oz)
    if out_len > 0:
        n[0] = rx * ox / out_len
        n[1] = ry * ox / out_len
        n[2] = sz * oz / out_len
        return out_len
    if dr >= dz:
        n[0] = rx
        n[1] = ry
        n[2] = 0.0
        return dr
    n[0] = 0.0
    n[1] = 0.0
    n[2] = sz
    return dz


cdef inline double robust_length2(double a, double b) noexcept nogil:
    return hypot(a, b)


cdef inline double robust_length3(double a, double b, double c) noexcept nogil:
    cdef double m = fabs(a)
    if fabs(b) > m:
        m = fabs(b)
    if fabs(c) > m:
        m = fabs(c)
    if m == 0.0:
        return 0.0
    a /= m
    b /= m
    c /= m
    return m * sqrt(a * a + b * b + c * c)


cdef double root2(double r0, double z0, double z1, double g) noexcept nogil:
    cdef double n0 = r0 * z0
    cdef double s0 = z1 - 1.0
    cdef double s1 = 0.0 if g < 0 else robust_length2(n0, z1) - 1.0
    cdef double s = 0.0, a, b
    cdef int i
    for i in range(MAX_BISECT):
        s = 0.5 * (s0 + s1)
        if s == s0 or s == s1:
            break
        a = n0 / (s + r0)
        b = z1 / (s + 1.0)
        g = a * a + b * b - 1.0
        if g > 0:
            s0 = s
        elif g < 0:
            s1 = s
        else:
            break
    return s


cdef double root3(double r0, double r1, double z0, double z1, double z2, double g) noexcept nogil:
    cdef double n0 = r0 * z0
    cdef double n1 = r1 * z1
    cdef double s0 = z2 - 1.0
    cdef double s1 = 0.0 if g < 0 else robust_length3(n0, n1, z2) - 1.0
    cdef double s = 0.0, a, b, c
    cdef int i
    for i in range(MAX_BISECT):
        s = 0.5 * (s0 + s1)
        if s == s0 or s == s1:
            break
        a = n0 / (s + r0)
        b = n1 / (s + r1)
        c = z2 / (s + 1.0)
        g = a * a + b * b + c * c - 1.0
        if g > 0:
            s0 = s
        elif g < 0:
            s1 = s
        else:
            break
    return s


cdef void closest_ellipse(double e0, double e1, double y0, double y1, double* x) noexcept nogil:
    cdef double z0, z1, g, r0, s, numer0, denom0, xde0
    if y1 > 0:
        if y0 > 0:
            z0 = y0 / e0
            z1 = y1 / e1
            g = z0 * z0 + z1 * z1 - 1.0
            if g != 0:
                r0 = (e0 / e1) * (e0 / e1)
                s = root2(r0, z0, z1, g)
                x[0] = r0 * y0 / (s + r0)
                x[1] = y1 / (s + 1.0)
            else:
                x[0] = y0
                x[1] = y1
        else:
            x[0] = 0.0
            x[1] = e1
        return
    numer0 = e0 * y0
    denom0 = e0 * e0 - e1 * e1
    if numer0 < denom0:
        xde0 = numer0 / denom0
        x[0] = e0 * xde0
        g = 1.0 - xde0 * xde0
        x[1] = e1 * sqrt(g if g > 0 else 0.0)
    else:
        x[0] = e0
        x[1] = 0.0


cdef void closest_ellipsoid(const double* e, const double* y, double* x) noexcept nogil:
    cdef double e0 = e[0], e1 = e[1], e2 = e[2]
    cdef double y0 = y[0], y1 = y[1], y2 = y[2]
    cdef double z0, z1, z2, g, r0, r1, s
    cdef double denom0, denom1, numer0, numer1, xde0, xde1, discr
    cdef double t[2]
    if y2 > 0:
        if y1 > 0:
            if y0 > 0:
                z0 = y0 / e0
                z1 = y1 / e1
                z2 = y2 / e2
                g = z0 * z0 + z1 * z1 + z2 * z2 - 1.0
                if g != 0:
                    r0 = (e0 / e2) * (e0 / e2)
                    r1 = (e1 / e2) * (e1 / e2)
                    s = root3(r0, r1, z0, z1, z2, g)
                    x[0] = r0 * y0 / (s + r0)
                    x[1] = r1 * y1 / (s + r1)
                    x[2] = y2 / (s + 1.0)
                else:
                    x[0] = y0
                    x[1] = y1
                    x[2] = y2
                return
            closest_ellipse(e1, e2, y1, y2, t)
            x[0] = 0.0
            x[1] = t[0]
            x[2] = t[1]
            return
        if y0 > 0:
            closest_ellipse(e0, e2, y0, y2, t)
            x[0] = t[0]
            x[1] = 0.0
            x[2] = t[1]
            return
        x[0] = 0.0
        x[1] = 0.0
        x[2] = e2
        return
    denom0 = e0 * e0 - e2 * e2
    denom1 = e1 * e1 - e2 * e2
    numer0 = e0 * y0
    numer1 = e1 * y1
    if numer0 < denom0 and numer1 < denom1:
        xde0 = numer0 / denom0
        xde1 = numer1 / denom1
        discr = 1.0 - xde0 * xde0 - xde1 * xde1
        if discr > 0:
            x[0] = e0 * xde0
            x[1] = e1 * xde1
            x[2] = e2 * sqrt(discr)
            return
    closest_ellipse(e0, e1, y0, y1, t)
    x[0] = t[0]
    x[1] = t[1]
    x[2] = 0.0


cdef double sdf_ellipsoid(const double* axes, const double* p, double* n) noexcept nogil:
    cdef int order[3]
    cdef int i, k, tmp
    cdef double e[3]
    cdef double y[3]
    cdef double x[3]
    cdef double dist2 = 0.0, level = 0.0, gl = 0.0, s, d
    order[0] = 0
    order[1] = 1
    order[2] = 2
    # stable descending sort of three axes
    if axes[order[1]] > axes[order[0]]:
        tmp = order[0]; order[0] = order[1]; order[1] = tmp
    if axes[order[2]] > axes[order[1]]:
        tmp = order[1]; order[1] = order[2]; order[2] = tmp
        if axes[order[1]] > axes[order[0]]:
            tmp = order[0]; order[0] = order[1]; order[1] = tmp
    for k in range(3):
        e[k] = axes[order[k]]
        y[k] = fabs(p[order[k]])
    closest_ellipsoid(e, y, x)
    for k in range(3):
        d = x[k] - y[k]
        dist2 += d * d
        i = order[k]
        level += (p[i] / axes[i]) * (p[i] / axes[i])
        s = -1.0 if p[i] < 0 else 1.0
        n[i] = s * x[k] / (axes[i] * axes[i])
    gl = sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2])
    for k in range(3):
        n[k] /= gl
    if level < 1.0:
        return -sqrt(dist2)
    return sqrt(dist2)


cdef inline double sdf_any(int code, const double* params, const double* p, double* n) noexcept nogil:
    if code == 0:
        return sdf_sphere(params[0], p, n)
    if code == 1:
        return sdf_box(params, p, n)
    if code == 2:
        return sdf_cylinder(params[0], params[1], p, n)
    return sdf_ellipsoid(params, p, n)


def num_samples(Py_ssize_t grid_n, Py_ssize_t subdiv):
    cdef Py_ssize_t m = subdiv * (grid_n - 1) + 1
    return m * m


def sdf_body(int code, params, p):
    """Batched body-frame SDF: returns (distances (k,), unit normals (k,3))."""
    if code < 0 or code > 3:
        raise ValueError(f"unknown shape code {code}")
    cdef double[::1] prm = np.ascontiguousarray(params, dtype=np.float64)
    cdef double[:, ::1] pts = np.ascontiguousarray(np.asarray(p, dtype=np.float64).reshape(-1, 3))
    cdef Py_ssize_t k, m = pts.shape[0]
    d_arr = np.empty(m)
    n_arr = np.empty((m, 3))
    cdef double[::1] d = d_arr
    cdef double[:, ::1] n = n_arr
    for k in range(m):
        d[k] = sdf_any(code, &prm[0], &pts[k, 0], &n[k, 0])
    return d_arr, n_arr


def quat_to_matrix(q):
    cdef double qq[4]
    cdef double m[9]
    cdef int i
    for i in range(4):
        qq[i] = q[i]
    quat_matrix(qq, m)
    return np.array([[m[0], m[1], m[2]], [m[3], m[4], m[5]], [m[6], m[7], m[8]]])


# ---------------------------------------------------------------------------
# cloth

cdef Py_ssize_t c_spring_forces(double[:, ::1] pos, double[:, ::1] vel, const long[::1] sa, const long[::1] sb,
                                const double[::1] rest, const double[::1] stiff, double damping,
                                double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t s, a, b
    cdef double dx, dy, dz, length, ux, uy, uz, rel, mag, fx, fy, fz
    for s in range(sa.shape[0]):
        a = sa[s]
        b = sb[s]
        dx = pos[a, 0] - pos[b, 0]
        dy = pos[a, 1] - pos[b, 1]
        dz = pos[a, 2] - pos[b, 2]
        length = sqrt(dx * dx + dy * dy + dz * dz)
        if length <= 0.0:
            return s
        ux = dx / length
        uy = dy / length
        uz = dz / length
        rel = (vel[a, 0] - vel[b, 0]) * ux + (vel[a, 1] - vel[b, 1]) * uy + (vel[a, 2] - vel[b, 2]) * uz
        mag = -stiff[s] * (length - rest[s]) - damping * rel
        fx = mag * ux
        fy = mag * uy
        fz = mag * uz
        out[a, 0] += fx
        out[a, 1] += fy
        out[a, 2] += fz
        out[b, 0] -= fx
        out[b, 1] -= fy
        out[b, 2] -= fz
    return -1


def spring_forces(double[:, ::1] pos, double[:, ::1] vel, const long[::1] sa, const long[::1] sb,
                  const double[::1] rest, const double[::1] stiff, double damping, double[:, ::1] out):
    """Accumulate spring + dashpot forces into ``out``.

    Returns -1, or the index of the first spring with coincident endpoints.
    """
    cdef Py_ssize_t bad
    with nogil:
        bad = c_spring_forces(pos, vel, sa, sb, rest, stiff, damping, out)
    return bad


cdef void c_integrate_cloth(double[:, ::1] pos, double[:, ::1] vel, double[:, ::1] forces, double mass,
                            double gravity, double dt, const long[::1] pinned,
                            const double[:, ::1] targets) noexcept nogil:
    cdef Py_ssize_t i, k, p
    cdef double prev[4][3]
    cdef double h = dt / mass
    for k in range(4):
        p = pinned[k]
        for i in range(3):
            prev[k][i] = pos[p, i]
    for p in range(pos.shape[0]):
        vel[p, 0] += forces[p, 0] * h
        vel[p, 1] += forces[p, 1] * h
        vel[p, 2] += forces[p, 2] * h - gravity * dt
        pos[p, 0] += vel[p, 0] * dt
        pos[p, 1] += vel[p, 1] * dt
        pos[p, 2] += vel[p, 2] * dt
    for k in range(4):
        p = pinned[k]
        for i in range(3):
            pos[p, i] = targets[k, i]
            vel[p, i] = (targets[k, i] - prev[k][i]) / dt


def integrate_cloth(double[:, ::1] pos, double[:, ::1] vel, double[:, ::1] forces, double mass,
                    double gravity, double dt, const long[::1] pinned, targets):
    """Semi-implicit Euler step; pinned particles follow ``targets`` (4,3)."""
    cdef double[:, ::1] tg = np.ascontiguousarray(targets, dtype=np.float64)
    with nogil:
        c_integrate_cloth(pos, vel, forces, mass, gravity, dt, pinned, tg)


# ---------------------------------------------------------------------------
# contact

cdef Py_ssize_t c_contact_forces(double[:, ::1] pos, double[:, ::1] vel, Py_ssize_t n, Py_ssize_t subdiv,
                                 const double* body, int code, const double* params, double bound_r,
                                 double k_c, double c_c, double k_t, double c_t, double mu, double skin,
                                 double dt, double[:, ::1] anchors, double[:, ::1] out, double* body_out, double* stats) noexcept nogil:
    cdef Py_ssize_t r, c, i0, i1, i2, i3, a, b, a_end, b_end, count = 0, k
    cdef double rot[9]
    cdef double lo, hi, gap, g2, fu, fv
    cdef double w[4]
    cdef Py_ssize_t idx[4]
    cdef double p[3]
    cdef double rp[3]
    cdef double local[3]
    cdef double nb[3]
    cdef double nw[3]
    cdef double vs[3]
    cdef double vb[3]
    cdef double wxr[3]
    cdef double f[3]
    cdef double tq[3]
    cdef double vrel[3]
    cdef double slip[3]
    cdef double delta[3]
    cdef double ftv[3]
    cdef double s2, ft2
    cdef double d, vn, fn, dn, ft, cap, scale = 1.0 / (subdiv * subdiv)
    cdef Py_ssize_t sid, stride = (n - 1) * subdiv + 1
    cdef double r2 = (bound_r + skin) * (bound_r + skin)
    cdef double inv_sub = 1.0 / subdiv
    cdef int ax
    cdef double ell_reach = 0.0
    if code == 3:
        ell_reach = (1.0 + skin / min(params[0], min(params[1], params[2]))) ** 2
    quat_matrix(&body[3], rot)
    for r in range(n - 1):
        for c in range(n - 1):
            i0 = r * n + c
            i1 = i0 + 1
            i2 = i0 + n
            i3 = i2 + 1
            g2 = 0.0
            for ax in range(3):
                lo = pos[i0, ax]
                hi = lo
                if pos[i1, ax] < lo: lo = pos[i1, ax]
                if pos[i1, ax] > hi: hi = pos[i1, ax]
                if pos[i2, ax] < lo: lo = pos[i2, ax]
                if pos[i2, ax] > hi: hi = pos[i2, ax]
                if pos[i3, ax] < lo: lo = pos[i3, ax]
                if pos[i3, ax] > hi: hi = pos[i3, ax]
                gap = 0.0
                if body[ax] < lo:
                    gap = lo - body[ax]
                elif body[ax] > hi:
                    gap = body[ax] - hi
                g2 += gap * gap
            if g2 > r2:
                continue
            idx[0] = i0
            idx[1] = i1
            idx[2] = i2
            idx[3] = i3
            a_end = subdiv + 1 if r == n - 2 else subdiv
            b_end = subdiv + 1 if c == n - 2 else subdiv
            for a in range(a_end):
                fv = a * inv_sub
                for b in range(b_end):
                    fu = b * inv_sub
                    w[0] = (1 - fu) * (1 - fv)
                    w[1] = fu * (1 - fv)
                    w[2] = (1 - fu) * fv
                    w[3] = fu * fv
                    for ax in range(3):
                        p[ax] = (w[0] * pos[i0, ax] + w[1] * pos[i1, ax]) + (w[2] * pos[i2, ax] + w[3] * pos[i3, ax])
                        rp[ax] = p[ax] - body[ax]
                    sid = (r * subdiv + a) * stride + c * subdiv + b
                    mat_t_vec(rot, rp, local)
                    if rp[0] * rp[0] + rp[1] * rp[1] + rp[2] * rp[2] > r2 or (
                            code == 3 and (local[0] / params[0]) ** 2 + (local[1] / params[1]) ** 2
                            + (local[2] / params[2]) ** 2 > ell_reach):
                        # provably farther than the skin: dist >= (N(x) - 1) * min axis
                        d = 1.0
                    else:
                        d = sdf_any(code, params, local, nb) - skin
                    if not (d < 0):
                        anchors[sid, 0] = 0.0
                        anchors[sid, 1] = 0.0
                        anchors[sid, 2] = 0.0
                        continue
                    count += 1
                    mat_vec(rot, nb, nw)
                    for ax in range(3):
                        vs[ax] = (w[0] * vel[i0, ax] + w[1] * vel[i1, ax]) + (w[2] * vel[i2, ax] + w[3] * vel[i3, ax])
                    cross(&body[10], rp, wxr)
                    vn = 0.0
                    for ax in range(3):
                        vrel[ax] = vs[ax] - (body[7 + ax] + wxr[ax])
                        vn += vrel[ax] * nw[ax]
                    fn = scale * (k_c * (-d) - c_c * vn)
                    if fn < 0:
                        fn = 0.0
                    dn = 0.0
                    for ax in range(3):
                        f[ax] = fn * nw[ax]
                        slip[ax] = vrel[ax] - vn * nw[ax]
                        dn += anchors[sid, ax] * nw[ax]
                    ft = 0.0
                    for ax in range(3):
                        if k_t > 0:
                            delta[ax] = anchors[sid, ax] - dn * nw[ax] + slip[ax] * dt
                        else:
                            delta[ax] = 0.0
                        ftv[ax] = -scale * (k_t * delta[ax] + c_t * slip[ax])
                        ft += ftv[ax] * ftv[ax]
                    ft = sqrt(ft)
                    cap = mu * fn
                    if ft > cap:
                        for ax in range(3):
                            ftv[ax] *= cap / ft
                            if k_t > 0:
                                delta[ax] = -ftv[ax] / (scale * k_t)
                        ft = cap
                    for ax in range(3):
                        anchors[sid, ax] = delta[ax]
                        f[ax] += ftv[ax]
                    for k in range(4):
                        for ax in range(3):
                            out[idx[k], ax] += w[k] * f[ax]
                    cross(rp, f, tq)
                    for ax in range(3):
                        body_out[ax] -= f[ax]
                        body_out[3 + ax] -= tq[ax]
                        stats[1 + ax] += fn * vs[ax]
                        stats[4 + ax] += fn * rp[ax]
                    stats[0] += fn
                    dn = 0.0
                    for ax in range(3):
                        vb[ax] = body[7 + ax] - vs[ax]
                        dn += vb[ax] * nw[ax]
                    s2 = 0.0
                    ft2 = 0.0
                    for ax in range(3):
                        s2 += (vb[ax] - dn * nw[ax]) * (vb[ax] - dn * nw[ax])
                        ft2 += slip[ax] * slip[ax]
                    stats[7] += fn * sqrt(s2)
                    stats[12] += fn * sqrt(ft2)
                    stats[8] += ft
                    stats[9] += 1
    return count


def contact_forces(double[:, ::1] pos, double[:, ::1] vel, Py_ssize_t grid_n, Py_ssize_t subdiv,
                   double[::1] body, int code, params, double bound_r, double k_c, double c_c,
                   double k_t, double c_t, double mu, double skin, double dt, double[:, ::1] anchors,
                   double[:, ::1] out, double[::1] body_out, double[::1] stats):
    """Penalty contact between cloth surface samples and one rigid body.

    Samples form a lattice ``subdiv`` times finer than the particle grid
    (``subdiv == 1`` samples exactly the particles). Each sample carries
    ``1/subdiv**2`` of the per-particle stiffness and damping, and its
    force is split bilinearly over the four surrounding particles.
    Accumulates particle forces into ``out``, body force and torque into
    ``body_out[0:3]`` and ``body_out[3:6]``. Returns the contact count.
    Contact begins at distance ``skin`` from the body surface. Friction is
    an elastic-plastic tangential spring per sample whose stick
    displacement lives in ``anchors`` (see the Python backend).
    """
    cdef double[::1] prm = np.ascontiguousarray(params, dtype=np.float64)
    cdef Py_ssize_t count
    with nogil:
        count = c_contact_forces(pos, vel, grid_n, subdiv, &body[0], code, &prm[0], bound_r,
                                 k_c, c_c, k_t, c_t, mu, skin, dt, anchors, out, &body_out[0], &stats[0])
    return count


# ---------------------------------------------------------------------------
# rigid body

cdef void c_integrate_rigid(double* body, double mass, const double* inertia, const double* force,
                            const double* torque, double dt) noexcept nogil:
    cdef double rot[9]
    cdef double wb[3]
    cdef double lb[3]
    cdef double lw[3]
    cdef double gyro[3]
    cdef double rhs[3]
    cdef double rb[3]
    cdef double dw[3]
    cdef double theta, half, s, qw, qx, qy, qz, aw, ax, ay, az, norm
    cdef int i
    quat_matrix(&body[3], rot)
    for i in range(3):
        body[7 + i] += force[i] * (dt / mass)
    mat_t_vec(rot, &body[10], wb)
    for i in range(3):
        lb[i] = inertia[i] * wb[i]
    mat_vec(rot, lb, lw)
    cross(&body[10], lw, gyro)
    for i in range(3):
        rhs[i] = torque[i] - gyro[i]
    mat_t_vec(rot, rhs, rb)
    for i in range(3):
        rb[i] /= inertia[i]
    mat_vec(rot, rb, dw)
    for i in range(3):
        body[10 + i] += dw[i] * dt
        body[i] += body[7 + i] * dt
    theta = sqrt(body[10] * body[10] + body[11] * body[11] + body[12] * body[12]) * dt
    qw = body[3]
    qx = body[4]
    qy = body[5]
    qz = body[6]
    if theta > 0:
        half = 0.5 * theta
        s = sin(half)
        aw = cos(half)
        ax = body[10] * (dt / theta) * s
        ay = body[11] * (dt / theta) * s
        az = body[12] * (dt / theta) * s
        body[3] = aw * qw - ax * qx - ay * qy - az * qz
        body[4] = aw * qx + ax * qw + ay * qz - az * qy
        body[5] = aw * qy - ax * qz + ay * qw + az * qx
        body[6] = aw * qz + ax * qy - ay * qx + az * qw
    norm = sqrt(body[3] * body[3] + body[4] * body[4] + body[5] * body[5] + body[6] * body[6])
    for i in range(4):
        body[3 + i] /= norm


def integrate_rigid(double[::1] body, double mass, inertia, force, torque, double dt):
    """Semi-implicit rigid step with world-frame inertia; updates ``body``."""
    cdef double[::1] ii = np.ascontiguousarray(inertia, dtype=np.float64)
    cdef double[::1] ff = np.ascontiguousarray(force, dtype=np.float64)
    cdef double[::1] tt = np.ascontiguousarray(torque, dtype=np.float64)
    with nogil:
        c_integrate_rigid(&body[0], mass, &ii[0], &ff[0], &tt[0], dt)


# ---------------------------------------------------------------------------
# fused substep loop

cdef inline void c_servo(double[::1] heights, const double[::1] targets, double max_speed, double stroke,
                         double dt) noexcept nogil:
    cdef double step = max_speed * dt, goal, delta
    cdef int i
    for i in range(4):
        goal = targets[i]
        if goal < 0.0:
            goal = 0.0
        elif goal > stroke:
            goal = stroke
        delta = goal - heights[i]
        if fabs(delta) <= step:
            heights[i] = goal
        elif delta > 0:
            heights[i] += step
        else:
            heights[i] -= step


def servo_update(double[::1] heights, const double[::1] targets, double max_speed, double stroke, double dt):
    c_servo(heights, targets, max_speed, stroke, dt)


def simulate(double[:, ::1] pos, double[:, ::1] vel, double[:, ::1] force,
             const long[::1] sa, const long[::1] sb, const double[::1] rest, const double[::1] stiff,
             double damping, double drag, double pmass, Py_ssize_t grid_n,
             const long[::1] pinned, const double[:, ::1] corner_xy, double[::1] heights,
             const double[::1] targets, double max_speed, double stroke,
             bint has_body, double[::1] body, int code, params, double bmass, inertia, double bound_r,
             double k_c, double c_c, double k_t, double c_t, double mu, double skin,
             double[:, ::1] anchors, Py_ssize_t subdiv,
             double gravity, double dt, Py_ssize_t n_sub, double[::1] stats):
    """Advance cloth, servos and body by ``n_sub`` physics steps.

    Returns 0 on success, ``k > 0`` if a non-finite value appeared at
    substep ``k`` (1-based), or ``-(s + 1)`` for a degenerate spring ``s``.
    """
    cdef double[::1] prm = np.ascontiguousarray(params, dtype=np.float64)
    cdef double[::1] ii = np.ascontiguousarray(inertia, dtype=np.float64)
    cdef double[:, ::1] pin_targets = np.zeros((4, 3))
    cdef double body_out[6]
    cdef Py_ssize_t step, p, k, bad
    cdef int i
    cdef double lx, ly, lz, load
    cdef Py_ssize_t npart = pos.shape[0]
    cdef int status = 0
    with nogil:
        for k in range(4):
            pin_targets[k, 0] = corner_xy[k, 0]
            pin_targets[k, 1] = corner_xy[k, 1]
        for step in range(n_sub):
            c_servo(heights, targets, max_speed, stroke, dt)
            for p in range(npart):
                force[p, 0] = -drag * vel[p, 0]
                force[p, 1] = -drag * vel[p, 1]
                force[p, 2] = -drag * vel[p, 2]
            bad = c_spring_forces(pos, vel, sa, sb, rest, stiff, damping, force)
            if bad >= 0:
                status = -(bad + 1)
                break
            for i in range(6):
                body_out[i] = 0.0
            if has_body:
                c_contact_forces(pos, vel, grid_n, subdiv, &body[0], code, &prm[0], bound_r,
                                 k_c, c_c, k_t, c_t, mu, skin, dt, anchors, force, body_out, &stats[0])
            for k in range(4):
                p = pinned[k]
                lx = force[p, 0]
                ly = force[p, 1]
                lz = force[p, 2] - pmass * gravity
                load = sqrt(lx * lx + ly * ly + lz * lz)
                if load > stats[10]:
                    stats[10] = load
                pin_targets[k, 2] = heights[k]
            c_integrate_cloth(pos, vel, force, pmass, gravity, dt, pinned, pin_targets)
            if has_body:
                body_out[2] -= bmass * gravity
                c_integrate_rigid(&body[0], bmass, &ii[0], body_out, &body_out[3], dt)
            stats[11] += 1
            for p in range(npart):
                if not (isfinite(pos[p, 0]) and isfinite(pos[p, 1]) and isfinite(pos[p, 2])
                        and isfinite(vel[p, 0]) and isfinite(vel[p, 1]) and isfinite(vel[p, 2])):
                    status = step + 1
                    break
            if status == 0:
                for i in range(13):
                    if not isfinite(body[i]):
                        status = step + 1
                        break
            if status != 0:
                break
    return status
