"""Pure numpy physics kernels.

Same signatures and in-place conventions as the compiled ``_kernels``
extension. Body state is a flat 13-vector::

    [x, y, z, qw, qx, qy, qz, vx, vy, vz, wx, wy, wz]

Stats accumulated by ``contact_forces`` (and ``simulate``), length
``N_STATS``::

    0      sum of normal force magnitudes (contact patch weight)
    1:4    normal-force-weighted cloth velocity
    4:7    normal-force-weighted contact offset from the body centre
    7      normal-force-weighted tangential speed of the body centre
           relative to the cloth under each sample
    8      sum |F_tangent|
    9      number of contact samples
    10     peak pinned-particle load (simulate only)
    11     substeps completed (simulate only)
    12     normal-force-weighted tangential slip speed at the contact point
"""

from __future__ import annotations

import math

import numpy as np

BACKEND = "python"
N_STATS = 13

SPHERE, BOX, CYLINDER, ELLIPSOID = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# quaternions


def quat_to_matrix(q):
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


# ---------------------------------------------------------------------------
# signed distance fields, body frame


def _sdf_sphere(r, p):
    norm = np.sqrt(np.einsum("ij,ij->i", p, p))
    d = norm - r
    n = np.zeros_like(p)
    ok = norm > 0
    n[ok] = p[ok] / norm[ok, None]
    n[~ok] = (1.0, 0.0, 0.0)
    return d, n


def _sdf_box(h, p):
    h = np.asarray(h)
    q = np.abs(p) - h
    outside = np.maximum(q, 0.0)
    out_len = np.sqrt(np.einsum("ij,ij->i", outside, outside))
    inner = np.minimum(q.max(axis=1), 0.0)
    d = out_len + inner
    sgn = np.where(p < 0, -1.0, 1.0)
    n = np.zeros_like(p)
    is_out = out_len > 0
    n[is_out] = sgn[is_out] * outside[is_out] / out_len[is_out, None]
    idx = np.nonzero(~is_out)[0]
    if idx.size:
        axis = np.argmax(q[idx], axis=1)  # first maximum on ties
        n[idx, axis] = sgn[idx, axis]
    return d, n


def _sdf_cylinder(r, hh, p):
    rho = np.hypot(p[:, 0], p[:, 1])
    dr = rho - r
    dz = np.abs(p[:, 2]) - hh
    radial = np.zeros((p.shape[0], 2))
    ok = rho > 0
    radial[ok] = p[ok, :2] / rho[ok, None]
    radial[~ok] = (1.0, 0.0)
    sz = np.where(p[:, 2] < 0, -1.0, 1.0)
    ox = np.maximum(dr, 0.0)
    oz = np.maximum(dz, 0.0)
    out_len = np.hypot(ox, oz)
    d = out_len + np.minimum(np.maximum(dr, dz), 0.0)
    n = np.zeros_like(p)
    is_out = out_len > 0
    n[is_out, :2] = radial[is_out] * (ox[is_out] / out_len[is_out])[:, None]
    n[is_out, 2] = sz[is_out] * oz[is_out] / out_len[is_out]
    side = ~is_out & (dr >= dz)
    cap = ~is_out & (dr < dz)
    n[side, :2] = radial[side]
    n[cap, 2] = sz[cap]
    return d, n


def _robust_length(*v):
    m = max(abs(c) for c in v)
    if m == 0.0:
        return 0.0
    return m * math.sqrt(sum((c / m) ** 2 for c in v))


def _root2(r0, z0, z1, g):
    n0 = r0 * z0
    s0 = z1 - 1.0
    s1 = 0.0 if g < 0 else _robust_length(n0, z1) - 1.0
    s = 0.0
    for _ in range(200):
        s = 0.5 * (s0 + s1)
        if s == s0 or s == s1:
            break
        g = (n0 / (s + r0)) ** 2 + (z1 / (s + 1.0)) ** 2 - 1.0
        if g > 0:
            s0 = s
        elif g < 0:
            s1 = s
        else:
            break
    return s


def _root3(r0, r1, z0, z1, z2, g):
    n0 = r0 * z0
    n1 = r1 * z1
    s0 = z2 - 1.0
    s1 = 0.0 if g < 0 else _robust_length(n0, n1, z2) - 1.0
    s = 0.0
    for _ in range(200):
        s = 0.5 * (s0 + s1)
        if s == s0 or s == s1:
            break
        g = (n0 / (s + r0)) ** 2 + (n1 / (s + r1)) ** 2 + (z2 / (s + 1.0)) ** 2 - 1.0
        if g > 0:
            s0 = s
        elif g < 0:
            s1 = s
        else:
            break
    return s


def _closest_ellipse(e0, e1, y0, y1):
    """Closest point on an ellipse, e0 >= e1, first quadrant query."""
    if y1 > 0:
        if y0 > 0:
            z0, z1 = y0 / e0, y1 / e1
            g = z0 * z0 + z1 * z1 - 1.0
            if g != 0:
                r0 = (e0 / e1) ** 2
                s = _root2(r0, z0, z1, g)
                return r0 * y0 / (s + r0), y1 / (s + 1.0)
            return y0, y1
        return 0.0, e1
    numer0 = e0 * y0
    denom0 = e0 * e0 - e1 * e1
    if numer0 < denom0:
        xde0 = numer0 / denom0
        return e0 * xde0, e1 * math.sqrt(max(0.0, 1.0 - xde0 * xde0))
    return e0, 0.0


def _closest_ellipsoid(e, y):
    """Closest surface point, e sorted descending, y in the first octant."""
    e0, e1, e2 = e
    y0, y1, y2 = y
    if y2 > 0:
        if y1 > 0:
            if y0 > 0:
                z0, z1, z2 = y0 / e0, y1 / e1, y2 / e2
                g = z0 * z0 + z1 * z1 + z2 * z2 - 1.0
                if g != 0:
                    r0, r1 = (e0 / e2) ** 2, (e1 / e2) ** 2
                    s = _root3(r0, r1, z0, z1, z2, g)
                    return r0 * y0 / (s + r0), r1 * y1 / (s + r1), y2 / (s + 1.0)
                return y0, y1, y2
            x1, x2 = _closest_ellipse(e1, e2, y1, y2)
            return 0.0, x1, x2
        if y0 > 0:
            x0, x2 = _closest_ellipse(e0, e2, y0, y2)
            return x0, 0.0, x2
        return 0.0, 0.0, e2
    denom0 = e0 * e0 - e2 * e2
    denom1 = e1 * e1 - e2 * e2
    numer0 = e0 * y0
    numer1 = e1 * y1
    if numer0 < denom0 and numer1 < denom1:
        xde0 = numer0 / denom0
        xde1 = numer1 / denom1
        discr = 1.0 - xde0 * xde0 - xde1 * xde1
        if discr > 0:
            return e0 * xde0, e1 * xde1, e2 * math.sqrt(discr)
    x0, x1 = _closest_ellipse(e0, e1, y0, y1)
    return x0, x1, 0.0


def _sdf_ellipsoid_point(axes, p):
    order = sorted(range(3), key=lambda i: -axes[i])  # stable on ties
    e = [axes[i] for i in order]
    y = [abs(p[i]) for i in order]
    x = _closest_ellipsoid(e, y)
    inside = sum((p[i] / axes[i]) ** 2 for i in range(3)) < 1.0
    dist = math.sqrt(sum((x[k] - y[k]) ** 2 for k in range(3)))
    grad = [0.0, 0.0, 0.0]
    for k, i in enumerate(order):
        s = -1.0 if p[i] < 0 else 1.0
        grad[i] = s * x[k] / (axes[i] * axes[i])
    gl = math.sqrt(sum(g * g for g in grad))
    return (-dist if inside else dist), [g / gl for g in grad]


def _sdf_ellipsoid(axes, p):
    d = np.empty(p.shape[0])
    n = np.empty_like(p)
    for k in range(p.shape[0]):
        d[k], n[k] = _sdf_ellipsoid_point(axes, p[k])
    return d, n


def sdf_body(code, params, p):
    """Batched body-frame SDF: returns (distances (k,), unit normals (k,3))."""
    p = np.asarray(p, dtype=float).reshape(-1, 3)
    if code == SPHERE:
        return _sdf_sphere(params[0], p)
    if code == BOX:
        return _sdf_box(params, p)
    if code == CYLINDER:
        return _sdf_cylinder(params[0], params[1], p)
    if code == ELLIPSOID:
        return _sdf_ellipsoid(tuple(params), p)
    raise ValueError(f"unknown shape code {code}")


# ---------------------------------------------------------------------------
# cloth


def spring_forces(pos, vel, sa, sb, rest, stiff, damping, out):
    """Accumulate spring + dashpot forces into ``out``.

    Returns -1, or the index of the first spring with coincident endpoints.
    """
    d = pos[sa] - pos[sb]
    length = np.sqrt(np.einsum("ij,ij->i", d, d))
    bad = np.nonzero(length <= 0.0)[0]
    if bad.size:
        return int(bad[0])
    u = d / length[:, None]
    rel = np.einsum("ij,ij->i", vel[sa] - vel[sb], u)
    mag = -stiff * (length - rest) - damping * rel
    f = mag[:, None] * u
    np.add.at(out, sa, f)
    np.subtract.at(out, sb, f)
    return -1


def integrate_cloth(pos, vel, forces, mass, gravity, dt, pinned, targets):
    """Semi-implicit Euler step; pinned particles follow ``targets`` (4,3)."""
    prev = pos[pinned].copy()
    vel += forces * (dt / mass)
    vel[:, 2] -= gravity * dt
    pos += vel * dt
    pos[pinned] = targets
    vel[pinned] = (targets - prev) / dt


# ---------------------------------------------------------------------------
# contact


def _fine_lattice(grid_n, subdiv):
    m = subdiv * (grid_n - 1)
    idx = np.arange(m + 1)
    quad = np.minimum(idx // subdiv, grid_n - 2)
    frac = (idx - quad * subdiv) / subdiv
    return quad, frac


_LATTICE_CACHE: dict = {}


def num_samples(grid_n, subdiv):
    """Number of contact samples on the fine surface lattice."""
    m = subdiv * (grid_n - 1) + 1
    return m * m


def _lattice(grid_n, subdiv):
    key = (grid_n, subdiv)
    if key not in _LATTICE_CACHE:
        quad, frac = _fine_lattice(grid_n, subdiv)
        qi, qj = np.meshgrid(quad, quad, indexing="ij")
        u, v = np.meshgrid(frac, frac, indexing="ij")
        # row index r runs along y, column c along x
        r = qi.ravel()
        c = qj.ravel()
        fu = v.ravel()  # x fraction
        fv = u.ravel()  # y fraction
        i00 = r * grid_n + c
        corners = np.stack([i00, i00 + 1, i00 + grid_n, i00 + grid_n + 1], axis=1)
        w = np.stack([(1 - fu) * (1 - fv), fu * (1 - fv), (1 - fu) * fv, fu * fv], axis=1)
        quad_id = r * (grid_n - 1) + c
        _LATTICE_CACHE[key] = (corners, w, quad_id)
    return _LATTICE_CACHE[key]


def contact_forces(
    pos, vel, grid_n, subdiv, body, code, params, bound_r, k_c, c_c, k_t, c_t, mu, skin, dt, anchors, out, body_out, stats
):
    """Penalty contact between cloth surface samples and one rigid body.

    Samples form a lattice ``subdiv`` times finer than the particle grid
    (``subdiv == 1`` samples exactly the particles). Each sample carries
    ``1/subdiv**2`` of the per-particle stiffness and damping, and its
    force is split bilinearly over the four surrounding particles.
    Accumulates particle forces into ``out``, body force and torque into
    ``body_out[0:3]`` and ``body_out[3:6]``. Returns the contact count.
    Contact begins at distance ``skin`` from the body surface.

    Friction is an elastic-plastic tangential spring per sample: ``anchors``
    (one row per lattice sample, ``num_samples(grid_n, subdiv)`` rows)
    holds the accumulated stick displacement, clamped so the tangential
    force never exceeds ``mu`` times the normal force. Samples found
    outside the body are released.
    """
    n = grid_n
    bound_r = bound_r + skin
    center = body[0:3]
    grid = pos.reshape(n, n, 3)
    q00, q10 = grid[:-1, :-1], grid[:-1, 1:]
    q01, q11 = grid[1:, :-1], grid[1:, 1:]
    lo = np.minimum(np.minimum(q00, q10), np.minimum(q01, q11))
    hi = np.maximum(np.maximum(q00, q10), np.maximum(q01, q11))
    gap = np.maximum(lo - center, 0.0) + np.maximum(center - hi, 0.0)
    near = (np.einsum("ijk,ijk->ij", gap, gap) <= bound_r * bound_r).ravel()
    if not near.any():
        return 0

    corners, w, quad_id = _lattice(n, subdiv)
    sel = np.flatnonzero(near[quad_id])
    corners = corners[sel]
    w = w[sel]
    p = np.einsum("sk,skd->sd", w, pos[corners])

    rot = quat_to_matrix(body[3:7])
    rel_p = p - center
    local = rel_p @ rot
    d, n_body = sdf_body(code, params, local)
    d = d - skin
    hit = d < 0
    anchors[sel[~hit]] = 0.0
    if not hit.any():
        return 0
    ids = sel[hit]
    corners, w, rel_p, d = corners[hit], w[hit], rel_p[hit], d[hit]
    normal = n_body[hit] @ rot.T
    vs = np.einsum("sk,skd->sd", w, vel[corners])
    vb = body[7:10] + np.cross(body[10:13], rel_p)
    vrel = vs - vb

    scale = 1.0 / (subdiv * subdiv)
    vn = np.einsum("ij,ij->i", vrel, normal)
    fn = np.maximum(scale * (k_c * (-d) - c_c * vn), 0.0)
    f = fn[:, None] * normal
    slip = vrel - vn[:, None] * normal
    if k_t > 0:
        delta = anchors[ids]
        delta = delta - np.einsum("ij,ij->i", delta, normal)[:, None] * normal + slip * dt
    else:
        delta = np.zeros_like(slip)
    trial = -scale * (k_t * delta + c_t * slip)
    mag = np.sqrt(np.einsum("ij,ij->i", trial, trial))
    cap = mu * fn
    over = mag > cap
    factor = np.where(over, cap / np.where(mag > 0, mag, 1.0), 1.0)
    tangential = trial * factor[:, None]
    if k_t > 0:
        delta[over] = -tangential[over] / (scale * k_t)
    anchors[ids] = delta
    ft = np.minimum(mag, cap)
    f += tangential

    for k in range(4):
        np.add.at(out, corners[:, k], w[:, k, None] * f)
    body_out[0:3] -= f.sum(axis=0)
    body_out[3:6] -= np.cross(rel_p, f).sum(axis=0)

    stats[0] += fn.sum()
    stats[1:4] += (fn[:, None] * vs).sum(axis=0)
    stats[4:7] += (fn[:, None] * rel_p).sum(axis=0)
    carry = body[7:10] - vs
    carry -= np.einsum("ij,ij->i", carry, normal)[:, None] * normal
    stats[7] += float(fn @ np.sqrt(np.einsum("ij,ij->i", carry, carry)))
    stats[12] += float(fn @ np.sqrt(np.einsum("ij,ij->i", slip, slip)))
    stats[8] += ft.sum()
    stats[9] += hit.sum()
    return int(hit.sum())


# ---------------------------------------------------------------------------
# rigid body


def integrate_rigid(body, mass, inertia, force, torque, dt):
    """Semi-implicit rigid step with world-frame inertia; updates ``body``."""
    inertia = np.asarray(inertia, dtype=float)
    rot = quat_to_matrix(body[3:7])
    omega = body[10:13]
    body[7:10] += force * (dt / mass)
    w_body = rot.T @ omega
    ang_mom = rot @ (inertia * w_body)
    rhs = np.asarray(torque) - np.cross(omega, ang_mom)
    omega = omega + rot @ ((rot.T @ rhs) / inertia) * dt
    body[10:13] = omega
    body[0:3] += body[7:10] * dt

    theta = math.sqrt(float(omega @ omega)) * dt
    q = body[3:7]
    if theta > 0:
        axis = omega * (dt / theta)
        half = 0.5 * theta
        s = math.sin(half)
        dw, dx, dy, dz = math.cos(half), axis[0] * s, axis[1] * s, axis[2] * s
        w, x, y, z = q
        q = np.array(
            [
                dw * w - dx * x - dy * y - dz * z,
                dw * x + dx * w + dy * z - dz * y,
                dw * y - dx * z + dy * w + dz * x,
                dw * z + dx * y - dy * x + dz * w,
            ]
        )
    body[3:7] = q / math.sqrt(float(q @ q))


# ---------------------------------------------------------------------------
# fused substep loop


def servo_update(heights, targets, max_speed, stroke, dt):
    step = max_speed * dt
    goal = np.clip(targets, 0.0, stroke)
    delta = goal - heights
    heights[:] = np.where(np.abs(delta) <= step, goal, heights + np.clip(delta, -step, step))


def simulate(
    pos, vel, force, sa, sb, rest, stiff, damping, drag, pmass, grid_n,
    pinned, corner_xy, heights, targets, max_speed, stroke,
    has_body, body, code, params, bmass, inertia, bound_r,
    k_c, c_c, k_t, c_t, mu, skin, anchors, subdiv, gravity, dt, n_sub, stats,
):
    """Advance cloth, servos and body by ``n_sub`` physics steps.

    Returns 0 on success, ``k > 0`` if a non-finite value appeared at
    substep ``k`` (1-based), or ``-(s + 1)`` for a degenerate spring ``s``.
    """
    pin_targets = np.empty((4, 3))
    pin_targets[:, :2] = corner_xy
    body_out = np.zeros(6)
    for step in range(n_sub):
        servo_update(heights, targets, max_speed, stroke, dt)
        force[:] = -drag * vel
        bad = spring_forces(pos, vel, sa, sb, rest, stiff, damping, force)
        if bad >= 0:
            return -(bad + 1)
        body_out[:] = 0.0
        if has_body:
            contact_forces(
                pos, vel, grid_n, subdiv, body, code, params, bound_r,
                k_c, c_c, k_t, c_t, mu, skin, dt, anchors, force, body_out, stats,
            )
        load = force[pinned].copy()
        load[:, 2] -= pmass * gravity
        peak = float(np.sqrt(np.einsum("ij,ij->i", load, load)).max())
        if peak > stats[10]:
            stats[10] = peak
        pin_targets[:, 2] = heights
        integrate_cloth(pos, vel, force, pmass, gravity, dt, pinned, pin_targets)
        if has_body:
            body_out[2] -= bmass * gravity
            integrate_rigid(body, bmass, inertia, body_out[0:3], body_out[3:6], dt)
        stats[11] += 1
        if not (np.isfinite(pos).all() and np.isfinite(vel).all() and np.isfinite(body).all()):
            return step + 1
    return 0
