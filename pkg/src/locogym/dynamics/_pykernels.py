"""Pure-Python kernels; same signatures and algorithms as ``_ckernels.pyx``.

Contact parameters arrive packed as ``cparams = [mu, stiffness, damping,
restitution, tangential_damping]`` with terrain breakpoints ``tx`` (ascending)
and ``tz``. The external base wrench is ``ext = [fx, fz, torque_y]``.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import SingularMassMatrix

BACKEND = "python"


def _rot(theta, px, pz):
    c = math.cos(theta)
    s = math.sin(theta)
    return c * px + s * pz, -s * px + c * pz


def body_kinematics(arr, q, v):
    """World angle, origin, CoM, angular rate and origin velocity of every body."""
    parent = arr.parent
    nb = parent.shape[0]
    theta = np.empty(nb)
    org = np.empty((nb, 2))
    com = np.empty((nb, 2))
    omega = np.empty(nb)
    vorg = np.empty((nb, 2))
    theta[0] = q[2]
    org[0] = q[0], q[1]
    omega[0] = v[2]
    vorg[0] = v[0], v[1]
    for i in range(1, nb):
        p = parent[i]
        theta[i] = theta[p] + q[2 + i]
        dx, dz = _rot(theta[p], arr.joint_offset[i, 0], arr.joint_offset[i, 1])
        org[i, 0] = org[p, 0] + dx
        org[i, 1] = org[p, 1] + dz
        omega[i] = omega[p] + v[2 + i]
        vorg[i, 0] = vorg[p, 0] + omega[p] * dz
        vorg[i, 1] = vorg[p, 1] - omega[p] * dx
    for i in range(nb):
        cx, cz = _rot(theta[i], arr.com[i, 0], arr.com[i, 1])
        com[i] = org[i, 0] + cx, org[i, 1] + cz
    return theta, org, com, omega, vorg


def mass_matrix(arr, q):
    """Joint-space inertia matrix by composite-rigid-body accumulation."""
    parent = arr.parent
    nb = parent.shape[0]
    ndof = nb + 2
    _, org, com, _, _ = body_kinematics(arr, q, np.zeros(ndof))
    mc = arr.mass.copy()
    sc = arr.mass[:, None] * com
    jc = arr.inertia + arr.mass * (com[:, 0] ** 2 + com[:, 1] ** 2)
    for i in range(nb - 1, 0, -1):
        p = parent[i]
        mc[p] += mc[i]
        sc[p] += sc[i]
        jc[p] += jc[i]
    M = np.zeros((ndof, ndof))
    M[0, 0] = M[1, 1] = mc[0]
    for b in range(nb):
        db = 2 + b
        obx, obz = org[b]
        m, (sx, sz), J = mc[b], sc[b], jc[b]
        M[0, db] = M[db, 0] = sz - m * obz
        M[1, db] = M[db, 1] = -(sx - m * obx)
        a = b
        while a != -1:
            oax, oaz = org[a]
            val = J - (sx * (oax + obx) + sz * (oaz + obz)) + m * (oax * obx + oaz * obz)
            M[2 + a, db] = M[db, 2 + a] = val
            a = parent[a]
    return M


def bias_forces(arr, q, v):
    """Gravity + centrifugal generalized forces ``h`` (so that ``M a = tau - h``)."""
    parent = arr.parent
    nb = parent.shape[0]
    ndof = nb + 2
    _, org, com, omega, _ = body_kinematics(arr, q, v)
    acc_org = np.zeros((nb, 2))
    force = np.empty((nb, 2))
    for i in range(nb):
        if i > 0:
            p = parent[i]
            acc_org[i] = acc_org[p] - omega[p] ** 2 * (org[i] - org[p])
        acc_com = acc_org[i] - omega[i] ** 2 * (com[i] - org[i])
        force[i, 0] = arr.mass[i] * acc_com[0]
        force[i, 1] = arr.mass[i] * (acc_com[1] + arr.gravity)
    moment = com[:, 1] * force[:, 0] - com[:, 0] * force[:, 1]
    fsum = force.copy()
    for i in range(nb - 1, 0, -1):
        p = parent[i]
        fsum[p] += fsum[i]
        moment[p] += moment[i]
    h = np.empty(ndof)
    h[0], h[1] = fsum[0]
    for b in range(nb):
        h[2 + b] = moment[b] - (org[b, 1] * fsum[b, 0] - org[b, 0] * fsum[b, 1])
    return h


def terrain(tx, tz, x):
    """Ground height and slope dz/dx; linear extrapolation past the end breakpoints."""
    n = tx.shape[0]
    k = 0
    while k < n - 2 and x > tx[k + 1]:
        k += 1
    slope = (tz[k + 1] - tz[k]) / (tx[k + 1] - tx[k])
    return tz[k] + slope * (x - tx[k]), slope


def contact_forces(arr, q, v, cparams, tx, tz, D=None):
    """Penalty normal force + Coulomb-capped viscous tangential force per contact point.

    Returns (generalized force, per-body world force (nb, 2), per-body contact flags).
    When ``D`` is given, the damping Jacobian ``J^T C J`` of the active contacts
    (dQ/dv with the sign flipped) is added to it in place.
    """
    parent = arr.parent
    nb = parent.shape[0]
    theta, org, _, omega, vorg = body_kinematics(arr, q, v)
    mu, k, c, e, ct = cparams
    Q = np.zeros(nb + 2)
    body_force = np.zeros((nb, 2))
    touching = np.zeros(nb, dtype=np.int8)
    for ci in range(arr.cp_body.shape[0]):
        b = arr.cp_body[ci]
        rx, rz = _rot(theta[b], arr.cp_local[ci, 0], arr.cp_local[ci, 1])
        px, pz = org[b, 0] + rx, org[b, 1] + rz
        gz, slope = terrain(tx, tz, px)
        cos_a = 1.0 / math.sqrt(1.0 + slope * slope)
        sin_a = slope * cos_a
        pen = (gz - pz) * cos_a
        if pen <= 0.0:
            continue
        vx = vorg[b, 0] + omega[b] * rz
        vz = vorg[b, 1] - omega[b] * rx
        vn = -sin_a * vx + cos_a * vz
        vt = cos_a * vx + sin_a * vz
        cn = c * (1.0 - e)
        fn = k * pen - cn * vn
        if fn < 0.0:
            fn = 0.0
            cn = 0.0
        ft = -ct * vt
        cte = ct
        cap = mu * fn
        if ft > cap:
            ft = cap
            cte = 0.0
        elif ft < -cap:
            ft = -cap
            cte = 0.0
        if D is not None and (cn > 0.0 or cte > 0.0):
            un = np.zeros(nb + 2)
            ut = np.zeros(nb + 2)
            un[:2] = -sin_a, cos_a
            ut[:2] = cos_a, sin_a
            a = b
            while a != -1:
                dx, dz = px - org[a, 0], pz - org[a, 1]
                un[2 + a] = -sin_a * dz - cos_a * dx
                ut[2 + a] = cos_a * dz - sin_a * dx
                a = parent[a]
            D += cn * np.outer(un, un) + cte * np.outer(ut, ut)
        fx = -sin_a * fn + cos_a * ft
        fz = cos_a * fn + sin_a * ft
        body_force[b, 0] += fx
        body_force[b, 1] += fz
        touching[b] = 1
        Q[0] += fx
        Q[1] += fz
        a = b
        while a != -1:
            Q[2 + a] += (pz - org[a, 1]) * fx - (px - org[a, 0]) * fz
            a = parent[a]
    return Q, body_force, touching


def _solve(arr, M, rhs):
    ndof = rhs.shape[0]
    acc = np.zeros(ndof)
    start = 3 if arr.fixed_base else 0
    sub = M[start:, start:]
    if sub.shape[0] == 0:
        return acc
    try:
        L = np.linalg.cholesky(sub)
    except np.linalg.LinAlgError as exc:
        raise SingularMassMatrix("mass matrix is not positive definite") from exc
    y = np.linalg.solve(L, rhs[start:])
    acc[start:] = np.linalg.solve(L.T, y)
    return acc


def forward_dynamics(arr, q, v, tau, cparams, tx, tz, ext):
    """Generalized acceleration: solve ``M a = B tau + J_c^T f_c + ext - h``."""
    M = mass_matrix(arr, q)
    Q, _, _ = contact_forces(arr, q, v, cparams, tx, tz)
    Q -= bias_forces(arr, q, v)
    Q[3:] += tau
    Q[0] += ext[0]
    Q[1] += ext[1]
    Q[2] += ext[2]
    return _solve(arr, M, Q)


def pd_torque(kp, kd, friction, tau_max, q_des, q, qdot):
    tau = kp * (q_des - q) - kd * qdot - friction * np.sign(qdot)
    return np.clip(tau, -tau_max, tau_max)


def simulate(arr, q, v, qdes, kp, kd, friction, tau_max, cparams, tx, tz, ext, ext_ticks, dt):
    """Advance ``qdes.shape[0]`` semi-implicit Euler ticks in place.

    Damping (joint k_d where the torque is not saturated, contact normal and
    sticking tangential damping) is integrated linearly implicitly by solving
    ``(M + dt D) a = Q``; without it the stiff viscous terms chatter at 1 ms.

    Returns (remaining external-wrench ticks, mean joint torque, last per-body
    contact force, last per-body contact flags, ok flag). ``ok`` is False when
    the state went non-finite or the mass matrix failed; stepping stops there.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        return _simulate(arr, q, v, qdes, kp, kd, friction, tau_max, cparams, tx, tz, ext, ext_ticks, dt)


def _simulate(arr, q, v, qdes, kp, kd, friction, tau_max, cparams, tx, tz, ext, ext_ticks, dt):
    # loop body of simulate(); split out so overflow warnings can be silenced around it
    n = q.shape[0] - 3
    nticks = qdes.shape[0]
    tau_sum = np.zeros(n)
    body_force = np.zeros((arr.parent.shape[0], 2))
    touching = np.zeros(arr.parent.shape[0], dtype=np.int8)
    for k in range(nticks):
        tau = pd_torque(kp, kd, friction, tau_max, qdes[k], q[3:], v[3:])
        tau_sum += tau
        M = mass_matrix(arr, q)
        D = np.zeros_like(M)
        D[3:, 3:] = np.diag(np.where(np.abs(tau) < tau_max, kd, 0.0))
        Q, body_force, touching = contact_forces(arr, q, v, cparams, tx, tz, D)
        M += dt * D
        Q -= bias_forces(arr, q, v)
        Q[3:] += tau
        if ext_ticks > 0:
            Q[0] += ext[0]
            Q[1] += ext[1]
            Q[2] += ext[2]
            ext_ticks -= 1
        try:
            acc = _solve(arr, M, Q)
        except SingularMassMatrix:
            return ext_ticks, tau_sum / (k + 1), body_force, touching, False
        v += acc * dt
        q += v * dt
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(q))):
            return ext_ticks, tau_sum / (k + 1), body_force, touching, False
    return ext_ticks, tau_sum / max(nticks, 1), body_force, touching, True


def point_kinematics(arr, q, v, bodies, local):
    """World position, velocity and body angle of points fixed to bodies."""
    theta, org, _, omega, vorg = body_kinematics(arr, q, v)
    m = bodies.shape[0]
    pos = np.empty((m, 2))
    vel = np.empty((m, 2))
    ang = np.empty(m)
    for i in range(m):
        b = bodies[i]
        rx, rz = _rot(theta[b], local[i, 0], local[i, 1])
        pos[i] = org[b, 0] + rx, org[b, 1] + rz
        vel[i] = vorg[b, 0] + omega[b] * rz, vorg[b, 1] - omega[b] * rx
        ang[i] = theta[b]
    return pos, vel, ang
