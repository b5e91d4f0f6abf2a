# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; same signatures and algorithms as ``_pykernels``."""

import numpy as np
from libc.math cimport cos, sin, sqrt, isfinite

BACKEND = "cython"

cdef enum:
    MAXB = 32
    MAXD = 34


from locogym.dynamics.errors import SingularMassMatrix


cdef struct Model:
    int nb
    int nc
    int fixed_base
    double gravity
    const long long* parent
    const double* joint_offset
    const double* com
    const double* mass
    const double* inertia
    const long long* cp_body
    const double* cp_local


cdef struct Kin:
    double theta[MAXB]
    double ox[MAXB]
    double oz[MAXB]
    double cx[MAXB]
    double cz[MAXB]
    double omega[MAXB]
    double vx[MAXB]
    double vz[MAXB]


cdef struct Contact:
    double mu, k, c, e, ct
    int nt
    const double* tx
    const double* tz


cdef inline void _kinematics(const Model* m, const double* q, const double* v, Kin* K) noexcept nogil:
    cdef int i, p
    cdef double c, s, px, pz, dx, dz
    K.theta[0] = q[2]
    K.ox[0] = q[0]
    K.oz[0] = q[1]
    K.omega[0] = v[2]
    K.vx[0] = v[0]
    K.vz[0] = v[1]
    for i in range(1, m.nb):
        p = <int>m.parent[i]
        K.theta[i] = K.theta[p] + q[2 + i]
        c = cos(K.theta[p])
        s = sin(K.theta[p])
        px = m.joint_offset[2 * i]
        pz = m.joint_offset[2 * i + 1]
        dx = c * px + s * pz
        dz = -s * px + c * pz
        K.ox[i] = K.ox[p] + dx
        K.oz[i] = K.oz[p] + dz
        K.omega[i] = K.omega[p] + v[2 + i]
        K.vx[i] = K.vx[p] + K.omega[p] * dz
        K.vz[i] = K.vz[p] - K.omega[p] * dx
    for i in range(m.nb):
        c = cos(K.theta[i])
        s = sin(K.theta[i])
        px = m.com[2 * i]
        pz = m.com[2 * i + 1]
        K.cx[i] = K.ox[i] + c * px + s * pz
        K.cz[i] = K.oz[i] - s * px + c * pz


cdef void _mass_matrix(const Model* m, const Kin* K, double* M) noexcept nogil:
    cdef int nb = m.nb, ndof = m.nb + 2
    cdef double mc[MAXB]
    cdef double sx[MAXB]
    cdef double sz[MAXB]
    cdef double jc[MAXB]
    cdef int i, p, a, b, db
    cdef double obx, obz, oax, oaz, val
    for i in range(ndof * ndof):
        M[i] = 0.0
    for i in range(nb):
        mc[i] = m.mass[i]
        sx[i] = m.mass[i] * K.cx[i]
        sz[i] = m.mass[i] * K.cz[i]
        jc[i] = m.inertia[i] + m.mass[i] * (K.cx[i] * K.cx[i] + K.cz[i] * K.cz[i])
    for i in range(nb - 1, 0, -1):
        p = <int>m.parent[i]
        mc[p] += mc[i]
        sx[p] += sx[i]
        sz[p] += sz[i]
        jc[p] += jc[i]
    M[0] = mc[0]
    M[ndof + 1] = mc[0]
    for b in range(nb):
        db = 2 + b
        obx = K.ox[b]
        obz = K.oz[b]
        val = sz[b] - mc[b] * obz
        M[db] = val
        M[db * ndof] = val
        val = -(sx[b] - mc[b] * obx)
        M[ndof + db] = val
        M[db * ndof + 1] = val
        a = b
        while a != -1:
            oax = K.ox[a]
            oaz = K.oz[a]
            val = jc[b] - (sx[b] * (oax + obx) + sz[b] * (oaz + obz)) + mc[b] * (oax * obx + oaz * obz)
            M[(2 + a) * ndof + db] = val
            M[db * ndof + 2 + a] = val
            a = <int>m.parent[a]


cdef void _bias(const Model* m, const Kin* K, double* h) noexcept nogil:
    cdef int nb = m.nb
    cdef double ax[MAXB]
    cdef double az[MAXB]
    cdef double fx[MAXB]
    cdef double fz[MAXB]
    cdef double mom[MAXB]
    cdef int i, p, b
    cdef double acx, acz, w2
    for i in range(nb):
        if i > 0:
            p = <int>m.parent[i]
            w2 = K.omega[p] * K.omega[p]
            ax[i] = ax[p] - w2 * (K.ox[i] - K.ox[p])
            az[i] = az[p] - w2 * (K.oz[i] - K.oz[p])
        else:
            ax[0] = 0.0
            az[0] = 0.0
        w2 = K.omega[i] * K.omega[i]
        acx = ax[i] - w2 * (K.cx[i] - K.ox[i])
        acz = az[i] - w2 * (K.cz[i] - K.oz[i])
        fx[i] = m.mass[i] * acx
        fz[i] = m.mass[i] * (acz + m.gravity)
        mom[i] = K.cz[i] * fx[i] - K.cx[i] * fz[i]
    for i in range(nb - 1, 0, -1):
        p = <int>m.parent[i]
        fx[p] += fx[i]
        fz[p] += fz[i]
        mom[p] += mom[i]
    h[0] = fx[0]
    h[1] = fz[0]
    for b in range(nb):
        h[2 + b] = mom[b] - (K.oz[b] * fx[b] - K.ox[b] * fz[b])


cdef inline void _terrain(const Contact* ct, double x, double* gz, double* slope) noexcept nogil:
    cdef int k = 0
    while k < ct.nt - 2 and x > ct.tx[k + 1]:
        k += 1
    slope[0] = (ct.tz[k + 1] - ct.tz[k]) / (ct.tx[k + 1] - ct.tx[k])
    gz[0] = ct.tz[k] + slope[0] * (x - ct.tx[k])


cdef void _contacts(const Model* m, const Kin* K, const Contact* ct, double* Q,
                    double* bforce, char* touching, double* D) noexcept nogil:
    """Accumulate contact forces into Q; when D is not NULL also add the damping Jacobian J^T C J."""
    cdef int ci, b, a, i, j, ndof = m.nb + 2
    cdef double c, s, lx, lz, rx, rz, px, pz, gz, slope, cos_a, sin_a, pen
    cdef double vx, vz, vn, vt, fn, ft, cap, fx, fz, cn, cte
    cdef double un[MAXD]
    cdef double ut[MAXD]
    for b in range(m.nb):
        bforce[2 * b] = 0.0
        bforce[2 * b + 1] = 0.0
        touching[b] = 0
    for ci in range(m.nc):
        b = <int>m.cp_body[ci]
        c = cos(K.theta[b])
        s = sin(K.theta[b])
        lx = m.cp_local[2 * ci]
        lz = m.cp_local[2 * ci + 1]
        rx = c * lx + s * lz
        rz = -s * lx + c * lz
        px = K.ox[b] + rx
        pz = K.oz[b] + rz
        _terrain(ct, px, &gz, &slope)
        cos_a = 1.0 / sqrt(1.0 + slope * slope)
        sin_a = slope * cos_a
        pen = (gz - pz) * cos_a
        if pen <= 0.0:
            continue
        vx = K.vx[b] + K.omega[b] * rz
        vz = K.vz[b] - K.omega[b] * rx
        vn = -sin_a * vx + cos_a * vz
        vt = cos_a * vx + sin_a * vz
        cn = ct.c * (1.0 - ct.e)
        fn = ct.k * pen - cn * vn
        if fn < 0.0:
            fn = 0.0
            cn = 0.0
        ft = -ct.ct * vt
        cte = ct.ct
        cap = ct.mu * fn
        if ft > cap:
            ft = cap
            cte = 0.0
        elif ft < -cap:
            ft = -cap
            cte = 0.0
        if D != NULL and (cn > 0.0 or cte > 0.0):
            for i in range(ndof):
                un[i] = 0.0
                ut[i] = 0.0
            un[0] = -sin_a
            un[1] = cos_a
            ut[0] = cos_a
            ut[1] = sin_a
            a = b
            while a != -1:
                # point velocity column for the rotation of body a: (dz, -dx)
                un[2 + a] = -sin_a * (pz - K.oz[a]) - cos_a * (px - K.ox[a])
                ut[2 + a] = cos_a * (pz - K.oz[a]) - sin_a * (px - K.ox[a])
                a = <int>m.parent[a]
            for i in range(ndof):
                if un[i] == 0.0 and ut[i] == 0.0:
                    continue
                for j in range(ndof):
                    D[i * ndof + j] += cn * un[i] * un[j] + cte * ut[i] * ut[j]
        fx = -sin_a * fn + cos_a * ft
        fz = cos_a * fn + sin_a * ft
        bforce[2 * b] += fx
        bforce[2 * b + 1] += fz
        touching[b] = 1
        Q[0] += fx
        Q[1] += fz
        a = b
        while a != -1:
            Q[2 + a] += (pz - K.oz[a]) * fx - (px - K.ox[a]) * fz
            a = <int>m.parent[a]


cdef int _solve(const Model* m, double* M, double* rhs, double* acc) noexcept nogil:
    """Cholesky solve of the (free or joint-only) block; returns 0 when not SPD."""
    cdef int ndof = m.nb + 2
    cdef int start = 3 if m.fixed_base else 0
    cdef int n = ndof - start
    cdef double L[MAXD * MAXD]
    cdef double y[MAXD]
    cdef int i, j, k
    cdef double s
    for i in range(ndof):
        acc[i] = 0.0
    for i in range(n):
        for j in range(i + 1):
            s = M[(start + i) * ndof + start + j]
            for k in range(j):
                s -= L[i * MAXD + k] * L[j * MAXD + k]
            if i == j:
                if not s > 0.0:
                    return 0
                L[i * MAXD + i] = sqrt(s)
            else:
                L[i * MAXD + j] = s / L[j * MAXD + j]
    for i in range(n):
        s = rhs[start + i]
        for k in range(i):
            s -= L[i * MAXD + k] * y[k]
        y[i] = s / L[i * MAXD + i]
    for i in range(n - 1, -1, -1):
        s = y[i]
        for k in range(i + 1, n):
            s -= L[k * MAXD + i] * acc[start + k]
        acc[start + i] = s / L[i * MAXD + i]
    return 1


cdef Model _model(arr) except *:
    cdef Model m
    cdef const long long[::1] parent = arr.parent
    cdef const double[:, ::1] joint_offset = arr.joint_offset
    cdef const double[:, ::1] com = arr.com
    cdef const double[::1] mass = arr.mass
    cdef const double[::1] inertia = arr.inertia
    cdef const long long[::1] cp_body = arr.cp_body
    cdef const double[:, ::1] cp_local = arr.cp_local
    m.nb = parent.shape[0]
    if m.nb > MAXB:
        raise ValueError(f"compiled kernel supports at most {MAXB} bodies")
    m.nc = cp_body.shape[0]
    m.fixed_base = arr.fixed_base
    m.gravity = arr.gravity
    m.parent = &parent[0]
    m.joint_offset = &joint_offset[0, 0]
    m.com = &com[0, 0]
    m.mass = &mass[0]
    m.inertia = &inertia[0]
    m.cp_body = &cp_body[0] if m.nc > 0 else NULL
    m.cp_local = &cp_local[0, 0] if m.nc > 0 else NULL
    return m


cdef Contact _contact(const double[::1] cparams, const double[::1] tx, const double[::1] tz) except *:
    cdef Contact c
    if tx.shape[0] < 2 or tz.shape[0] != tx.shape[0]:
        raise ValueError("terrain needs at least two breakpoints")
    c.mu = cparams[0]
    c.k = cparams[1]
    c.c = cparams[2]
    c.e = cparams[3]
    c.ct = cparams[4]
    c.nt = tx.shape[0]
    c.tx = &tx[0]
    c.tz = &tz[0]
    return c


def body_kinematics(arr, const double[::1] q, const double[::1] v):
    cdef Model m = _model(arr)
    cdef Kin K
    _kinematics(&m, &q[0], &v[0], &K)
    nb = m.nb
    theta = np.array([K.theta[i] for i in range(nb)])
    org = np.array([[K.ox[i], K.oz[i]] for i in range(nb)])
    com = np.array([[K.cx[i], K.cz[i]] for i in range(nb)])
    omega = np.array([K.omega[i] for i in range(nb)])
    vorg = np.array([[K.vx[i], K.vz[i]] for i in range(nb)])
    return theta, org, com, omega, vorg


def mass_matrix(arr, const double[::1] q):
    cdef Model m = _model(arr)
    cdef Kin K
    cdef int ndof = m.nb + 2
    zeros = np.zeros(ndof)
    cdef double[::1] z = zeros
    _kinematics(&m, &q[0], &z[0], &K)
    out = np.empty((ndof, ndof))
    cdef double[:, ::1] M = out
    _mass_matrix(&m, &K, &M[0, 0])
    return out


def bias_forces(arr, const double[::1] q, const double[::1] v):
    cdef Model m = _model(arr)
    cdef Kin K
    _kinematics(&m, &q[0], &v[0], &K)
    out = np.empty(m.nb + 2)
    cdef double[::1] h = out
    _bias(&m, &K, &h[0])
    return out


def contact_forces(arr, const double[::1] q, const double[::1] v,
                   const double[::1] cparams, const double[::1] tx, const double[::1] tz):
    cdef Model m = _model(arr)
    cdef Contact ct = _contact(cparams, tx, tz)
    cdef Kin K
    _kinematics(&m, &q[0], &v[0], &K)
    Q_arr = np.zeros(m.nb + 2)
    bf_arr = np.zeros((m.nb, 2))
    tc_arr = np.zeros(m.nb, dtype=np.int8)
    cdef double[::1] Q = Q_arr
    cdef double[:, ::1] bf = bf_arr
    cdef char[::1] tc = tc_arr.view(np.int8)
    _contacts(&m, &K, &ct, &Q[0], &bf[0, 0], <char*>&tc[0], NULL)
    return Q_arr, bf_arr, tc_arr


def forward_dynamics(arr, const double[::1] q, const double[::1] v, const double[::1] tau,
                     const double[::1] cparams, const double[::1] tx, const double[::1] tz,
                     const double[::1] ext):
    cdef Model m = _model(arr)
    cdef Contact ct = _contact(cparams, tx, tz)
    cdef Kin K
    cdef int ndof = m.nb + 2
    cdef double M[MAXD * MAXD]
    cdef double Q[MAXD]
    cdef double h[MAXD]
    cdef double bf[2 * MAXB]
    cdef char tc[MAXB]
    cdef int i
    out = np.zeros(ndof)
    cdef double[::1] acc = out
    _kinematics(&m, &q[0], &v[0], &K)
    _mass_matrix(&m, &K, M)
    _bias(&m, &K, h)
    for i in range(ndof):
        Q[i] = 0.0
    _contacts(&m, &K, &ct, Q, bf, tc, NULL)
    for i in range(ndof):
        Q[i] -= h[i]
    for i in range(ndof - 3):
        Q[3 + i] += tau[i]
    Q[0] += ext[0]
    Q[1] += ext[1]
    Q[2] += ext[2]
    if not _solve(&m, M, Q, &acc[0]):
        raise SingularMassMatrix("mass matrix is not positive definite")
    return out


def pd_torque(kp, kd, friction, tau_max, q_des, q, qdot):
    tau = kp * (q_des - q) - kd * qdot - friction * np.sign(qdot)
    return np.clip(tau, -tau_max, tau_max)


def simulate(arr, double[::1] q, double[::1] v, const double[:, ::1] qdes,
             const double[::1] kp, const double[::1] kd, const double[::1] friction,
             const double[::1] tau_max, const double[::1] cparams,
             const double[::1] tx, const double[::1] tz, const double[::1] ext,
             long ext_ticks, double dt):
    """Advance ``qdes.shape[0]`` ticks in place (see ``_pykernels.simulate``)."""
    cdef Model m = _model(arr)
    cdef Contact ct = _contact(cparams, tx, tz)
    cdef Kin K
    cdef int ndof = m.nb + 2
    cdef int n = ndof - 3
    cdef int nticks = qdes.shape[0]
    cdef double M[MAXD * MAXD]
    cdef double Q[MAXD]
    cdef double h[MAXD]
    cdef double acc[MAXD]
    cdef double D[MAXD * MAXD]
    cdef double tau
    cdef int i, k, ok = 1, done = 0
    tau_mean_arr = np.zeros(n)
    bf_arr = np.zeros((m.nb, 2))
    tc_arr = np.zeros(m.nb, dtype=np.int8)
    cdef double[::1] tau_sum = tau_mean_arr
    cdef double[:, ::1] bf = bf_arr
    cdef char[::1] tc = tc_arr.view(np.int8)
    if q.shape[0] != ndof or v.shape[0] != ndof or qdes.shape[1] != n:
        raise ValueError("state / command dimensions do not match the model")
    with nogil:
        for k in range(nticks):
            _kinematics(&m, &q[0], &v[0], &K)
            _mass_matrix(&m, &K, M)
            _bias(&m, &K, h)
            for i in range(ndof):
                Q[i] = -h[i]
            for i in range(ndof * ndof):
                D[i] = 0.0
            for i in range(n):
                tau = kp[i] * (qdes[k, i] - q[3 + i]) - kd[i] * v[3 + i]
                if v[3 + i] > 0.0:
                    tau -= friction[i]
                elif v[3 + i] < 0.0:
                    tau += friction[i]
                if tau > tau_max[i]:
                    tau = tau_max[i]
                elif tau < -tau_max[i]:
                    tau = -tau_max[i]
                else:
                    D[(3 + i) * ndof + 3 + i] = kd[i]
                tau_sum[i] += tau
                Q[3 + i] += tau
            _contacts(&m, &K, &ct, Q, &bf[0, 0], <char*>&tc[0], D)
            for i in range(ndof * ndof):
                M[i] += dt * D[i]
            if ext_ticks > 0:
                Q[0] += ext[0]
                Q[1] += ext[1]
                Q[2] += ext[2]
                ext_ticks -= 1
            done = k + 1
            if not _solve(&m, M, Q, acc):
                ok = 0
                break
            for i in range(ndof):
                v[i] += acc[i] * dt
                q[i] += v[i] * dt
            for i in range(ndof):
                if not (isfinite(q[i]) and isfinite(v[i])):
                    ok = 0
            if not ok:
                break
    if done > 0:
        for i in range(n):
            tau_sum[i] /= done
    return ext_ticks, tau_mean_arr, bf_arr, tc_arr, bool(ok)


def point_kinematics(arr, const double[::1] q, const double[::1] v,
                     const long long[::1] bodies, const double[:, ::1] local):
    cdef Model m = _model(arr)
    cdef Kin K
    cdef int i, b, npts = bodies.shape[0]
    cdef double c, s, rx, rz
    _kinematics(&m, &q[0], &v[0], &K)
    pos_arr = np.empty((npts, 2))
    vel_arr = np.empty((npts, 2))
    ang_arr = np.empty(npts)
    cdef double[:, ::1] pos = pos_arr
    cdef double[:, ::1] vel = vel_arr
    cdef double[::1] ang = ang_arr
    for i in range(npts):
        b = <int>bodies[i]
        c = cos(K.theta[b])
        s = sin(K.theta[b])
        rx = c * local[i, 0] + s * local[i, 1]
        rz = -s * local[i, 0] + c * local[i, 1]
        pos[i, 0] = K.ox[b] + rx
        pos[i, 1] = K.oz[b] + rz
        vel[i, 0] = K.vx[b] + K.omega[b] * rz
        vel[i, 1] = K.vz[b] - K.omega[b] * rx
        ang[i] = K.theta[b]
    return pos_arr, vel_arr, ang_arr
