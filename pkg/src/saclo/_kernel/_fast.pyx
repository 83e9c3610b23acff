# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of ``reference.kernel_step``.

Mirrors the pure-Python kernel operation for operation; built with FP
contraction disabled so results are bit-identical to the reference. Any
behavioral change must be made in both files.
"""

from libc.math cimport sin, cos, sqrt, tanh, fabs, floor, fmod

cdef double TWO_PI = 6.283185307179586476925286766559

# Layout indices; keep in sync with layout.py.
cdef enum:
    PX = 0
    PY = 1
    PZ = 2
    YAW = 3
    ROLL = 4
    PITCH = 5
    VX = 6
    VY = 7
    VZ = 8
    WX = 9
    WY = 10
    WZ = 11
    PHASE = 12
    TIME = 13
    Q0 = 14
    QD0 = 26
    TAU0 = 38
    CONTACT0 = 50
    AIR0 = 54
    TDCRED0 = 58
    FAIL = 62
    COLL = 63
    FT_X = 64
    FT_Y = 65
    VCMD_X = 66
    VCMD_Y = 67
    WCMD = 68
    ZKIN = 69

cdef enum:
    P_MASS = 0
    P_IZ = 1
    P_IATT = 2
    P_MU = 3
    P_KP = 4
    P_KD = 5
    P_GRAV = 6
    P_KGAIT = 7
    P_KGYAW = 8
    P_CDRAG = 9
    P_CYAWDRAG = 10
    P_KZ = 11
    P_CZ = 12
    P_CATT = 13
    P_DX = 14
    P_DY = 15
    P_KLEAN = 16
    P_KLEANYAW = 17
    P_VLEGMAX = 18
    P_WLEGMAX = 19
    P_TROTFREQ = 20
    P_LIFTAMP = 21
    P_JINERTIA = 22
    P_TAULIM = 23
    P_QDLIM = 24
    P_LOADGAIN = 25
    P_FAILZ = 26
    P_FAILTILT = 27
    P_LTHIGH = 28
    P_LCALF = 29
    P_ROLLSCALE = 30
    P_QSTAND_HIP = 31
    P_QSTAND_THIGH = 32
    P_QSTAND_CALF = 33
    P_COLLZ = 34
    P_COLLTILT = 35
    P_QLIM_HIP = 36
    P_QLIM_THIGH = 37
    P_QLIM_CALF = 38
    P_TAUEXT_SCALE = 39
    P_SHOULDER_X = 40
    P_SHOULDER_Y = 41
    P_YAWLEVER = 42
    P_SLIPTOLX = 43
    P_SLIPTOLY = 44
    P_SLIPCAP = 45
    P_KSLIP = 46
    P_ZAIRMAX = 47
    P_SLIPCAPY = 48

cdef double PI = 3.14159265358979323846264338327950288


def kernel_step(double[::1] state, double[::1] params, double[::1] q_target,
                double[::1] erfi, double[::1] wrench, gait_on,
                double dt, int substeps):
    cdef double h = dt / substeps
    cdef double fx_ext = wrench[0]
    cdef double fy_ext = wrench[1]
    cdef double fz_ext = wrench[2]
    cdef double tx_ext = wrench[3]
    cdef double ty_ext = wrench[4]
    cdef double tz_ext = wrench[5]

    cdef double mass = params[P_MASS]
    cdef double iz = params[P_IZ]
    cdef double iatt = params[P_IATT]
    cdef double mu = params[P_MU]
    cdef double kp = params[P_KP]
    cdef double kd = params[P_KD]
    cdef double grav = params[P_GRAV]
    cdef double kgait = params[P_KGAIT]
    cdef double kgyaw = params[P_KGYAW]
    cdef double cdrag = params[P_CDRAG]
    cdef double cyawdrag = params[P_CYAWDRAG]
    cdef double kz = params[P_KZ]
    cdef double cz = params[P_CZ]
    cdef double catt = params[P_CATT]
    cdef double dx_sup = params[P_DX]
    cdef double dy_sup = params[P_DY]
    cdef double klean = params[P_KLEAN]
    cdef double kleanyaw = params[P_KLEANYAW]
    cdef double vlegmax = params[P_VLEGMAX]
    cdef double wlegmax = params[P_WLEGMAX]
    cdef double trotfreq = params[P_TROTFREQ]
    cdef double liftamp = params[P_LIFTAMP]
    cdef double jin = params[P_JINERTIA]
    cdef double taulim = params[P_TAULIM]
    cdef double qdlim = params[P_QDLIM]
    cdef double loadgain = params[P_LOADGAIN]
    cdef double failz = params[P_FAILZ]
    cdef double failtilt = params[P_FAILTILT]
    cdef double lt = params[P_LTHIGH]
    cdef double lc = params[P_LCALF]
    cdef double rollscale = params[P_ROLLSCALE]
    cdef double q0_thigh = params[P_QSTAND_THIGH]
    cdef double q0_calf = params[P_QSTAND_CALF]
    cdef double q0_hip = params[P_QSTAND_HIP]
    cdef double collz = params[P_COLLZ]
    cdef double colltilt = params[P_COLLTILT]
    cdef double qlim_hip = params[P_QLIM_HIP]
    cdef double qlim_thigh = params[P_QLIM_THIGH]
    cdef double qlim_calf = params[P_QLIM_CALF]
    cdef double text_scale = params[P_TAUEXT_SCALE]
    cdef double shx = params[P_SHOULDER_X]
    cdef double shy = params[P_SHOULDER_Y]
    cdef double yawlever = params[P_YAWLEVER]
    cdef double sliptolx = params[P_SLIPTOLX]
    cdef double sliptoly = params[P_SLIPTOLY]
    cdef double slipcap = params[P_SLIPCAP]
    cdef double slipcapy = params[P_SLIPCAPY]
    cdef double kslip = params[P_KSLIP]
    cdef double zairmax = params[P_ZAIRMAX]

    cdef double leg_sign_x[4]
    cdef double leg_sign_y[4]
    leg_sign_x[0] = 1.0; leg_sign_x[1] = 1.0; leg_sign_x[2] = -1.0; leg_sign_x[3] = -1.0
    leg_sign_y[0] = 1.0; leg_sign_y[1] = -1.0; leg_sign_y[2] = 1.0; leg_sign_y[3] = -1.0

    cdef double ext0 = lt * cos(q0_thigh) + lc * cos(q0_thigh + q0_calf)
    cdef double footx0 = -lt * sin(q0_thigh) - lc * sin(q0_thigh + q0_calf)
    cdef double footy0 = sin(q0_hip) * ext0
    cdef double lift_comp = lc * cos(q0_thigh + q0_calf) / ext0

    cdef int i, leg, j, idx, sub
    cdef int gait = 1 if gait_on else 0

    for i in range(4):
        state[TDCRED0 + i] = 0.0

    cdef double tilt = fabs(state[ROLL])
    if fabs(state[PITCH]) > tilt:
        tilt = fabs(state[PITCH])
    if state[PZ] < failz or tilt > failtilt:
        state[FAIL] = 1.0

    cdef double ph, sprog, lift, grip
    cdef bint a_swing, swing, in_contact, was, contact_ok
    cdef double lean_x, lean_y, lean_w, zkin
    cdef int n_st
    cdef double qh, qt, qc, ext, fx, fy, dxl, dyl, nx, ny
    cdef double vcmd_x, vcmd_y, wcmd
    cdef double cy, sy, vbx, vby, support, grounded, traction_on, cap
    cdef double ftx, fty, fmag, scale, tq_gait, tqcap
    cdef double ax, ay, z_tgt, az
    cdef double slip_x, slip_y, smag, excess, ex_x, ex_y, tau_slip_pitch, tau_slip_roll
    cdef double tbx, tby, cr, cp, restoring_roll, restoring_pitch, dwx, dwy
    cdef double load_thigh, load_hip, qt_cmd, load, tau, qd, q, ql, yw

    for sub in range(substeps):
        if gait:
            ph = state[PHASE] + trotfreq * h
            ph -= floor(ph)
            state[PHASE] = ph
        else:
            ph = state[PHASE]
        a_swing = ph < 0.5
        sprog = ph * 2.0 if a_swing else (ph - 0.5) * 2.0
        lift = liftamp * sin(PI * sprog / 0.8) if sprog < 0.8 else 0.0
        grip = sprog / 0.25
        if grip > 1.0:
            grip = 1.0

        lean_x = 0.0
        lean_y = 0.0
        lean_w = 0.0
        zkin = 0.0
        n_st = 0
        for leg in range(4):
            swing = gait and ((a_swing and (leg == 0 or leg == 3))
                              or ((not a_swing) and (leg == 1 or leg == 2)))
            if swing:
                continue
            qh = state[Q0 + 3 * leg]
            qt = state[Q0 + 3 * leg + 1]
            qc = state[Q0 + 3 * leg + 2]
            ext = lt * cos(qt) + lc * cos(qt + qc)
            fx = -lt * sin(qt) - lc * sin(qt + qc)
            fy = sin(qh) * ext
            dxl = fx - footx0
            dyl = fy - footy0
            nx = shx * leg_sign_x[leg]
            ny = shy * leg_sign_y[leg]
            lean_x += dxl
            lean_y += dyl
            lean_w += (nx * dyl - ny * dxl) / (nx * nx + ny * ny)
            zkin += ext
            n_st += 1
        lean_x /= n_st
        lean_y /= n_st
        lean_w /= n_st
        zkin /= n_st
        state[ZKIN] = zkin

        vcmd_x = -klean * lean_x
        if vcmd_x > vlegmax:
            vcmd_x = vlegmax
        elif vcmd_x < -vlegmax:
            vcmd_x = -vlegmax
        vcmd_y = -klean * lean_y
        if vcmd_y > vlegmax:
            vcmd_y = vlegmax
        elif vcmd_y < -vlegmax:
            vcmd_y = -vlegmax
        wcmd = -kleanyaw * lean_w
        if wcmd > wlegmax:
            wcmd = wlegmax
        elif wcmd < -wlegmax:
            wcmd = -wlegmax
        state[VCMD_X] = vcmd_x
        state[VCMD_Y] = vcmd_y
        state[WCMD] = wcmd

        cy = cos(state[YAW])
        sy = sin(state[YAW])
        vbx = cy * state[VX] + sy * state[VY]
        vby = -sy * state[VX] + cy * state[VY]
        support = cos(state[ROLL]) * cos(state[PITCH])
        if support < 0.0:
            support = 0.0
        grounded = 1.0 if state[PZ] < zairmax else 0.0
        traction_on = grounded * grip if gait else 0.0
        cap = mu * mass * grav * support * traction_on
        ftx = kgait * mass * (vcmd_x - vbx) * traction_on
        fty = kgait * mass * (vcmd_y - vby) * traction_on
        fmag = sqrt(ftx * ftx + fty * fty)
        if fmag > cap and fmag > 0.0:
            scale = cap / fmag
            ftx *= scale
            fty *= scale
        state[FT_X] = ftx
        state[FT_Y] = fty
        tq_gait = kgyaw * iz * (wcmd - state[WZ]) * traction_on
        tqcap = cap * yawlever
        if tq_gait > tqcap:
            tq_gait = tqcap
        elif tq_gait < -tqcap:
            tq_gait = -tqcap

        ax = (cy * ftx - sy * fty + fx_ext) / mass - cdrag * state[VX]
        ay = (sy * ftx + cy * fty + fy_ext) / mass - cdrag * state[VY]
        state[VX] += ax * h
        state[VY] += ay * h
        state[PX] += state[VX] * h
        state[PY] += state[VY] * h

        z_tgt = zkin * support
        az = kz * (z_tgt - state[PZ]) - cz * state[VZ] + fz_ext / mass
        state[VZ] += az * h
        state[PZ] += state[VZ] * h
        if state[PZ] < 0.02:
            state[PZ] = 0.02
            if state[VZ] < 0.0:
                state[VZ] = 0.0

        slip_x = (vbx - vcmd_x) / sliptolx
        slip_y = (vby - vcmd_y) / sliptoly
        smag = sqrt(slip_x * slip_x + slip_y * slip_y)
        excess = smag - 1.0
        if excess < 0.0:
            excess = 0.0
        ex_x = excess if excess < slipcap else slipcap
        ex_y = excess if excess < slipcapy else slipcapy
        if smag > 0.0:
            tau_slip_pitch = kslip * ex_x * (slip_x / smag) * traction_on
            tau_slip_roll = -kslip * ex_y * (slip_y / smag) * traction_on
        else:
            tau_slip_pitch = 0.0
            tau_slip_roll = 0.0
        tbx = cy * tx_ext + sy * ty_ext
        tby = -sy * tx_ext + cy * ty_ext
        cr = cos(state[ROLL])
        if cr < 0.0:
            cr = 0.0
        cp = cos(state[PITCH])
        if cp < 0.0:
            cp = 0.0
        restoring_roll = mass * grav * dy_sup * tanh(state[ROLL] / rollscale) * cr * grounded
        restoring_pitch = mass * grav * dx_sup * tanh(state[PITCH] / rollscale) * cp * grounded
        dwx = (state[PZ] * fty + text_scale * tbx + tau_slip_roll
               - restoring_roll - catt * state[WX]) / iatt
        dwy = (-state[PZ] * ftx + text_scale * tby + tau_slip_pitch
               - restoring_pitch - catt * state[WY]) / iatt
        state[WX] += dwx * h
        state[WY] += dwy * h
        state[ROLL] += state[WX] * h
        state[PITCH] += state[WY] * h
        if state[ROLL] > 1.6:
            state[ROLL] = 1.6
            if state[WX] > 0.0:
                state[WX] = 0.0
        elif state[ROLL] < -1.6:
            state[ROLL] = -1.6
            if state[WX] < 0.0:
                state[WX] = 0.0
        if state[PITCH] > 1.6:
            state[PITCH] = 1.6
            if state[WY] > 0.0:
                state[WY] = 0.0
        elif state[PITCH] < -1.6:
            state[PITCH] = -1.6
            if state[WY] < 0.0:
                state[WY] = 0.0

        state[WZ] += ((tq_gait + text_scale * tz_ext) / iz - cyawdrag * state[WZ]) * h
        state[YAW] += state[WZ] * h

        load_thigh = -loadgain * ftx / n_st
        load_hip = loadgain * fty / n_st
        for leg in range(4):
            swing = gait and ((a_swing and (leg == 0 or leg == 3))
                              or ((not a_swing) and (leg == 1 or leg == 2)))
            for j in range(3):
                idx = 3 * leg + j
                qt_cmd = q_target[idx]
                if swing:
                    if j == 1:
                        qt_cmd += 2.0 * lift_comp * lift
                    elif j == 2:
                        qt_cmd -= 2.0 * lift
                load = 0.0
                if not swing:
                    if j == 0:
                        load = load_hip
                    elif j == 1:
                        load = load_thigh
                tau = (kp * (qt_cmd - state[Q0 + idx])
                       - kd * state[QD0 + idx] + erfi[idx] + load)
                if tau > taulim:
                    tau = taulim
                elif tau < -taulim:
                    tau = -taulim
                qd = state[QD0 + idx] + (tau / jin) * h
                if qd > qdlim:
                    qd = qdlim
                elif qd < -qdlim:
                    qd = -qdlim
                q = state[Q0 + idx] + qd * h
                if j == 0:
                    ql = qlim_hip
                elif j == 1:
                    ql = qlim_thigh
                else:
                    ql = qlim_calf
                if q > ql:
                    q = ql
                    if qd > 0.0:
                        qd = 0.0
                elif q < -ql:
                    q = -ql
                    if qd < 0.0:
                        qd = 0.0
                state[Q0 + idx] = q
                state[QD0 + idx] = qd
                state[TAU0 + idx] = tau

        contact_ok = grounded > 0.0 and support > 0.3
        for leg in range(4):
            swing = gait and ((a_swing and (leg == 0 or leg == 3))
                              or ((not a_swing) and (leg == 1 or leg == 2)))
            in_contact = contact_ok and not swing
            was = state[CONTACT0 + leg] > 0.5
            if in_contact:
                if not was:
                    state[TDCRED0 + leg] += state[AIR0 + leg]
                state[AIR0 + leg] = 0.0
                state[CONTACT0 + leg] = 1.0
            else:
                state[AIR0 + leg] += h
                state[CONTACT0 + leg] = 0.0

        state[TIME] += h

        tilt = fabs(state[ROLL])
        if fabs(state[PITCH]) > tilt:
            tilt = fabs(state[PITCH])
        if state[PZ] < failz or tilt > failtilt:
            state[FAIL] = 1.0

    tilt = fabs(state[ROLL])
    if fabs(state[PITCH]) > tilt:
        tilt = fabs(state[PITCH])
    state[COLL] = 1.0 if (state[PZ] < collz or tilt > colltilt) else 0.0
    yw = state[YAW]
    if yw > PI or yw <= -PI:
        yw = fmod(yw, TWO_PI)
        if yw <= -PI:
            yw += TWO_PI
        elif yw > PI:
            yw -= TWO_PI
        state[YAW] = yw
