"""Pure-Python physics kernel: one control period of the quadruped surrogate.

This is the reference twin of the compiled kernel in ``_fast.pyx``. Both
perform the same double-precision operations in the same order, so their
outputs are bit-identical (the extension is built with FP contraction off).
Keep every expression scalar (math module, no numpy) when editing, and
mirror any change in the .pyx file.

Model summary
-------------
* 12 joints: torque-limited PD double-integrators with hard stops.
* A fixed trot clock alternates diagonal stance pairs and lifts swing feet.
* Stance-foot kinematic lean commands a base velocity; ground traction,
  capped by the friction cone, drives the base toward it. The external
  wrench enters base dynamics directly.
* Height follows a spring-damper toward the stance-leg kinematic height.
* Roll/pitch integrate traction moments, scaled external torque and a
  slip-churn moment against a saturating support-geometry restoring term;
  longitudinal support exceeds lateral support, which is what makes
  force-aligned yaw protective.
* Failure latches when height or tilt crosses the configured thresholds at
  any substep boundary, including the incoming state.
"""
from __future__ import annotations

import math

from . import layout as L

TWO_PI = 2.0 * math.pi


def kernel_step(state, params, q_target, erfi, wrench, gait_on, dt, substeps):
    """Advance one control period in place.

    state:    float64 array of layout.STATE_SIZE entries (mutated).
    params:   float64 array of layout.PARAM_SIZE entries (read-only).
    q_target: 12 PD position targets (stand pose + calibration bias + action).
    erfi:     12 actuator-noise torques held for the whole control period.
    wrench:   (fx, fy, fz, tx, ty, tz) external, world frame.
    gait_on:  truthy enables the trot clock and ground traction.
    """
    h = dt / substeps
    fx_ext = wrench[0]
    fy_ext = wrench[1]
    fz_ext = wrench[2]
    tx_ext = wrench[3]
    ty_ext = wrench[4]
    tz_ext = wrench[5]

    mass = params[L.P_MASS]
    iz = params[L.P_IZ]
    iatt = params[L.P_IATT]
    mu = params[L.P_MU]
    kp = params[L.P_KP]
    kd = params[L.P_KD]
    grav = params[L.P_GRAV]
    kgait = params[L.P_KGAIT]
    kgyaw = params[L.P_KGYAW]
    cdrag = params[L.P_CDRAG]
    cyawdrag = params[L.P_CYAWDRAG]
    kz = params[L.P_KZ]
    cz = params[L.P_CZ]
    catt = params[L.P_CATT]
    dx_sup = params[L.P_DX]
    dy_sup = params[L.P_DY]
    klean = params[L.P_KLEAN]
    kleanyaw = params[L.P_KLEANYAW]
    vlegmax = params[L.P_VLEGMAX]
    wlegmax = params[L.P_WLEGMAX]
    trotfreq = params[L.P_TROTFREQ]
    liftamp = params[L.P_LIFTAMP]
    jin = params[L.P_JINERTIA]
    taulim = params[L.P_TAULIM]
    qdlim = params[L.P_QDLIM]
    loadgain = params[L.P_LOADGAIN]
    failz = params[L.P_FAILZ]
    failtilt = params[L.P_FAILTILT]
    lt = params[L.P_LTHIGH]
    lc = params[L.P_LCALF]
    rollscale = params[L.P_ROLLSCALE]
    q0_thigh = params[L.P_QSTAND_THIGH]
    q0_calf = params[L.P_QSTAND_CALF]
    q0_hip = params[L.P_QSTAND_HIP]
    collz = params[L.P_COLLZ]
    colltilt = params[L.P_COLLTILT]
    qlim_hip = params[L.P_QLIM_HIP]
    qlim_thigh = params[L.P_QLIM_THIGH]
    qlim_calf = params[L.P_QLIM_CALF]
    text_scale = params[L.P_TAUEXT_SCALE]
    shx = params[L.P_SHOULDER_X]
    shy = params[L.P_SHOULDER_Y]
    yawlever = params[L.P_YAWLEVER]
    sliptolx = params[L.P_SLIPTOLX]
    sliptoly = params[L.P_SLIPTOLY]
    slipcap = params[L.P_SLIPCAP]
    slipcapy = params[L.P_SLIPCAPY]
    kslip = params[L.P_KSLIP]
    zairmax = params[L.P_ZAIRMAX]

    # Neutral (stand) foot position relative to its shoulder.
    ext0 = lt * math.cos(q0_thigh) + lc * math.cos(q0_thigh + q0_calf)
    footx0 = -lt * math.sin(q0_thigh) - lc * math.sin(q0_thigh + q0_calf)
    footy0 = math.sin(q0_hip) * ext0
    # Thigh offset cancelling the swing lift's first-order effect on foot x,
    # so landing transients do not command a net base velocity.
    lift_comp = lc * math.cos(q0_thigh + q0_calf) / ext0

    for i in range(4):
        state[L.TDCRED0 + i] = 0.0

    # A state already below the thresholds counts as failed regardless of
    # what this step does.
    tilt = abs(state[L.ROLL])
    if abs(state[L.PITCH]) > tilt:
        tilt = abs(state[L.PITCH])
    if state[L.PZ] < failz or tilt > failtilt:
        state[L.FAIL] = 1.0

    gait = 1 if gait_on else 0

    for _ in range(substeps):
        # --- gait clock; pair A = FL, RR swings while phase < 0.5 ---
        if gait:
            ph = state[L.PHASE] + trotfreq * h
            ph -= math.floor(ph)
            state[L.PHASE] = ph
        else:
            ph = state[L.PHASE]
        a_swing = ph < 0.5
        sprog = ph * 2.0 if a_swing else (ph - 0.5) * 2.0
        # Swing pattern completes at 80% of the swing so joints settle before
        # touchdown; traction fades in over early stance while feet grip.
        lift = liftamp * math.sin(math.pi * sprog / 0.8) if sprog < 0.8 else 0.0
        grip = sprog / 0.25
        if grip > 1.0:
            grip = 1.0

        # --- stance-foot kinematics -> lean -> commanded base velocity ---
        lean_x = 0.0
        lean_y = 0.0
        lean_w = 0.0
        zkin = 0.0
        n_st = 0
        for leg in range(4):
            swing = gait and (
                (a_swing and (leg == 0 or leg == 3))
                or ((not a_swing) and (leg == 1 or leg == 2))
            )
            if swing:
                continue
            qh = state[L.Q0 + 3 * leg]
            qt = state[L.Q0 + 3 * leg + 1]
            qc = state[L.Q0 + 3 * leg + 2]
            ext = lt * math.cos(qt) + lc * math.cos(qt + qc)
            fx = -lt * math.sin(qt) - lc * math.sin(qt + qc)
            fy = math.sin(qh) * ext
            dxl = fx - footx0
            dyl = fy - footy0
            nx = shx * L.LEG_SIGN_X[leg]
            ny = shy * L.LEG_SIGN_Y[leg]
            lean_x += dxl
            lean_y += dyl
            lean_w += (nx * dyl - ny * dxl) / (nx * nx + ny * ny)
            zkin += ext
            n_st += 1
        lean_x /= n_st
        lean_y /= n_st
        lean_w /= n_st
        zkin /= n_st
        state[L.ZKIN] = zkin

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
        state[L.VCMD_X] = vcmd_x
        state[L.VCMD_Y] = vcmd_y
        state[L.WCMD] = wcmd

        # --- support and friction-capped traction ---
        cy = math.cos(state[L.YAW])
        sy = math.sin(state[L.YAW])
        vbx = cy * state[L.VX] + sy * state[L.VY]
        vby = -sy * state[L.VX] + cy * state[L.VY]
        support = math.cos(state[L.ROLL]) * math.cos(state[L.PITCH])
        if support < 0.0:
            support = 0.0
        grounded = 1.0 if state[L.PZ] < zairmax else 0.0
        traction_on = grounded * grip if gait else 0.0
        cap = mu * mass * grav * support * traction_on
        ftx = kgait * mass * (vcmd_x - vbx) * traction_on
        fty = kgait * mass * (vcmd_y - vby) * traction_on
        fmag = math.sqrt(ftx * ftx + fty * fty)
        if fmag > cap and fmag > 0.0:
            scale = cap / fmag
            ftx *= scale
            fty *= scale
        state[L.FT_X] = ftx
        state[L.FT_Y] = fty
        tq_gait = kgyaw * iz * (wcmd - state[L.WZ]) * traction_on
        tqcap = cap * yawlever
        if tq_gait > tqcap:
            tq_gait = tqcap
        elif tq_gait < -tqcap:
            tq_gait = -tqcap

        # --- base linear dynamics (world frame, semi-implicit Euler) ---
        ax = (cy * ftx - sy * fty + fx_ext) / mass - cdrag * state[L.VX]
        ay = (sy * ftx + cy * fty + fy_ext) / mass - cdrag * state[L.VY]
        state[L.VX] += ax * h
        state[L.VY] += ay * h
        state[L.PX] += state[L.VX] * h
        state[L.PY] += state[L.VY] * h

        # --- height spring-damper toward kinematic stance height ---
        z_tgt = zkin * support
        az = kz * (z_tgt - state[L.PZ]) - cz * state[L.VZ] + fz_ext / mass
        state[L.VZ] += az * h
        state[L.PZ] += state[L.VZ] * h
        if state[L.PZ] < 0.02:
            state[L.PZ] = 0.02
            if state[L.VZ] < 0.0:
                state[L.VZ] = 0.0

        # --- attitude: traction + slip-churn moments vs saturating support ---
        slip_x = (vbx - vcmd_x) / sliptolx
        slip_y = (vby - vcmd_y) / sliptoly
        smag = math.sqrt(slip_x * slip_x + slip_y * slip_y)
        excess = smag - 1.0
        if excess < 0.0:
            excess = 0.0
        # Longitudinal churn saturates (legs backpedal indefinitely); lateral
        # churn keeps growing, so unaligned dragging eventually topples.
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
        cr = math.cos(state[L.ROLL])
        if cr < 0.0:
            cr = 0.0
        cp = math.cos(state[L.PITCH])
        if cp < 0.0:
            cp = 0.0
        restoring_roll = mass * grav * dy_sup * math.tanh(state[L.ROLL] / rollscale) * cr * grounded
        restoring_pitch = mass * grav * dx_sup * math.tanh(state[L.PITCH] / rollscale) * cp * grounded
        dwx = (
            state[L.PZ] * fty + text_scale * tbx + tau_slip_roll
            - restoring_roll - catt * state[L.WX]
        ) / iatt
        dwy = (
            -state[L.PZ] * ftx + text_scale * tby + tau_slip_pitch
            - restoring_pitch - catt * state[L.WY]
        ) / iatt
        state[L.WX] += dwx * h
        state[L.WY] += dwy * h
        state[L.ROLL] += state[L.WX] * h
        state[L.PITCH] += state[L.WY] * h
        if state[L.ROLL] > 1.6:
            state[L.ROLL] = 1.6
            if state[L.WX] > 0.0:
                state[L.WX] = 0.0
        elif state[L.ROLL] < -1.6:
            state[L.ROLL] = -1.6
            if state[L.WX] < 0.0:
                state[L.WX] = 0.0
        if state[L.PITCH] > 1.6:
            state[L.PITCH] = 1.6
            if state[L.WY] > 0.0:
                state[L.WY] = 0.0
        elif state[L.PITCH] < -1.6:
            state[L.PITCH] = -1.6
            if state[L.WY] < 0.0:
                state[L.WY] = 0.0

        # --- yaw ---
        state[L.WZ] += ((tq_gait + text_scale * tz_ext) / iz - cyawdrag * state[L.WZ]) * h
        state[L.YAW] += state[L.WZ] * h

        # --- joints: PD with actuator noise and stance load coupling ---
        # Stance legs yield under traction load (admittance-like deflection,
        # negative feedback into the lean loop and the force-observability
        # path for history-based policies).
        load_thigh = -loadgain * ftx / n_st
        load_hip = loadgain * fty / n_st
        for leg in range(4):
            swing = gait and (
                (a_swing and (leg == 0 or leg == 3))
                or ((not a_swing) and (leg == 1 or leg == 2))
            )
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
                tau = (
                    kp * (qt_cmd - state[L.Q0 + idx])
                    - kd * state[L.QD0 + idx]
                    + erfi[idx]
                    + load
                )
                if tau > taulim:
                    tau = taulim
                elif tau < -taulim:
                    tau = -taulim
                qd = state[L.QD0 + idx] + (tau / jin) * h
                if qd > qdlim:
                    qd = qdlim
                elif qd < -qdlim:
                    qd = -qdlim
                q = state[L.Q0 + idx] + qd * h
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
                state[L.Q0 + idx] = q
                state[L.QD0 + idx] = qd
                state[L.TAU0 + idx] = tau

        # --- contacts and air time ---
        contact_ok = grounded > 0.0 and support > 0.3
        for leg in range(4):
            swing = gait and (
                (a_swing and (leg == 0 or leg == 3))
                or ((not a_swing) and (leg == 1 or leg == 2))
            )
            in_contact = contact_ok and not swing
            was = state[L.CONTACT0 + leg] > 0.5
            if in_contact:
                if not was:
                    state[L.TDCRED0 + leg] += state[L.AIR0 + leg]
                state[L.AIR0 + leg] = 0.0
                state[L.CONTACT0 + leg] = 1.0
            else:
                state[L.AIR0 + leg] += h
                state[L.CONTACT0 + leg] = 0.0

        state[L.TIME] += h

        tilt = abs(state[L.ROLL])
        if abs(state[L.PITCH]) > tilt:
            tilt = abs(state[L.PITCH])
        if state[L.PZ] < failz or tilt > failtilt:
            state[L.FAIL] = 1.0

    tilt = abs(state[L.ROLL])
    if abs(state[L.PITCH]) > tilt:
        tilt = abs(state[L.PITCH])
    state[L.COLL] = 1.0 if (state[L.PZ] < collz or tilt > colltilt) else 0.0
    # Keep yaw bounded for long episodes; every use of it is periodic.
    yw = state[L.YAW]
    if yw > math.pi or yw <= -math.pi:
        yw = math.fmod(yw, TWO_PI)
        if yw <= -math.pi:
            yw += TWO_PI
        elif yw > math.pi:
            yw -= TWO_PI
        state[L.YAW] = yw
