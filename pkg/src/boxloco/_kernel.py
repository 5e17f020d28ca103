"""Jitted inner-loop for the reduced-order world.

State and parameter vectors are flat float64 arrays so the 2 kHz substep
loop can run under numba. Layout constants below are the single source of
truth; `physics.py` owns construction/extraction.

Model summary:
  * torso: floating rigid body, 6 PD-actuated pose DoF realized as a leg
    wrench that the ground supplies while feet are in stance. The center
    of pressure implied by the requested wrench is clamped to the support
    polygon; the torque shortfall from clamping is applied as a tipping
    angular acceleration (Fz * cop-violation lever).
  * hands: PD-driven point masses in the base yaw frame with gravity
    feedforward; reaction wrenches act back on the torso.
  * feet: two kinematic ground points; a clock-driven gait swaps
    stance/swing when active, with a short double-support window.
  * box: rigid cuboid; corner contacts against ground/table and face-patch
    contacts against the hands. Penalty normal force
    N = max(0, k_n*depth - d_n*v_separation) and regularized Coulomb
    friction |F_t| = min(mu*N, k_t*|v_slip|).
"""
import numpy as np
from numba import njit

# --- state layout ---------------------------------------------------------
S_BASE_POS = 0      # 3
S_BASE_QUAT = 3     # 4 (w, x, y, z)
S_BASE_LV = 7       # 3
S_BASE_AV = 10      # 3
S_HANDL_POS = 13    # 3
S_HANDL_VEL = 16    # 3
S_HANDR_POS = 19    # 3
S_HANDR_VEL = 22    # 3
S_FOOTL_POS = 25    # 3
S_FOOTR_POS = 28    # 3
S_FOOTL_VEL = 31    # 3
S_FOOTR_VEL = 34    # 3
S_FOOT_STANCE = 37  # 2 (gait role: 1 = stance)
S_FOOT_YAW = 39     # 2
S_COP = 41          # 2
S_SUPPORT = 43      # 1 (ground wrench active this substep)
S_GAIT_PHASE = 44   # 1
S_GAIT_ACTIVE = 45  # 1
S_GAIT_CMD = 46     # 3 (vx, vy, yaw_rate in the stance heading frame)
S_SWING_ANCHOR_L = 49  # 3
S_SWING_ANCHOR_R = 52  # 3
S_BOX_POS = 55      # 3
S_BOX_QUAT = 58     # 4
S_BOX_LV = 62       # 3
S_BOX_AV = 65       # 3
S_BOX_ACC = 68      # 3 (mean over the last policy tick)
S_BOX_CONTACT = 71  # 4 (hand_L, hand_R, table, ground)
S_BOX_FHL = 75      # 3 (force on box from left hand)
S_BOX_FHR = 78      # 3
S_BOX_FTABLE = 81   # 3
S_GROUND_STREAK = 84
S_ROBOT_TABLE = 85  # latched over the tick
S_ACT_FORCE = 86    # 12
S_TIME = 98
S_REF_YAW = 99
S_SELF_COLL = 100   # latched over the tick
S_REF_ORIGIN = 101  # 2: world xy of the scenario frame origin
NSTATE = 103

# --- parameter layout -----------------------------------------------------
P_GRAVITY = 0
P_DT = 1
P_KN = 2
P_DN = 3
P_MU = 4
P_KT = 5
P_HAND_MASS = 6
P_TORSO_MASS = 7
P_TABLE_H = 8       # 0 -> no table
P_TABLE_X = 9
P_TABLE_Y = 10
P_TABLE_YAW = 11
P_TABLE_HEX = 12
P_TABLE_HEY = 13
P_SUP_HX = 14
P_SUP_HY = 15
P_KP = 16           # 12
P_KD = 28           # 12
P_BOX_DIMS = 40     # 3
P_BOX_MASS = 43
P_TORSO_I = 44      # 3 (diagonal)
P_COM_OFF = 47      # 3
P_GAIT_PERIOD = 50
P_SWING_H = 51
P_STANCE_WIDTH = 52
P_DSP_FRAC = 53     # double-support fraction of each half cycle
NPARAMS = 54

# --- contact record slots: [normal N, tangent0, tangent1, penetration] ----
REC_GROUND = 0      # 8 box corners vs ground
REC_TABLE = 8       # 8 box corners vs table top
REC_HAND_L = 16
REC_HAND_R = 17
REC_FOOT_L = 18
REC_FOOT_R = 19
NREC = 20

SELF_COLLISION_HAND_DIST = 0.06
TORSO_CAPSULE_RADIUS = 0.12
TORSO_CAPSULE_HALFLEN = 0.25
TORSO_LOWER_REACH = 0.45    # probe point below the base for table contact
TABLE_DEPTH_WINDOW = 0.2    # corners deeper than this are beside the table
TABLE_APRON = 0.04          # hand-vs-tabletop contact band (tabletop thickness)

# actuator setpoint limits (the arm workspace and sane base-pose commands);
# requested setpoints saturate here before the PD sees them
SETPOINT_MIN = np.array([-0.35, -0.35, 0.5, -0.7, -0.7, -1.0,
                         -0.2, -0.85, -0.6, -0.2, -0.85, -0.6])
SETPOINT_MAX = np.array([0.35, 0.35, 1.15, 0.7, 0.7, 1.0,
                         0.85, 0.85, 0.6, 0.85, 0.85, 0.6])

HAND_RADIUS = 0.01  # the point effectors contact box faces as small spheres


@njit(cache=True)
def _qrot(qw, qx, qy, qz, vx, vy, vz):
    uvx = qy * vz - qz * vy + qw * vx
    uvy = qz * vx - qx * vz + qw * vy
    uvz = qx * vy - qy * vx + qw * vz
    return (vx + 2.0 * (qy * uvz - qz * uvy),
            vy + 2.0 * (qz * uvx - qx * uvz),
            vz + 2.0 * (qx * uvy - qy * uvx))


@njit(cache=True)
def _qrot_inv(qw, qx, qy, qz, vx, vy, vz):
    return _qrot(qw, -qx, -qy, -qz, vx, vy, vz)


@njit(cache=True)
def _quat_yaw(qw, qx, qy, qz):
    return np.arctan2(2.0 * (qw * qz + qx * qy), 1.0 - 2.0 * (qy * qy + qz * qz))


@njit(cache=True)
def _quat_rpy(qw, qx, qy, qz):
    roll = np.arctan2(2.0 * (qw * qx + qy * qz), 1.0 - 2.0 * (qx * qx + qy * qy))
    s = 2.0 * (qw * qy - qz * qx)
    if s > 1.0:
        s = 1.0
    elif s < -1.0:
        s = -1.0
    pitch = np.arcsin(s)
    yaw = np.arctan2(2.0 * (qw * qz + qx * qy), 1.0 - 2.0 * (qy * qy + qz * qz))
    return roll, pitch, yaw


@njit(cache=True)
def _wrap(a):
    return np.arctan2(np.sin(a), np.cos(a))


@njit(cache=True)
def _integrate_quat(state, off, wx, wy, wz, dt):
    qw, qx, qy, qz = state[off], state[off + 1], state[off + 2], state[off + 3]
    dw = 0.5 * (-wx * qx - wy * qy - wz * qz)
    dx = 0.5 * (wx * qw + wy * qz - wz * qy)
    dy = 0.5 * (wy * qw + wz * qx - wx * qz)
    dz = 0.5 * (wz * qw + wx * qy - wy * qx)
    qw += dw * dt
    qx += dx * dt
    qy += dy * dt
    qz += dz * dt
    inv = 1.0 / np.sqrt(qw * qw + qx * qx + qy * qy + qz * qz)
    state[off] = qw * inv
    state[off + 1] = qx * inv
    state[off + 2] = qy * inv
    state[off + 3] = qz * inv


@njit(cache=True)
def _in_table_patch(params, px, py):
    c = np.cos(params[P_TABLE_YAW])
    s = np.sin(params[P_TABLE_YAW])
    dx = px - params[P_TABLE_X]
    dy = py - params[P_TABLE_Y]
    lx = c * dx + s * dy
    ly = -s * dx + c * dy
    return abs(lx) <= params[P_TABLE_HEX] and abs(ly) <= params[P_TABLE_HEY]


@njit(cache=True)
def _point_in_table(params, px, py, pz):
    """Torso probe: anywhere inside the table's slab volume."""
    th = params[P_TABLE_H]
    if th <= 0.0 or pz >= th or pz <= 0.0:
        return False
    return _in_table_patch(params, px, py)


@njit(cache=True)
def hand_in_table_apron(params, px, py, pz):
    """Hand-vs-table contact: the band just under the tabletop surface."""
    th = params[P_TABLE_H]
    if th <= 0.0 or pz >= th or pz <= th - TABLE_APRON:
        return False
    return _in_table_patch(params, px, py)


@njit(cache=True)
def _hand_box_contact(params, hx, hy, hz, hvx, hvy, hvz, state, side, rec):
    """Contact force on one hand against its transverse box face.

    side = +1 for the left hand (+y face), -1 for the right (-y face).
    Returns (fx, fy, fz) on the hand; force on the box is the negative.
    Fills the contact record slot with (N, tangent in face coords, depth).
    """
    bw, bx, by, bz = state[S_BOX_QUAT], state[S_BOX_QUAT + 1], state[S_BOX_QUAT + 2], state[S_BOX_QUAT + 3]
    rx = hx - state[S_BOX_POS]
    ry = hy - state[S_BOX_POS + 1]
    rz = hz - state[S_BOX_POS + 2]
    lx, ly, lz = _qrot_inv(bw, bx, by, bz, rx, ry, rz)
    half_l = 0.5 * params[P_BOX_DIMS]
    half_w = 0.5 * params[P_BOX_DIMS + 1]
    half_h = 0.5 * params[P_BOX_DIMS + 2]
    depth = half_w + HAND_RADIUS - side * ly
    if depth <= 0.0 or depth > half_w:
        return 0.0, 0.0, 0.0, False
    if abs(lx) > half_l or abs(lz) > half_h:
        return 0.0, 0.0, 0.0, False
    # outward face normal in world coordinates
    nx, ny, nz = _qrot(bw, bx, by, bz, 0.0, side * 1.0, 0.0)
    # box surface point velocity = v_box + w x r
    wx_, wy_, wz_ = state[S_BOX_AV], state[S_BOX_AV + 1], state[S_BOX_AV + 2]
    bvx = state[S_BOX_LV] + (wy_ * rz - wz_ * ry)
    bvy = state[S_BOX_LV + 1] + (wz_ * rx - wx_ * rz)
    bvz = state[S_BOX_LV + 2] + (wx_ * ry - wy_ * rx)
    relx = hvx - bvx
    rely = hvy - bvy
    relz = hvz - bvz
    v_sep = relx * nx + rely * ny + relz * nz
    normal = params[P_KN] * depth - params[P_DN] * v_sep
    if normal <= 0.0:
        return 0.0, 0.0, 0.0, False
    # slip of the hand over the face
    tx = relx - v_sep * nx
    ty = rely - v_sep * ny
    tz = relz - v_sep * nz
    slip = np.sqrt(tx * tx + ty * ty + tz * tz)
    ft = min(params[P_MU] * normal, params[P_KT] * slip)
    if slip > 1e-12:
        fx = normal * nx - ft * tx / slip
        fy = normal * ny - ft * ty / slip
        fz = normal * nz - ft * tz / slip
    else:
        ft = 0.0
        fx = normal * nx
        fy = normal * ny
        fz = normal * nz
    # record tangent (on-box) along the face's in-plane axes (box x and z)
    axx, axy, axz = _qrot(bw, bx, by, bz, 1.0, 0.0, 0.0)
    azx, azy, azz = _qrot(bw, bx, by, bz, 0.0, 0.0, 1.0)
    if slip > 1e-12:
        tbx = ft * tx / slip
        tby = ft * ty / slip
        tbz = ft * tz / slip
    else:
        tbx = 0.0
        tby = 0.0
        tbz = 0.0
    slot = REC_HAND_L if side > 0 else REC_HAND_R
    rec[slot, 0] = normal
    rec[slot, 1] = tbx * axx + tby * axy + tbz * axz
    rec[slot, 2] = tbx * azx + tby * azy + tbz * azz
    rec[slot, 3] = depth
    return fx, fy, fz, True


@njit(cache=True)
def contact_pass(state, params, rec, out):
    """All contact forces/torques from the current state, no integration.

    rec: (NREC, 4) records. out (length 14):
      0:3  net force on box
      3:6  net torque on box (about its center)
      6:9  force on left hand
      9:12 force on right hand
      12   box-table contact flag
      13   box-ground contact flag
    """
    for i in range(NREC):
        rec[i, 0] = 0.0
        rec[i, 1] = 0.0
        rec[i, 2] = 0.0
        rec[i, 3] = 0.0
    for i in range(14):
        out[i] = 0.0

    bw, bx, by, bz = state[S_BOX_QUAT], state[S_BOX_QUAT + 1], state[S_BOX_QUAT + 2], state[S_BOX_QUAT + 3]
    px, py, pz = state[S_BOX_POS], state[S_BOX_POS + 1], state[S_BOX_POS + 2]
    vx, vy, vz = state[S_BOX_LV], state[S_BOX_LV + 1], state[S_BOX_LV + 2]
    wx, wy, wz = state[S_BOX_AV], state[S_BOX_AV + 1], state[S_BOX_AV + 2]
    half_l = 0.5 * params[P_BOX_DIMS]
    half_w = 0.5 * params[P_BOX_DIMS + 1]
    half_h = 0.5 * params[P_BOX_DIMS + 2]
    kn = params[P_KN]
    dn = params[P_DN]
    mu = params[P_MU]
    kt = params[P_KT]
    table_h = params[P_TABLE_H]
    tc = np.cos(params[P_TABLE_YAW])
    ts = np.sin(params[P_TABLE_YAW])

    corner = 0
    for sx in (-1.0, 1.0):
        for sy in (-1.0, 1.0):
            for sz in (-1.0, 1.0):
                cx, cy, cz = _qrot(bw, bx, by, bz, sx * half_l, sy * half_w, sz * half_h)
                wx_c = px + cx
                wy_c = py + cy
                wz_c = pz + cz
                cvx = vx + (wy * cz - wz * cy)
                cvy = vy + (wz * cx - wx * cz)
                cvz = vz + (wx * cy - wy * cx)
                # ground plane z = 0
                if wz_c < 0.0:
                    depth = -wz_c
                    normal = kn * depth - dn * cvz
                    if normal > 0.0:
                        slip = np.sqrt(cvx * cvx + cvy * cvy)
                        ft = min(mu * normal, kt * slip)
                        if slip > 1e-12:
                            fx = -ft * cvx / slip
                            fy = -ft * cvy / slip
                        else:
                            fx = 0.0
                            fy = 0.0
                        out[0] += fx
                        out[1] += fy
                        out[2] += normal
                        out[3] += cy * normal - cz * fy
                        out[4] += cz * fx - cx * normal
                        out[5] += cx * fy - cy * fx
                        rec[REC_GROUND + corner, 0] = normal
                        rec[REC_GROUND + corner, 1] = fx
                        rec[REC_GROUND + corner, 2] = fy
                        rec[REC_GROUND + corner, 3] = depth
                        out[13] = 1.0
                # table top patch
                if table_h > 0.0 and wz_c < table_h and wz_c > table_h - TABLE_DEPTH_WINDOW:
                    dx = wx_c - params[P_TABLE_X]
                    dy = wy_c - params[P_TABLE_Y]
                    lx = tc * dx + ts * dy
                    ly = -ts * dx + tc * dy
                    if abs(lx) <= params[P_TABLE_HEX] and abs(ly) <= params[P_TABLE_HEY]:
                        depth = table_h - wz_c
                        normal = kn * depth - dn * cvz
                        if normal > 0.0:
                            slip = np.sqrt(cvx * cvx + cvy * cvy)
                            ft = min(mu * normal, kt * slip)
                            if slip > 1e-12:
                                fx = -ft * cvx / slip
                                fy = -ft * cvy / slip
                            else:
                                fx = 0.0
                                fy = 0.0
                            out[0] += fx
                            out[1] += fy
                            out[2] += normal
                            out[3] += cy * normal - cz * fy
                            out[4] += cz * fx - cx * normal
                            out[5] += cx * fy - cy * fx
                            rec[REC_TABLE + corner, 0] = normal
                            rec[REC_TABLE + corner, 1] = fx
                            rec[REC_TABLE + corner, 2] = fy
                            rec[REC_TABLE + corner, 3] = depth
                            out[12] = 1.0
                corner += 1

    # hands against the transverse faces
    flx, fly, flz, active_l = _hand_box_contact(
        params, state[S_HANDL_POS], state[S_HANDL_POS + 1], state[S_HANDL_POS + 2],
        state[S_HANDL_VEL], state[S_HANDL_VEL + 1], state[S_HANDL_VEL + 2],
        state, 1.0, rec)
    frx, fry, frz, active_r = _hand_box_contact(
        params, state[S_HANDR_POS], state[S_HANDR_POS + 1], state[S_HANDR_POS + 2],
        state[S_HANDR_VEL], state[S_HANDR_VEL + 1], state[S_HANDR_VEL + 2],
        state, -1.0, rec)
    out[6] = flx
    out[7] = fly
    out[8] = flz
    out[9] = frx
    out[10] = fry
    out[11] = frz
    if active_l:
        rlx = state[S_HANDL_POS] - px
        rly = state[S_HANDL_POS + 1] - py
        rlz = state[S_HANDL_POS + 2] - pz
        out[0] -= flx
        out[1] -= fly
        out[2] -= flz
        out[3] -= rly * flz - rlz * fly
        out[4] -= rlz * flx - rlx * flz
        out[5] -= rlx * fly - rly * flx
    if active_r:
        rrx = state[S_HANDR_POS] - px
        rry = state[S_HANDR_POS + 1] - py
        rrz = state[S_HANDR_POS + 2] - pz
        out[0] -= frx
        out[1] -= fry
        out[2] -= frz
        out[3] -= rry * frz - rrz * fry
        out[4] -= rrz * frx - rrx * frz
        out[5] -= rrx * fry - rry * frx
    return active_l, active_r


@njit(cache=True)
def _gait_update(state, params, dt):
    """Advance the two-point gait; returns nothing, mutates feet in place."""
    if state[S_GAIT_ACTIVE] < 0.5:
        for i in range(3):
            state[S_FOOTL_VEL + i] = 0.0
            state[S_FOOTR_VEL + i] = 0.0
        state[S_FOOT_STANCE] = 1.0
        state[S_FOOT_STANCE + 1] = 1.0
        return
    period = params[P_GAIT_PERIOD]
    phase = state[S_GAIT_PHASE]
    new_phase = phase + dt / period
    if new_phase >= 1.0:
        new_phase -= 1.0
    old_half = 0 if phase < 0.5 else 1
    new_half = 0 if new_phase < 0.5 else 1
    state[S_GAIT_PHASE] = new_phase
    byaw = _quat_yaw(state[S_BASE_QUAT], state[S_BASE_QUAT + 1], state[S_BASE_QUAT + 2], state[S_BASE_QUAT + 3])
    if new_half != old_half:
        # the previous swing foot lands; the other becomes swing
        if new_half == 0:
            land = S_FOOTL_POS
            land_idx = 0
            anchor = S_SWING_ANCHOR_R
            src = S_FOOTR_POS
        else:
            land = S_FOOTR_POS
            land_idx = 1
            anchor = S_SWING_ANCHOR_L
            src = S_FOOTL_POS
        state[land + 2] = 0.0
        state[S_FOOT_YAW + land_idx] = byaw
        for i in range(3):
            state[anchor + i] = state[src + i]

    # stance heading from per-foot yaws
    sy = np.sin(state[S_FOOT_YAW]) + np.sin(state[S_FOOT_YAW + 1])
    cy = np.cos(state[S_FOOT_YAW]) + np.cos(state[S_FOOT_YAW + 1])
    psi_f = np.arctan2(sy, cy)
    # command in world coordinates
    c = np.cos(psi_f)
    s = np.sin(psi_f)
    vcx = c * state[S_GAIT_CMD] - s * state[S_GAIT_CMD + 1]
    vcy = s * state[S_GAIT_CMD] + c * state[S_GAIT_CMD + 1]

    half_pos = new_phase if new_half == 0 else new_phase - 0.5
    sub = half_pos / 0.5
    dsp = params[P_DSP_FRAC]
    if new_half == 0:
        swing = S_FOOTR_POS
        swing_vel = S_FOOTR_VEL
        swing_idx = 1
        anchor = S_SWING_ANCHOR_R
        stance_vel = S_FOOTL_VEL
        side = -1.0
    else:
        swing = S_FOOTL_POS
        swing_vel = S_FOOTL_VEL
        swing_idx = 0
        anchor = S_SWING_ANCHOR_L
        stance_vel = S_FOOTR_VEL
        side = 1.0
    for i in range(3):
        state[stance_vel + i] = 0.0

    if sub < dsp:
        # double support window: swing foot still planted
        state[S_FOOT_STANCE] = 1.0
        state[S_FOOT_STANCE + 1] = 1.0
        for i in range(3):
            state[swing_vel + i] = 0.0
        return
    state[S_FOOT_STANCE + swing_idx] = 0.0
    state[S_FOOT_STANCE + 1 - swing_idx] = 1.0

    s_sw = (sub - dsp) / (1.0 - dsp)
    smooth = s_sw * s_sw * (3.0 - 2.0 * s_sw)
    cb = np.cos(byaw)
    sb = np.sin(byaw)
    tx = state[S_BASE_POS] - sb * (side * 0.5 * params[P_STANCE_WIDTH]) + vcx * 0.25 * period
    ty = state[S_BASE_POS + 1] + cb * (side * 0.5 * params[P_STANCE_WIDTH]) + vcy * 0.25 * period
    nx = state[anchor] + (tx - state[anchor]) * smooth
    ny = state[anchor + 1] + (ty - state[anchor + 1]) * smooth
    nz = params[P_SWING_H] * np.sin(np.pi * s_sw)
    state[swing_vel] = (nx - state[swing]) / dt
    state[swing_vel + 1] = (ny - state[swing + 1]) / dt
    state[swing_vel + 2] = (nz - state[swing + 2]) / dt
    state[swing] = nx
    state[swing + 1] = ny
    state[swing + 2] = nz
    state[S_FOOT_YAW + swing_idx] = byaw


@njit(cache=True)
def substep(state, params, setpoints_raw, rec, scratch):
    dt = params[P_DT]
    g = params[P_GRAVITY]
    _gait_update(state, params, dt)

    # actuator limits: saturate requested setpoints
    setpoints = scratch[32:44]
    for i in range(12):
        v = setpoints_raw[i]
        if v < SETPOINT_MIN[i]:
            v = SETPOINT_MIN[i]
        elif v > SETPOINT_MAX[i]:
            v = SETPOINT_MAX[i]
        setpoints[i] = v

    # --- stance geometry and actuator coordinates
    favg_x = 0.5 * (state[S_FOOTL_POS] + state[S_FOOTR_POS])
    favg_y = 0.5 * (state[S_FOOTL_POS + 1] + state[S_FOOTR_POS + 1])
    sy = np.sin(state[S_FOOT_YAW]) + np.sin(state[S_FOOT_YAW + 1])
    cy = np.cos(state[S_FOOT_YAW]) + np.cos(state[S_FOOT_YAW + 1])
    psi_f = np.arctan2(sy, cy)
    cf = np.cos(psi_f)
    sf = np.sin(psi_f)

    qw, qx, qy, qz = state[S_BASE_QUAT], state[S_BASE_QUAT + 1], state[S_BASE_QUAT + 2], state[S_BASE_QUAT + 3]
    byaw = _quat_yaw(qw, qx, qy, qz)
    cb = np.cos(byaw)
    sb = np.sin(byaw)
    # tilt decomposition: roll/pitch measured in the yaw-aligned frame so
    # the dynamics are equivariant under a rigid world-yaw rotation
    hw = np.cos(-byaw / 2.0)
    hz = np.sin(-byaw / 2.0)
    tw = hw * qw - hz * qz
    tx = hw * qx - hz * qy
    ty = hw * qy + hz * qx
    tz = hw * qz + hz * qw
    roll, pitch, _ = _quat_rpy(tw, tx, ty, tz)

    dxw = state[S_BASE_POS] - favg_x
    dyw = state[S_BASE_POS + 1] - favg_y
    lean_x = cf * dxw + sf * dyw
    lean_y = -sf * dxw + cf * dyw
    vxw = state[S_BASE_LV]
    vyw = state[S_BASE_LV + 1]
    lean_vx = cf * vxw + sf * vyw
    lean_vy = -sf * vxw + cf * vyw

    # generalized PD forces (stored for torque reward / RobotState)
    f = scratch[0:12]
    f[0] = params[P_KP + 0] * (setpoints[0] - lean_x) - params[P_KD + 0] * lean_vx
    f[1] = params[P_KP + 1] * (setpoints[1] - lean_y) - params[P_KD + 1] * lean_vy
    f[2] = params[P_KP + 2] * (setpoints[2] - state[S_BASE_POS + 2]) - params[P_KD + 2] * state[S_BASE_LV + 2]
    av_loc_x = cb * state[S_BASE_AV] + sb * state[S_BASE_AV + 1]
    av_loc_y = -sb * state[S_BASE_AV] + cb * state[S_BASE_AV + 1]
    f[3] = params[P_KP + 3] * (setpoints[3] - roll) - params[P_KD + 3] * av_loc_x
    f[4] = params[P_KP + 4] * (setpoints[4] - pitch) - params[P_KD + 4] * av_loc_y
    f[5] = params[P_KP + 5] * _wrap(setpoints[5] - _wrap(byaw - psi_f)) - params[P_KD + 5] * state[S_BASE_AV + 2]
    for h in range(2):
        pos_off = S_HANDL_POS if h == 0 else S_HANDR_POS
        vel_off = S_HANDL_VEL if h == 0 else S_HANDR_VEL
        base = 6 + 3 * h
        rxw = state[pos_off] - state[S_BASE_POS]
        ryw = state[pos_off + 1] - state[S_BASE_POS + 1]
        rzw = state[pos_off + 2] - state[S_BASE_POS + 2]
        loc_x = cb * rxw + sb * ryw
        loc_y = -sb * rxw + cb * ryw
        relvx = state[vel_off] - state[S_BASE_LV]
        relvy = state[vel_off + 1] - state[S_BASE_LV + 1]
        relvz = state[vel_off + 2] - state[S_BASE_LV + 2]
        lvx = cb * relvx + sb * relvy
        lvy = -sb * relvx + cb * relvy
        f[base + 0] = params[P_KP + base] * (setpoints[base] - loc_x) - params[P_KD + base] * lvx
        f[base + 1] = params[P_KP + base + 1] * (setpoints[base + 1] - loc_y) - params[P_KD + base + 1] * lvy
        f[base + 2] = params[P_KP + base + 2] * (setpoints[base + 2] - rzw) - params[P_KD + base + 2] * relvz
    for i in range(12):
        state[S_ACT_FORCE + i] = f[i]

    # --- contacts
    out = scratch[12:26]
    active_l, active_r = contact_pass(state, params, rec, out)

    m_h = params[P_HAND_MASS]
    m_t = params[P_TORSO_MASS]
    m_b = params[P_BOX_MASS]

    # --- hand dynamics (point masses, gravity feedforward in the PD)
    hand_pd = scratch[26:32]
    for h in range(2):
        base = 6 + 3 * h
        fx = cb * f[base] - sb * f[base + 1]
        fy = sb * f[base] + cb * f[base + 1]
        fz = f[base + 2] + m_h * g
        hand_pd[3 * h] = fx
        hand_pd[3 * h + 1] = fy
        hand_pd[3 * h + 2] = fz
        pos_off = S_HANDL_POS if h == 0 else S_HANDR_POS
        vel_off = S_HANDL_VEL if h == 0 else S_HANDR_VEL
        cx = out[6 + 3 * h]
        cy_ = out[7 + 3 * h]
        cz = out[8 + 3 * h]
        ax = (fx + cx) / m_h
        ay = (fy + cy_) / m_h
        az = (fz + cz) / m_h - g
        state[vel_off] += ax * dt
        state[vel_off + 1] += ay * dt
        state[vel_off + 2] += az * dt

    # --- torso dynamics with leg support
    stance_l = state[S_FOOT_STANCE] > 0.5
    stance_r = state[S_FOOT_STANCE + 1] > 0.5
    any_stance = stance_l or stance_r
    leg_fx = cf * f[0] - sf * f[1]
    leg_fy = sf * f[0] + cf * f[1]
    leg_fz = f[2] + (m_t + 2.0 * m_h) * g
    # roll/pitch torques act about the yaw-aligned axes
    tq_x = cb * f[3] - sb * f[4]
    tq_y = sb * f[3] + cb * f[4]
    tq_z = f[5]

    support = False
    if any_stance and leg_fz > 0.0:
        support = True
        # friction cone on the total ground tangential force
        fxy = np.sqrt(leg_fx * leg_fx + leg_fy * leg_fy)
        fmax = params[P_MU] * leg_fz
        if fxy > fmax:
            scale = fmax / fxy
            leg_fx *= scale
            leg_fy *= scale
        # implied center of pressure for the requested wrench
        pzb = state[S_BASE_POS + 2]
        cop_x = state[S_BASE_POS] - (tq_y + pzb * leg_fx) / leg_fz
        cop_y = state[S_BASE_POS + 1] + (tq_x - pzb * leg_fy) / leg_fz
        # support polygon in the stance heading frame
        if stance_l and stance_r:
            center_x = favg_x
            center_y = favg_y
            dfx = state[S_FOOTL_POS] - state[S_FOOTR_POS]
            dfy = state[S_FOOTL_POS + 1] - state[S_FOOTR_POS + 1]
            half_x = params[P_SUP_HX] + 0.5 * abs(cf * dfx + sf * dfy)
            half_y = params[P_SUP_HY] + 0.5 * abs(-sf * dfx + cf * dfy)
        else:
            foot = S_FOOTL_POS if stance_l else S_FOOTR_POS
            center_x = state[foot]
            center_y = state[foot + 1]
            half_x = params[P_SUP_HX]
            half_y = params[P_SUP_HY]
        rel_x = cf * (cop_x - center_x) + sf * (cop_y - center_y)
        rel_y = -sf * (cop_x - center_x) + cf * (cop_y - center_y)
        cl_x = min(max(rel_x, -half_x), half_x)
        cl_y = min(max(rel_y, -half_y), half_y)
        cop_cx = center_x + cf * cl_x - sf * cl_y
        cop_cy = center_y + sf * cl_x + cf * cl_y
        # torque shortfall from cop clamping tips the base
        tq_x += leg_fz * (cop_cy - cop_y)
        tq_y -= leg_fz * (cop_cx - cop_x)
        state[S_COP] = cop_cx
        state[S_COP + 1] = cop_cy
        # per-foot share of the ground reaction, for the contact records
        if stance_l and stance_r:
            dy_feet = (-sf * (state[S_FOOTL_POS] - state[S_FOOTR_POS])
                       + cf * (state[S_FOOTL_POS + 1] - state[S_FOOTR_POS + 1]))
            if abs(dy_feet) > 1e-9:
                ry_foot = -sf * (cop_cx - state[S_FOOTR_POS]) + cf * (cop_cy - state[S_FOOTR_POS + 1])
                w_l = min(max(ry_foot / dy_feet, 0.0), 1.0)
            else:
                w_l = 0.5
        else:
            w_l = 1.0 if stance_l else 0.0
        rec[REC_FOOT_L, 0] = w_l * leg_fz
        rec[REC_FOOT_L, 1] = w_l * leg_fx
        rec[REC_FOOT_L, 2] = w_l * leg_fy
        rec[REC_FOOT_R, 0] = (1.0 - w_l) * leg_fz
        rec[REC_FOOT_R, 1] = (1.0 - w_l) * leg_fx
        rec[REC_FOOT_R, 2] = (1.0 - w_l) * leg_fy
    else:
        leg_fx = 0.0
        leg_fy = 0.0
        leg_fz = 0.0
        tq_x = 0.0
        tq_y = 0.0
        tq_z = 0.0
    state[S_SUPPORT] = 1.0 if support else 0.0

    # hand reaction wrench on the torso
    re_fx = 0.0
    re_fy = 0.0
    re_fz = 0.0
    re_tx = 0.0
    re_ty = 0.0
    re_tz = 0.0
    for h in range(2):
        pos_off = S_HANDL_POS if h == 0 else S_HANDR_POS
        fx = -hand_pd[3 * h]
        fy = -hand_pd[3 * h + 1]
        fz = -hand_pd[3 * h + 2]
        rx = state[pos_off] - state[S_BASE_POS]
        ry = state[pos_off + 1] - state[S_BASE_POS + 1]
        rz = state[pos_off + 2] - state[S_BASE_POS + 2]
        re_fx += fx
        re_fy += fy
        re_fz += fz
        re_tx += ry * fz - rz * fy
        re_ty += rz * fx - rx * fz
        re_tz += rx * fy - ry * fx

    # randomized COM offset adds a gravity moment on the torso
    ox, oy, oz = _qrot(qw, qx, qy, qz, params[P_COM_OFF], params[P_COM_OFF + 1], params[P_COM_OFF + 2])
    com_tx = oy * (-m_t * g)
    com_ty = -ox * (-m_t * g)

    ax = (leg_fx + re_fx) / m_t
    ay = (leg_fy + re_fy) / m_t
    az = (leg_fz + re_fz) / m_t - g
    state[S_BASE_LV] += ax * dt
    state[S_BASE_LV + 1] += ay * dt
    state[S_BASE_LV + 2] += az * dt
    alx = (tq_x + re_tx + com_tx) / params[P_TORSO_I]
    aly = (tq_y + re_ty + com_ty) / params[P_TORSO_I + 1]
    alz = (tq_z + re_tz) / params[P_TORSO_I + 2]
    state[S_BASE_AV] += alx * dt
    state[S_BASE_AV + 1] += aly * dt
    state[S_BASE_AV + 2] += alz * dt

    # --- box dynamics
    bax = out[0] / m_b
    bay = out[1] / m_b
    baz = out[2] / m_b - g
    state[S_BOX_LV] += bax * dt
    state[S_BOX_LV + 1] += bay * dt
    state[S_BOX_LV + 2] += baz * dt
    state[S_BOX_ACC] += bax
    state[S_BOX_ACC + 1] += bay
    state[S_BOX_ACC + 2] += baz
    # cuboid inertia (body axes ~ world for the modest rotations we see)
    il = m_b / 12.0 * (params[P_BOX_DIMS + 1] ** 2 + params[P_BOX_DIMS + 2] ** 2)
    iw = m_b / 12.0 * (params[P_BOX_DIMS] ** 2 + params[P_BOX_DIMS + 2] ** 2)
    ih = m_b / 12.0 * (params[P_BOX_DIMS] ** 2 + params[P_BOX_DIMS + 1] ** 2)
    bqw, bqx, bqy, bqz = state[S_BOX_QUAT], state[S_BOX_QUAT + 1], state[S_BOX_QUAT + 2], state[S_BOX_QUAT + 3]
    tlx, tly, tlz = _qrot_inv(bqw, bqx, bqy, bqz, out[3], out[4], out[5])
    wlx, wly, wlz = _qrot_inv(bqw, bqx, bqy, bqz, state[S_BOX_AV], state[S_BOX_AV + 1], state[S_BOX_AV + 2])
    wlx += tlx / il * dt
    wly += tly / iw * dt
    wlz += tlz / ih * dt
    nwx, nwy, nwz = _qrot(bqw, bqx, bqy, bqz, wlx, wly, wlz)
    state[S_BOX_AV] = nwx
    state[S_BOX_AV + 1] = nwy
    state[S_BOX_AV + 2] = nwz

    # --- integrate positions
    for i in range(3):
        state[S_BASE_POS + i] += state[S_BASE_LV + i] * dt
        state[S_HANDL_POS + i] += state[S_HANDL_VEL + i] * dt
        state[S_HANDR_POS + i] += state[S_HANDR_VEL + i] * dt
        state[S_BOX_POS + i] += state[S_BOX_LV + i] * dt
    _integrate_quat(state, S_BASE_QUAT, state[S_BASE_AV], state[S_BASE_AV + 1], state[S_BASE_AV + 2], dt)
    _integrate_quat(state, S_BOX_QUAT, state[S_BOX_AV], state[S_BOX_AV + 1], state[S_BOX_AV + 2], dt)

    # --- contact bookkeeping
    state[S_BOX_CONTACT] = 1.0 if active_l else 0.0
    state[S_BOX_CONTACT + 1] = 1.0 if active_r else 0.0
    state[S_BOX_CONTACT + 2] = out[12]
    state[S_BOX_CONTACT + 3] = out[13]
    state[S_BOX_FHL] = -out[6]
    state[S_BOX_FHL + 1] = -out[7]
    state[S_BOX_FHL + 2] = -out[8]
    state[S_BOX_FHR] = -out[9]
    state[S_BOX_FHR + 1] = -out[10]
    state[S_BOX_FHR + 2] = -out[11]
    if not active_l:
        state[S_BOX_FHL] = 0.0
        state[S_BOX_FHL + 1] = 0.0
        state[S_BOX_FHL + 2] = 0.0
    if not active_r:
        state[S_BOX_FHR] = 0.0
        state[S_BOX_FHR + 1] = 0.0
        state[S_BOX_FHR + 2] = 0.0
    state[S_BOX_FTABLE] = 0.0
    state[S_BOX_FTABLE + 1] = 0.0
    state[S_BOX_FTABLE + 2] = 0.0
    if out[12] > 0.5:
        for i in range(8):
            state[S_BOX_FTABLE] += rec[REC_TABLE + i, 1]
            state[S_BOX_FTABLE + 1] += rec[REC_TABLE + i, 2]
            state[S_BOX_FTABLE + 2] += rec[REC_TABLE + i, 0]
    if out[13] > 0.5:
        state[S_GROUND_STREAK] += 1.0
    else:
        state[S_GROUND_STREAK] = 0.0

    # robot-table contact: hands against the tabletop apron, torso probes
    # against the slab volume
    if hand_in_table_apron(params, state[S_HANDL_POS], state[S_HANDL_POS + 1], state[S_HANDL_POS + 2]):
        state[S_ROBOT_TABLE] = 1.0
    if hand_in_table_apron(params, state[S_HANDR_POS], state[S_HANDR_POS + 1], state[S_HANDR_POS + 2]):
        state[S_ROBOT_TABLE] = 1.0
    if _point_in_table(params, state[S_BASE_POS], state[S_BASE_POS + 1], state[S_BASE_POS + 2]):
        state[S_ROBOT_TABLE] = 1.0
    if _point_in_table(params, state[S_BASE_POS], state[S_BASE_POS + 1],
                       state[S_BASE_POS + 2] - TORSO_LOWER_REACH):
        state[S_ROBOT_TABLE] = 1.0

    # self collision: hand-hand proximity or hand inside the torso capsule
    dhx = state[S_HANDL_POS] - state[S_HANDR_POS]
    dhy = state[S_HANDL_POS + 1] - state[S_HANDR_POS + 1]
    dhz = state[S_HANDL_POS + 2] - state[S_HANDR_POS + 2]
    if np.sqrt(dhx * dhx + dhy * dhy + dhz * dhz) < SELF_COLLISION_HAND_DIST:
        state[S_SELF_COLL] = 1.0
    for h in range(2):
        pos_off = S_HANDL_POS if h == 0 else S_HANDR_POS
        rx = state[pos_off] - state[S_BASE_POS]
        ry = state[pos_off + 1] - state[S_BASE_POS + 1]
        rz = state[pos_off + 2] - state[S_BASE_POS + 2]
        cz = min(max(rz, -TORSO_CAPSULE_HALFLEN), TORSO_CAPSULE_HALFLEN)
        d = np.sqrt(rx * rx + ry * ry + (rz - cz) * (rz - cz))
        if d < TORSO_CAPSULE_RADIUS:
            state[S_SELF_COLL] = 1.0

    state[S_TIME] += dt


@njit(cache=True)
def run_policy_tick(state, params, setpoints, n_substeps, rec, scratch):
    """One 50 Hz policy tick = n_substeps semi-implicit Euler substeps."""
    state[S_BOX_ACC] = 0.0
    state[S_BOX_ACC + 1] = 0.0
    state[S_BOX_ACC + 2] = 0.0
    state[S_ROBOT_TABLE] = 0.0
    state[S_SELF_COLL] = 0.0
    for _ in range(n_substeps):
        substep(state, params, setpoints, rec, scratch)
    inv = 1.0 / n_substeps
    state[S_BOX_ACC] *= inv
    state[S_BOX_ACC + 1] *= inv
    state[S_BOX_ACC + 2] *= inv


@njit(cache=True)
def run_policy_tick_recorded(state, params, setpoints, n_substeps, recs, scratch):
    """Like run_policy_tick but keeps every substep's contact records in
    recs with shape (n_substeps, NREC, 4)."""
    state[S_BOX_ACC] = 0.0
    state[S_BOX_ACC + 1] = 0.0
    state[S_BOX_ACC + 2] = 0.0
    state[S_ROBOT_TABLE] = 0.0
    state[S_SELF_COLL] = 0.0
    for i in range(n_substeps):
        substep(state, params, setpoints, recs[i], scratch)
    inv = 1.0 / n_substeps
    state[S_BOX_ACC] *= inv
    state[S_BOX_ACC + 1] *= inv
    state[S_BOX_ACC + 2] *= inv
