"""Flat array layouts shared by the pure-Python and compiled kernels.

The kernel advances one robot by one control period over a state vector and
a static parameter vector. Both twins must index these layouts identically;
any change here requires rebuilding the extension.
"""

STATE_SIZE = 72

# Base pose and motion (world frame positions/velocities, body-rate angles).
PX, PY, PZ = 0, 1, 2
YAW, ROLL, PITCH = 3, 4, 5
VX, VY, VZ = 6, 7, 8
WX, WY, WZ = 9, 10, 11
PHASE, TIME = 12, 13

Q0 = 14       # 12 joint positions
QD0 = 26      # 12 joint velocities
TAU0 = 38     # 12 applied joint torques (last substep)
CONTACT0 = 50  # 4 foot contact flags (0/1)
AIR0 = 54      # 4 air-time accumulators (s)
TDCRED0 = 58   # 4 air times credited at touchdown during this step

FAIL = 62      # latched failure flag (height / tilt)
COLL = 63      # body or limb ground-proximity flag
FT_X, FT_Y = 64, 65        # traction force, body frame (diagnostic)
VCMD_X, VCMD_Y, WCMD = 66, 67, 68  # leg-field velocity command (diagnostic)
ZKIN = 69      # kinematic stance-leg height (diagnostic)

PARAM_SIZE = 50

P_MASS, P_IZ, P_IATT, P_MU, P_KP, P_KD, P_GRAV = 0, 1, 2, 3, 4, 5, 6
P_KGAIT, P_KGYAW, P_CDRAG, P_CYAWDRAG = 7, 8, 9, 10
P_KZ, P_CZ, P_CATT = 11, 12, 13
P_DX, P_DY = 14, 15                 # effective support half-lengths (pitch / roll)
P_KLEAN, P_KLEANYAW, P_VLEGMAX, P_WLEGMAX = 16, 17, 18, 19
P_TROTFREQ, P_LIFTAMP = 20, 21
P_JINERTIA, P_TAULIM, P_QDLIM = 22, 23, 24
P_LOADGAIN = 25
P_FAILZ, P_FAILTILT = 26, 27
P_LTHIGH, P_LCALF = 28, 29
P_ROLLSCALE = 30
P_QSTAND_HIP, P_QSTAND_THIGH, P_QSTAND_CALF = 31, 32, 33
P_COLLZ, P_COLLTILT = 34, 35
P_QLIM_HIP, P_QLIM_THIGH, P_QLIM_CALF = 36, 37, 38
P_TAUEXT_SCALE = 39
P_SHOULDER_X, P_SHOULDER_Y = 40, 41
P_YAWLEVER = 42
P_SLIPTOLX, P_SLIPTOLY, P_SLIPCAP, P_KSLIP = 43, 44, 45, 46
P_ZAIRMAX = 47  # base height above which ground traction is lost
P_SLIPCAPY = 48  # lateral slip-stress cap (longitudinal uses P_SLIPCAP)
# slot 49 reserved

# Leg order FL, FR, RL, RR; sign of (x, y) shoulder offset per leg.
LEG_SIGN_X = (1.0, 1.0, -1.0, -1.0)
LEG_SIGN_Y = (1.0, -1.0, 1.0, -1.0)
