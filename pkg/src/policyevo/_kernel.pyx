# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Native rollout kernel: bytecode VM plus lander dynamics in one C loop.

Mirrors ``sim.step`` and ``lang.interp`` operation for operation; the
floating-point expressions below must keep the exact evaluation order of
their Python counterparts or the two rollout paths stop agreeing bit-wise.
"""

from libc.math cimport sin, cos, sqrt, fabs, isfinite, M_PI
from libc.stdint cimport int64_t
from libc.stdlib cimport malloc, free

import numpy as np

# Must equal the field order of sim.SimConfig.
PARAM_NAMES = (
    "dt", "gravity", "main_accel", "side_accel", "side_torque", "main_cost",
    "side_cost", "spawn_y_min", "spawn_y_max", "spawn_x", "spawn_vx",
    "spawn_vy", "spawn_angle", "spawn_w", "half_width", "ceiling", "leg_span",
    "leg_compliance", "landing_vx", "landing_vy", "landing_angle",
    "shape_dist", "shape_speed", "shape_angle", "shape_leg", "speed_cap",
    "landing_bonus", "crash_penalty",
)

cdef enum:
    P_DT = 0
    P_GRAVITY
    P_MAIN_ACCEL
    P_SIDE_ACCEL
    P_SIDE_TORQUE
    P_MAIN_COST
    P_SIDE_COST
    P_SPAWN_Y_MIN
    P_SPAWN_Y_MAX
    P_SPAWN_X
    P_SPAWN_VX
    P_SPAWN_VY
    P_SPAWN_ANGLE
    P_SPAWN_W
    P_HALF_WIDTH
    P_CEILING
    P_LEG_SPAN
    P_LEG_COMPLIANCE
    P_LANDING_VX
    P_LANDING_VY
    P_LANDING_ANGLE
    P_SHAPE_DIST
    P_SHAPE_SPEED
    P_SHAPE_ANGLE
    P_SHAPE_LEG
    P_SPEED_CAP
    P_LANDING_BONUS
    P_CRASH_PENALTY
    N_PARAMS

# opcodes, see lang/compiler.py
cdef enum:
    TICK = 0
    CONST
    LOAD
    LOADL
    STOREL
    NEG
    NOT
    ADD
    SUB
    MUL
    DIV
    ABS
    MIN
    MAX
    LT
    LE
    GT
    GE
    EQ
    NE
    JF
    JT
    JMP
    RET

# VM status
cdef enum:
    VM_OK = 0
    VM_BUDGET = 1
    VM_ARITH = 2
    VM_INVALID_ACTION = 3

# termination codes, see sim.TERMINATION_CODES
cdef enum:
    T_RUNNING = 0
    T_LANDED = 1
    T_CRASHED = 2
    T_OUT_OF_BOUNDS = 3
    T_TIME_LIMIT = 4


cdef int run_vm(const int64_t* ops, const int64_t* args, const double* consts,
                double* stack, double* locals_, const double* state,
                int64_t budget, int* action) noexcept nogil:
    cdef int64_t pc = 0
    cdef int64_t sp = 0
    cdef int64_t ticks = 0
    cdef int64_t op, arg, i, n
    cdef double a, b, v, m
    while True:
        op = ops[pc]
        arg = args[pc]
        pc += 1
        if op == TICK:
            ticks += 1
            if ticks > budget:
                return VM_BUDGET
        elif op == CONST:
            stack[sp] = consts[arg]
            sp += 1
        elif op == LOAD:
            stack[sp] = state[arg]
            sp += 1
        elif op == LOADL:
            stack[sp] = locals_[arg]
            sp += 1
        elif op == STOREL:
            sp -= 1
            locals_[arg] = stack[sp]
        elif op == NEG:
            stack[sp - 1] = -stack[sp - 1]
        elif op == NOT:
            stack[sp - 1] = 1.0 if stack[sp - 1] == 0.0 else 0.0
        elif op == ADD or op == SUB or op == MUL or op == DIV:
            sp -= 1
            a = stack[sp - 1]
            b = stack[sp]
            if op == ADD:
                v = a + b
            elif op == SUB:
                v = a - b
            elif op == MUL:
                v = a * b
            else:
                if b == 0.0:
                    return VM_ARITH
                v = a / b
            if not isfinite(v):
                return VM_ARITH
            stack[sp - 1] = v
        elif op == ABS:
            stack[sp - 1] = fabs(stack[sp - 1])
        elif op == MIN or op == MAX:
            n = arg
            m = stack[sp - n]
            for i in range(1, n):
                a = stack[sp - n + i]
                if op == MIN:
                    if a < m:
                        m = a
                else:
                    if a > m:
                        m = a
            sp -= n - 1
            stack[sp - 1] = m
        elif op >= LT and op <= NE:
            sp -= 1
            a = stack[sp - 1]
            b = stack[sp]
            if op == LT:
                v = 1.0 if a < b else 0.0
            elif op == LE:
                v = 1.0 if a <= b else 0.0
            elif op == GT:
                v = 1.0 if a > b else 0.0
            elif op == GE:
                v = 1.0 if a >= b else 0.0
            elif op == EQ:
                v = 1.0 if a == b else 0.0
            else:
                v = 1.0 if a != b else 0.0
            stack[sp - 1] = v
        elif op == JF:
            sp -= 1
            if stack[sp] == 0.0:
                pc = arg
        elif op == JT:
            sp -= 1
            if stack[sp] != 0.0:
                pc = arg
        elif op == JMP:
            pc = arg
        else:  # RET
            v = stack[sp - 1]
            if not (v > -1.0 and v < 4.0):
                return VM_INVALID_ACTION
            action[0] = <int>v
            return VM_OK


cdef inline double potential(const double* s, const double* P) noexcept nogil:
    cdef double dist = sqrt(s[0] * s[0] + s[1] * s[1])
    cdef double speed = sqrt(s[2] * s[2] + s[3] * s[3])
    if P[P_SPEED_CAP] < speed:
        speed = P[P_SPEED_CAP]
    return (-(P[P_SHAPE_DIST] * dist + P[P_SHAPE_SPEED] * speed + P[P_SHAPE_ANGLE] * fabs(s[4]))
            + P[P_SHAPE_LEG] * (s[6] + s[7]))


cdef inline bint all_finite(const double* s) noexcept nogil:
    cdef int i
    for i in range(8):
        if not isfinite(s[i]):
            return False
    return True


cdef int sim_step(const double* s, int action, const double* P, double* nxt,
                  double* reward, double* cost) noexcept nogil:
    cdef double x = s[0], y = s[1], vx = s[2], vy = s[3], ang = s[4], w = s[5]
    cdef double dt = P[P_DT]
    cdef double ax = 0.0, ay = 0.0, alpha = 0.0, c = 0.0, d
    cdef double vx2, vy2, w2, x2, y2, a2, lift, left, right
    cdef int kind, i

    if not all_finite(s):
        return abort_step(s, P, nxt, reward, cost)

    if action == 2:
        ax = P[P_MAIN_ACCEL] * sin(ang)
        ay = P[P_MAIN_ACCEL] * cos(ang)
        c = P[P_MAIN_COST]
    elif action != 0:
        d = 1.0 if action == 1 else -1.0
        ax = d * P[P_SIDE_ACCEL] * cos(ang)
        ay = -(d * P[P_SIDE_ACCEL] * sin(ang))
        alpha = d * P[P_SIDE_TORQUE]
        c = P[P_SIDE_COST]

    vx2 = vx + ax * dt
    vy2 = vy + (ay - P[P_GRAVITY]) * dt
    w2 = w + alpha * dt
    x2 = x + vx2 * dt
    y2 = y + vy2 * dt
    a2 = ang + w2 * dt
    if a2 > M_PI:
        a2 -= 2.0 * M_PI
    elif a2 < -M_PI:
        a2 += 2.0 * M_PI

    kind = T_RUNNING
    left = 0.0
    right = 0.0
    if y2 <= 0.0:
        y2 = 0.0
        lift = P[P_LEG_SPAN] * sin(a2)
        if lift <= P[P_LEG_COMPLIANCE]:
            left = 1.0
        if -lift <= P[P_LEG_COMPLIANCE]:
            right = 1.0
        if (left == 1.0 and right == 1.0
                and fabs(vx2) <= P[P_LANDING_VX]
                and fabs(vy2) <= P[P_LANDING_VY]
                and fabs(a2) <= P[P_LANDING_ANGLE]):
            kind = T_LANDED
        else:
            kind = T_CRASHED
    elif fabs(x2) > P[P_HALF_WIDTH] or y2 > P[P_CEILING]:
        kind = T_OUT_OF_BOUNDS

    nxt[0] = x2
    nxt[1] = y2
    nxt[2] = vx2
    nxt[3] = vy2
    nxt[4] = a2
    nxt[5] = w2
    nxt[6] = left
    nxt[7] = right
    if not all_finite(nxt):
        return abort_step(s, P, nxt, reward, cost)

    reward[0] = potential(nxt, P) - potential(s, P) - c
    if kind == T_LANDED:
        reward[0] += P[P_LANDING_BONUS]
    elif kind == T_CRASHED or kind == T_OUT_OF_BOUNDS:
        reward[0] -= P[P_CRASH_PENALTY]
    cost[0] = c
    return kind


cdef int abort_step(const double* s, const double* P, double* nxt,
                    double* reward, double* cost) noexcept nogil:
    cdef int i
    for i in range(8):
        nxt[i] = s[i] if isfinite(s[i]) else 0.0
    reward[0] = -P[P_CRASH_PENALTY]
    cost[0] = 0.0
    return T_CRASHED


def eval_bytecode(const int64_t[::1] ops, const int64_t[::1] args,
                  const double[::1] consts, int n_locals, int max_stack,
                  const double[::1] state, int64_t budget):
    """Run one policy decision; returns ``(status, action)``."""
    cdef double* stack = <double*>malloc(max_stack * sizeof(double))
    cdef double* locals_ = <double*>malloc(n_locals * sizeof(double))
    cdef int action = -1
    cdef int status
    if stack == NULL or locals_ == NULL:
        free(stack)
        free(locals_)
        raise MemoryError()
    try:
        status = run_vm(&ops[0], &args[0], &consts[0] if consts.shape[0] else NULL,
                        stack, locals_, &state[0], budget, &action)
    finally:
        free(stack)
        free(locals_)
    return status, action


def step_state(const double[::1] state, int action, const double[::1] params):
    """One dynamics step; returns ``(next_state, reward, kind, cost)``."""
    nxt = np.empty(8, dtype=np.float64)
    cdef double[::1] nv = nxt
    cdef double reward = 0.0, cost = 0.0
    cdef int kind = sim_step(&state[0], action, &params[0], &nv[0], &reward, &cost)
    return nxt, reward, kind, cost


def rollout(const int64_t[::1] ops, const int64_t[::1] args,
            const double[::1] consts, int n_locals, int max_stack,
            const double[::1] init_state, const double[::1] params,
            int max_steps, int64_t budget,
            double[:, ::1] states_out, int64_t[::1] actions_out,
            double[::1] rewards_out):
    """Roll out one episode.

    Writes ``steps + 1`` states, ``steps`` actions and rewards into the
    output buffers and returns ``(steps, termination, vm_status, total, fuel)``.
    """
    if params.shape[0] != N_PARAMS:
        raise ValueError(f"expected {N_PARAMS} params, got {params.shape[0]}")
    if states_out.shape[0] < max_steps + 1 or states_out.shape[1] != 8:
        raise ValueError("states_out too small")
    if actions_out.shape[0] < max_steps or rewards_out.shape[0] < max_steps:
        raise ValueError("action/reward buffers too small")

    cdef double* stack = <double*>malloc(max_stack * sizeof(double))
    cdef double* locals_ = <double*>malloc(n_locals * sizeof(double))
    if stack == NULL or locals_ == NULL:
        free(stack)
        free(locals_)
        raise MemoryError()

    cdef const double* cp = &consts[0] if consts.shape[0] else NULL
    cdef int t = 0, i, action = 0, status = VM_OK, kind = T_TIME_LIMIT, k
    cdef double total = 0.0, fuel = 0.0, reward, cost
    with nogil:
        for i in range(8):
            states_out[0, i] = init_state[i]
        while t < max_steps:
            status = run_vm(&ops[0], &args[0], cp, stack, locals_,
                            &states_out[t, 0], budget, &action)
            if status != VM_OK:
                kind = T_CRASHED
                break
            k = sim_step(&states_out[t, 0], action, &params[0],
                         &states_out[t + 1, 0], &reward, &cost)
            actions_out[t] = action
            rewards_out[t] = reward
            total += reward
            fuel += cost
            t += 1
            if k != T_RUNNING:
                kind = k
                break
    free(stack)
    free(locals_)
    return t, kind, status, total, fuel
