"""Compiled hot loops: RNG streams, collision sampling, flow integration, path runners.

Everything here is numba-jitted when numba is available and falls back to pure
Python otherwise (slow but identical results).  All functions are deterministic
given the (seed, stream_id) pair that seeded the state vector, which is what
makes parallel and serial runs agree bit-for-bit.
"""

import math

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


# potential kind codes
POT_ZERO = 0
POT_COSINE = 1
POT_TABULATED = 2

# payoff kind codes
PAY_CONST = 0
PAY_PBAND = 1
PAY_HBAND = 2
PAY_PBAND2 = 3  # sum of two momentum bands

# modulator kind codes (h = scale * chi(H <= level), or constant scale)
MOD_ENERGY = 0
MOD_CONST = 1

# estimator kind codes
EST_KILL = 0
EST_EXPW = 1
EST_CHAIN_W = 2
EST_CHAIN_C = 3

TWO_PI = 2.0 * math.pi
SQRT_2PI = math.sqrt(2.0 * math.pi)

# Yoshida 6th-order composition weights (solution A); w0 closes the sum.
_Y6_W1 = -1.17767998417887
_Y6_W2 = 0.235573213359357
_Y6_W3 = 0.784513610477560
_Y6_W0 = 1.0 - 2.0 * (_Y6_W1 + _Y6_W2 + _Y6_W3)
Y6_COEFFS = np.array([_Y6_W3, _Y6_W2, _Y6_W1, _Y6_W0, _Y6_W1, _Y6_W2, _Y6_W3])


# ---------------------------------------------------------------------------
# xoshiro256++ streams, seeded through splitmix64.
# ---------------------------------------------------------------------------

U64 = np.uint64
_SM_GAMMA = U64(0x9E3779B97F4A7C15)
_SM_M1 = U64(0xBF58476D1CE4E5B9)
_SM_M2 = U64(0x94D049BB133111EB)
_MASK = U64(0xFFFFFFFFFFFFFFFF)


@njit(cache=True, nogil=True)
def _splitmix64(z):
    z = (z + _SM_GAMMA) & _MASK
    out = z
    out = ((out ^ (out >> U64(30))) * _SM_M1) & _MASK
    out = ((out ^ (out >> U64(27))) * _SM_M2) & _MASK
    return z, out ^ (out >> U64(31))


@njit(cache=True, nogil=True)
def stream_state(seed, stream_id):
    """Initial xoshiro256++ state for worker stream (seed, stream_id)."""
    st = np.empty(4, dtype=np.uint64)
    z = (U64(seed) * U64(0xA24BAED4963EE407)) & _MASK
    z = (z ^ ((U64(stream_id) + _SM_GAMMA) * U64(0x9FB21C651E98DF25))) & _MASK
    for i in range(4):
        z, out = _splitmix64(z)
        st[i] = out
    # all-zero state is invalid for xoshiro; splitmix essentially never yields it
    if st[0] | st[1] | st[2] | st[3] == U64(0):
        st[0] = U64(1)
    return st


@njit(cache=True, nogil=True)
def _rotl(x, k):
    return ((x << U64(k)) | (x >> U64(64 - k))) & _MASK


@njit(cache=True, nogil=True)
def next_u64(st):
    result = (_rotl((st[0] + st[3]) & _MASK, 23) + st[0]) & _MASK
    t = (st[1] << U64(17)) & _MASK
    st[2] ^= st[0]
    st[3] ^= st[1]
    st[1] ^= st[2]
    st[0] ^= st[3]
    st[2] ^= t
    st[3] = _rotl(st[3], 45)
    return result


@njit(cache=True, nogil=True)
def next_unit(st):
    """Uniform in [0, 1) with 53 random bits."""
    return float(next_u64(st) >> U64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True, nogil=True)
def next_exp(st):
    u = next_unit(st)
    return -math.log(1.0 - u)


@njit(cache=True, nogil=True)
def next_gauss(st):
    # polar Marsaglia; second variate discarded to keep streams stateless
    while True:
        v1 = 2.0 * next_unit(st) - 1.0
        v2 = 2.0 * next_unit(st) - 1.0
        s = v1 * v1 + v2 * v2
        if 0.0 < s < 1.0:
            return v1 * math.sqrt(-2.0 * math.log(s) / s)


# ---------------------------------------------------------------------------
# Model ingredients.
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def pot_value(pk, v0, xg, vg, dvg, x):
    if pk == POT_ZERO:
        return 0.0
    x = x - math.floor(x)
    if pk == POT_COSINE:
        return 0.5 * v0 * (1.0 - math.cos(TWO_PI * x))
    # tabulated: linear interpolation on a periodic grid
    n = xg.shape[0]
    j = int(x * n)
    if j >= n:
        j = n - 1
    x0 = xg[j]
    x1 = xg[j + 1] if j + 1 < n else xg[0] + 1.0
    w = (x - x0) / (x1 - x0)
    v1 = vg[j + 1] if j + 1 < n else vg[0]
    return (1.0 - w) * vg[j] + w * v1


@njit(cache=True, nogil=True)
def pot_slope(pk, v0, xg, vg, dvg, x):
    if pk == POT_ZERO:
        return 0.0
    x = x - math.floor(x)
    if pk == POT_COSINE:
        return math.pi * v0 * math.sin(TWO_PI * x)
    n = xg.shape[0]
    j = int(x * n)
    if j >= n:
        j = n - 1
    x0 = xg[j]
    x1 = xg[j + 1] if j + 1 < n else xg[0] + 1.0
    w = (x - x0) / (x1 - x0)
    d1 = dvg[j + 1] if j + 1 < n else dvg[0]
    return (1.0 - w) * dvg[j] + w * d1


@njit(cache=True, nogil=True)
def norm_cdf(z):
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


@njit(cache=True, nogil=True)
def escape_rate_k(lam, p):
    """Closed form of the total collision rate out of momentum p."""
    a = lam * abs(p)
    return 4.0 / (1.0 + lam) * (2.0 * math.exp(-0.5 * a * a) + a * SQRT_2PI * (2.0 * norm_cdf(a) - 1.0))


@njit(cache=True, nogil=True)
def jump_kernel_k(lam, p, pp):
    d = 0.5 * (1.0 - lam) * p - 0.5 * (1.0 + lam) * pp
    return (1.0 + lam) * abs(p - pp) * math.exp(-0.5 * d * d)


@njit(cache=True, nogil=True)
def sample_u(st, a):
    """Draw u with density |a-u| exp(-u^2/2) / Z by mixture rejection.

    Envelope |a-u| <= |a| + |u| splits the target under a Gaussian plus
    two-sided-Rayleigh mixture; acceptance ratio is |a-u|/(|a|+|u|).
    """
    wa = abs(a) * SQRT_2PI
    pg = wa / (wa + 2.0)
    for _ in range(1000000):
        if next_unit(st) < pg:
            u = next_gauss(st)
        else:
            u = math.sqrt(2.0 * next_exp(st))
            if next_unit(st) < 0.5:
                u = -u
        denom = abs(a) + abs(u)
        if denom <= 0.0:
            continue
        if next_unit(st) * denom < abs(a - u):
            return u
    return math.nan  # unreachable with a sane RNG; surfaced as an error upstream


@njit(cache=True, nogil=True)
def sample_post_collision_k(st, lam, p):
    a = lam * p
    u = sample_u(st, a)
    return (2.0 * u + (1.0 - lam) * p) / (1.0 + lam)


@njit(cache=True, nogil=True)
def payoff_eval_k(fk, fa, fb, fc, fd, x, p, H):
    if fk == PAY_CONST:
        return fa
    if fk == PAY_PBAND:
        return 1.0 if fa <= p <= fb else 0.0
    if fk == PAY_HBAND:
        return 1.0 if fa <= H <= fb else 0.0
    v = 1.0 if fa <= p <= fb else 0.0
    if fc <= p <= fd:
        v += 1.0
    return v


@njit(cache=True, nogil=True)
def modulator_eval_k(mk, mlevel, mscale, H):
    if mk == MOD_CONST:
        return mscale
    return mscale if H <= mlevel else 0.0


# ---------------------------------------------------------------------------
# Hamiltonian flow: velocity-Verlet composed to 6th order, torus wrap.
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _verlet(pk, v0, xg, vg, dvg, x, p, h):
    p -= 0.5 * h * pot_slope(pk, v0, xg, vg, dvg, x)
    x += h * p
    p -= 0.5 * h * pot_slope(pk, v0, xg, vg, dvg, x)
    return x - math.floor(x), p


@njit(cache=True, nogil=True)
def flow_step(pk, v0, xg, vg, dvg, x, p, h, y6):
    for i in range(7):
        x, p = _verlet(pk, v0, xg, vg, dvg, x, p, h * y6[i])
    return x, p


@njit(cache=True, nogil=True)
def flow_advance(pk, v0, xg, vg, dvg, x, p, dt, c_flow, y6):
    """Advance the Hamiltonian flow by dt.  Exact free motion when V = 0."""
    if pk == POT_ZERO or dt == 0.0:
        x += p * dt
        return x - math.floor(x), p
    speed = 1.0 + abs(p)
    h = c_flow / speed
    n = int(dt / h) + 1
    h = dt / n
    for _ in range(n):
        x, p = flow_step(pk, v0, xg, vg, dvg, x, p, h, y6)
    return x, p


@njit(cache=True, nogil=True)
def flow_advance_accum(pk, v0, xg, vg, dvg, x, p, dt, c_flow, y6,
                       fk, fa, fb, fc, fd, H, hrate, A0):
    """Advance by dt, returning (x, p, int f dt, int f e^{-A} dt).

    A(t) = A0 + hrate * t is the accumulated killing integral; the payoff is
    integrated by midpoint sums on the composition substeps (exact when the
    payoff is constant along the energy shell).
    """
    if fk == PAY_CONST or fk == PAY_HBAND or pk == POT_ZERO:
        fval = payoff_eval_k(fk, fa, fb, fc, fd, x, p, H)
        x, p = flow_advance(pk, v0, xg, vg, dvg, x, p, dt, c_flow, y6)
        if hrate > 0.0:
            fw = fval * math.exp(-A0) * (1.0 - math.exp(-hrate * dt)) / hrate
        else:
            fw = fval * math.exp(-A0) * dt
        return x, p, fval * dt, fw
    if dt == 0.0:
        return x, p, 0.0, 0.0
    speed = 1.0 + abs(p)
    h = c_flow / speed
    n = int(dt / h) + 1
    h = dt / n
    F = 0.0
    Fw = 0.0
    t = 0.0
    fprev = payoff_eval_k(fk, fa, fb, fc, fd, x, p, H)
    wprev = math.exp(-A0)
    for _ in range(n):
        x, p = flow_step(pk, v0, xg, vg, dvg, x, p, h, y6)
        t += h
        fnew = payoff_eval_k(fk, fa, fb, fc, fd, x, p, H)
        wnew = math.exp(-(A0 + hrate * t))
        F += 0.5 * (fprev + fnew) * h
        Fw += 0.5 * (fprev * wprev + fnew * wnew) * h
        fprev = fnew
        wprev = wnew
    return x, p, F, Fw


# ---------------------------------------------------------------------------
# Path runners for the full phase-space process (V = 0 is the momentum-only
# process: the torus coordinate just free-streams).
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def full_path_end(st, lam, pk, v0, xg, vg, dvg, x0, p0, horizon, c_flow, y6, ev_cap):
    """Terminal state of the jump-diffusionless process at time `horizon`."""
    x = x0
    p = p0
    t = 0.0
    events = 0
    H = 0.5 * p * p + pot_value(pk, v0, xg, vg, dvg, x)
    emaj = escape_rate_k(lam, math.sqrt(2.0 * H))
    while events < ev_cap:
        wait = next_exp(st) / emaj
        if t + wait >= horizon:
            x, p = flow_advance(pk, v0, xg, vg, dvg, x, p, horizon - t, c_flow, y6)
            return x, p, events, 0
        x, p = flow_advance(pk, v0, xg, vg, dvg, x, p, wait, c_flow, y6)
        t += wait
        events += 1
        erate = escape_rate_k(lam, p)
        if erate > emaj * (1.0 + 1e-9):
            return x, p, events, 2  # majorant violated: shell bookkeeping bug
        if next_unit(st) * emaj < erate:
            p = sample_post_collision_k(st, lam, p)
            H = 0.5 * p * p + pot_value(pk, v0, xg, vg, dvg, x)
            emaj = escape_rate_k(lam, math.sqrt(2.0 * H))
    return x, p, events, 1


@njit(cache=True, nogil=True)
def full_path_record(st, lam, pk, v0, xg, vg, dvg, x0, p0, horizon, c_flow, y6,
                     times, kinds, xs, ps_before, ps_after, record_vacuous):
    """Record events into preallocated buffers; returns (count, truncated)."""
    cap = times.shape[0]
    x = x0
    p = p0
    t = 0.0
    k = 0
    H = 0.5 * p * p + pot_value(pk, v0, xg, vg, dvg, x)
    emaj = escape_rate_k(lam, math.sqrt(2.0 * H))
    while k < cap:
        wait = next_exp(st) / emaj
        if t + wait >= horizon:
            x, p = flow_advance(pk, v0, xg, vg, dvg, x, p, horizon - t, c_flow, y6)
            times[k] = horizon
            kinds[k] = 2  # boundary sample
            xs[k] = x
            ps_before[k] = p
            ps_after[k] = p
            return k + 1, 0
        x, p = flow_advance(pk, v0, xg, vg, dvg, x, p, wait, c_flow, y6)
        t += wait
        erate = escape_rate_k(lam, p)
        if next_unit(st) * emaj < erate:
            pnew = sample_post_collision_k(st, lam, p)
            times[k] = t
            kinds[k] = 0  # collision
            xs[k] = x
            ps_before[k] = p
            ps_after[k] = pnew
            k += 1
            p = pnew
            H = 0.5 * p * p + pot_value(pk, v0, xg, vg, dvg, x)
            emaj = escape_rate_k(lam, math.sqrt(2.0 * H))
        elif record_vacuous:
            times[k] = t
            kinds[k] = 1  # vacuous
            xs[k] = x
            ps_before[k] = p
            ps_after[k] = p
            k += 1
    return k, 1


@njit(cache=True, nogil=True)
def fw_path_record(st, lam, pk, v0, xg, vg, dvg, sup_v, rho0, eps0, horizon,
                   times, rhos, epss):
    """Record FW jump times and post-jump states; returns (count, exited, truncated)."""
    cap = times.shape[0]
    rho = rho0
    eps = eps0
    t = 0.0
    k = 0
    while k < cap:
        e_hi = escape_rate_k(lam, rho)
        wait = next_exp(st) / e_hi
        if t + wait >= horizon:
            return k, 0, 0
        t += wait
        x, p, accepted = fw_draw_collision(st, lam, pk, v0, xg, vg, dvg, sup_v, rho, eps)
        if not accepted:
            continue
        pp = sample_post_collision_k(st, lam, p)
        rho_new = math.sqrt(pp * pp + 2.0 * pot_value(pk, v0, xg, vg, dvg, x))
        eps_new = 1 if pp >= 0.0 else -1
        times[k] = t
        rhos[k] = rho_new
        epss[k] = eps_new
        k += 1
        if rho_new * rho_new <= 2.0 * sup_v + 1e-12:
            return k, 1, 0
        rho = rho_new
        eps = eps_new
    return k, 0, 1


@njit(cache=True, nogil=True)
def full_path_h_histogram(st, lam, pk, v0, xg, vg, dvg, x0, p0, burn, horizon,
                          c_flow, y6, edges, out, ev_cap):
    """Accumulate time spent per H-bin after burn-in (H constant on segments)."""
    x = x0
    p = p0
    t = 0.0
    events = 0
    nb = edges.shape[0] - 1
    H = 0.5 * p * p + pot_value(pk, v0, xg, vg, dvg, x)
    emaj = escape_rate_k(lam, math.sqrt(2.0 * H))
    while t < horizon and events < ev_cap:
        wait = next_exp(st) / emaj
        seg_a = t
        seg_b = min(t + wait, horizon)
        lo = max(seg_a, burn)
        if seg_b > lo:
            j = np.searchsorted(edges, H) - 1
            if 0 <= j < nb:
                out[j] += seg_b - lo
        if t + wait >= horizon:
            return 0
        x, p = flow_advance(pk, v0, xg, vg, dvg, x, p, wait, c_flow, y6)
        t += wait
        events += 1
        erate = escape_rate_k(lam, p)
        if next_unit(st) * emaj < erate:
            p = sample_post_collision_k(st, lam, p)
            H = 0.5 * p * p + pot_value(pk, v0, xg, vg, dvg, x)
            emaj = escape_rate_k(lam, math.sqrt(2.0 * H))
    return 1


@njit(cache=True, nogil=True)
def uhf_path(st, est_kind, lam, pk, v0, xg, vg, dvg, x0, p0,
             fk, fa, fb, fc, fd, mk, mlevel, mscale, hbar,
             t_cap, ev_cap, t_max_expw, c_flow, y6):
    """One path of the modulated-resolvent estimators.

    Returns (value, truncated, tail_weight).  For the killing estimator the
    value is int_0^R f dt; for the exponential-weight estimator it is
    int_0^Tmax f e^{-A} dt with e^{-A(Tmax)} reported as tail weight; for the
    chain estimators it is the (head-stopped or weight-stopped) series sum
    divided by hbar.
    """
    x = x0
    p = p0
    t = 0.0
    events = 0
    F = 0.0
    A = 0.0
    H = 0.5 * p * p + pot_value(pk, v0, xg, vg, dvg, x)

    if est_kind == EST_KILL or est_kind == EST_EXPW:
        xi = next_exp(st)
        emaj = escape_rate_k(lam, math.sqrt(2.0 * H))
        while True:
            if events >= ev_cap or t >= t_cap:
                return F, 1, math.exp(-A)
            wait = next_exp(st) / emaj
            hrate = modulator_eval_k(mk, mlevel, mscale, H)
            horizon_left = (t_max_expw - t) if est_kind == EST_EXPW else 1e300
            seg = min(wait, horizon_left)
            if est_kind == EST_KILL and hrate > 0.0 and A + hrate * seg >= xi:
                # killed inside this segment; integrate payoff up to the kill time
                tk = (xi - A) / hrate
                _, _, Fi, _ = flow_advance_accum(pk, v0, xg, vg, dvg, x, p, tk,
                                                 c_flow, y6, fk, fa, fb, fc, fd, H, 0.0, 0.0)
                return F + Fi, 0, 0.0
            x, p, Fi, Fwi = flow_advance_accum(pk, v0, xg, vg, dvg, x, p, seg,
                                               c_flow, y6, fk, fa, fb, fc, fd, H, hrate, A)
            if est_kind == EST_KILL:
                F += Fi
            else:
                F += Fwi
            A += hrate * seg
            t += seg
            if est_kind == EST_EXPW and t >= t_max_expw:
                return F, 0, math.exp(-A)
            if seg < wait:
                continue
            events += 1
            erate = escape_rate_k(lam, p)
            if erate > emaj * (1.0 + 1e-9):
                return F, 2, 0.0
            if next_unit(st) * emaj < erate:
                p = sample_post_collision_k(st, lam, p)
                H = 0.5 * p * p + pot_value(pk, v0, xg, vg, dvg, x)
                emaj = escape_rate_k(lam, math.sqrt(2.0 * H))

    # resolvent-chain estimators: sample the state at exponential(hbar) times
    w = 1.0
    emaj = escape_rate_k(lam, math.sqrt(2.0 * H))
    while True:
        if events >= ev_cap or t >= t_cap:
            return F / hbar, 1, w
        tau = next_exp(st) / hbar
        # evolve the process over the window tau
        left = tau
        while True:
            wait = next_exp(st) / emaj
            if wait >= left:
                x, p = flow_advance(pk, v0, xg, vg, dvg, x, p, left, c_flow, y6)
                t += left
                break
            x, p = flow_advance(pk, v0, xg, vg, dvg, x, p, wait, c_flow, y6)
            t += wait
            left -= wait
            events += 1
            if events >= ev_cap:
                return F / hbar, 1, w
            erate = escape_rate_k(lam, p)
            if erate > emaj * (1.0 + 1e-9):
                return F / hbar, 2, 0.0
            if next_unit(st) * emaj < erate:
                p = sample_post_collision_k(st, lam, p)
                H = 0.5 * p * p + pot_value(pk, v0, xg, vg, dvg, x)
                emaj = escape_rate_k(lam, math.sqrt(2.0 * H))
        H = 0.5 * p * p + pot_value(pk, v0, xg, vg, dvg, x)
        fval = payoff_eval_k(fk, fa, fb, fc, fd, x, p, H)
        hval = modulator_eval_k(mk, mlevel, mscale, H)
        if est_kind == EST_CHAIN_W:
            F += w * fval
            w *= 1.0 - hval / hbar
            if w < 1e-12:
                return F / hbar, 0, 0.0
        else:
            F += fval
            if next_unit(st) * hbar < hval:
                return F / hbar, 0, 0.0


@njit(cache=True, nogil=True)
def mom_jumps_until_below(st, lam, p0, thresh, cap):
    """Number of jumps of the momentum-only process until |p| < thresh."""
    p = p0
    for n in range(cap):
        if abs(p) < thresh:
            return n
        p = sample_post_collision_k(st, lam, p)
    return cap


# ---------------------------------------------------------------------------
# Freidlin-Wentzell (energy-shell) process runners.
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def fw_draw_collision(st, lam, pk, v0, xg, vg, dvg, sup_v, rho, eps):
    """Position and pre-collision momentum of a collision on the shell.

    Draws x from the time-occupation measure of the orbit (density
    proportional to (rho^2-2V)^{-1/2}) reweighted by the local collision rate,
    by two-stage rejection against the shell majorant rate E(lam, rho).
    Returns (x, p, accepted): `accepted` reports the single thinning test so
    the caller can use the draw inside a candidate/vacuous scheme.
    """
    e_hi = escape_rate_k(lam, rho)
    floor = rho * rho - 2.0 * sup_v
    while True:
        x = next_unit(st)
        sp2 = rho * rho - 2.0 * pot_value(pk, v0, xg, vg, dvg, x)
        u = next_unit(st)
        if u * u >= floor / sp2:  # accept w.p. sqrt(floor/sp2): occupation density 1/|p|
            continue
        p = eps * math.sqrt(sp2)
        accepted = next_unit(st) * e_hi < escape_rate_k(lam, p)
        return x, p, accepted


@njit(cache=True, nogil=True)
def fw_path(st, lam, pk, v0, xg, vg, dvg, sup_v, rho0, eps0, horizon,
            fk, fa, fb, mk, mlevel, mscale, est_kind, t_cap, ev_cap):
    """Freidlin-Wentzell jump process with killing-estimator accumulation.

    FW payoff codes: PAY_CONST -> fa; PAY_PBAND -> band in the quasi-momentum
    q = eps*rho; PAY_HBAND -> band in rho.  Modulator: MOD_ENERGY means
    mscale * chi(rho <= mlevel).  est_kind EST_KILL accumulates int f dt up to
    the killing time.  Returns (value, rho_T, eps_T, exited, truncated).
    """
    rho = rho0
    eps = eps0
    t = 0.0
    F = 0.0
    A = 0.0
    events = 0
    xi = next_exp(st)
    boundary = math.sqrt(2.0 * sup_v)
    while True:
        if events >= ev_cap or t >= t_cap:
            return F, rho, eps, 0, 1
        e_hi = escape_rate_k(lam, rho)
        wait = next_exp(st) / e_hi
        q = eps * rho
        fval = fa if fk == PAY_CONST else (1.0 if (fk == PAY_PBAND and fa <= q <= fb) else
                                           (1.0 if (fk == PAY_HBAND and fa <= rho <= fb) else 0.0))
        hrate = mscale if mk == MOD_CONST else (mscale if rho <= mlevel else 0.0)
        seg = wait
        if t + seg > horizon:
            seg = horizon - t
        if est_kind == EST_KILL and hrate > 0.0 and A + hrate * seg >= xi:
            tk = (xi - A) / hrate
            return F + fval * tk, rho, eps, 0, 0
        F += fval * seg
        A += hrate * seg
        t += seg
        if t >= horizon:
            return F, rho, eps, 0, 0
        events += 1
        x, p, accepted = fw_draw_collision(st, lam, pk, v0, xg, vg, dvg, sup_v, rho, eps)
        if not accepted:
            continue  # vacuous candidate
        pp = sample_post_collision_k(st, lam, p)
        rho_new2 = pp * pp + 2.0 * pot_value(pk, v0, xg, vg, dvg, x)
        rho_new = math.sqrt(rho_new2)
        eps_new = 1 if pp >= 0.0 else -1
        if rho_new2 <= 2.0 * sup_v + 1e-12:
            return F, rho_new, eps_new, 1, 0  # reduced-domain exit
        rho = rho_new
        eps = eps_new


@njit(cache=True, nogil=True)
def fw_skeleton_until_drop(st, lam, pk, v0, xg, vg, dvg, sup_v, rho0, eps0,
                           drop, cap, rho_hist, eps_hist):
    """Skeleton chain until the energy radius drops below rho0 - drop.

    Visited states (including the start, excluding the landing state) are
    written to rho_hist/eps_hist; returns (n_visited, rho_land, eps_land,
    exited_two_branch, truncated).
    """
    rho = rho0
    eps = eps0
    thresh = rho0 - drop
    n = 0
    hist_cap = rho_hist.shape[0]
    for _ in range(cap):
        if n < hist_cap:
            rho_hist[n] = rho
            eps_hist[n] = eps
        n += 1
        # draw a real collision: condition the thinning test to acceptance
        while True:
            x, p, accepted = fw_draw_collision(st, lam, pk, v0, xg, vg, dvg, sup_v, rho, eps)
            if accepted:
                break
        pp = sample_post_collision_k(st, lam, p)
        rho_new = math.sqrt(pp * pp + 2.0 * pot_value(pk, v0, xg, vg, dvg, x))
        eps_new = 1 if pp >= 0.0 else -1
        if rho_new <= thresh:
            return n, rho_new, eps_new, 0, 0
        if rho_new * rho_new <= 2.0 * sup_v + 1e-12:
            return n, rho_new, eps_new, 1, 0
        rho = rho_new
        eps = eps_new
    return n, rho, eps, 0, 1


@njit(cache=True, nogil=True)
def skeleton_bin_mass(lam, rho_edges, eps_sel, pk, v0, xg, vg, dvg,
                      gl_x, gl_w, rho, eps, out):
    """Add T-hat(gamma, bin) for each landing bin to `out` (one visited state).

    Bins are [rho_edges[j], rho_edges[j+1]) on branch eps_sel.  Uses the exact
    piecewise-Gaussian antiderivative of |a-u| e^{-u^2/2} at every
    kappa-quadrature node of the orbit, normalised by the shell escape rate.
    """
    nb = rho_edges.shape[0] - 1
    # kappa weights over gl_x nodes
    wsum = 0.0
    ehat = 0.0
    for i in range(gl_x.shape[0]):
        sp2 = rho * rho - 2.0 * pot_value(pk, v0, xg, vg, dvg, gl_x[i])
        wk = gl_w[i] / math.sqrt(sp2)
        wsum += wk
        ehat += wk * escape_rate_k(lam, eps * math.sqrt(sp2))
    ehat /= wsum
    for i in range(gl_x.shape[0]):
        vx = pot_value(pk, v0, xg, vg, dvg, gl_x[i])
        sp2 = rho * rho - 2.0 * vx
        pcur = eps * math.sqrt(sp2)
        wk = (gl_w[i] / math.sqrt(sp2)) / wsum
        a = lam * pcur
        for j in range(nb):
            lo2 = rho_edges[j] * rho_edges[j] - 2.0 * vx
            hi2 = rho_edges[j + 1] * rho_edges[j + 1] - 2.0 * vx
            if hi2 <= 0.0:
                continue
            plo = math.sqrt(lo2) if lo2 > 0.0 else 0.0
            phi = math.sqrt(hi2)
            if eps_sel > 0:
                u1 = 0.5 * ((1.0 + lam) * plo - (1.0 - lam) * pcur)
                u2 = 0.5 * ((1.0 + lam) * phi - (1.0 - lam) * pcur)
            else:
                u1 = 0.5 * ((1.0 + lam) * (-phi) - (1.0 - lam) * pcur)
                u2 = 0.5 * ((1.0 + lam) * (-plo) - (1.0 - lam) * pcur)
            # J(p,p') dp' = (4/(1+lam)) |a-u| e^{-u^2/2} du under the substitution
            out[j] += wk * (4.0 / (1.0 + lam)) * _abs_gauss_mass(a, u1, u2) / ehat


@njit(cache=True, nogil=True)
def _abs_gauss_mass(a, u1, u2):
    """int_{u1}^{u2} |a-u| e^{-u^2/2} du, exact."""
    if u2 <= u1:
        return 0.0
    if u1 >= a:
        return _g_above(a, u2) - _g_above(a, u1)
    if u2 <= a:
        return _g_below(a, u2) - _g_below(a, u1)
    return (_g_below(a, a) - _g_below(a, u1)) + (_g_above(a, u2) - _g_above(a, a))


@njit(cache=True, nogil=True)
def _g_below(a, u):
    # antiderivative of (a-u) e^{-u^2/2}
    return a * SQRT_2PI * norm_cdf(u) + math.exp(-0.5 * u * u)


@njit(cache=True, nogil=True)
def _g_above(a, u):
    # antiderivative of (u-a) e^{-u^2/2}
    return -a * SQRT_2PI * norm_cdf(u) - math.exp(-0.5 * u * u)
