"""Monte-Carlo estimators of the state-modulated resolvent U_h(s, f) and of
its energy-shell analogue.

Four equivalent estimators are provided: killing (random horizon with
instantaneous rate h), exponential path weight, resolvent-chain weights, and
resolvent-chain coins.  The chain estimators sample the process at
exponential(hbar) times and are calibrated so that h == hbar, f == 1 returns
1/hbar; all four agree in expectation and the test suite enforces pairwise
agreement.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from . import _kernels as K
from .curves import CurveState, curve_quadrature
from .model import ModelParams, Modulator, Payoff, PhaseState
from .simulate import SimConfig, _run_blocks

_EST_CODES = {
    "killing": K.EST_KILL,
    "exp_weight": K.EST_EXPW,
    "chain_weights": K.EST_CHAIN_W,
    "chain_coins": K.EST_CHAIN_C,
}

N_BATCHES = 32


@dataclass(frozen=True)
class ResolventQuery:
    """One resolvent evaluation request."""

    start: Union[PhaseState, CurveState]
    modulator: Modulator
    payoff: Payoff
    estimator: str = "killing"
    n_paths: int = 4096
    seed: int = 0
    stream_offset: int = 0
    h_majorant: Optional[float] = None  # hbar >= sup h; defaults to sup h
    t_max_expw: float = 200.0
    workers: int = 1

    def hbar(self) -> float:
        hb = self.h_majorant if self.h_majorant is not None else self.modulator.sup_bound
        if hb < self.modulator.sup_bound:
            raise ValueError("h majorant must dominate sup h")
        return hb


@dataclass
class Estimate:
    """Universal MC result record (stderr from 32 batch means)."""

    mean: float
    stderr: float
    n: int
    wall_time: float
    biased: bool = False
    bias_bound: float = 0.0

    def agrees_with(self, other: "Estimate", sigmas: float = 3.0, floor: float = 0.0) -> bool:
        tol = sigmas * math.hypot(self.stderr, other.stderr) + self.bias_bound + other.bias_bound
        return abs(self.mean - other.mean) <= max(tol, floor)


def _batch_stats(values: np.ndarray):
    n = len(values)
    mean = float(values.mean())
    k = min(N_BATCHES, n)
    usable = n - n % k
    bm = values[:usable].reshape(k, -1).mean(axis=1)
    stderr = float(bm.std(ddof=1) / math.sqrt(k)) if k > 1 else float("inf")
    return mean, stderr


@K.njit(cache=True, nogil=True)
def _uhf_block(seed, lo, hi, est_kind, lam, pk, v0, xg, vg, dvg, x0, p0,
               fk, fa, fb, fc, fd, mk, mlevel, mscale, hbar,
               t_cap, ev_cap, t_max_expw, c_flow, y6, out_vals, out_flags, out_tail):
    for i in range(lo, hi):
        st = K.stream_state(seed, i)
        v, flag, tail = K.uhf_path(st, est_kind, lam, pk, v0, xg, vg, dvg, x0, p0,
                                   fk, fa, fb, fc, fd, mk, mlevel, mscale, hbar,
                                   t_cap, ev_cap, t_max_expw, c_flow, y6)
        out_vals[i - lo] = v
        out_flags[i - lo] = flag
        out_tail[i - lo] = tail


def _estimate(q: ResolventQuery, params: ModelParams, config: SimConfig) -> Estimate:
    if not isinstance(q.start, PhaseState):
        raise TypeError("phase-space estimators need a PhaseState start")
    est_kind = _EST_CODES[q.estimator]
    pk, v0, xg, vg, dvg = params.potential.kernel_args()
    fk, fa, fb, fc, fd = q.payoff.kernel_args()
    mk, mlevel, mscale = q.modulator.kernel_args(params)
    t0 = time.perf_counter()
    vals = np.empty(q.n_paths)
    flags = np.empty(q.n_paths, dtype=np.int8)
    tails = np.empty(q.n_paths)
    _run_blocks(_uhf_block, q.n_paths, q.workers,
                (np.uint64(q.seed),),
                (est_kind, params.lam, pk, v0, xg, vg, dvg, q.start.x, q.start.p,
                 fk, fa, fb, fc, fd, mk, mlevel, mscale, q.hbar(),
                 config.time_cap, config.event_cap, q.t_max_expw,
                 config.flow_step, K.Y6_COEFFS),
                (vals, flags, tails), q.stream_offset)
    if (flags == 2).any():
        raise RuntimeError("majorant violation inside a trajectory")
    mean, stderr = _batch_stats(vals)
    biased = bool((flags == 1).any())
    bias_bound = 0.0
    if q.estimator == "exp_weight":
        # tail beyond the horizon cap, sup f times the mean residual weight
        bias_bound = q.payoff.sup_bound * float(tails.mean())
    elif biased:
        bias_bound = q.payoff.sup_bound * float(tails[flags == 1].mean())
    return Estimate(mean=mean, stderr=stderr, n=q.n_paths,
                    wall_time=time.perf_counter() - t0, biased=biased,
                    bias_bound=bias_bound)


def killing_path_values(q: ResolventQuery, params: ModelParams,
                        config: SimConfig = SimConfig()) -> np.ndarray:
    """Raw per-path killing-estimator values (path i uses stream offset + i);
    lets callers pair runs through common random numbers."""
    pk, v0, xg, vg, dvg = params.potential.kernel_args()
    fk, fa, fb, fc, fd = q.payoff.kernel_args()
    mk, mlevel, mscale = q.modulator.kernel_args(params)
    vals = np.empty(q.n_paths)
    flags = np.empty(q.n_paths, dtype=np.int8)
    tails = np.empty(q.n_paths)
    _run_blocks(_uhf_block, q.n_paths, q.workers, (np.uint64(q.seed),),
                (K.EST_KILL, params.lam, pk, v0, xg, vg, dvg, q.start.x, q.start.p,
                 fk, fa, fb, fc, fd, mk, mlevel, mscale, 1.0,
                 config.time_cap, config.event_cap, 0.0,
                 config.flow_step, K.Y6_COEFFS),
                (vals, flags, tails), q.stream_offset)
    if (flags == 2).any():
        raise RuntimeError("majorant violation inside a trajectory")
    return vals


def hat_path_values(gamma: CurveState, payoff: Payoff, params: ModelParams,
                    modulator: Modulator, n_paths: int, seed: int,
                    config: SimConfig = SimConfig()) -> np.ndarray:
    """Raw per-path values of the orbit-averaged resolvent estimator.

    Path i's dynamics stream is (seed, i), identical to killing_path_values
    with the same seed; the start draws use a disjoint stream, so the two runs
    share collision randomness path-for-path (common random numbers).
    """
    from .sampling import RandomStream

    starts_stream = RandomStream(seed, stream_id=2 ** 62)
    starts = sample_eta_states(gamma, params, n_paths, starts_stream)
    pk, v0, xg, vg, dvg = params.potential.kernel_args()
    fk, fa, fb, fc, fd = payoff.kernel_args()
    mk, mlevel, mscale = modulator.kernel_args(params)
    vals = np.empty(n_paths)
    flags = np.zeros(n_paths, dtype=np.int8)
    xs = np.array([s.x for s in starts])
    ps = np.array([s.p for s in starts])
    _hat_block(np.uint64(seed), 0, n_paths, params.lam, pk, v0, xg, vg, dvg,
               xs, ps, fk, fa, fb, fc, fd, mk, mlevel, mscale,
               config.time_cap, config.event_cap, config.flow_step, K.Y6_COEFFS,
               vals, flags)
    if (flags == 2).any():
        raise RuntimeError("majorant violation inside a trajectory")
    return vals


def estimate_killing(q: ResolventQuery, params: ModelParams,
                     config: SimConfig = SimConfig()) -> Estimate:
    """U_h(s, f) as the expected payoff integral up to the h-rate killing time.

    The killing clock compares one unit exponential against the exact running
    integral of h, which is piecewise constant along flow segments for the
    energy-indicator modulator; no per-step Bernoulli discretisation.
    """
    q = _as(q, "killing")
    return _estimate(q, params, config)


def estimate_exp_weight(q: ResolventQuery, params: ModelParams,
                        config: SimConfig = SimConfig()) -> Estimate:
    """U_h(s, f) as int_0^Tmax f(S_t) e^{-int_0^t h} dt with a tail bias bound.

    The reported bias bound is sup f times the sample mean of e^{-A(Tmax)};
    the remaining tail is that weight times the resolvent from the horizon
    state, so the bound is tight up to a factor sup U / sup f.
    """
    q = _as(q, "exp_weight")
    return _estimate(q, params, config)


def estimate_chain_weights(q: ResolventQuery, params: ModelParams,
                           config: SimConfig = SimConfig()) -> Estimate:
    """Resolvent-chain series with multiplicative (1 - h/hbar) weights.

    Accumulates sum_n prod_{m<n} (1 - h(S_{tau_m})/hbar) f(S_{tau_n}) over the
    chain sampled at exponential(hbar) times, stops once the running product
    falls below 1e-12, and divides by hbar (pinned by the h == hbar, f == 1
    calibration, which the expectation sends to 1/hbar).
    """
    q = _as(q, "chain_weights")
    return _estimate(q, params, config)


def estimate_chain_coins(q: ResolventQuery, params: ModelParams,
                         config: SimConfig = SimConfig()) -> Estimate:
    """Resolvent-chain sum stopped at the first head of h/hbar coins.

    Accumulates f(S_{tau_n}) up to and including the first head and divides
    by hbar; same mean as the weights variant with more variance.
    """
    q = _as(q, "chain_coins")
    return _estimate(q, params, config)


def _as(q: ResolventQuery, name: str) -> ResolventQuery:
    from dataclasses import replace

    return q if q.estimator == name else replace(q, estimator=name)


# ---------------------------------------------------------------------------
# Energy-shell (reduced-process) estimators.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CurvePayoff:
    """Payoff on shell states: constant, band in rho, or band in q = eps rho."""

    kind: str
    a: float = 0.0
    b: float = 0.0
    sup_bound: float = 1.0

    @staticmethod
    def constant(value: float) -> "CurvePayoff":
        return CurvePayoff(kind="constant", a=float(value), sup_bound=float(value))

    @staticmethod
    def rho_band(lo: float, hi: float) -> "CurvePayoff":
        return CurvePayoff(kind="rho_band", a=float(lo), b=float(hi))

    @staticmethod
    def q_band(lo: float, hi: float) -> "CurvePayoff":
        return CurvePayoff(kind="q_band", a=float(lo), b=float(hi))

    def kernel_args(self):
        code = {"constant": K.PAY_CONST, "q_band": K.PAY_PBAND, "rho_band": K.PAY_HBAND}[self.kind]
        return code, self.a, self.b

    def eval(self, rho, eps):
        rho = np.asarray(rho, dtype=float)
        q = np.asarray(eps, dtype=float) * rho
        if self.kind == "constant":
            return np.full_like(rho, self.a)
        if self.kind == "rho_band":
            return ((self.a <= rho) & (rho <= self.b)).astype(float)
        return ((self.a <= q) & (q <= self.b)).astype(float)


@dataclass(frozen=True)
class CurveModulator:
    """Killing rate on shells; the default mirrors the low-energy indicator
    chi(rho <= sqrt(2 l)) used by the reduced analysis."""

    kind: str = "rho_indicator"
    level: float = -1.0  # -1 means sqrt(2 l)
    scale: float = 1.0

    def resolved_level(self, params: ModelParams) -> float:
        return math.sqrt(2.0 * params.l) if self.level < 0 else self.level

    def kernel_args(self, params: ModelParams):
        if self.kind == "constant":
            return K.MOD_CONST, 0.0, self.scale
        return K.MOD_ENERGY, self.resolved_level(params), self.scale

    @property
    def sup_bound(self):
        return self.scale


@K.njit(cache=True, nogil=True)
def _fw_kill_block(seed, lo, hi, lam, pk, v0, xg, vg, dvg, sup_v, rho0, eps0,
                   fk, fa, fb, mk, mlevel, mscale, t_cap, ev_cap,
                   out_vals, out_exit, out_flags):
    for i in range(lo, hi):
        st = K.stream_state(seed, i)
        v, _, _, exited, trunc = K.fw_path(st, lam, pk, v0, xg, vg, dvg, sup_v,
                                           rho0, eps0, 1e300, fk, fa, fb,
                                           mk, mlevel, mscale, K.EST_KILL,
                                           t_cap, ev_cap)
        out_vals[i - lo] = v
        out_exit[i - lo] = exited
        out_flags[i - lo] = trunc


def estimate_fw_resolvent(gamma: CurveState, fhat: CurvePayoff, params: ModelParams,
                          hhat: CurveModulator = CurveModulator(),
                          n_paths: int = 4096, seed: int = 0,
                          config: SimConfig = SimConfig(), workers: int = 1) -> Estimate:
    """Killing estimator of the reduced-process resolvent from a shell state.

    Paths that fall into the two-branch regime below rho = sqrt(2 sup V) stop
    contributing there; the logged bias bound is the exit fraction times
    sup f-hat times the mean killed-path lifetime.  Typical starts sit above
    rho = sqrt(2 l); anything on the single-branch domain is accepted.
    """
    if gamma.rho ** 2 <= 2.0 * params.potential.sup_v:
        raise ValueError("start the reduced process above the two-branch boundary")
    pk, v0, xg, vg, dvg = params.potential.kernel_args()
    fk, fa, fb = fhat.kernel_args()
    mk, mlevel, mscale = hhat.kernel_args(params)
    t0 = time.perf_counter()
    vals = np.empty(n_paths)
    exited = np.empty(n_paths, dtype=np.int8)
    flags = np.empty(n_paths, dtype=np.int8)
    _run_blocks(_fw_kill_block, n_paths, workers, (np.uint64(seed),),
                (params.lam, pk, v0, xg, vg, dvg, params.potential.sup_v,
                 gamma.rho, gamma.eps, fk, fa, fb, mk, mlevel, mscale,
                 config.time_cap, config.event_cap),
                (vals, exited, flags), 0)
    mean, stderr = _batch_stats(vals)
    exit_frac = float((exited == 1).mean())
    # post-exit continuation is at most the typical discounted lifetime again
    bias = exit_frac * 2.0 * max(mean, 0.0)
    return Estimate(mean=mean, stderr=stderr, n=n_paths,
                    wall_time=time.perf_counter() - t0,
                    biased=bool((flags == 1).any()) or exit_frac > 0,
                    bias_bound=bias)


def sample_eta_states(gamma: CurveState, params: ModelParams, n: int,
                      stream) -> list[PhaseState]:
    """Draw starting states from the arc-length measure on the orbit."""
    q = curve_quadrature(gamma, params)
    pot = params.potential
    dens_bound = float(np.max(np.sqrt(q.p_abs ** 2
                                      + params.potential.slope(q.x) ** 2) / q.p_abs)) * 1.05
    out = []
    while len(out) < n:
        x = stream.uniform()
        sp2 = gamma.rho ** 2 - 2.0 * float(pot.value(x))
        if sp2 <= 0:
            continue
        dens = math.sqrt(sp2 + float(pot.slope(x)) ** 2) / math.sqrt(sp2)
        if stream.uniform() * dens_bound < dens:
            out.append(PhaseState(x, gamma.eps * math.sqrt(sp2)))
    return out


def estimate_hat_resolvent(gamma: CurveState, payoff: Payoff, params: ModelParams,
                           modulator: Modulator, n_paths: int = 4096, seed: int = 0,
                           config: SimConfig = SimConfig(), workers: int = 1) -> Estimate:
    """Orbit average of the full-process resolvent: starts drawn from the
    arc-length measure, one killing path per start."""
    from .sampling import RandomStream

    if gamma.rho ** 2 <= 2.0 * params.potential.sup_v:
        raise ValueError("trapped orbit unsupported here")
    starts_stream = RandomStream(seed, stream_id=2 ** 62)
    starts = sample_eta_states(gamma, params, n_paths, starts_stream)
    pk, v0, xg, vg, dvg = params.potential.kernel_args()
    fk, fa, fb, fc, fd = payoff.kernel_args()
    mk, mlevel, mscale = modulator.kernel_args(params)
    t0 = time.perf_counter()
    vals = np.empty(n_paths)
    flags = np.zeros(n_paths, dtype=np.int8)
    xs = np.array([s.x for s in starts])
    ps = np.array([s.p for s in starts])
    _hat_block(np.uint64(seed), 0, n_paths, params.lam, pk, v0, xg, vg, dvg,
               xs, ps, fk, fa, fb, fc, fd, mk, mlevel, mscale,
               config.time_cap, config.event_cap, config.flow_step, K.Y6_COEFFS,
               vals, flags)
    if (flags == 2).any():
        raise RuntimeError("majorant violation inside a trajectory")
    mean, stderr = _batch_stats(vals)
    return Estimate(mean=mean, stderr=stderr, n=n_paths,
                    wall_time=time.perf_counter() - t0,
                    biased=bool((flags == 1).any()))


@K.njit(cache=True, nogil=True)
def _hat_block(seed, lo, hi, lam, pk, v0, xg, vg, dvg, xs, ps,
               fk, fa, fb, fc, fd, mk, mlevel, mscale, t_cap, ev_cap, c_flow, y6,
               out_vals, out_flags):
    for i in range(lo, hi):
        st = K.stream_state(seed, i)
        v, flag, _ = K.uhf_path(st, K.EST_KILL, lam, pk, v0, xg, vg, dvg,
                                xs[i - lo], ps[i - lo], fk, fa, fb, fc, fd,
                                mk, mlevel, mscale, 1.0, t_cap, ev_cap, 0.0,
                                c_flow, y6)
        out_vals[i - lo] = v
        out_flags[i - lo] = flag


def write_results_csv(path, rows):
    """rows: iterables of (query_id, estimator, Estimate)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["query_id", "estimator", "mean", "stderr", "n", "biased_flag"])
        for query_id, estimator, est in rows:
            w.writerow([query_id, estimator, f"{est.mean:.17g}", f"{est.stderr:.17g}",
                        est.n, int(est.biased)])
