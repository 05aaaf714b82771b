"""Geometry of the space of connected level-curve components of H.

A state gamma = (rho, eps) carries the energy radius rho = sqrt(2 H) and a
component label: +-1 (sign of p) for revolving orbits, a left-to-right well
index for trapped ones.  Orbit averages come in two weightings: "arc"
(uniform in phase-space arc length) and "time" (speed-inverse occupation,
the measure a revolving particle actually samples).

The reduced jump kernel between shells is taken in the energy-shell form
J-hat(gamma, gamma') = int kappa_gamma(dx) sum_branch J(p(x), p'(x)) rho'/|p'|,
the unique weighting for which the reduced escape rate equals the orbit
average of the full escape rate exactly (so E-hat_0 = 8 identically and every
V = 0 quantity collapses to its momentum-space counterpart).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .model import (ModelParams, Payoff, PhaseState, SeparatrixError,
                    escape_rate, hamiltonian, jump_kernel)

SEPARATRIX_TOL = 1e-9


@dataclass(frozen=True)
class CurveState:
    rho: float
    eps: int


def quasi_momentum(gamma: CurveState, params: ModelParams) -> float:
    """q(gamma) = eps * rho above the low-energy threshold, else 0."""
    return gamma.eps * gamma.rho if gamma.rho >= params.l else 0.0


def critical_levels(potential) -> np.ndarray:
    """Energy values of the separatrices (local maxima of V)."""
    if potential.kind == "zero" or potential.sup_v == 0.0:
        return np.empty(0)
    if potential.kind == "cosine":
        return np.array([potential.v0])
    x = np.arange(4096) / 4096.0
    v = potential.value(x)
    mask = (v >= np.roll(v, 1)) & (v >= np.roll(v, -1)) & (v > potential.inf_v + 1e-12)
    return np.unique(np.round(v[mask], 12))


def curve_state(s: PhaseState, params: ModelParams) -> CurveState:
    """Map a phase point to its level-curve component (rho, label)."""
    pot = params.potential
    H = hamiltonian(s, pot)
    for c in critical_levels(pot):
        if abs(H - c) < SEPARATRIX_TOL:
            raise SeparatrixError(f"separatrix state: H={H!r} at critical level {c!r}")
    rho = math.sqrt(2.0 * H)
    if H > pot.sup_v:
        return CurveState(rho=rho, eps=1 if s.p >= 0 else -1)
    return CurveState(rho=rho, eps=_well_index(s.x, H, pot))


def _well_index(x: float, H: float, pot) -> int:
    """Left-to-right index of the sublevel component {V <= H} containing x.

    A well wrapping through x = 0 sorts by its left edge minus one, so the
    component containing the origin comes first.
    """
    n = 4096
    xs = np.arange(n) / n
    mask = pot.value(xs) <= H + 1e-15
    if mask.all():
        return 0
    # circular runs of the sublevel mask: (start index, length)
    runs = []
    start = int(np.argmin(mask))  # begin the scan outside a well
    in_run = False
    for k in range(n + 1):
        j = (start + k) % n
        if k < n and mask[j]:
            if not in_run:
                run_start, run_len, in_run = j, 0, True
            run_len += 1
        elif in_run:
            runs.append((run_start, run_len))
            in_run = False
    def sort_key(run):
        rs, rl = run
        wraps = rs + rl > n
        return xs[rs] - 1.0 if wraps else xs[rs]
    runs.sort(key=sort_key)
    xi = int((x % 1.0) * n)
    for idx, (rs, rl) in enumerate(runs):
        if (xi - rs) % n < rl:
            return idx
    # x sits between grid points of a well edge; fall back to the nearest run
    dists = [min(abs(xs[rs] - x % 1.0), 1.0 - abs(xs[rs] - x % 1.0)) for rs, _ in runs]
    return int(np.argmin(dists))


@lru_cache(maxsize=64)
def _gl_ref(n_panels: int, n_gl: int = 8):
    """Composite Gauss-Legendre rule on [0, 1]: (nodes, weights)."""
    nodes, weights = np.polynomial.legendre.leggauss(n_gl)
    edges = np.linspace(0.0, 1.0, n_panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    x = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    w = (half[:, None] * weights[None, :]).ravel()
    return x, w


def _gl_panels(a: float, b: float, n_panels: int, n_gl: int = 8):
    x, w = _gl_ref(n_panels, n_gl)
    return a + (b - a) * x, (b - a) * w


@dataclass(frozen=True, eq=False)
class CurveQuadrature:
    """Quadrature over one orbit: nodes, normalized eta/kappa weights, period.

    For trapped orbits the nodes cover the well's x-range with a sin^2
    substitution absorbing the turning-point singularities, and averages
    include both momentum signs.
    """

    gamma: CurveState
    x: np.ndarray
    p_abs: np.ndarray
    eta_w: np.ndarray
    kappa_w: np.ndarray
    period: float
    arc_length: float
    trapped: bool

    def averages(self, fvals_plus: np.ndarray, fvals_minus=None, weight: str = "arc") -> float:
        w = self.eta_w if weight == "arc" else self.kappa_w
        if self.trapped:
            return float(0.5 * np.sum(w * (fvals_plus + fvals_minus)))
        return float(np.sum(w * fvals_plus))


def _build_quadrature(rho: float, eps: int, params: ModelParams, n: int) -> CurveQuadrature:
    pot = params.potential
    H = 0.5 * rho * rho
    for c in critical_levels(pot):
        if abs(H - c) < SEPARATRIX_TOL:
            raise SeparatrixError(f"separatrix orbit: H={H!r}")
    trapped = H <= pot.sup_v
    if not trapped:
        x, w = _gl_panels(0.0, 1.0, max(8, n // 8))
    else:
        xl, xr = _turning_points(H, eps, pot)
        theta, wt = _gl_panels(0.0, 0.5 * math.pi, max(8, n // 8))
        x = xl + (xr - xl) * np.sin(theta) ** 2
        w = wt * (xr - xl) * np.sin(2.0 * theta)
    v = params.potential.value(x % 1.0)
    sp2 = np.maximum(rho * rho - 2.0 * v, 0.0)
    p_abs = np.sqrt(sp2)
    dv = params.potential.slope(x % 1.0)
    with np.errstate(divide="ignore"):
        time_raw = w / p_abs
        arc_raw = w * np.sqrt(sp2 + dv * dv) / p_abs
    period = float(np.sum(time_raw)) * (2.0 if trapped else 1.0)
    arc = float(np.sum(arc_raw)) * (2.0 if trapped else 1.0)
    scale = 2.0 if trapped else 1.0
    return CurveQuadrature(
        gamma=CurveState(rho, eps), x=x % 1.0, p_abs=p_abs,
        eta_w=arc_raw * scale / arc, kappa_w=time_raw * scale / period,
        period=period, arc_length=arc, trapped=trapped,
    )


def _turning_points(H: float, well: int, pot):
    if pot.kind == "cosine":
        width = math.acos(1.0 - 2.0 * H / pot.v0) / (2.0 * math.pi)
        return -width, width  # single well centred at x = 0
    n = 8192
    xs = np.arange(-n // 2, n) / n  # cover wells wrapping through 0
    v = pot.value(xs % 1.0)
    mask = v <= H
    runs = []
    in_run = False
    for j in range(len(xs)):
        if mask[j] and not in_run:
            in_run, run_start = True, j
        elif not mask[j] and in_run:
            in_run = False
            if xs[run_start] >= 0.0 or xs[j - 1] >= 0.0:
                runs.append((xs[run_start], xs[j - 1]))
    seen = []
    for a, b in runs:
        if not any(abs(a - c[0] % 1.0) < 1e-9 for c in seen):
            seen.append((a, b))
    seen.sort()
    if well >= len(seen):
        raise ValueError(f"well index {well} out of range ({len(seen)} wells)")
    return seen[well]


@lru_cache(maxsize=4096)
def _cached_quadrature(rho_key: float, eps: int, params_id: int, n: int):
    params = _PARAMS_BY_ID[params_id]
    return _build_quadrature(rho_key, eps, params, n)


_PARAMS_BY_ID: dict[int, ModelParams] = {}


def curve_quadrature(gamma: CurveState, params: ModelParams, n: int = 512) -> CurveQuadrature:
    _PARAMS_BY_ID.setdefault(id(params), params)
    return _cached_quadrature(float(gamma.rho), int(gamma.eps), id(params), n)


def orbit_period(gamma: CurveState, params: ModelParams) -> float:
    """Time of one traversal (full closed loop for trapped orbits)."""
    return curve_quadrature(gamma, params).period


def curve_measure_density(gamma: CurveState, params: ModelParams) -> float:
    """Density of the pushforward of Lebesgue measure, d gamma / d rho = rho T(gamma)."""
    return gamma.rho * orbit_period(gamma, params)


def kappa_density(gamma: CurveState, x: float, params: ModelParams) -> float:
    """Time-occupation density on the torus, (rho^2-2V(x))^{-1/2} normalized."""
    if gamma.rho ** 2 <= 2.0 * params.potential.sup_v:
        raise ValueError("trapped orbit unsupported here")
    q = curve_quadrature(gamma, params)
    v = float(params.potential.value(x % 1.0))
    return (gamma.rho ** 2 - 2.0 * v) ** -0.5 / q.period


def hat_map(f: Payoff, gamma: CurveState, params: ModelParams, weight: str = "arc") -> float:
    """Orbit average of a payoff over eta_gamma (arc length by default)."""
    q = curve_quadrature(gamma, params)

    def evaluate(sign):
        p = sign * q.p_abs
        if f.kind == "custom":
            return np.array([f.fn(xx, pv) for xx, pv in zip(q.x, p)])
        return np.array([f.eval(xx, pv, params) for xx, pv in zip(q.x, p)])

    if q.trapped:
        return q.averages(evaluate(1.0), evaluate(-1.0), weight)
    return q.averages(evaluate(float(gamma.eps)), None, weight)


def _require_single_branch(gamma: CurveState, rho_prime: float, params: ModelParams):
    sup_v = params.potential.sup_v
    if gamma.rho ** 2 <= 2.0 * sup_v:
        raise ValueError("trapped orbit unsupported here")
    if rho_prime ** 2 <= 2.0 * sup_v:
        raise ValueError("two-branch regime unsupported")


def fw_jump_kernel(lam: float, gamma: CurveState, gamma2: CurveState,
                   params: ModelParams) -> float:
    """Reduced jump-rate density J-hat(gamma, gamma') w.r.t. d rho' on a branch."""
    _require_single_branch(gamma, gamma2.rho, params)
    q = curve_quadrature(gamma, params)
    p = gamma.eps * q.p_abs
    v = params.potential.value(q.x)
    sp2 = gamma2.rho ** 2 - 2.0 * v
    pp = gamma2.eps * np.sqrt(sp2)
    vals = jump_kernel(lam, p, pp) * gamma2.rho / np.sqrt(sp2)
    return float(np.sum(q.kappa_w * vals))


def fw_escape_rate(lam: float, gamma: CurveState, params: ModelParams) -> float:
    """E-hat(gamma): the kappa average of the full escape rate (exact exchange)."""
    if gamma.rho ** 2 <= 2.0 * params.potential.sup_v:
        raise ValueError("trapped orbit unsupported here")
    q = curve_quadrature(gamma, params)
    return float(np.sum(q.kappa_w * escape_rate(lam, q.p_abs)))


def fw_skeleton_kernel(lam: float, gamma: CurveState, gamma2: CurveState,
                       params: ModelParams) -> float:
    """Skeleton transition density T-hat = J-hat / E-hat."""
    return fw_jump_kernel(lam, gamma, gamma2, params) / fw_escape_rate(lam, gamma, params)


def fw_kernel_integral(lam: float, gamma: CurveState, G, params: ModelParams,
                       u_max: float = 12.0, n_u: int = 40) -> float:
    """int J-hat(gamma, gamma') G(gamma') d gamma', exactly in shell coordinates.

    Exchanges the gamma' integral for the collision variable u at every
    occupation node of the orbit: d p' J(p, p') = (4/(1+lam)) |a-u| e^{-u^2/2} du
    with a = lam p.  G is a vectorized callable of (rho', eps').
    """
    if gamma.rho ** 2 <= 2.0 * params.potential.sup_v:
        raise ValueError("trapped orbit unsupported here")
    q = curve_quadrature(gamma, params)
    v = params.potential.value(q.x)
    p = gamma.eps * q.p_abs
    a = lam * p
    ref_x, ref_w = _gl_ref(n_u)
    kink = np.clip(a, -u_max, u_max)
    # per-node u panels split at the |a-u| kink: [-u_max, kink] and [kink, u_max]
    lo = np.concatenate([
        -u_max + (kink[:, None] + u_max) * ref_x[None, :],
        kink[:, None] + (u_max - kink[:, None]) * ref_x[None, :]], axis=1)
    wu = np.concatenate([
        (kink[:, None] + u_max) * ref_w[None, :],
        (u_max - kink[:, None]) * ref_w[None, :]], axis=1)
    pp = (2.0 * lo + (1.0 - lam) * p[:, None]) / (1.0 + lam)
    rho2 = np.sqrt(pp * pp + 2.0 * v[:, None])
    eps2 = np.where(pp >= 0.0, 1, -1)
    dens = (4.0 / (1.0 + lam)) * np.abs(a[:, None] - lo) * np.exp(-0.5 * lo * lo)
    inner = np.sum(wu * dens * G(rho2, eps2), axis=1)
    return float(np.sum(q.kappa_w * inner))
