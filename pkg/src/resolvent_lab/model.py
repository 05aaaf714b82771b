"""Closed-form model ingredients shared by every other module.

The model is a one-dimensional test particle on the cylinder T x R with
Hamiltonian H = p^2/2 + V(x) and elastic collisions against an ideal gas.
A single mass-ratio parameter lambda in (0, 1] controls the collision kernel;
lambda = 0 is the heavy-particle limit in which the momentum increments follow
the density j(q) = |q| exp(-q^2/8).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.special import ndtr

from . import _kernels as K

SQRT_2PI = math.sqrt(2.0 * math.pi)

_EMPTY = np.empty(0, dtype=np.float64)


class SeparatrixError(ValueError):
    """State sits on a critical level curve where orbit quadratures degenerate."""


@dataclass(frozen=True, eq=False)
class Potential:
    """Periodic potential V: T -> R+ with V >= 0 and inf V = 0.

    kind is one of "zero", "cosine" (V = (v0/2)(1 - cos 2 pi x), so
    sup V = v0) or "tabulated" (periodic grid of x, V, dV/dx samples with
    linear interpolation).
    """

    kind: str
    v0: float = 0.0
    x_grid: np.ndarray = field(default_factory=lambda: _EMPTY)
    v_grid: np.ndarray = field(default_factory=lambda: _EMPTY)
    dv_grid: np.ndarray = field(default_factory=lambda: _EMPTY)

    @staticmethod
    def zero() -> "Potential":
        return Potential(kind="zero")

    @staticmethod
    def cosine(v0: float) -> "Potential":
        if v0 < 0:
            raise ValueError("cosine amplitude must be >= 0")
        return Potential(kind="cosine", v0=float(v0))

    @staticmethod
    def tabulated(x: np.ndarray, v: np.ndarray, dv: np.ndarray) -> "Potential":
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        dv = np.asarray(dv, dtype=float)
        if not (x.shape == v.shape == dv.shape) or x.ndim != 1 or x.size < 8:
            raise ValueError("tabulated potential needs matching 1-d grids")
        if np.any(v < -1e-12):
            raise ValueError("potential must be nonnegative")
        n = x.size
        if not np.allclose(x, np.arange(n) / n, atol=1e-12):
            raise ValueError("grid must be uniform on [0, 1)")
        pot = Potential(kind="tabulated", x_grid=x, v_grid=v, dv_grid=dv)
        err = pot.derivative_consistency()
        if err > 1e-6:
            raise ValueError(f"dV/dx inconsistent with V: finite-difference error {err:.2e}")
        return pot

    @property
    def code(self) -> int:
        return {"zero": K.POT_ZERO, "cosine": K.POT_COSINE, "tabulated": K.POT_TABULATED}[self.kind]

    @property
    def sup_v(self) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "cosine":
            return self.v0
        return float(self.v_grid.max())

    @property
    def inf_v(self) -> float:
        if self.kind == "tabulated":
            return float(self.v_grid.min())
        return 0.0

    def value(self, x):
        x = np.asarray(x, dtype=float) % 1.0
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "cosine":
            return 0.5 * self.v0 * (1.0 - np.cos(2.0 * np.pi * x))
        xg = np.concatenate([self.x_grid, [1.0]])
        vg = np.concatenate([self.v_grid, [self.v_grid[0]]])
        return np.interp(x, xg, vg)

    def slope(self, x):
        x = np.asarray(x, dtype=float) % 1.0
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "cosine":
            return np.pi * self.v0 * np.sin(2.0 * np.pi * x)
        xg = np.concatenate([self.x_grid, [1.0]])
        dg = np.concatenate([self.dv_grid, [self.dv_grid[0]]])
        return np.interp(x, xg, dg)

    def derivative_consistency(self, n: int = 1024) -> float:
        """Max abs deviation of the stored slope from a 4th-order FD of V.

        Tabulated potentials are checked at their own nodes (the interpolant
        between nodes is only piecewise linear); analytic kinds on an
        n-point grid.
        """
        if self.kind == "tabulated":
            x = self.x_grid
            h = 1.0 / x.size
            v = self.v_grid
            slope = self.dv_grid
        else:
            x = np.arange(n) / n
            h = 1.0 / n
            v = self.value(x)
            slope = self.slope(x)
        fd = (np.roll(v, -2) - 8 * np.roll(v, -1) + 8 * np.roll(v, 1) - np.roll(v, 2)) / (-12.0 * h)
        return float(np.max(np.abs(fd - slope)))

    def kernel_args(self):
        """(code, v0, x_grid, v_grid, dv_grid) tuple for the compiled kernels."""
        return self.code, self.v0, self.x_grid, self.v_grid, self.dv_grid


@dataclass(frozen=True)
class PhaseState:
    """Point s = (x, p) on the cylinder; x is reduced mod 1 at construction."""

    x: float
    p: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x) % 1.0)
        object.__setattr__(self, "p", float(self.p))


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Mass ratio, potential, and the derived low-energy threshold l = 1 + 2 sup V."""

    lam: float
    potential: Potential

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")

    @property
    def l(self) -> float:
        return 1.0 + 2.0 * self.potential.sup_v


@dataclass(frozen=True, eq=False)
class Modulator:
    """Bounded nonnegative killing-rate function h on the cylinder.

    energy_indicator is h = scale * chi(H <= level); the default level is the
    model's l and the boundary is inclusive.  A custom modulator carries its
    own callable, declared sup bound and a witness point with h > 0.
    """

    kind: str
    level: float = 0.0
    scale: float = 1.0
    fn: Optional[Callable[[float, float], float]] = None
    sup_bound: float = 1.0
    witness: Optional[PhaseState] = None

    @staticmethod
    def energy_indicator(level: Optional[float] = None, scale: float = 1.0) -> "Modulator":
        return Modulator(kind="energy_indicator", level=-1.0 if level is None else float(level),
                         scale=float(scale), sup_bound=float(scale))

    @staticmethod
    def constant(value: float) -> "Modulator":
        if value <= 0:
            raise ValueError("constant modulator must be positive")
        return Modulator(kind="constant", scale=float(value), sup_bound=float(value))

    @staticmethod
    def custom(fn, sup_bound: float, witness: PhaseState) -> "Modulator":
        return Modulator(kind="custom", fn=fn, sup_bound=float(sup_bound), witness=witness)

    def resolved_level(self, params: ModelParams) -> float:
        return params.l if self.level < 0 else self.level

    def kernel_args(self, params: ModelParams):
        if self.kind == "energy_indicator":
            return K.MOD_ENERGY, self.resolved_level(params), self.scale
        if self.kind == "constant":
            return K.MOD_CONST, 0.0, self.scale
        raise ValueError("custom modulators have no compiled form")


@dataclass(frozen=True, eq=False)
class Payoff:
    """Bounded nonnegative payoff f on the cylinder."""

    kind: str
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0
    d: float = 0.0
    fn: Optional[Callable[[float, float], float]] = None
    sup_bound: float = 1.0

    @staticmethod
    def constant(value: float) -> "Payoff":
        return Payoff(kind="constant", a=float(value), sup_bound=float(value))

    @staticmethod
    def indicator_band(p_lo: float, p_hi: float) -> "Payoff":
        return Payoff(kind="p_band", a=float(p_lo), b=float(p_hi))

    @staticmethod
    def energy_band(h_lo: float, h_hi: float) -> "Payoff":
        return Payoff(kind="h_band", a=float(h_lo), b=float(h_hi))

    @staticmethod
    def two_bands(a, b, c, d) -> "Payoff":
        return Payoff(kind="p_band2", a=float(a), b=float(b), c=float(c), d=float(d), sup_bound=2.0)

    @staticmethod
    def custom(fn, sup_bound: float) -> "Payoff":
        return Payoff(kind="custom", fn=fn, sup_bound=float(sup_bound))

    def kernel_args(self):
        codes = {"constant": K.PAY_CONST, "p_band": K.PAY_PBAND,
                 "h_band": K.PAY_HBAND, "p_band2": K.PAY_PBAND2}
        if self.kind not in codes:
            raise ValueError("custom payoffs have no compiled form")
        return codes[self.kind], self.a, self.b, self.c, self.d

    def eval(self, x: float, p: float, params: ModelParams) -> float:
        if self.kind == "custom":
            return float(self.fn(x, p))
        H = hamiltonian(PhaseState(x, p), params.potential)
        fk, fa, fb, fc, fd = self.kernel_args()
        return K.payoff_eval_k(fk, fa, fb, fc, fd, x % 1.0, p, H)


def hamiltonian(s: PhaseState, potential: Potential) -> float:
    """H(s) = p^2/2 + V(x)."""
    return 0.5 * s.p * s.p + float(potential.value(s.x))


def jump_kernel(lam, p, pp):
    """Collision-rate density J_lambda(p, p'), vanishing only on the diagonal."""
    p = np.asarray(p, dtype=float)
    pp = np.asarray(pp, dtype=float)
    d = 0.5 * (1.0 - lam) * p - 0.5 * (1.0 + lam) * pp
    return (1.0 + lam) * np.abs(p - pp) * np.exp(-0.5 * d * d)


def levy_density(q):
    """Heavy-particle-limit momentum-increment density j(q) = |q| e^{-q^2/8}."""
    q = np.asarray(q, dtype=float)
    return np.abs(q) * np.exp(-q * q / 8.0)


def escape_rate(lam, p):
    """Total collision rate E_lambda(p) = int J_lambda(p, p') dp'.

    Closed form (4/(1+lambda)) [2 e^{-a^2/2} + a sqrt(2 pi)(2 Phi(a) - 1)]
    with a = lambda |p|; cross-validated against escape_rate_quadrature to
    1e-8 relative error in the test suite before anything relies on it.
    """
    a = lam * np.abs(np.asarray(p, dtype=float))
    return 4.0 / (1.0 + lam) * (2.0 * np.exp(-0.5 * a * a) + a * SQRT_2PI * (2.0 * ndtr(a) - 1.0))


def escape_rate_quadrature(lam, p, tol: float = 1e-10) -> float:
    """Adaptive-quadrature oracle for the escape rate.

    Integrates J_lambda(p, .) over ten Gaussian widths around the kernel's
    center m = (1-lambda) p / (1+lambda), splitting at the |p - p'| kink.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    m = (1.0 - lam) * p / (1.0 + lam)
    sig = 2.0 / (1.0 + lam)
    lo, hi = m - 10.0 * sig, m + 10.0 * sig
    pts = [p] if lo < p < hi else None
    val, err = integrate.quad(lambda q: float(jump_kernel(lam, p, q)), lo, hi,
                              points=pts, limit=200, epsabs=0.0, epsrel=tol)
    if not np.isfinite(val) or (val > 0 and err > 10.0 * tol * val):
        raise ArithmeticError(f"escape-rate quadrature did not converge: err={err:.2e}")
    return val


def modulator_eval(h: Modulator, s: PhaseState, params: ModelParams) -> float:
    """Killing rate h(s); the energy indicator has an inclusive boundary."""
    if h.kind == "custom":
        return float(h.fn(s.x, s.p))
    H = hamiltonian(s, params.potential)
    mk, mlevel, mscale = h.kernel_args(params)
    return K.modulator_eval_k(mk, mlevel, mscale, H)


def regime_classify(lam: float, p: float, K_mult: float = 4.0) -> str:
    """Momentum-scale diagnostic: contractive / drift / random_walk.

    The cutoffs are |p| > K/lambda, |p| in [1/(K lambda), K/lambda] and
    |p| < 1/(K lambda); K is a diagnostics-only constant.
    """
    if not 0.0 < lam <= 1.0:
        raise ValueError("lambda must lie in (0, 1]")
    ap = abs(p)
    if ap > K_mult / lam:
        return "contractive"
    if ap >= 1.0 / (K_mult * lam):
        return "drift"
    return "random_walk"


def detailed_balance_residual(lam, p, pp):
    """e^{-lam p^2/2} J(p,p') - e^{-lam p'^2/2} J(p',p); identically zero.

    The exponent's quadratic form is symmetric under p <-> p' (verified by a
    dense random sweep in the tests), which is what makes e^{-lambda H}
    stationary.  Kept as a regression guard on the kernel implementation.
    """
    p = np.asarray(p, dtype=float)
    pp = np.asarray(pp, dtype=float)
    return (np.exp(-0.5 * lam * p * p) * jump_kernel(lam, p, pp)
            - np.exp(-0.5 * lam * pp * pp) * jump_kernel(lam, pp, p))


def db_inequality_margin(lam, p, pp):
    """(1+lam) e^{(lam/4)(p^2-p'^2)} J_0(p,p') - J_lambda(p,p'); nonnegative."""
    p = np.asarray(p, dtype=float)
    pp = np.asarray(pp, dtype=float)
    lam = np.asarray(lam, dtype=float)
    bound = (1.0 + lam) * np.exp(0.25 * lam * (p * p - pp * pp)) * jump_kernel(0.0, p, pp)
    return bound - jump_kernel(lam, p, pp)
