"""Exact samplers for collision outcomes and thinned collision times.

Streams are counter-seeded: a (seed, stream_id) pair fully determines the
draw sequence, so one stream per trajectory makes parallel and serial runs
produce identical numbers regardless of scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .model import ModelParams, escape_rate
from .curves import CurveState, curve_quadrature


class SamplerError(RuntimeError):
    pass


@dataclass
class RandomStream:
    """xoshiro256++ stream addressed by (seed, stream_id)."""

    seed: int
    stream_id: int = 0
    _state: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self._state = K.stream_state(np.uint64(self.seed), np.uint64(self.stream_id))

    @property
    def state(self) -> np.ndarray:
        return self._state

    def spawn(self, stream_id: int) -> "RandomStream":
        return RandomStream(self.seed, stream_id)

    def uniform(self) -> float:
        return K.next_unit(self._state)

    def exponential(self, rate: float = 1.0) -> float:
        return K.next_exp(self._state) / rate

    def gauss(self) -> float:
        return K.next_gauss(self._state)


def sample_post_collision(lam: float, p: float, stream: RandomStream) -> float:
    """Draw p' with density J_lambda(p, .) / E_lambda(p).

    Substitutes u = ((1+lam) p' - (1-lam) p)/2 so the target is proportional
    to |a-u| e^{-u^2/2} with a = lam p, then rejection-samples from the
    (|a| Gaussian + two-sided Rayleigh) envelope mixture with acceptance
    probability |a-u|/(|a|+|u|); maps back via p' = (2u + (1-lam) p)/(1+lam).
    """
    if not 0.0 < lam <= 1.0:
        raise ValueError("lambda must lie in (0, 1]")
    out = K.sample_post_collision_k(stream.state, lam, p)
    if math.isnan(out):
        raise SamplerError("rejection loop exceeded its iteration cap; RNG misuse")
    return out


def sample_post_collision_batch(lam: float, p: float, n: int, stream: RandomStream) -> np.ndarray:
    out = np.empty(n)
    _post_collision_fill(stream.state, lam, p, out)
    if np.isnan(out).any():
        raise SamplerError("rejection loop exceeded its iteration cap; RNG misuse")
    return out


@K.njit(cache=True, nogil=True)
def _post_collision_fill(st, lam, p, out):
    for i in range(out.shape[0]):
        out[i] = K.sample_post_collision_k(st, lam, p)


def post_collision_cdf(lam: float, p: float, pp):
    """Exact CDF of the post-collision momentum (piecewise Gaussian integrals)."""
    pp = np.atleast_1d(np.asarray(pp, dtype=float))
    a = lam * p
    u = 0.5 * ((1.0 + lam) * pp - (1.0 - lam) * p)
    total = K._abs_gauss_mass(a, -40.0, 40.0)
    vals = np.array([K._abs_gauss_mass(a, -40.0, min(ui, 40.0)) for ui in u])
    return vals / total


def shell_majorant_rate(lam: float, H: float, params: ModelParams, check: bool = True) -> float:
    """Constant majorant rate E'(H) = max_x E_lambda(sqrt(2H - 2V(x))).

    The escape rate is strictly increasing in |p|, so the maximizer sits where
    the potential is smallest and the speed largest, i.e. E' = E(sqrt(2H));
    a coarse sweep asserts this when check is set.
    """
    emax = float(escape_rate(lam, math.sqrt(max(2.0 * H, 0.0))))
    if check:
        xs = np.arange(64) / 64.0
        sp = np.sqrt(np.maximum(2.0 * H - 2.0 * params.potential.value(xs), 0.0))
        if float(escape_rate(lam, sp).max()) > emax * (1.0 + 1e-12):
            raise SamplerError("shell majorant smaller than a sampled rate")
    return emax


def sample_collision_time(lam: float, gamma: CurveState, params: ModelParams,
                          stream: RandomStream):
    """One thinning step on an energy shell: (wait, accepted, x, p).

    Candidate events arrive at the constant shell majorant rate E'; the
    candidate at occupation-sampled position x is accepted as a real collision
    with probability E(p_x)/E', else it is vacuous.  Accepted times are the
    inhomogeneous collision times of the orbit-averaged dynamics.
    """
    H = 0.5 * gamma.rho ** 2
    emaj = shell_majorant_rate(lam, H, params, check=False)
    wait = stream.exponential(emaj)
    pk, v0, xg, vg, dvg = params.potential.kernel_args()
    x, p, accepted = K.fw_draw_collision(stream.state, lam, pk, v0, xg, vg, dvg,
                                         params.potential.sup_v, gamma.rho, gamma.eps)
    if escape_rate(lam, p) > emaj * (1.0 + 1e-9):
        raise SamplerError("majorant violation: shell maximum bug")
    return wait, bool(accepted), float(x), float(p)


def thinning_acceptance_prediction(lam: float, gamma: CurveState, params: ModelParams) -> float:
    """kappa-averaged E/E' over the shell (the long-run acceptance ratio)."""
    q = curve_quadrature(gamma, params)
    emaj = shell_majorant_rate(lam, 0.5 * gamma.rho ** 2, params, check=False)
    return float(np.sum(q.kappa_w * escape_rate(lam, q.p_abs))) / emaj
