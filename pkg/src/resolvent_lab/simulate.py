"""Trajectory generation: the full phase-space process, the momentum-only
process, and the homogenized energy-shell jump process.

Collision times come from thinning against a constant per-shell majorant rate
(vacuous jumps), post-collision momenta from the exact rejection sampler, and
the deterministic flow from a 6th-order composition of velocity-Verlet steps.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .curves import CurveState
from .model import ModelParams, PhaseState, hamiltonian
from .sampling import RandomStream

EVENT_KIND_NAMES = {0: "collision", 1: "vacuous", 2: "boundary_sample"}


class FlowError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    """Integrator and budget knobs.

    flow_step is the base substep per unit (1 + |p|) of speed; energy_tol is
    the permitted |H drift| per unit time along flow segments; event_cap and
    time_cap truncate runaway paths (surfaced as a flag, never silently).
    """

    flow_step: float = 0.02
    energy_tol: float = 1.0e-9
    event_cap: int = 1_000_000
    time_cap: float = 1.0e6

    def __post_init__(self):
        if self.flow_step <= 0 or self.energy_tol <= 0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class TrajectoryEvent:
    time: float
    kind: str
    before: PhaseState
    after: PhaseState


@dataclass
class Trajectory:
    """Struct-of-arrays event record; collisions change p only."""

    params: ModelParams
    start: PhaseState
    times: np.ndarray
    kinds: np.ndarray
    xs: np.ndarray
    ps_before: np.ndarray
    ps_after: np.ndarray
    truncated: bool = False

    def __len__(self):
        return len(self.times)

    @property
    def events(self):
        return [TrajectoryEvent(t, EVENT_KIND_NAMES[int(k)],
                                PhaseState(x, pb), PhaseState(x, pa))
                for t, k, x, pb, pa in zip(self.times, self.kinds, self.xs,
                                           self.ps_before, self.ps_after)]

    @property
    def end_state(self) -> PhaseState:
        if len(self.times) == 0:
            return self.start
        return PhaseState(self.xs[-1], self.ps_after[-1])

    def energies(self) -> np.ndarray:
        v = self.params.potential.value(self.xs)
        return 0.5 * self.ps_after ** 2 + v

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "kind", "x", "p", "H"])
            for t, k, x, p, H in zip(self.times, self.kinds, self.xs,
                                     self.ps_after, self.energies()):
                w.writerow([f"{t:.17g}", EVENT_KIND_NAMES[int(k)],
                            f"{x:.17g}", f"{p:.17g}", f"{H:.17g}"])


@dataclass
class CurveTrajectory:
    params: ModelParams
    start: CurveState
    times: np.ndarray
    rhos: np.ndarray
    epss: np.ndarray
    exited: bool = False
    truncated: bool = False

    def __len__(self):
        return len(self.times)

    @property
    def end_state(self) -> CurveState:
        if len(self.times) == 0:
            return self.start
        return CurveState(float(self.rhos[-1]), int(self.epss[-1]))


def integrate_flow(s: PhaseState, dt: float, params: ModelParams,
                   config: SimConfig = SimConfig()) -> PhaseState:
    """Hamiltonian flow for time dt with torus wrap and energy step control.

    Halves the substep until |H(out) - H(in)| <= energy_tol * (1 + dt); raises
    FlowError if twelve halvings do not reach the tolerance.
    """
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    pk, v0, xg, vg, dvg = params.potential.kernel_args()
    h_in = hamiltonian(s, params.potential)
    step = config.flow_step
    for _ in range(12):
        x, p = K.flow_advance(pk, v0, xg, vg, dvg, s.x, s.p, dt, step, K.Y6_COEFFS)
        out = PhaseState(x, p)
        if abs(hamiltonian(out, params.potential) - h_in) <= config.energy_tol * (1.0 + dt):
            return out
        step *= 0.5
    raise FlowError(f"step-control failure integrating dt={dt}")


def simulate_full(s0: PhaseState, horizon: float, params: ModelParams,
                  config: SimConfig, stream: RandomStream,
                  record_vacuous: bool = False) -> Trajectory:
    """Full process on the cylinder: flow segments alternating with collisions.

    Records one row per collision (and optionally per vacuous candidate) plus
    a closing boundary sample at the horizon; an exhausted event buffer sets
    the truncated flag.
    """
    pk, v0, xg, vg, dvg = params.potential.kernel_args()
    cap = 4096
    entry_state = stream.state.copy()
    while True:
        times = np.empty(cap)
        kinds = np.empty(cap, dtype=np.int8)
        xs = np.empty(cap)
        pb = np.empty(cap)
        pa = np.empty(cap)
        stream.state[:] = entry_state
        count, truncated = K.full_path_record(
            stream.state, params.lam, pk, v0, xg, vg, dvg, s0.x, s0.p, horizon,
            config.flow_step, K.Y6_COEFFS, times, kinds, xs, pb, pa, record_vacuous)
        if not truncated or cap >= config.event_cap:
            break
        cap = min(4 * cap, config.event_cap)
    return Trajectory(params=params, start=s0, times=times[:count].copy(),
                      kinds=kinds[:count].copy(), xs=xs[:count].copy(),
                      ps_before=pb[:count].copy(), ps_after=pa[:count].copy(),
                      truncated=bool(truncated))


def simulate_momentum_only(p0: float, horizon: float, lam: float,
                           stream: RandomStream,
                           config: SimConfig = SimConfig()) -> Trajectory:
    """Pure-jump momentum process (no torus coordinate, no potential).

    Waits are exponential at the exact state rate, so every thinning candidate
    is accepted; realised by the full simulator with the zero potential.
    """
    from .model import Potential

    params = ModelParams(lam=lam, potential=Potential.zero())
    return simulate_full(PhaseState(0.0, p0), horizon, params, config, stream)


def simulate_fw(gamma0: CurveState, horizon: float, params: ModelParams,
                config: SimConfig, stream: RandomStream) -> CurveTrajectory:
    """Homogenized jump process on the energy shells.

    Exponential candidate waits at the shell-majorant rate; candidates are
    accepted by the occupation-weighted rate ratio, landing shells derived
    from the collision position.  A jump below the two-branch boundary
    rho = sqrt(2 sup V) ends the trajectory with the exited flag set.
    """
    sup_v = params.potential.sup_v
    if gamma0.rho ** 2 <= 2.0 * sup_v:
        raise ValueError("start the reduced process above the two-branch boundary")
    pk, v0, xg, vg, dvg = params.potential.kernel_args()
    cap = 4096
    entry_state = stream.state.copy()
    while True:
        times = np.empty(cap)
        rhos = np.empty(cap)
        epss = np.empty(cap, dtype=np.int8)
        stream.state[:] = entry_state
        count, exited, truncated = K.fw_path_record(
            stream.state, params.lam, pk, v0, xg, vg, dvg, sup_v,
            gamma0.rho, gamma0.eps, horizon, times, rhos, epss)
        if not truncated or cap >= config.event_cap:
            break
        cap = min(4 * cap, config.event_cap)
    return CurveTrajectory(params=params, start=gamma0,
                           times=times[:count].copy(), rhos=rhos[:count].copy(),
                           epss=epss[:count].copy(), exited=bool(exited),
                           truncated=bool(truncated))


# ---------------------------------------------------------------------------
# Batched experiment helpers (block kernels + per-path streams keep results
# independent of chunking and worker count).
# ---------------------------------------------------------------------------


@K.njit(cache=True, nogil=True)
def _end_states_block(seed, lo, hi, lam, pk, v0, xg, vg, dvg, x0, p0, horizon,
                      c_flow, y6, ev_cap, out_x, out_p, out_flags):
    for i in range(lo, hi):
        st = K.stream_state(seed, i)
        x, p, _, flag = K.full_path_end(st, lam, pk, v0, xg, vg, dvg,
                                        x0, p0, horizon, c_flow, y6, ev_cap)
        out_x[i - lo] = x
        out_p[i - lo] = p
        out_flags[i - lo] = flag


def terminal_momenta(s0: PhaseState, horizon: float, params: ModelParams,
                     config: SimConfig, seed: int, n_paths: int,
                     stream_offset: int = 0, workers: int = 1) -> np.ndarray:
    """p(T) over n_paths independent trajectories (stream i = offset + i)."""
    pk, v0, xg, vg, dvg = params.potential.kernel_args()
    out_x = np.empty(n_paths)
    out_p = np.empty(n_paths)
    flags = np.empty(n_paths, dtype=np.int8)
    _run_blocks(_end_states_block, n_paths, workers,
                (np.uint64(seed),), (params.lam, pk, v0, xg, vg, dvg, s0.x, s0.p,
                                     horizon, config.flow_step, K.Y6_COEFFS,
                                     config.event_cap),
                (out_x, out_p, flags), stream_offset)
    if (flags == 2).any():
        raise RuntimeError("majorant violation inside a trajectory")
    return out_p


@K.njit(cache=True, nogil=True)
def _h_hist_block(seed, lo, hi, lam, pk, v0, xg, vg, dvg, x0, p0, burn, horizon,
                  c_flow, y6, edges, ev_cap, out_times):
    nb = edges.shape[0] - 1
    for i in range(lo, hi):
        st = K.stream_state(seed, i)
        row = out_times[i - lo]
        K.full_path_h_histogram(st, lam, pk, v0, xg, vg, dvg, x0, p0, burn,
                                horizon, c_flow, y6, edges, row, ev_cap)


def energy_occupation(s0: PhaseState, params: ModelParams, config: SimConfig,
                      edges: np.ndarray, seed: int, n_paths: int, burn: float,
                      horizon: float, workers: int = 1) -> np.ndarray:
    """Per-path time spent in each H-bin between burn-in and the horizon."""
    pk, v0, xg, vg, dvg = params.potential.kernel_args()
    out = np.zeros((n_paths, len(edges) - 1))
    _run_blocks(_h_hist_block, n_paths, workers,
                (np.uint64(seed),), (params.lam, pk, v0, xg, vg, dvg, s0.x, s0.p,
                                     burn, horizon, config.flow_step, K.Y6_COEFFS,
                                     edges, config.event_cap),
                (out,), 0)
    return out


@K.njit(cache=True, nogil=True)
def _fw_end_block(seed, lo, hi, lam, pk, v0, xg, vg, dvg, sup_v, rho0, eps0,
                  horizon, ev_cap, out_rho, out_eps, out_exit):
    for i in range(lo, hi):
        st = K.stream_state(seed, i)
        _, rho, eps, exited, _ = K.fw_path(st, lam, pk, v0, xg, vg, dvg, sup_v,
                                           rho0, eps0, horizon, K.PAY_CONST, 0.0,
                                           0.0, K.MOD_CONST, 0.0, 0.0, K.EST_KILL,
                                           1e300, ev_cap)
        out_rho[i - lo] = rho
        out_eps[i - lo] = eps
        out_exit[i - lo] = exited


def fw_terminal_states(gamma0: CurveState, horizon: float, params: ModelParams,
                       config: SimConfig, seed: int, n_paths: int,
                       workers: int = 1):
    """(rho_T, eps_T, exited) arrays over independent shell-process paths."""
    pk, v0, xg, vg, dvg = params.potential.kernel_args()
    out_rho = np.empty(n_paths)
    out_eps = np.empty(n_paths, dtype=np.int8)
    out_exit = np.empty(n_paths, dtype=np.int8)
    _run_blocks(_fw_end_block, n_paths, workers,
                (np.uint64(seed),), (params.lam, pk, v0, xg, vg, dvg,
                                     params.potential.sup_v, gamma0.rho,
                                     gamma0.eps, horizon, config.event_cap),
                (out_rho, out_eps, out_exit), 0)
    return out_rho, out_eps, out_exit


def _run_blocks(block_fn, n, workers, pre_args, mid_args, out_arrays, offset):
    """Dispatch [0, n) in contiguous blocks; outputs land by absolute index."""
    if workers <= 1 or n < 256:
        views = tuple(a[0:n] for a in out_arrays)
        block_fn(*pre_args, offset + 0, offset + n, *mid_args, *views)
        return
    from concurrent.futures import ThreadPoolExecutor

    n_blocks = min(workers * 4, max(1, n // 128))
    bounds = np.linspace(0, n, n_blocks + 1).astype(np.int64)

    def run(b):
        lo, hi = int(bounds[b]), int(bounds[b + 1])
        views = tuple(a[lo:hi] for a in out_arrays)
        block_fn(*pre_args, offset + lo, offset + hi, *mid_args, *views)

    with ThreadPoolExecutor(max_workers=workers) as ex:
        list(ex.map(run, range(n_blocks)))
