"""Certificate-free ground truth: trajectory simulation and set measures.

Everything here is independent of the SOS pipeline so that certified sets
can be cross-checked against what the dynamics actually do: fixed-step RK4
trajectories classify initial states as converged/diverged/undecided,
reverse-time integration recovers the Van der Pol limit cycle, Monte Carlo
integration measures set sizes, and Lie-derivative sampling probes for
violations of the decrease condition.

Fixed-step RK4 is deliberate: determinism and reproducibility matter more
than efficiency at this scale, and dt = 1e-3 resolves the stiffest
benchmark coefficients (about 50, so lambda * dt is about 0.05). All
randomness flows from explicit seeds.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numba import njit, prange

from .poly import Polynomial, lie_derivative
from .vsiter import DynSystem

_CONVERGED, _DIVERGED, _UNDECIDED = 0, 1, 2


class Outcome(enum.Enum):
    CONVERGED = "converged"
    DIVERGED = "diverged"
    UNDECIDED = "undecided"


_OUTCOMES = {_CONVERGED: Outcome.CONVERGED, _DIVERGED: Outcome.DIVERGED,
             _UNDECIDED: Outcome.UNDECIDED}


@dataclass
class SimResult:
    outcome: Outcome
    final_state: np.ndarray
    steps_used: int


class NoCycleError(RuntimeError):
    """Reverse-time integration found no closed orbit."""


def compile_field(sys: DynSystem):
    """Flatten the vector field into (exponents, coefficients, offsets) arrays."""
    exps, coeffs, offsets = [], [], [0]
    for fi in sys.f:
        for mono, c in fi.items():
            exps.append(mono)
            coeffs.append(c)
        offsets.append(len(coeffs))
    if exps:
        E = np.array(exps, dtype=np.int64)
    else:
        E = np.zeros((0, sys.dim), dtype=np.int64)
    return E, np.array(coeffs, dtype=np.float64), np.array(offsets, dtype=np.int64)


@njit(cache=True)
def _eval_field(x, E, C, offs, out):
    n = out.shape[0]
    for i in range(n):
        acc = 0.0
        for t in range(offs[i], offs[i + 1]):
            v = C[t]
            for k in range(n):
                e = E[t, k]
                for _ in range(e):
                    v *= x[k]
            acc += v
        out[i] = acc


@njit(cache=True)
def _rk4_classify(x0, dt, nsteps, conv2, esc2, E, C, offs):
    n = x0.shape[0]
    x = x0.copy()
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    r2 = 0.0
    for k in range(n):
        r2 += x[k] * x[k]
    if r2 < conv2:
        return _CONVERGED, x, 0
    for step in range(nsteps):
        _eval_field(x, E, C, offs, k1)
        for k in range(n):
            tmp[k] = x[k] + 0.5 * dt * k1[k]
        _eval_field(tmp, E, C, offs, k2)
        for k in range(n):
            tmp[k] = x[k] + 0.5 * dt * k2[k]
        _eval_field(tmp, E, C, offs, k3)
        for k in range(n):
            tmp[k] = x[k] + dt * k3[k]
        _eval_field(tmp, E, C, offs, k4)
        r2 = 0.0
        ok = True
        for k in range(n):
            x[k] += dt / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k])
            if not math.isfinite(x[k]):
                ok = False
            r2 += x[k] * x[k]
        if not ok:
            return _DIVERGED, x, step + 1
        if r2 < conv2:
            return _CONVERGED, x, step + 1
        if r2 > esc2:
            return _DIVERGED, x, step + 1
    return _UNDECIDED, x, nsteps


@njit(cache=True, parallel=True)
def _rk4_classify_batch(X0, dt, nsteps, conv2, esc2, E, C, offs):
    m = X0.shape[0]
    codes = np.empty(m, dtype=np.int64)
    finals = np.empty_like(X0)
    steps = np.empty(m, dtype=np.int64)
    for i in prange(m):
        code, xf, st = _rk4_classify(X0[i], dt, nsteps, conv2, esc2, E, C, offs)
        codes[i] = code
        finals[i] = xf
        steps[i] = st
    return codes, finals, steps


@njit(cache=True)
def _rk4_record(x0, dt, nsteps, E, C, offs):
    n = x0.shape[0]
    path = np.empty((nsteps + 1, n))
    x = x0.copy()
    path[0] = x
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    for step in range(nsteps):
        _eval_field(x, E, C, offs, k1)
        for k in range(n):
            tmp[k] = x[k] + 0.5 * dt * k1[k]
        _eval_field(tmp, E, C, offs, k2)
        for k in range(n):
            tmp[k] = x[k] + 0.5 * dt * k2[k]
        _eval_field(tmp, E, C, offs, k3)
        for k in range(n):
            tmp[k] = x[k] + dt * k3[k]
        _eval_field(tmp, E, C, offs, k4)
        for k in range(n):
            x[k] += dt / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k])
        path[step + 1] = x
    return path


def simulate(sys: DynSystem, x0: Sequence[float], dt: float = 1e-3,
             T: float = 50.0, conv_tol: float = 1e-4,
             escape: float = 1e4) -> SimResult:
    """Classify an initial state by fixed-step RK4 integration.

    Converged: |x| falls below conv_tol before the horizon. Diverged: |x|
    exceeds escape (or goes non-finite). Undecided: horizon reached.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (sys.dim,) or not np.all(np.isfinite(x0)):
        raise ValueError(f"bad initial state {x0}")
    E, C, offs = compile_field(sys)
    nsteps = int(round(T / dt))
    code, xf, steps = _rk4_classify(x0, dt, nsteps, conv_tol ** 2,
                                    escape ** 2, E, C, offs)
    return SimResult(_OUTCOMES[int(code)], xf, int(steps))


def simulate_batch(sys: DynSystem, X0: np.ndarray, dt: float = 1e-3,
                   T: float = 50.0, conv_tol: float = 1e-4,
                   escape: float = 1e4):
    """Vectorized simulate over rows of X0; returns (outcome codes, finals, steps).

    Codes: 0 converged, 1 diverged, 2 undecided.
    """
    X0 = np.ascontiguousarray(X0, dtype=float)
    E, C, offs = compile_field(sys)
    nsteps = int(round(T / dt))
    return _rk4_classify_batch(X0, dt, nsteps, conv_tol ** 2, escape ** 2,
                               E, C, offs)


def flow(sys: DynSystem, x0: Sequence[float], dt: float, T: float) -> np.ndarray:
    """Endpoint of plain RK4 integration without early stopping."""
    x0 = np.asarray(x0, dtype=float)
    E, C, offs = compile_field(sys)
    path = _rk4_record(x0, dt, int(round(T / dt)), E, C, offs)
    return path[-1]


def in_true_roa(sys: DynSystem, x0: Sequence[float], **sim_kwargs) -> bool:
    """Simulation-based basin membership; Undecided counts as outside."""
    return simulate(sys, x0, **sim_kwargs).outcome is Outcome.CONVERGED


def limit_cycle_2d(sys: DynSystem, seed: Sequence[float],
                   transient_T: float = 30.0, record_T: float = 30.0,
                   dt: float = 1e-3, closure_rtol: float = 1e-2) -> np.ndarray:
    """Boundary of the true ROA traced by the reverse trajectory method.

    Integrates the time-reversed field from a seed inside the ROA, discards
    the transient, then records one period delimited by upward crossings of
    the section {x2 = 0, x1 > 0}. The recorded loop must close on itself,
    otherwise NoCycleError is raised.
    """
    if sys.dim != 2:
        raise ValueError("limit cycle tracing is 2-D only")
    E, C, offs = compile_field(sys)
    C = -C  # time reversal; the reversed origin is repelling, so no DynSystem
    x = np.asarray(seed, dtype=float)
    x = _rk4_record(x, dt, int(round(transient_T / dt)), E, C, offs)[-1]
    if not np.all(np.isfinite(x)) or np.hypot(*x) > 1e4:
        raise NoCycleError("reverse trajectory escaped during the transient")
    path = _rk4_record(x, dt, int(round(record_T / dt)), E, C, offs)
    if not np.all(np.isfinite(path)) or np.max(np.abs(path)) > 1e4:
        raise NoCycleError("reverse trajectory escaped while recording")

    up = np.flatnonzero((path[:-1, 1] < 0.0) & (path[1:, 1] >= 0.0)
                        & (path[:-1, 0] > 0.0))
    down = np.flatnonzero((path[:-1, 1] > 0.0) & (path[1:, 1] <= 0.0)
                          & (path[:-1, 0] > 0.0))
    crossings = up if len(up) >= len(down) else down
    if len(crossings) < 2:
        raise NoCycleError("no Poincare-section return within record_T")
    i0, i1 = crossings[0], crossings[1]
    loop = path[i0:i1 + 1]
    gap = np.linalg.norm(loop[-1] - loop[0])
    diam = np.max(np.ptp(loop, axis=0))
    if gap > closure_rtol * diam:
        raise NoCycleError(f"orbit does not close (gap {gap:.3e}, diameter {diam:.3e})")
    return np.vstack([loop, loop[:1]])


@dataclass
class McEstimate:
    measure: float
    stderr: float


def mc_measure(indicator: Callable, box: Sequence[tuple[float, float]],
               samples: int, seed: int) -> McEstimate:
    """Monte Carlo measure of a set inside a box, with binomial stderr.

    The indicator may accept a batch array of shape (n, dim) or a single
    point; batch evaluation is tried first.
    """
    if samples < 1000:
        raise ValueError("use at least 1e3 samples")
    box = np.asarray(box, dtype=float)
    rng = np.random.default_rng(seed)
    X = rng.uniform(box[:, 0], box[:, 1], size=(samples, box.shape[0]))
    try:
        inside = np.asarray(indicator(X), dtype=bool)
        if inside.shape != (samples,):
            raise TypeError
    except (TypeError, ValueError):
        inside = np.array([bool(indicator(x)) for x in X])
    vol = float(np.prod(box[:, 1] - box[:, 0]))
    frac = float(np.mean(inside))
    stderr = vol * math.sqrt(max(frac * (1.0 - frac), 0.0) / samples)
    return McEstimate(frac * vol, stderr)


def sample_sublevel(V: Polynomial, box: Sequence[tuple[float, float]],
                    n: int, seed: int, level: float = 1.0,
                    exclude_radius: float = 0.0,
                    max_rounds: int = 60) -> np.ndarray:
    """Rejection-sample {V <= level} (minus a small ball) inside a box.

    The box adapts: it shrinks toward the origin when acceptance starves
    (the sublevel set is small) and widens when nothing is rejected (the
    box undercovers the set). The sublevel sets handled here all contain
    the origin, so shrinkage keeps the set in view.
    """
    box = np.asarray(box, dtype=float)
    rng = np.random.default_rng(seed)
    out: list[np.ndarray] = []
    have = 0
    for _ in range(max_rounds):
        batch = max(4 * n, 1000)
        X = rng.uniform(box[:, 0], box[:, 1], size=(batch, box.shape[0]))
        vals = V.eval_batch(X)
        mask = vals <= level
        if exclude_radius > 0.0:
            mask &= np.linalg.norm(X, axis=1) >= exclude_radius
        hit = int(np.count_nonzero(mask))
        if hit == batch:
            box = box * 1.5
            out.clear()
            have = 0
            continue
        if hit == 0:
            box = box * 0.5
            continue
        out.append(X[mask])
        have += hit
        if have >= n:
            return np.vstack(out)[:n]
        if hit < 0.005 * batch:
            box = box * 0.7
    if have == 0:
        raise RuntimeError("sampling starvation: sublevel set not found in box")
    return np.vstack(out)[:min(have, n)]


def vdot_sample_check(sys: DynSystem, V: Polynomial, n_samples: int = 2000,
                      seed: int = 0, level: float = 1.0,
                      exclude_radius: float = 1e-3,
                      box: Sequence[tuple[float, float]] | None = None) -> float:
    """Worst (largest) Vdot over samples of {V <= level} away from the origin.

    Negative for every valid certificate; a positive value is a counterexample
    to the decrease condition.
    """
    if box is None:
        box = sys.domain_box
    X = sample_sublevel(V, box, n_samples, seed, level=level,
                        exclude_radius=exclude_radius)
    vdot = lie_derivative(V, sys.f)
    return float(np.max(vdot.eval_batch(X)))


@dataclass
class GateReport:
    """Certificate soundness triangle: symbolic, derivative, trajectory."""

    symbolic_ok: bool
    worst_vdot: float
    converged_fraction: float
    samples: int
    ok: bool = False

    def __post_init__(self):
        self.ok = bool(self.symbolic_ok and self.worst_vdot < 0.0
                       and self.converged_fraction >= 0.99)


def soundness_triangle(sys: DynSystem, cert, *, seed: int = 0,
                       n_interior: int = 500, n_vdot: int = 2000,
                       sim_dt: float = 1e-3, sim_T: float = 50.0) -> GateReport:
    """Cross-validate a certificate three independent ways.

    (a) its stored SOS witnesses re-validate symbolically, (b) sampled Vdot
    is negative on the certified set, (c) at least 99% of interior samples
    of {V < 0.99} flow to the equilibrium under RK4.
    """
    from . import sos as _sos

    symbolic_ok = all(_sos.validate(w).ok for w in cert.witnesses.values())
    worst = vdot_sample_check(sys, cert.V, n_vdot, seed)
    X = sample_sublevel(cert.V, sys.domain_box, n_interior, seed + 1,
                        level=0.99)
    codes, _, _ = simulate_batch(sys, X, dt=sim_dt, T=sim_T)
    frac = float(np.mean(codes == _CONVERGED))
    return GateReport(symbolic_ok, worst, frac, len(X))
