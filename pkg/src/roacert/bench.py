"""The five benchmark systems as executable fixtures.

Each case bundles the vector field, the quadratic initial Lyapunov
candidate, the initial shape function, degrees and iteration counts, and
the shifting plan used in the reported runs. Loading a case re-verifies
f(0) = 0 and that the linearization is Hurwitz (DynSystem does both).

Cases serialize to the same JSON schema accepted for user-supplied systems
(see cli), so the fixtures double as format documentation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .poly import Polynomial, poly_from_terms
from .rcomssf import CenterShift, ShiftPlan
from .vsiter import DynSystem, ShapeFn, VsOptions, init_lf


@dataclass
class BenchmarkCase:
    name: str
    sys: DynSystem
    V0: Polynomial
    p0: ShapeFn
    deg_V: int
    N_I: int
    base_algorithm: str  # 'a1' | 'a2' used to produce the parent set
    plan: ShiftPlan
    sim_T: float = 50.0
    notes: str = ""
    # analytic basin membership when known (hahn: x1*x2 < 1)
    true_roa: object = None
    vs_options: VsOptions = field(default_factory=VsOptions)


def _vdp() -> BenchmarkCase:
    # x1' = -x2 ; x2' = x1 + 5 x2 (x1^2 - 1)
    f = (poly_from_terms(2, {(0, 1): -1.0}),
         poly_from_terms(2, {(1, 0): 1.0, (2, 1): 5.0, (0, 1): -5.0}))
    sys = DynSystem(2, f, "vdp", ((-3.0, 3.0), (-8.5, 8.5)))
    V0 = init_lf(sys)
    plan = ShiftPlan([[CenterShift((1.0, 1.0), np.eye(2)),
                       CenterShift((-1.0, -1.0), np.eye(2))]])
    return BenchmarkCase("vdp", sys, V0, ShapeFn.from_quadratic(V0),
                         deg_V=6, N_I=30, base_algorithm="a1", plan=plan,
                         sim_T=100.0,
                         notes="stable origin inside an unstable limit cycle")


def _bistable() -> BenchmarkCase:
    # x1' = -4 x1^3 + 6 x1^2 - 2 x1 ; x2' = -2 x2
    # sinks at (0,0) and (1,0); only the origin is analyzed, its basin is
    # the half plane x1 < 0.5
    f = (poly_from_terms(2, {(3, 0): -4.0, (2, 0): 6.0, (1, 0): -2.0}),
         poly_from_terms(2, {(0, 1): -2.0}))
    sys = DynSystem(2, f, "bistable", ((-3.0, 0.6), (-7.0, 7.0)))
    V0 = init_lf(sys)
    plan = ShiftPlan([[CenterShift((-0.8, 0.0), np.diag([1.0, 1.0 / 16.0]),
                                   n_iter=60)]])
    return BenchmarkCase("bistable", sys, V0,
                         ShapeFn.from_quadratic(V0.scale(0.8)),
                         deg_V=4, N_I=30, base_algorithm="a2", plan=plan,
                         notes="unbounded basin in the half plane x1 < 0.5",
                         true_roa=lambda X: np.asarray(X)[..., 0] < 0.5)


def _saddle() -> BenchmarkCase:
    # x1' = -50 x1 - 16 x2 + 13.8 x1 x2 ; x2' = 13 x1 - 9 x2 + 5.5 x1 x2
    # stable node at the origin, saddle near (1.45, 18.17)
    f = (poly_from_terms(2, {(1, 0): -50.0, (0, 1): -16.0, (1, 1): 13.8}),
         poly_from_terms(2, {(1, 0): 13.0, (0, 1): -9.0, (1, 1): 5.5}))
    sys = DynSystem(2, f, "saddle", ((-30.0, 8.0), (-20.0, 14.0)))
    V0 = init_lf(sys)
    N14 = np.diag([0.25, 1.0])
    plan = ShiftPlan([
        [CenterShift((0.0, -4.0), N14), CenterShift((-7.5, 0.0), np.eye(2))],
        [CenterShift((0.0, -11.0), N14), CenterShift((-18.0, 2.0), np.eye(2)),
         CenterShift((-3.0, 8.0), np.eye(2))],
    ])
    return BenchmarkCase("saddle", sys, V0, ShapeFn.from_quadratic(V0),
                         deg_V=4, N_I=30, base_algorithm="a1", plan=plan,
                         notes="half-unbounded basin, badly scaled coefficients")


def _hahn() -> BenchmarkCase:
    # x1' = -x1 + 2 x1^2 x2 ; x2' = -x2 ; exact basin is {x1 x2 < 1}
    f = (poly_from_terms(2, {(1, 0): -1.0, (2, 1): 2.0}),
         poly_from_terms(2, {(0, 1): -1.0}))
    sys = DynSystem(2, f, "hahn", ((-9.0, 9.0), (-9.0, 9.0)))
    V0 = init_lf(sys)
    p0 = ShapeFn.centered(np.array([[14.47, 18.55], [18.55, 26.53]]))
    plan = ShiftPlan([
        [CenterShift((-4.0, 3.0), np.eye(2)), CenterShift((4.0, -3.0), np.eye(2))],
        [CenterShift((-5.0, 5.0), np.eye(2)), CenterShift((-6.0, 2.0), np.eye(2)),
         CenterShift((5.0, -5.0), np.eye(2)), CenterShift((6.0, -2.0), np.eye(2))],
    ])
    return BenchmarkCase("hahn", sys, V0, p0, deg_V=6, N_I=30,
                         base_algorithm="a1", plan=plan,
                         notes="exact basin known analytically: x1*x2 < 1",
                         true_roa=lambda X: np.asarray(X)[..., 0]
                         * np.asarray(X)[..., 1] < 1.0)


def _taylor3d() -> BenchmarkCase:
    # x1' = x2 + x3^2
    # x2' = x3 - x1^2 - x1 (x1 - x1^3 / 6) = x3 - 2 x1^2 + x1^4 / 6
    # x3' = -x1 - 2 x2 - x3 + x2^3 + (2/3 x3^3 + 2/5 x3^5) / 10
    f = (poly_from_terms(3, {(0, 1, 0): 1.0, (0, 0, 2): 1.0}),
         poly_from_terms(3, {(0, 0, 1): 1.0, (2, 0, 0): -2.0, (4, 0, 0): 1.0 / 6.0}),
         poly_from_terms(3, {(1, 0, 0): -1.0, (0, 1, 0): -2.0, (0, 0, 1): -1.0,
                             (0, 3, 0): 1.0, (0, 0, 3): 1.0 / 15.0,
                             (0, 0, 5): 1.0 / 25.0}))
    sys = DynSystem(3, f, "taylor3d", ((-2.0, 2.0),) * 3)
    V0 = init_lf(sys)
    I3 = np.eye(3)
    plan = ShiftPlan([[CenterShift((0.8, 0.0, 0.0), I3),
                       CenterShift((-0.8, 0.0, 0.6), I3),
                       CenterShift((0.2, 0.0, -0.8), I3),
                       CenterShift((0.0, 0.0, 1.2), I3)]])
    return BenchmarkCase("taylor3d", sys, V0, ShapeFn.from_quadratic(V0),
                         deg_V=4, N_I=20, base_algorithm="a1", plan=plan,
                         notes="3-D polynomial expansion; origin analyzed only",
                         vs_options=VsOptions(deg_s2=4))


_LOADERS = {
    "vdp": _vdp,
    "bistable": _bistable,
    "saddle": _saddle,
    "hahn": _hahn,
    "taylor3d": _taylor3d,
}


def names() -> list[str]:
    return list(_LOADERS)


def load(name: str) -> BenchmarkCase:
    try:
        loader = _LOADERS[name]
    except KeyError:
        raise ValueError(f"unknown benchmark '{name}'; "
                         f"choose from {', '.join(_LOADERS)}") from None
    return loader()
