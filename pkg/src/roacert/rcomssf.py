"""Rounds of shifts: growing a tree of certified level sets.

Starting from a base certificate {V* < 1}, shifting centers are picked
inside the certified set (near its boundary), each center gets an
ellipsoidal shape function (x - x*)^T N (x - x*), and the V-s iteration is
re-run with the parent's V as the initial Lyapunov function and the shape
held fixed (an adaptive shape would drift the center back to the origin and
neutralize the shift). Each successful branch becomes a child node; rounds
continue per branch while the boundary distance along the branch direction
keeps growing by more than a tolerance.

Branches inside a round are independent: they share only immutable parent
certificates and may run in parallel. Failed branches are recorded and
never abort the tree.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .poly import Polynomial
from .vsiter import (Certificate, DynSystem, InitialInfeasibleError, ShapeFn,
                     VsOptions, run_a1)

logger = logging.getLogger(__name__)

RHO_CAP = 1e3


class SelectionFailedError(RuntimeError):
    """No interior center found along the requested ray."""


@dataclass
class CenterShift:
    """Explicit shifting center with its shape matrix."""

    center: Sequence[float]
    N: np.ndarray
    n_iter: int | None = None

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        self.N = np.asarray(self.N, dtype=float)


@dataclass
class DirectionShift:
    """Programmatic center: x* = sigma * rho * u along the unit direction u."""

    direction: Sequence[float]
    N: np.ndarray
    sigma: float = 0.8
    n_iter: int | None = None

    def __post_init__(self):
        u = np.asarray(self.direction, dtype=float)
        nrm = np.linalg.norm(u)
        if nrm == 0.0:
            raise ValueError("direction must be nonzero")
        self.direction = u / nrm
        self.N = np.asarray(self.N, dtype=float)
        if not 0.0 < self.sigma < 1.0:
            raise ValueError(f"sigma must lie in (0, 1), got {self.sigma}")


@dataclass
class ShiftPlan:
    rounds: list[list] = field(default_factory=list)


@dataclass
class ShiftNode:
    """One certified level set in the shift tree."""

    id: tuple[int, ...]
    cert: Certificate
    parent: "ShiftNode | None" = None
    center: np.ndarray | None = None
    N: np.ndarray | None = None
    direction: np.ndarray | None = None
    rho_before: float = math.nan
    rho_after: float = math.nan
    open: bool = True
    round_index: int = 0

    @property
    def label(self) -> str:
        return "".join(str(i) for i in self.id) if self.id else "0"


@dataclass
class BranchFailure:
    round_index: int
    center: np.ndarray
    reason: str


@dataclass
class ShiftTree:
    root: ShiftNode
    nodes: list[ShiftNode]
    failures: list[BranchFailure] = field(default_factory=list)

    def certificates(self) -> list[Certificate]:
        return [n.cert for n in self.nodes]

    def labels(self) -> list[str]:
        return [n.label for n in self.nodes]


def rho(V: Polynomial, direction: Sequence[float], rtol: float = 1e-6,
        cap: float = RHO_CAP) -> float:
    """Distance from the origin to the boundary {V = 1} along a ray.

    Doubling finds a bracket; a fine forward scan isolates the first
    crossing inside it (the sublevel set need not be star shaped); bisection
    refines to relative tolerance. Returns +inf when V stays below 1 out to
    the cap.
    """
    u = np.asarray(direction, dtype=float)
    nrm = np.linalg.norm(u)
    if nrm == 0.0:
        raise ValueError("direction must be nonzero")
    u = u / nrm
    if V(np.zeros(V.dim)) >= 1.0:
        raise ValueError("V(0) must be below 1")

    def val(t):
        return V(t * u)

    t_prev, t_cur = 0.0, 1e-3
    while val(t_cur) < 1.0:
        t_prev, t_cur = t_cur, 2.0 * t_cur
        if t_cur > cap:
            return math.inf
    # first sign change within [t_prev, t_cur]
    ts = np.linspace(t_prev, t_cur, 65)
    vs = V.eval_batch(ts[:, None] * u[None, :])
    above = np.flatnonzero(vs >= 1.0)
    k = above[0]
    if k == 0:
        return float(ts[0]) if ts[0] > 0 else float(ts[1])
    lo, hi = float(ts[k - 1]), float(ts[k])
    while (hi - lo) > rtol * hi:
        mid = 0.5 * (lo + hi)
        if val(mid) < 1.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def select_center(V: Polynomial, direction: Sequence[float],
                  sigma: float = 0.8) -> np.ndarray:
    """Center x* = sigma * rho * u, guaranteed strictly inside {V < 1}.

    If the candidate lands outside (a non-star-shaped set), sigma shrinks
    by 0.9 up to five times before giving up.
    """
    if not 0.0 < sigma < 1.0:
        raise ValueError(f"sigma must lie in (0, 1), got {sigma}")
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    r = rho(V, u)
    if not math.isfinite(r):
        raise SelectionFailedError("boundary not found along the ray (rho capped)")
    s = sigma
    for _ in range(6):
        x = s * r * u
        if V(x) < 1.0:
            return x
        s *= 0.9
    raise SelectionFailedError(
        f"no interior point at sigma {sigma:g} after shrink retries")


def shift_branch(sys: DynSystem, parent: ShiftNode, center: Sequence[float],
                 N: np.ndarray, deg_V: int, N_I: int,
                 opts: VsOptions | None = None,
                 eps_tol: float = 1e-3, ordinal: int = 1) -> ShiftNode:
    """Run one fixed-shape V-s iteration seeded from the parent certificate.

    The shape is the shifted ellipsoid (x - x*)^T N (x - x*); its center is
    held fixed for the entire run. The parent's V must satisfy V(x*) < 1.
    """
    center = np.asarray(center, dtype=float)
    vparent = parent.cert.V
    if vparent(center) >= 1.0:
        raise ValueError(
            f"center {center.tolist()} is not inside the parent set "
            f"(V = {vparent(center):.4f})")
    shape = ShapeFn(np.asarray(N, dtype=float), center)
    cert = run_a1(sys, vparent, shape, N_I, deg_V, eps_tol, opts)
    nrm = np.linalg.norm(center)
    direction = center / nrm if nrm > 1e-12 else None
    node = ShiftNode(
        id=parent.id + (ordinal,),
        cert=cert, parent=parent, center=center,
        N=np.asarray(N, dtype=float), direction=direction,
        round_index=parent.round_index + 1)
    if direction is not None:
        node.rho_before = rho(vparent, direction)
        node.rho_after = rho(cert.V, direction)
    return node


def further_shift_check(node: ShiftNode, eps_rho: float = 0.10) -> bool:
    """True when the boundary moved enough along the node's direction.

    rho is measured from the origin along the direction, against the parent
    certificate before and against the node's own certificate after.
    """
    if node.direction is None:
        return False
    r_old, r_new = node.rho_before, node.rho_after
    if not (math.isfinite(r_old) and math.isfinite(r_new)) or r_old == 0.0:
        return False
    return abs((r_new - r_old) / r_old) > eps_rho


def _resolve_entry(entry, parents: list[ShiftNode]):
    """Pair a plan entry with concrete (parent, center, N, n_iter) branches."""
    if isinstance(entry, CenterShift):
        best, best_v = None, math.inf
        for p in parents:
            v = p.cert.V(entry.center)
            if v < best_v:
                best, best_v = p, v
        if best is None or best_v >= 1.0:
            raise SelectionFailedError(
                f"center {np.asarray(entry.center).tolist()} lies in no open "
                f"parent set (best V = {best_v:.4f})")
        return [(best, entry.center, entry.N, entry.n_iter)]
    if isinstance(entry, DirectionShift):
        out = []
        for p in parents:
            center = select_center(p.cert.V, entry.direction, entry.sigma)
            out.append((p, center, entry.N, entry.n_iter))
        return out
    raise TypeError(f"not a plan entry: {entry!r}")


def run_rcomssf(sys: DynSystem, base: Certificate, plan: ShiftPlan,
                deg_V: int, N_I: int = 30, opts: VsOptions | None = None,
                eps_rho: float = 0.10, eps_tol: float = 1e-3,
                workers: int = 1) -> ShiftTree:
    """Execute the full shifting plan and return the certificate tree.

    Rounds run in order. Within a round, branches are independent (and run
    on a thread pool when workers > 1). A branch whose boundary growth
    along its direction stays within eps_rho is closed: later rounds no
    longer attach to it. Failed branches are recorded in tree.failures.
    """
    root = ShiftNode(id=(), cert=base, round_index=0)
    tree = ShiftTree(root, [root])

    prev_round = [root]
    for r, entries in enumerate(plan.rounds, start=1):
        parents = [n for n in prev_round if n.open]
        if not parents:
            logger.info("round %d: no open parents, stopping", r)
            break
        jobs = []
        for entry in entries:
            try:
                jobs.extend(_resolve_entry(entry, parents))
            except SelectionFailedError as exc:
                center = getattr(entry, "center", getattr(entry, "direction", None))
                tree.failures.append(BranchFailure(r, np.asarray(center), str(exc)))
                logger.warning("round %d: %s", r, exc)

        def run_one(job):
            parent, center, N, n_iter = job
            return shift_branch(sys, parent, center, N, deg_V,
                                n_iter if n_iter else N_I, opts, eps_tol)

        results: list[ShiftNode | BranchFailure] = [None] * len(jobs)
        if workers > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futs = [pool.submit(run_one, j) for j in jobs]
                for i, fut in enumerate(futs):
                    try:
                        results[i] = fut.result()
                    except (InitialInfeasibleError, ValueError) as exc:
                        results[i] = BranchFailure(r, jobs[i][1], str(exc))
        else:
            for i, job in enumerate(jobs):
                try:
                    results[i] = run_one(job)
                except (InitialInfeasibleError, ValueError) as exc:
                    results[i] = BranchFailure(r, job[1], str(exc))

        new_round = []
        for res, job in zip(results, jobs):
            if isinstance(res, BranchFailure):
                tree.failures.append(res)
                logger.warning("round %d branch at %s failed: %s",
                               r, np.asarray(job[1]).tolist(), res.reason)
                continue
            parent = res.parent
            ordinal = sum(1 for n in tree.nodes if n.parent is parent) + 1
            res.id = parent.id + (ordinal,)
            res.open = further_shift_check(res, eps_rho)
            tree.nodes.append(res)
            new_round.append(res)
            logger.info("round %d: node %s rho %.4f -> %.4f (open=%s)",
                        r, res.label, res.rho_before, res.rho_after, res.open)
        prev_round = new_round
    return tree
