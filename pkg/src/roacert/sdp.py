"""Standard-form semidefinite feasibility and optimization problems.

A problem consists of PSD matrix blocks Q_1..Q_k plus free scalar variables,
tied together by sparse linear equalities A.vec(Q_1..Q_k, y) = b and an
optional linear objective. Symmetric blocks are stored in upper-triangular
vectorization with sqrt(2) scaling on off-diagonal entries, so Euclidean
inner products of svec coordinates equal matrix inner products.

Feasibility is decided by a phase-I problem: minimize t subject to
Q_i + t*I >= 0 and the equalities (with a floor t >= -1 so the problem is
always bounded). The optimum t* is the negated best achievable margin:
t* < psd_tol means feasible, t* > 10*psd_tol means infeasible, anything in
between is reported Unknown, which callers treat as infeasible for safety.

The interior-point solve itself is delegated to cvxopt's conelp behind this
contract; everything observable (statuses, witnesses, residuals) is checked
against the contract here before being returned.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import IO, Mapping, Sequence

import numpy as np

_SQRT2 = math.sqrt(2.0)


def svec_len(d: int) -> int:
    return d * (d + 1) // 2


def svec_index(i: int, j: int) -> int:
    """Index of entry (i, j), i <= j, in the upper-triangular vectorization."""
    if i > j:
        i, j = j, i
    return j * (j + 1) // 2 + i


def svec_to_matrix(v: np.ndarray, d: int) -> np.ndarray:
    M = np.zeros((d, d))
    for j in range(d):
        for i in range(j + 1):
            val = v[svec_index(i, j)]
            if i == j:
                M[i, i] = val
            else:
                M[i, j] = M[j, i] = val / _SQRT2
    return M


class SolveStatus(enum.Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    UNKNOWN = "unknown"


@dataclass
class SdpProblem:
    """PSD blocks + free scalars under linear equality constraints."""

    block_dims: list[int]
    free_vars: int = 0
    eq_rows: list[dict[int, float]] = field(default_factory=list)
    eq_rhs: list[float] = field(default_factory=list)
    objective: dict[int, float] | None = None

    @property
    def n_svec(self) -> int:
        return sum(svec_len(d) for d in self.block_dims)

    @property
    def n_cols(self) -> int:
        return self.n_svec + self.free_vars

    def block_offset(self, k: int) -> int:
        return sum(svec_len(d) for d in self.block_dims[:k])

    def gram_col(self, k: int, i: int, j: int) -> int:
        return self.block_offset(k) + svec_index(i, j)

    def free_col(self, k: int) -> int:
        return self.n_svec + k

    def add_equality(self, row: Mapping[int, float], rhs: float):
        self.eq_rows.append(dict(row))
        self.eq_rhs.append(float(rhs))

    def validate(self):
        n = self.n_cols
        if len(self.eq_rows) != len(self.eq_rhs):
            raise ValueError("equality rows and rhs lengths differ")
        for r, row in enumerate(self.eq_rows):
            for c, v in row.items():
                if not 0 <= c < n:
                    raise ValueError(f"equality row {r} references column {c}, "
                                     f"but only {n} variables are declared")
                if not math.isfinite(v):
                    raise ValueError(f"non-finite coefficient in equality row {r}")
        for rhs in self.eq_rhs:
            if not math.isfinite(rhs):
                raise ValueError("non-finite equality right-hand side")

    def dump(self, fp: IO[str]):
        """Sparse text dump for diffing: one line per equality entry."""
        fp.write(f"blocks {' '.join(str(d) for d in self.block_dims)}\n")
        fp.write(f"free {self.free_vars}\n")
        for r, row in enumerate(self.eq_rows):
            for c in sorted(row):
                fp.write(f"{r} {c} {row[c]:.17g}\n")
            fp.write(f"{r} rhs {self.eq_rhs[r]:.17g}\n")
        if self.objective:
            for c in sorted(self.objective):
                fp.write(f"obj {c} {self.objective[c]:.17g}\n")


@dataclass
class Residuals:
    primal_eq: float
    min_block_eigenvalue: float


@dataclass
class SdpSolution:
    status: SolveStatus
    blocks: list[np.ndarray]
    free_values: np.ndarray
    objective_value: float | None
    residuals: Residuals
    solver_status: str = ""


@dataclass
class SolveOptions:
    eq_tol: float = 1e-7
    psd_tol: float = 1e-8
    max_iter: int = 200
    # center=True solves feasibility with a zero objective instead of
    # phase-I margin maximization; the interior-point iterate then lands
    # near the analytic center of the feasible region, which is what the
    # V-step needs (growth in non-binding directions)
    center: bool = False


def min_eigenvalue(M: np.ndarray) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if M.size and np.max(np.abs(M - M.T)) > 1e-10 * max(1.0, np.max(np.abs(M))):
        raise ValueError("matrix is not symmetric")
    if M.size == 0:
        return 0.0
    return float(np.linalg.eigvalsh(M).min())


def _build_dense_eq(prob: SdpProblem) -> tuple[np.ndarray, np.ndarray]:
    m = len(prob.eq_rows)
    A = np.zeros((m, prob.n_cols))
    for r, row in enumerate(prob.eq_rows):
        for c, v in row.items():
            A[r, c] = v
    return A, np.asarray(prob.eq_rhs, dtype=float)


def _row_reduce(A: np.ndarray, b: np.ndarray, eq_tol: float):
    """Drop zero and dependent rows of an equilibrated system A x = b.

    Returns (A_red, b_red, consistent). Zero rows with nonzero rhs and
    least-squares-inconsistent systems report consistent=False.
    """
    keep = [r for r in range(A.shape[0]) if np.max(np.abs(A[r])) >= 1e-300]
    for r in range(A.shape[0]):
        if r not in keep and abs(b[r]) > eq_tol:
            return A, b, False
    A, b = A[keep], b[keep]
    if A.shape[0] == 0:
        return A, b, True
    x_ls, *_ = np.linalg.lstsq(A, b, rcond=None)
    if np.max(np.abs(A @ x_ls - b)) > max(eq_tol, 1e-9 * max(1.0, np.max(np.abs(b)))):
        return A, b, False
    # independent-row selection via QR with pivoting on A^T
    from scipy.linalg import qr

    _, R, piv = qr(A.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0.0:
        rank = 0
    else:
        rank = int(np.sum(diag > 1e-12 * diag[0]))
    rows = sorted(piv[:rank])
    return A[rows], b[rows], True


def solve(prob: SdpProblem, opts: SolveOptions | None = None) -> SdpSolution:
    """Solve the problem; feasibility runs through the phase-I formulation.

    Deterministic for identical inputs and options. Unknown is returned
    whenever the interior-point iteration cannot support a sound verdict.
    """
    from cvxopt import matrix as cvx_matrix
    from cvxopt import solvers as cvx_solvers

    if opts is None:
        opts = SolveOptions()
    prob.validate()

    dims = prob.block_dims
    n = prob.n_cols
    feasibility = not prob.objective and not opts.center

    A_full, b_full = _build_dense_eq(prob)
    # scale rows to unit inf-norm so badly scaled constraints do not skew
    # the interior-point stopping tests; rhs is scaled identically
    A_sc = A_full.copy()
    b_sc = b_full.copy()
    for r in range(A_sc.shape[0]):
        s = np.max(np.abs(A_sc[r]))
        if s > 0:
            A_sc[r] /= s
            b_sc[r] /= s
    A_red, b_red, consistent = _row_reduce(A_sc, b_sc, opts.eq_tol)
    if not consistent:
        return SdpSolution(SolveStatus.INFEASIBLE, [], np.zeros(prob.free_vars),
                           None, Residuals(math.inf, -math.inf),
                           solver_status="equalities inconsistent")

    ncols = n + 1 if feasibility else n
    t_col = n if feasibility else None

    # cone rows: one linear slack (t >= -1) in feasibility mode, then one
    # full d_k x d_k block per PSD block with slack Q_k + t*I
    n_lin = 1 if feasibility else 0
    g_rows = n_lin + sum(d * d for d in dims)
    G = np.zeros((g_rows, ncols))
    h = np.zeros(g_rows)
    if feasibility:
        G[0, t_col] = -1.0
        h[0] = 1.0
    row0 = n_lin
    for k, d in enumerate(dims):
        off = prob.block_offset(k)
        for j in range(d):
            for i in range(d):
                r = row0 + j * d + i
                lo, hi = min(i, j), max(i, j)
                col = off + svec_index(lo, hi)
                G[r, col] = -1.0 if i == j else -1.0 / _SQRT2
                if feasibility and i == j:
                    G[r, t_col] = -1.0
        row0 += d * d

    A_mat = np.zeros((A_red.shape[0], ncols))
    A_mat[:, :n] = A_red

    c = np.zeros(ncols)
    if feasibility:
        c[t_col] = 1.0
    elif prob.objective:
        for col, v in prob.objective.items():
            c[col] = v

    ladder = [
        {"abstol": 1e-9, "reltol": 1e-9, "feastol": 1e-9},
        {"abstol": 1e-7, "reltol": 1e-7, "feastol": 1e-7},
    ]
    sol = None
    for tolset in ladder:
        options = {"show_progress": False, "maxiters": opts.max_iter, **tolset}
        kwargs = {}
        if A_mat.shape[0] > 0:
            kwargs["A"] = cvx_matrix(A_mat)
            kwargs["b"] = cvx_matrix(b_red)
        try:
            sol = cvx_solvers.conelp(
                cvx_matrix(c), cvx_matrix(G), cvx_matrix(h),
                dims={"l": n_lin, "q": [], "s": list(dims)},
                options=options, **kwargs)
        except (ValueError, ZeroDivisionError, ArithmeticError):
            sol = None
            continue
        if sol["status"] == "optimal":
            break
    if sol is None or sol["x"] is None:
        return SdpSolution(SolveStatus.UNKNOWN, [], np.zeros(prob.free_vars),
                           None, Residuals(math.inf, -math.inf),
                           solver_status="solver failure")

    x = np.asarray(sol["x"]).ravel()
    blocks = [svec_to_matrix(x[prob.block_offset(k):prob.block_offset(k) + svec_len(d)], d)
              for k, d in enumerate(dims)]
    free_values = x[prob.n_svec:n].copy()
    primal_eq = float(np.max(np.abs(A_full @ x[:n] - b_full))) if len(b_full) else 0.0
    min_eig = min((min_eigenvalue(B) for B in blocks), default=0.0)
    residuals = Residuals(primal_eq, min_eig)

    if sol["status"] != "optimal":
        return SdpSolution(SolveStatus.UNKNOWN, blocks, free_values, None,
                           residuals, solver_status=sol["status"])

    if feasibility:
        t_star = float(x[t_col])
        if t_star < opts.psd_tol and primal_eq <= opts.eq_tol and min_eig >= -opts.psd_tol:
            status = SolveStatus.FEASIBLE
        elif t_star > 10.0 * opts.psd_tol:
            status = SolveStatus.INFEASIBLE
        else:
            status = SolveStatus.UNKNOWN
        return SdpSolution(status, blocks, free_values, t_star, residuals,
                           solver_status=sol["status"])

    obj = float(c[:n] @ x[:n])
    status = SolveStatus.FEASIBLE
    if primal_eq > opts.eq_tol or min_eig < -opts.psd_tol:
        status = SolveStatus.UNKNOWN
    return SdpSolution(status, blocks, free_values, obj, residuals,
                       solver_status=sol["status"])
