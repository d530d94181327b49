"""Compile SOS feasibility programs into semidefinite problems.

An SosProgram holds unknown polynomials (free-coefficient or SOS) and
constraints of the form "expression is SOS", where the expression is affine
in the unknowns. Compilation produces one PSD Gram block per SOS constraint
and per SOS unknown, plus one linear equality per monomial matching the
expression's coefficients against the Gram products Z_i * Z_j.

Certificates returned by the solver are never trusted raw: validate()
re-expands Z^T Q Z symbolically with exact polynomial arithmetic and checks
the identity residual and Gram eigenvalues against tolerances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import sdp
from .poly import MonomialBasis, Monomial, Polynomial, grlex_key, monomial_basis

_SQRT2 = math.sqrt(2.0)

GRAM_EIG_TOL = 1e-8


def cert_tol(max_abs_coeff: float) -> float:
    """Identity-residual tolerance, scaled for badly conditioned constraints."""
    return 1e-6 * max(1.0, max_abs_coeff)


class PolyExpr:
    """Polynomial whose coefficients are affine in scalar decision variables.

    terms maps each monomial to {var_key: coeff}; const holds the known part.
    var_key is ('g', block, i, j) for an svec Gram coordinate or ('f', k)
    for a free scalar.
    """

    __slots__ = ("dim", "const", "terms")

    def __init__(self, dim: int, const: Polynomial | None = None,
                 terms: dict | None = None):
        self.dim = dim
        self.const = const if const is not None else Polynomial.zero(dim)
        self.terms = terms if terms is not None else {}

    @classmethod
    def from_poly(cls, p: Polynomial) -> "PolyExpr":
        return cls(p.dim, p, {})

    def copy(self) -> "PolyExpr":
        return PolyExpr(self.dim, self.const,
                        {m: dict(d) for m, d in self.terms.items()})

    def _add_term(self, mono: Monomial, key, coeff: float):
        if coeff == 0.0:
            return
        slot = self.terms.setdefault(mono, {})
        slot[key] = slot.get(key, 0.0) + coeff
        if abs(slot[key]) < 1e-16:
            del slot[key]
            if not slot:
                del self.terms[mono]

    def __add__(self, other):
        if isinstance(other, Polynomial):
            return PolyExpr(self.dim, self.const + other,
                            {m: dict(d) for m, d in self.terms.items()})
        if isinstance(other, (int, float)):
            return self + Polynomial.constant(self.dim, other)
        out = self.copy()
        out.const = out.const + other.const
        for m, d in other.terms.items():
            for k, v in d.items():
                out._add_term(m, k, v)
        return out

    __radd__ = __add__

    def __neg__(self):
        return PolyExpr(self.dim, -self.const,
                        {m: {k: -v for k, v in d.items()}
                         for m, d in self.terms.items()})

    def __sub__(self, other):
        if isinstance(other, (int, float, Polynomial)):
            return self + (-1.0 * other if not isinstance(other, Polynomial)
                           else (-other))
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        """Multiply by a known polynomial or scalar."""
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.dim, float(other))
        out = PolyExpr(self.dim, self.const * other, {})
        for m, d in self.terms.items():
            for om, oc in other.terms.items():
                pm = tuple(a + b for a, b in zip(m, om))
                for k, v in d.items():
                    out._add_term(pm, k, v * oc)
        return out

    __rmul__ = __mul__

    def monomials(self) -> set:
        return set(self.const.terms) | set(self.terms)

    def degree_window(self) -> tuple[int, int]:
        monos = self.monomials()
        if not monos:
            return (-1, -1)
        degs = [sum(m) for m in monos]
        return (min(degs), max(degs))

    def instantiate(self, values: Mapping) -> Polynomial:
        """Substitute numeric values for all decision variables."""
        terms = dict(self.const.terms)
        for m, d in self.terms.items():
            acc = terms.get(m, 0.0)
            for k, v in d.items():
                acc += v * values[k]
            terms[m] = acc
        return Polynomial(self.dim, terms)


@dataclass
class PolyVar:
    """Unknown polynomial: free coefficients or an SOS Gram parametrization."""

    name: str
    kind: str  # 'free' | 'sos'
    basis: MonomialBasis            # free: monomials; sos: Gram basis Z
    block_index: int | None = None  # sos only
    free_offset: int | None = None  # free only
    no_constant: bool = False

    def as_expr(self) -> PolyExpr:
        dim = self.basis.dim
        expr = PolyExpr(dim)
        if self.kind == "free":
            for k, m in enumerate(self.basis):
                expr._add_term(m, ("f", self.free_offset + k), 1.0)
        else:
            Z = self.basis.entries
            for j in range(len(Z)):
                for i in range(j + 1):
                    m = tuple(a + b for a, b in zip(Z[i], Z[j]))
                    w = 1.0 if i == j else _SQRT2
                    expr._add_term(m, ("g", self.block_index, i, j), w)
        return expr

    def map_terms(self, fn) -> PolyExpr:
        """Affine image sum_k c_k * fn(m_k) for a free unknown sum c_k m_k.

        fn maps a monomial to a known Polynomial; used e.g. to express the
        Lie derivative of an unknown polynomial.
        """
        if self.kind != "free":
            raise ValueError("map_terms applies to free-coefficient unknowns")
        dim = self.basis.dim
        expr = PolyExpr(dim)
        for k, m in enumerate(self.basis):
            img = fn(m)
            for im, ic in img.terms.items():
                expr._add_term(im, ("f", self.free_offset + k), ic)
        return expr


@dataclass
class SosConstraint:
    """Requirement that an affine polynomial expression is SOS."""

    name: str
    expr: PolyExpr
    gram_basis: MonomialBasis


@dataclass
class ConstraintWitness:
    name: str
    basis: MonomialBasis
    gram: np.ndarray
    expression: Polynomial  # instantiated at the certified variable values


@dataclass
class MultiplierWitness:
    name: str
    basis: MonomialBasis
    gram: np.ndarray
    poly: Polynomial


@dataclass
class SosCertificate:
    constraints: list[ConstraintWitness]
    multipliers: dict[str, MultiplierWitness]
    free_polys: dict[str, Polynomial]
    identity_residual: float
    min_gram_eig: float


@dataclass
class ValidationReport:
    ok: bool
    identity_residual: float
    min_eig: float
    failures: list[str] = field(default_factory=list)


def gram_poly(basis: MonomialBasis, Q: np.ndarray) -> Polynomial:
    """Expand Z^T Q Z symbolically."""
    Z = [Polynomial.monomial(basis.dim, m) for m in basis]
    out = Polynomial.zero(basis.dim)
    n = len(Z)
    for j in range(n):
        for i in range(j + 1):
            w = Q[i, j] if i == j else 2.0 * Q[i, j]
            if w != 0.0:
                out = out + (Z[i] * Z[j]).scale(w)
    return out


class SosProgram:
    """Builder for a set of SOS constraints over shared unknowns."""

    def __init__(self, dim: int):
        self.dim = dim
        self.sos_vars: list[PolyVar] = []
        self.free_vars: list[PolyVar] = []
        self.free_size = 0
        self.constraints: list[SosConstraint] = []
        self._constraint_bases: list[MonomialBasis] = []

    def sos_poly(self, name: str, deg: int, *, no_constant: bool = False) -> PolyVar:
        """Declare an SOS unknown of the given (even) degree."""
        if deg <= 0 or deg % 2 != 0:
            raise ValueError(f"SOS unknown degree must be positive even, got {deg}")
        dmin = 1 if no_constant else 0
        basis = monomial_basis(self.dim, dmin, deg // 2)
        var = PolyVar(name, "sos", basis, block_index=len(self.sos_vars),
                      no_constant=no_constant)
        self.sos_vars.append(var)
        return var

    def free_poly(self, name: str, basis: MonomialBasis) -> PolyVar:
        var = PolyVar(name, "free", basis, free_offset=self.free_size)
        self.free_vars.append(var)
        self.free_size += len(basis)
        return var

    def require_sos(self, expr: PolyExpr, name: str) -> SosConstraint:
        dmin, dmax = expr.degree_window()
        if dmax < 0:
            raise ValueError(f"constraint '{name}' has an empty expression")
        if dmax % 2 != 0:
            raise ValueError(f"constraint '{name}' has odd degree {dmax}")
        basis = monomial_basis(self.dim, (dmin + 1) // 2, dmax // 2)
        if len(basis) == 0:
            raise ValueError(f"constraint '{name}' yields an empty Gram basis")
        con = SosConstraint(name, expr, basis)
        self.constraints.append(con)
        return con

    # -- compilation ----------------------------------------------------

    def compile(self, objective: Mapping | None = None) -> sdp.SdpProblem:
        """Lower to a standard-form SDP.

        Block order: SOS unknowns first (declaration order), then one Gram
        block per constraint. Equality rows follow constraint order with
        monomials in graded-lex order, so the compiled problem is
        byte-stable for identical programs.
        """
        block_dims = [len(v.basis) for v in self.sos_vars]
        con_block0 = len(self.sos_vars)
        for con in self.constraints:
            block_dims.append(len(con.gram_basis))
        prob = sdp.SdpProblem(block_dims=block_dims, free_vars=self.free_size)

        for ci, con in enumerate(self.constraints):
            bk = con_block0 + ci
            Z = con.gram_basis.entries
            # rows over the union of expression and Gram-product monomials
            rows: dict[Monomial, dict[int, float]] = {}
            rhs: dict[Monomial, float] = {}
            for m in con.expr.monomials():
                rows.setdefault(m, {})
                rhs[m] = -con.expr.const.terms.get(m, 0.0)
            for m, d in con.expr.terms.items():
                row = rows[m]
                for key, v in d.items():
                    col = self._col_of(prob, key)
                    row[col] = row.get(col, 0.0) + v
            for j in range(len(Z)):
                for i in range(j + 1):
                    m = tuple(a + b for a, b in zip(Z[i], Z[j]))
                    row = rows.setdefault(m, {})
                    if m not in rhs:
                        rhs[m] = 0.0
                    col = prob.gram_col(bk, i, j)
                    row[col] = row.get(col, 0.0) - (1.0 if i == j else _SQRT2)
            for m in sorted(rows, key=grlex_key):
                prob.add_equality(rows[m], rhs[m])

        if objective:
            prob.objective = {self._col_of(prob, k) if isinstance(k, tuple) else k: v
                              for k, v in objective.items()}
        return prob

    def _col_of(self, prob: sdp.SdpProblem, key) -> int:
        if key[0] == "f":
            return prob.free_col(key[1])
        _, b, i, j = key
        return prob.gram_col(b, i, j)

    # -- solving and certificates ----------------------------------------

    def solve(self, opts: sdp.SolveOptions | None = None,
              objective: Mapping | None = None
              ) -> tuple[sdp.SolveStatus, SosCertificate | None]:
        """Compile, solve, and extract a certificate when feasible."""
        prob = self.compile(objective)
        sol = sdp.solve(prob, opts)
        if sol.status is not sdp.SolveStatus.FEASIBLE:
            return sol.status, None
        return sol.status, self.extract(sol)

    def extract(self, sol: sdp.SdpSolution) -> SosCertificate:
        values = {}
        for v in self.sos_vars:
            Q = sol.blocks[v.block_index]
            for j in range(len(v.basis)):
                for i in range(j + 1):
                    values[("g", v.block_index, i, j)] = (
                        Q[i, j] if i == j else _SQRT2 * Q[i, j])
        for k in range(self.free_size):
            values[("f", k)] = float(sol.free_values[k])

        multipliers = {}
        for v in self.sos_vars:
            Q = sol.blocks[v.block_index]
            multipliers[v.name] = MultiplierWitness(
                v.name, v.basis, Q, gram_poly(v.basis, Q))
        free_polys = {}
        for v in self.free_vars:
            coeffs = {m: float(sol.free_values[v.free_offset + k])
                      for k, m in enumerate(v.basis)}
            free_polys[v.name] = Polynomial(self.dim, coeffs)

        con_block0 = len(self.sos_vars)
        constraints = []
        for ci, con in enumerate(self.constraints):
            Q = sol.blocks[con_block0 + ci]
            constraints.append(ConstraintWitness(
                con.name, con.gram_basis, Q, con.expr.instantiate(values)))

        cert = SosCertificate(constraints, multipliers, free_polys,
                              math.nan, math.nan)
        report = validate(cert)
        cert.identity_residual = report.identity_residual
        cert.min_gram_eig = report.min_eig
        return cert


def validate(cert: SosCertificate) -> ValidationReport:
    """Symbolically re-check a certificate: identities and Gram eigenvalues.

    Each constraint's Z^T Q Z is re-expanded with exact polynomial
    arithmetic and compared to the instantiated expression coefficientwise;
    every Gram block (constraints and multipliers) must be PSD within
    GRAM_EIG_TOL.
    """
    failures = []
    worst_res = 0.0
    min_eig = math.inf
    for cw in cert.constraints:
        rebuilt = gram_poly(cw.basis, cw.gram)
        diff = rebuilt - cw.expression
        res = diff.max_abs_coeff()
        worst_res = max(worst_res, res)
        tol = cert_tol(cw.expression.max_abs_coeff())
        if res > tol:
            failures.append(f"{cw.name}: identity residual {res:.3e} > {tol:.3e}")
        eig = sdp.min_eigenvalue(cw.gram) if len(cw.basis) else 0.0
        min_eig = min(min_eig, eig)
        if eig < -GRAM_EIG_TOL:
            failures.append(f"{cw.name}: Gram min eigenvalue {eig:.3e}")
    for mw in cert.multipliers.values():
        eig = sdp.min_eigenvalue(mw.gram) if len(mw.basis) else 0.0
        min_eig = min(min_eig, eig)
        if eig < -GRAM_EIG_TOL:
            failures.append(f"{mw.name}: Gram min eigenvalue {eig:.3e}")
    if min_eig is math.inf:
        min_eig = 0.0
    return ValidationReport(not failures, worst_res, min_eig, failures)


def s_procedure(g0: Polynomial, gs: Sequence[Polynomial],
                s_degrees: Sequence[int], *,
                no_constant: Sequence[bool] | None = None,
                program: SosProgram | None = None,
                name: str = "s_procedure",
                degree_budget: int | None = None,
                ) -> tuple[SosProgram, SosConstraint, list[PolyVar]]:
    """Generalized S-procedure: certify {g_i >= 0 for all i} inside {g0 >= 0}.

    Builds the constraint g0 - sum_i s_i * g_i in SOS with SOS multipliers
    s_i of the given degrees, returning the program, the main constraint,
    and the multiplier unknowns.
    """
    if len(gs) != len(s_degrees):
        raise ValueError("one multiplier degree per constraint polynomial")
    if no_constant is None:
        no_constant = [False] * len(gs)
    if degree_budget is not None:
        for gi, di in zip(gs, s_degrees):
            if gi.degree() + di > degree_budget:
                raise ValueError(
                    f"product degree {gi.degree() + di} exceeds budget {degree_budget}")
    prog = program if program is not None else SosProgram(g0.dim)
    expr = PolyExpr.from_poly(g0)
    svars = []
    for k, (gi, di, nc) in enumerate(zip(gs, s_degrees, no_constant)):
        s = prog.sos_poly(f"{name}_s{k + 1}", di, no_constant=nc)
        svars.append(s)
        expr = expr - s.as_expr() * gi
    con = prog.require_sos(expr, name)
    return prog, con, svars


def check_sos(p: Polynomial, opts: sdp.SolveOptions | None = None
              ) -> tuple[sdp.SolveStatus, SosCertificate | None]:
    """Decide whether a fixed polynomial is a sum of squares."""
    prog = SosProgram(p.dim)
    prog.require_sos(PolyExpr.from_poly(p), "sos")
    return prog.solve(opts)
