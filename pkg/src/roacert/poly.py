"""Sparse multivariate polynomials over float coefficients.

A polynomial in n variables is stored as a dict mapping exponent tuples to
coefficients, e.g. 2.7*x1^2 - x1*x2 is ``{(2, 0): 2.7, (1, 1): -1.0}``.
Coefficients whose magnitude falls below PRUNE_TOL after arithmetic are
dropped, so the zero polynomial is always the empty dict.

Monomials are ordered graded lexicographically (total degree first, then
x1 before x2 before ...), which fixes a deterministic ordering for
coefficient-matching rows and text rendering everywhere downstream.

Values are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Mapping, Sequence

import numpy as np

# Below double-precision noise for the coefficient magnitudes handled here.
PRUNE_TOL = 1e-14

Monomial = tuple  # exponent tuple, one non-negative int per variable


def grlex_key(mono: Monomial):
    """Graded-lex sort key: by total degree, then x1 before x2 before ..."""
    return (sum(mono), tuple(-e for e in mono))


def monomial_str(mono: Monomial) -> str:
    parts = []
    for i, e in enumerate(mono):
        if e == 1:
            parts.append(f"x{i + 1}")
        elif e > 1:
            parts.append(f"x{i + 1}^{e}")
    return "*".join(parts)


def _fmt_coeff(c: float) -> str:
    a = abs(c)
    if a != 0.0 and (a < 1e-3 or a >= 1e6):
        return f"{c:.5e}"
    return f"{c:.5f}"


class Polynomial:
    """Immutable sparse polynomial in ``dim`` variables."""

    __slots__ = ("dim", "terms", "_compiled")

    def __init__(self, dim: int, terms: Mapping[Monomial, float] | None = None):
        if dim < 1:
            raise ValueError(f"dimension must be >= 1, got {dim}")
        clean: dict[Monomial, float] = {}
        if terms:
            for mono, c in terms.items():
                if len(mono) != dim:
                    raise ValueError(
                        f"monomial {mono} has {len(mono)} exponents, expected {dim}")
                c = float(c)
                if abs(c) >= PRUNE_TOL:
                    clean[tuple(int(e) for e in mono)] = c
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "terms", clean)
        object.__setattr__(self, "_compiled", None)

    def __setattr__(self, name, value):
        raise AttributeError("Polynomial is immutable")

    def __reduce__(self):
        return (Polynomial, (self.dim, self.terms))

    # -- constructors -------------------------------------------------

    @classmethod
    def zero(cls, dim: int) -> "Polynomial":
        return cls(dim, {})

    @classmethod
    def constant(cls, dim: int, c: float) -> "Polynomial":
        return cls(dim, {(0,) * dim: c})

    @classmethod
    def variable(cls, dim: int, index: int) -> "Polynomial":
        if not 0 <= index < dim:
            raise ValueError(f"variable index {index} out of range for dim {dim}")
        e = [0] * dim
        e[index] = 1
        return cls(dim, {tuple(e): 1.0})

    @classmethod
    def monomial(cls, dim: int, mono: Monomial, c: float = 1.0) -> "Polynomial":
        return cls(dim, {tuple(mono): c})

    @classmethod
    def quadratic_form(cls, N: np.ndarray) -> "Polynomial":
        """x^T N x for a symmetric matrix N."""
        N = np.asarray(N, dtype=float)
        n = N.shape[0]
        terms: dict[Monomial, float] = {}
        for i in range(n):
            for j in range(i, n):
                e = [0] * n
                e[i] += 1
                e[j] += 1
                c = N[i, i] if i == j else N[i, j] + N[j, i]
                terms[tuple(e)] = terms.get(tuple(e), 0.0) + c
        return cls(n, terms)

    # -- basic queries -------------------------------------------------

    def degree(self) -> int:
        """Max total degree; -1 for the zero polynomial."""
        if not self.terms:
            return -1
        return max(sum(m) for m in self.terms)

    def min_degree(self) -> int:
        """Min total degree among stored monomials; -1 for zero."""
        if not self.terms:
            return -1
        return min(sum(m) for m in self.terms)

    def coefficient(self, mono: Monomial) -> float:
        return self.terms.get(tuple(mono), 0.0)

    def max_abs_coeff(self) -> float:
        if not self.terms:
            return 0.0
        return max(abs(c) for c in self.terms.values())

    def items(self) -> list[tuple[Monomial, float]]:
        """Terms in graded-lex order."""
        return sorted(self.terms.items(), key=lambda kv: grlex_key(kv[0]))

    def is_zero(self) -> bool:
        return not self.terms

    # -- evaluation ----------------------------------------------------

    def __call__(self, x: Sequence[float]) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"point has shape {x.shape}, expected ({self.dim},)")
        total = 0.0
        for mono, c in self.terms.items():
            v = c
            for xi, e in zip(x, mono):
                if e:
                    v *= xi ** e
            total += v
        return total

    def _compile(self):
        cache = object.__getattribute__(self, "_compiled")
        if cache is None:
            if self.terms:
                exps = np.array(list(self.terms.keys()), dtype=np.int64)
                coeffs = np.array(list(self.terms.values()), dtype=float)
            else:
                exps = np.zeros((0, self.dim), dtype=np.int64)
                coeffs = np.zeros(0)
            cache = (exps, coeffs)
            object.__setattr__(self, "_compiled", cache)
        return cache

    def eval_batch(self, X: np.ndarray) -> np.ndarray:
        """Evaluate at many points at once. X has shape (npoints, dim)."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise ValueError(f"batch has shape {X.shape}, expected (n, {self.dim})")
        exps, coeffs = self._compile()
        if len(coeffs) == 0:
            return np.zeros(X.shape[0])
        return np.prod(X[:, None, :] ** exps[None, :, :], axis=2) @ coeffs

    # -- arithmetic ----------------------------------------------------

    def _require_same_dim(self, other: "Polynomial"):
        if self.dim != other.dim:
            raise ValueError(f"dim mismatch: {self.dim} vs {other.dim}")

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.dim, other)
        elif not isinstance(other, Polynomial):
            return NotImplemented
        self._require_same_dim(other)
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = out.get(m, 0.0) + c
        return Polynomial(self.dim, out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.dim, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.dim, other)
        elif not isinstance(other, Polynomial):
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return self.scale(other)
        if not isinstance(other, Polynomial):
            return NotImplemented
        self._require_same_dim(other)
        out: dict[Monomial, float] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = tuple(a + b for a, b in zip(m1, m2))
                out[m] = out.get(m, 0.0) + c1 * c2
        return Polynomial(self.dim, out)

    __rmul__ = __mul__

    def scale(self, s: float) -> "Polynomial":
        return Polynomial(self.dim, {m: c * s for m, c in self.terms.items()})

    def __eq__(self, other):
        return (isinstance(other, Polynomial)
                and self.dim == other.dim and self.terms == other.terms)

    def __hash__(self):
        return hash((self.dim, frozenset(self.terms.items())))

    def approx_eq(self, other: "Polynomial", tol: float = 1e-9) -> bool:
        """Coefficientwise comparison within an absolute tolerance."""
        self._require_same_dim(other)
        monos = set(self.terms) | set(other.terms)
        return all(abs(self.terms.get(m, 0.0) - other.terms.get(m, 0.0)) <= tol
                   for m in monos)

    # -- calculus ------------------------------------------------------

    def partial(self, index: int) -> "Polynomial":
        out: dict[Monomial, float] = {}
        for m, c in self.terms.items():
            e = m[index]
            if e == 0:
                continue
            d = list(m)
            d[index] = e - 1
            dm = tuple(d)
            out[dm] = out.get(dm, 0.0) + c * e
        return Polynomial(self.dim, out)

    def grad(self) -> tuple["Polynomial", ...]:
        return tuple(self.partial(i) for i in range(self.dim))

    def quadratic_part(self) -> "Polynomial":
        """Restriction to total-degree-2 monomials."""
        return Polynomial(self.dim, {m: c for m, c in self.terms.items()
                                     if sum(m) == 2})

    def quadratic_matrix(self) -> np.ndarray:
        """Symmetric N with quadratic_part() == x^T N x."""
        N = np.zeros((self.dim, self.dim))
        for m, c in self.terms.items():
            if sum(m) != 2:
                continue
            idx = [i for i, e in enumerate(m) for _ in range(e)]
            i, j = idx
            if i == j:
                N[i, i] = c
            else:
                N[i, j] = N[j, i] = c / 2.0
        return N

    # -- rendering -----------------------------------------------------

    def __str__(self):
        if not self.terms:
            return "0"
        parts = []
        for k, (mono, c) in enumerate(self.items()):
            mstr = monomial_str(mono)
            body = _fmt_coeff(abs(c)) + ("*" + mstr if mstr else "")
            if k == 0:
                parts.append(("-" if c < 0 else "") + body)
            else:
                parts.append(("- " if c < 0 else "+ ") + body)
        return " ".join(parts)

    def __repr__(self):
        return f"Polynomial({self.dim}, {self})"


@dataclass(frozen=True)
class MonomialBasis:
    """Ordered, duplicate-free list of monomials in a fixed dimension."""

    dim: int
    entries: tuple

    def __post_init__(self):
        seen = set()
        for m in self.entries:
            if len(m) != self.dim:
                raise ValueError(f"monomial {m} does not match dim {self.dim}")
            if m in seen:
                raise ValueError(f"duplicate monomial {m}")
            seen.add(m)
        ordered = tuple(sorted(self.entries, key=grlex_key))
        object.__setattr__(self, "entries", ordered)

    def __len__(self):
        return len(self.entries)

    def __iter__(self) -> Iterator[Monomial]:
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    def degrees(self) -> tuple[int, int]:
        if not self.entries:
            return (-1, -1)
        return (sum(self.entries[0]), sum(self.entries[-1]))


def monomial_basis(n: int, dmin: int, dmax: int) -> MonomialBasis:
    """All monomials in n variables with total degree in [dmin, dmax]."""
    if not 0 <= dmin <= dmax:
        raise ValueError(f"need 0 <= dmin <= dmax, got ({dmin}, {dmax})")
    entries = []
    for d in range(dmin, dmax + 1):
        # compositions of d into n parts
        for cuts in itertools.combinations(range(d + n - 1), n - 1):
            prev = -1
            mono = []
            for c in cuts:
                mono.append(c - prev - 1)
                prev = c
            mono.append(d + n - 2 - prev)
            entries.append(tuple(mono))
    return MonomialBasis(n, tuple(entries))


def lie_derivative(V: Polynomial, f: Sequence[Polynomial]) -> Polynomial:
    """Derivative of V along the vector field f: sum_i dV/dx_i * f_i."""
    if len(f) != V.dim:
        raise ValueError(f"field has {len(f)} components, expected {V.dim}")
    out = Polynomial.zero(V.dim)
    for i, fi in enumerate(f):
        if fi.dim != V.dim:
            raise ValueError(f"component {i} has dim {fi.dim}, expected {V.dim}")
        out = out + V.partial(i) * fi
    return out


def affine_shift_expand(N: np.ndarray, xstar: Sequence[float]) -> Polynomial:
    """Expand (x - x*)^T N (x - x*) into explicit polynomial terms.

    N must be symmetric positive definite (checked by Cholesky).
    """
    N = np.asarray(N, dtype=float)
    xstar = np.asarray(xstar, dtype=float)
    n = len(xstar)
    if N.shape != (n, n):
        raise ValueError(f"N has shape {N.shape}, expected ({n}, {n})")
    if not np.allclose(N, N.T, atol=1e-12):
        raise ValueError("N is not symmetric")
    try:
        np.linalg.cholesky(N)
    except np.linalg.LinAlgError:
        raise ValueError("N is not positive definite") from None
    p = Polynomial.quadratic_form(N)
    lin = -2.0 * (N @ xstar)
    terms = dict(p.terms)
    for i in range(n):
        e = [0] * n
        e[i] = 1
        terms[tuple(e)] = terms.get(tuple(e), 0.0) + lin[i]
    const = float(xstar @ N @ xstar)
    terms[(0,) * n] = terms.get((0,) * n, 0.0) + const
    return Polynomial(n, terms)


def poly_from_terms(dim: int, terms: Mapping[Monomial, float]) -> Polynomial:
    return Polynomial(dim, terms)
