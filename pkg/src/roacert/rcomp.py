"""R-function composition of certified level sets.

Each certified set {V < 1} becomes the leaf function R = 1 - V, positive
exactly on the set. Boolean structure is carried by real-valued nodes:

  not:  -R
  and:  R1 + R2 - sqrt(R1^2 + R2^2 - tau*R1*R2)
  or:   R1 + R2 + sqrt(R1^2 + R2^2 - tau*R1*R2)

with tau in (0, 2]. At tau = 2 the radicand is (R1 - R2)^2, so the union
and intersection reduce exactly to 2*max and 2*min and the sign of the
composed function encodes set membership exactly.

The optional polynomial approximation is a least-squares surface fit for
reporting; it is not a certificate and is labeled as such in outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .poly import MonomialBasis, Polynomial, monomial_basis


def _check_tau(tau: float):
    if not 0.0 < tau <= 2.0:
        raise ValueError(f"tau must lie in (0, 2], got {tau}")


@dataclass(frozen=True)
class Leaf:
    V: Polynomial  # leaf function is 1 - V, positive on the certified set
    label: str = ""


@dataclass(frozen=True)
class Not:
    child: "RNode"


@dataclass(frozen=True)
class And:
    a: "RNode"
    b: "RNode"
    tau: float = 2.0

    def __post_init__(self):
        _check_tau(self.tau)


@dataclass(frozen=True)
class Or:
    a: "RNode"
    b: "RNode"
    tau: float = 2.0

    def __post_init__(self):
        _check_tau(self.tau)


RNode = Union[Leaf, Not, And, Or]


def r_eval(node: RNode, x: Sequence[float]) -> float:
    """Evaluate the composed R-function at one point."""
    return float(r_eval_batch(node, np.asarray(x, dtype=float)[None, :])[0])


def r_eval_batch(node: RNode, X: np.ndarray) -> np.ndarray:
    """Evaluate at many points; X has shape (n, dim)."""
    if isinstance(node, Leaf):
        return 1.0 - node.V.eval_batch(X)
    if isinstance(node, Not):
        return -r_eval_batch(node.child, X)
    r1 = r_eval_batch(node.a, X)
    r2 = r_eval_batch(node.b, X)
    # the radicand equals (r1 - r2)^2 at tau = 2; clamp fp negatives
    rad = np.maximum(r1 * r1 + r2 * r2 - node.tau * r1 * r2, 0.0)
    root = np.sqrt(rad)
    if isinstance(node, Or):
        return r1 + r2 + root
    if isinstance(node, And):
        return r1 + r2 - root
    raise TypeError(f"not an RNode: {node!r}")


def leaves(node: RNode) -> list[Leaf]:
    if isinstance(node, Leaf):
        return [node]
    if isinstance(node, Not):
        return leaves(node.child)
    return leaves(node.a) + leaves(node.b)


def compose_union(certs: Sequence, tau: float = 2.0,
                  labels: Sequence[str] | None = None) -> RNode:
    """Left-fold R-union over certified sets, in the given order.

    Accepts Certificate objects (with a .V attribute) or bare polynomials.
    The resulting set {R > 0} is the union of the {V_i < 1}.
    """
    _check_tau(tau)
    if len(certs) == 0:
        raise ValueError("compose_union needs at least one certificate")
    if labels is None:
        labels = [str(i) for i in range(len(certs))]
    vs = [c.V if hasattr(c, "V") else c for c in certs]
    node: RNode = Leaf(vs[0], labels[0])
    for v, lab in zip(vs[1:], labels[1:]):
        node = Or(node, Leaf(v, lab), tau)
    return node


def render_tree(node: RNode, indent: int = 0) -> str:
    """Nested text rendering of the composition tree."""
    pad = "  " * indent
    if isinstance(node, Leaf):
        name = node.label or "set"
        return f"{pad}leaf V[{name}]"
    if isinstance(node, Not):
        return f"{pad}not\n{render_tree(node.child, indent + 1)}"
    op = "or" if isinstance(node, Or) else "and"
    return (f"{pad}{op}(tau={node.tau:g})\n"
            f"{render_tree(node.a, indent + 1)}\n"
            f"{render_tree(node.b, indent + 1)}")


@dataclass
class PolyFit:
    """Least-squares surface fit of an R-function. NOT a certificate."""

    polynomial: Polynomial
    sign_agreement: float


def poly_approx(node: RNode, box: Sequence[tuple[float, float]], degree: int,
                grid: int) -> PolyFit:
    """Fit a polynomial surface to r_eval on a uniform grid over the box.

    Reports the fraction of grid points where the fitted polynomial's sign
    matches the R-function's. Ordinary least squares with column scaling;
    a tiny ridge (1e-10) is added when the normal equations are rank
    deficient.
    """
    if degree < 2 or degree % 2 != 0:
        raise ValueError("fit degree must be even and >= 2")
    if grid < 20:
        raise ValueError("use a grid of at least 20 points per axis")
    box = np.asarray(box, dtype=float)
    dim = box.shape[0]
    axes = [np.linspace(lo, hi, grid) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    X = np.stack([m.ravel() for m in mesh], axis=1)
    y = r_eval_batch(node, X)

    basis = monomial_basis(dim, 0, degree)
    cols = [np.prod(X ** np.asarray(m, dtype=float), axis=1) for m in basis]
    M = np.stack(cols, axis=1)
    scale = np.linalg.norm(M, axis=0)
    scale[scale == 0.0] = 1.0
    Ms = M / scale
    coeffs, residuals, rank, _ = np.linalg.lstsq(Ms, y, rcond=None)
    if rank < Ms.shape[1]:
        if np.allclose(Ms, 0.0):
            raise ValueError("degenerate box: all basis columns vanish")
        MtM = Ms.T @ Ms + 1e-10 * np.eye(Ms.shape[1])
        coeffs = np.linalg.solve(MtM, Ms.T @ y)
    coeffs = coeffs / scale
    fit = Polynomial(dim, {m: c for m, c in zip(basis, coeffs)})
    agreement = float(np.mean((fit.eval_batch(X) > 0.0) == (y > 0.0)))
    return PolyFit(fit, agreement)
