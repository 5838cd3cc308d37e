"""Legendre polynomials in d dimensions and quadrature for the sphere marginal.

The polynomials here are the Gegenbauer family normalized so that
P_{k,d}(1) = 1.  They are orthogonal under the probability measure with
density proportional to (1 - t^2)^((d-3)/2) on [-1, 1], which is the
distribution of a single coordinate of a uniform random point on the unit
sphere S^{d-1}.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import QuadratureError, ValidationError

__all__ = [
    "QuadratureRule",
    "legendre_eval",
    "legendre_table",
    "quadrature_rule",
    "weighted_inner",
]

# slack for dot products of unit vectors that land epsilon outside [-1, 1]
_T_SLACK = 1e-9


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss rule integrating against the sphere-marginal probability measure.

    Exact for polynomials up to ``exactness_degree``; weights sum to 1.
    Immutable and safe to share between threads.
    """

    d: int
    nodes: np.ndarray
    weights: np.ndarray
    exactness_degree: int

    def integrate(self, f) -> float:
        """Integrate a callable against the rule."""
        return float(np.sum(self.weights * np.asarray(f(self.nodes), dtype=float)))


def _validate_t(t):
    t = np.asarray(t, dtype=float)
    if np.any(np.abs(t) > 1.0 + _T_SLACK):
        raise ValidationError(f"argument outside [-1, 1]: max |t| = {np.max(np.abs(t))}")
    return np.clip(t, -1.0, 1.0)


def legendre_table(k_max: int, d: int, t) -> np.ndarray:
    """Evaluate P_{0,d} .. P_{k_max,d} at points t.

    Returns an array of shape (k_max + 1,) + t.shape.  Uses the forward
    three-term recursion; |P| <= 1 keeps it stable without rescaling.
    """
    if d < 3:
        raise ValidationError(f"dimension must be >= 3, got {d}")
    if k_max < 0:
        raise ValidationError(f"degree must be >= 0, got {k_max}")
    t = _validate_t(t)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    out = np.empty((k_max + 1,) + t.shape, dtype=float)
    out[0] = 1.0
    if k_max >= 1:
        out[1] = t
    for k in range(2, k_max + 1):
        out[k] = ((2 * k + d - 4) * t * out[k - 1] - (k - 1) * out[k - 2]) / (k + d - 3)
    return out[:, 0] if scalar else out


def legendre_eval(k: int, d: int, t):
    """Evaluate the d-dimensional Legendre polynomial P_{k,d} at t.

    Base cases P_{0,d} = 1 and P_{1,d}(t) = t; higher degrees via
    P_{k,d}(t) = ((2k+d-4) t P_{k-1,d}(t) - (k-1) P_{k-2,d}(t)) / (k+d-3).
    """
    table = legendre_table(k, d, t)
    return table[k] if np.ndim(table) > np.ndim(np.asarray(t)) else table[k]


@lru_cache(maxsize=128)
def _rule_cached(d: int, num_nodes: int) -> QuadratureRule:
    # Golub-Welsch on the symmetric Jacobi matrix for weight (1-t^2)^a,
    # a = (d-3)/2.  Off-diagonal^2 for the monic recursion:
    #   gamma_j = j (j + 2a) / ((2j + 2a + 1)(2j + 2a - 1)).
    a = 0.5 * (d - 3)
    j = np.arange(1, num_nodes, dtype=float)
    gamma = j * (j + 2.0 * a) / ((2.0 * j + 2.0 * a) ** 2 - 1.0)
    try:
        nodes, vecs = eigh_tridiagonal(np.zeros(num_nodes), np.sqrt(gamma))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise QuadratureError(
            f"tridiagonal eigensolve failed for d={d}, n={num_nodes} "
            f"(LAPACK iteration budget exhausted): {exc}"
        ) from exc
    weights = vecs[0] ** 2
    weights = weights / weights.sum()
    if not (np.all(np.diff(nodes) > 0) and nodes[0] > -1.0 and nodes[-1] < 1.0):
        raise QuadratureError(f"invalid node configuration for d={d}, n={num_nodes}")
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(d=d, nodes=nodes, weights=weights,
                          exactness_degree=2 * num_nodes - 1)


def quadrature_rule(d: int, num_nodes: int) -> QuadratureRule:
    """Gauss rule with ``num_nodes`` nodes for the sphere marginal in dimension d."""
    if d < 3:
        raise ValidationError(f"dimension must be >= 3, got {d}")
    if num_nodes < 2:
        raise ValidationError(f"need at least 2 nodes, got {num_nodes}")
    return _rule_cached(int(d), int(num_nodes))


def default_num_nodes(k_max: int) -> int:
    """Node count guaranteeing exactness for all spectral integrals up to degree k_max."""
    return max(200, 2 * k_max + 10)


def weighted_inner(f, g, rule: QuadratureRule) -> float:
    """Inner product <f, g> under the sphere marginal, via the rule.

    Exact whenever f * g is a polynomial within the rule's exactness degree.
    """
    fv = np.asarray(f(rule.nodes), dtype=float)
    gv = np.asarray(g(rule.nodes), dtype=float)
    return float(np.sum(rule.weights * fv * gv))
