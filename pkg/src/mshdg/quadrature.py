"""Quadrature rules on the reference triangle and the reference segment.

Reference triangle: {(x, y) : x, y >= 0, x + y <= 1}, measure 1/2.
Reference segment: [0, 1], measure 1.

All rules have strictly positive weights and are exact for polynomials up to
the declared order.  Orders 1 and 2 on the triangle use the classic symmetric
rules; higher orders use a collapsed tensor-product Gauss rule, which keeps
weights positive at every order.
"""

from dataclasses import dataclass
import math

import numpy as np

MAX_TRIANGLE_ORDER = 12


@dataclass(frozen=True)
class QuadratureRule:
    """Points (npts, dim) and positive weights (npts,) on a reference cell."""

    points: np.ndarray
    weights: np.ndarray
    order: int

    def __post_init__(self):
        if np.any(self.weights <= 0.0):
            raise ValueError("quadrature weights must be positive")


def _gauss01(n: int):
    # Gauss-Legendre on [0, 1]
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def triangle_quadrature(order: int) -> QuadratureRule:
    """Rule on the reference triangle, exact for total degree <= order."""
    if not 1 <= order <= MAX_TRIANGLE_ORDER:
        raise ValueError(f"triangle quadrature order must be in 1..{MAX_TRIANGLE_ORDER}")
    if order == 1:
        pts = np.array([[1.0 / 3.0, 1.0 / 3.0]])
        wts = np.array([0.5])
    elif order == 2:
        pts = np.array([[1.0 / 6.0, 1.0 / 6.0], [2.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 2.0 / 3.0]])
        wts = np.full(3, 1.0 / 6.0)
    else:
        # collapsed square -> triangle: x = u, y = v (1 - u), jacobian (1 - u);
        # monomial x^a y^b becomes degree a+b+1 in u, so n Gauss points per
        # direction are exact for total degree 2n - 2.
        n = math.ceil((order + 2) / 2)
        u, wu = _gauss01(n)
        v, wv = _gauss01(n)
        U, V = np.meshgrid(u, v, indexing="ij")
        WU, WV = np.meshgrid(wu, wv, indexing="ij")
        pts = np.column_stack([U.ravel(), (V * (1.0 - U)).ravel()])
        wts = (WU * WV * (1.0 - U)).ravel()
    return QuadratureRule(points=pts, weights=wts, order=order)


def segment_quadrature(order: int) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1], exact for degree <= order."""
    if order < 1:
        raise ValueError("segment quadrature order must be >= 1")
    n = max(1, math.ceil((order + 1) / 2))
    x, w = _gauss01(n)
    return QuadratureRule(points=x.reshape(-1, 1), weights=w, order=order)


def refine_triangle_rule(rule: QuadratureRule, m: int) -> QuadratureRule:
    """Composite rule: replicate ``rule`` on a uniform m^2 sub-split.

    Used when the integrand oscillates on a scale the base rule cannot see
    (two-scale coefficients).  The reference triangle is cut into m^2
    congruent sub-triangles (m upright rows plus inverted fillers).
    """
    if m <= 1:
        return rule
    pts = []
    wts = []
    s = 1.0 / m
    base_p = rule.points
    base_w = rule.weights * (s * s)
    # upright sub-triangle at (i, j): origin (i*s, j*s), spans +s in x and y
    for j in range(m):
        for i in range(m - j):
            origin = np.array([i * s, j * s])
            pts.append(base_p * s + origin)
            wts.append(base_w)
    # inverted sub-triangle at (i, j): vertices ((i+1)s, js), (is, (j+1)s),
    # ((i+1)s, (j+1)s); map reference (x,y) -> ((i+1)s - s*x, (j+1)s - s*y)
    for j in range(m - 1):
        for i in range(m - 1 - j):
            ox = (i + 1) * s
            oy = (j + 1) * s
            pts.append(np.column_stack([ox - s * base_p[:, 0], oy - s * base_p[:, 1]]))
            wts.append(base_w)
    return QuadratureRule(points=np.vstack(pts), weights=np.concatenate(wts), order=rule.order)


def refine_segment_rule(rule: QuadratureRule, m: int) -> QuadratureRule:
    """Composite segment rule on m equal pieces of [0, 1]."""
    if m <= 1:
        return rule
    s = 1.0 / m
    pts = np.concatenate([rule.points[:, 0] * s + i * s for i in range(m)])
    wts = np.concatenate([rule.weights * s for _ in range(m)])
    return QuadratureRule(points=pts.reshape(-1, 1), weights=wts, order=rule.order)
