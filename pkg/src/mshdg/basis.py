"""Polynomial bases on triangles and segments, plus face L2 projection.

Element bases are monomials shifted to the element centroid and scaled by the
element diameter, which keeps Gram matrices well conditioned for degrees up
to 4 without any orthogonalization machinery.  Face multiplier bases are
shifted Legendre polynomials, orthonormal in L2 of the face.
"""

import numpy as np

from .quadrature import segment_quadrature, triangle_quadrature

MAX_DEGREE = 4


def space_dim(k: int) -> int:
    """Dimension of total-degree-k polynomials on a triangle."""
    return (k + 1) * (k + 2) // 2


def monomial_exponents(k: int) -> np.ndarray:
    """(dim, 2) exponent table in graded lexicographic order."""
    exps = [(a, d - a) for d in range(k + 1) for a in range(d, -1, -1)]
    return np.array(exps, dtype=np.int64)


class SimplexBasis:
    """Monomial basis of P^k on a triangle, centered and diameter-scaled.

    ``eval``/``grad`` take physical points; the basis belongs to a concrete
    element described by (centroid, diameter).  On the reference triangle use
    ``SimplexBasis.reference(k)``.
    """

    def __init__(self, degree: int, centroid, diameter: float):
        if degree < 0:
            raise ValueError("degree must be >= 0")
        if degree > MAX_DEGREE:
            raise ValueError(f"degrees above {MAX_DEGREE} are not supported")
        self.degree = degree
        self.centroid = np.asarray(centroid, dtype=float)
        self.diameter = float(diameter)
        self.exponents = monomial_exponents(degree)
        self.dim = len(self.exponents)

    @classmethod
    def reference(cls, degree: int) -> "SimplexBasis":
        return cls(degree, (1.0 / 3.0, 1.0 / 3.0), 1.0)

    def _local(self, points):
        pts = np.asarray(points, dtype=float)
        return (pts - self.centroid) / self.diameter

    def eval(self, points) -> np.ndarray:
        """Values at ``points`` (npts, 2) -> (npts, dim)."""
        loc = self._local(points)
        a = self.exponents[:, 0]
        b = self.exponents[:, 1]
        return loc[:, 0:1] ** a[None, :] * loc[:, 1:2] ** b[None, :]

    def grad(self, points) -> np.ndarray:
        """Gradients at ``points`` -> (npts, dim, 2)."""
        loc = self._local(points)
        a = self.exponents[:, 0]
        b = self.exponents[:, 1]
        x = loc[:, 0:1]
        y = loc[:, 1:2]
        ax = np.where(a > 0, a, 0)
        by = np.where(b > 0, b, 0)
        dx = np.where(a[None, :] > 0, ax[None, :] * x ** np.maximum(a - 1, 0)[None, :], 0.0)
        dx = dx * y ** b[None, :]
        dy = np.where(b[None, :] > 0, by[None, :] * y ** np.maximum(b - 1, 0)[None, :], 0.0)
        dy = dy * x ** a[None, :]
        return np.stack([dx, dy], axis=-1) / self.diameter


class SegmentBasis:
    """Monomial basis {1, s, ..., s^degree} on the reference segment [0, 1]."""

    def __init__(self, degree: int):
        if degree < 0:
            raise ValueError("degree must be >= 0")
        self.degree = degree
        self.dim = degree + 1

    def eval(self, s) -> np.ndarray:
        """Values at reference coordinates ``s`` (npts,) -> (npts, dim)."""
        s = np.asarray(s, dtype=float).reshape(-1)
        return s[:, None] ** np.arange(self.dim)[None, :]


def legendre_values(degree: int, t) -> np.ndarray:
    """Legendre polynomials P_0..P_degree at t in [-1, 1] -> (npts, degree+1)."""
    t = np.asarray(t, dtype=float).reshape(-1)
    out = np.empty((t.size, degree + 1))
    out[:, 0] = 1.0
    if degree >= 1:
        out[:, 1] = t
    for n in range(1, degree):
        out[:, n + 1] = ((2 * n + 1) * t * out[:, n] - n * out[:, n - 1]) / (n + 1)
    return out


def orthonormal_face_basis(degree: int, length: float, s) -> np.ndarray:
    """L2(F)-orthonormal Legendre basis values on a face of given length.

    ``s`` is arclength from the canonical face start, shape (npts,); returns
    (npts, degree+1).
    """
    t = 2.0 * np.asarray(s, dtype=float).reshape(-1) / length - 1.0
    vals = legendre_values(degree, t)
    scale = np.sqrt((2.0 * np.arange(degree + 1) + 1.0) / length)
    return vals * scale[None, :]


def l2_project_face(g, endpoints, basis: SegmentBasis, quad_order: int | None = None,
                    subdivisions: int = 1) -> np.ndarray:
    """L2-orthogonal projection of ``g`` onto span(basis) on a straight face.

    Parameters
    ----------
    g : callable
        Scalar function of physical points (npts, 2) -> (npts,).  A callable
        of reference arclength fraction also works if ``endpoints`` is None.
    endpoints : (2, 2) array or None
        Physical face endpoints; None means the reference segment [0, 1].
    basis : SegmentBasis
        Basis of the projection target, evaluated in arclength fraction.
    quad_order : int, optional
        Defaults to 2*degree + 2.
    subdivisions : int
        Composite-rule refinement for oscillatory ``g``.

    Returns the coefficient vector (basis.dim,).
    """
    from .quadrature import refine_segment_rule

    if quad_order is None:
        quad_order = 2 * basis.degree + 2
    rule = refine_segment_rule(segment_quadrature(quad_order), subdivisions)
    s = rule.points[:, 0]
    if endpoints is None:
        pts = s
        w = rule.weights
    else:
        ends = np.asarray(endpoints, dtype=float)
        pts = ends[0][None, :] + s[:, None] * (ends[1] - ends[0])[None, :]
        w = rule.weights * np.linalg.norm(ends[1] - ends[0])
    vals = basis.eval(s)
    gram = vals.T @ (vals * w[:, None])
    rhs = vals.T @ (np.asarray(g(pts), dtype=float) * w)
    try:
        return np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - guarded by exact rules
        raise AssertionError("singular face Gram matrix") from exc


def triangle_monomial_integral(a: int, b: int) -> float:
    """Exact integral of x^a y^b over the reference triangle (oracle helper)."""
    from math import factorial

    return factorial(a) * factorial(b) / factorial(a + b + 2)


def integrate_reference_triangle(f, order: int) -> float:
    """Quadrature of ``f`` over the reference triangle at the given order."""
    rule = triangle_quadrature(order)
    return float(np.dot(rule.weights, np.asarray(f(rule.points), dtype=float)))
