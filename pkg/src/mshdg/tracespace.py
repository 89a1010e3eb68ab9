"""Coarse multiplier spaces on skeleton segments.

Two kinds: an orthonormal Legendre basis of degree-l polynomials, and a
corrected family mu = (1 + eps chi . grad) p where p runs over the degree-l
monomials of a rectangular neighborhood of the segment.  The corrected family
is sampled on a fine quadrature grid, orthonormalized by SVD, and truncated at
a relative singular-value threshold, which realizes the rank the corrector
structure actually supports.
"""

import math

import numpy as np

from .basis import orthonormal_face_basis
from .homogenize import CellSolution
from .mesh import SkeletonSegment
from .quadrature import refine_segment_rule, segment_quadrature

SVD_THRESHOLD = 1e-8


class TraceBasisError(ValueError):
    pass


class TraceBasis:
    """Orthonormal multiplier basis on one skeleton segment.

    ``eval(points) -> (dim, npts)`` evaluates at physical points on the
    segment.  ``kind`` is 'polynomial' or 'multiscale'; ``eps`` is None for
    polynomial bases and the oscillation period otherwise.
    """

    def __init__(self, segment: SkeletonSegment, kind: str, degree: int, dim: int,
                 eps=None, coeff=None, quad_points=None, quad_weights=None,
                 candidates=None):
        self.segment = segment
        self.kind = kind
        self.degree = degree
        self.dim = dim
        self.eps = eps
        self._coeff = coeff              # (dim, n_candidates) for multiscale
        self._quad_points = quad_points  # physical sampling points
        self._quad_weights = quad_weights
        self._candidates = candidates    # callable points -> (n_cand, npts)

    def eval(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if self.kind == "polynomial":
            s = self.segment.arclength(pts)
            return orthonormal_face_basis(self.degree, self.segment.length, s).T
        return self._coeff @ self._candidates(pts)

    def quadrature(self):
        """Sampling quadrature (physical points, weights) for this segment."""
        return self._quad_points, self._quad_weights

    def gram(self) -> np.ndarray:
        pts, w = self.quadrature()
        vals = self.eval(pts)
        return vals @ (vals * w[None, :]).T


def polynomial_trace_basis(segment: SkeletonSegment, l: int) -> TraceBasis:
    """Orthonormalized Legendre basis of P^l on the segment."""
    if l < 0:
        raise TraceBasisError("polynomial degree must be >= 0")
    rule = segment_quadrature(2 * l + 2)
    pts = segment.endpoints[0][None, :] + rule.points * \
        (segment.endpoints[1] - segment.endpoints[0])[None, :]
    return TraceBasis(segment, "polynomial", l, l + 1,
                      quad_points=pts, quad_weights=rule.weights * segment.length)


def multiscale_trace_basis(segment: SkeletonSegment, l: int, cell: CellSolution,
                           eps: float, half_width: float) -> TraceBasis:
    """Corrected trace family on the segment, SVD-orthonormalized.

    Candidates are (1 + eps chi(x/eps) . grad) p restricted to the segment,
    for the monomials p of total degree <= l in local tangential/normal
    coordinates of the rectangle of the given half-width around the segment.
    """
    if l < 0:
        raise TraceBasisError("polynomial degree must be >= 0")
    if eps <= 0.0 or half_width <= 0.0:
        raise TraceBasisError("eps and half_width must be positive")
    seg = segment
    L = seg.length
    tangent = seg.tangent
    normal = seg.normal
    exps = [(a, b) for d in range(l + 1) for a in range(d, -1, -1) for b in [d - a]]
    n_cand = len(exps)

    def candidates(points):
        pts = np.asarray(points, dtype=float)
        s_hat = (seg.arclength(pts) - 0.5 * L) / L
        chi = cell.eval_chi(pts / eps)          # (npts, 2)
        chi_t = chi @ tangent
        chi_n = chi @ normal
        out = np.empty((n_cand, len(pts)))
        for idx, (a, b) in enumerate(exps):
            if b == 0:
                trace = s_hat ** a
                grad_t = (a / L) * s_hat ** (a - 1) if a > 0 else 0.0
                out[idx] = trace + eps * chi_t * grad_t
            elif b == 1:
                out[idx] = eps * chi_n * (s_hat ** a) / half_width
            else:
                out[idx] = 0.0
        return out

    m_sub = max(1, math.ceil(8.0 * L / eps / (l + 2)))
    rule = refine_segment_rule(segment_quadrature(2 * l + 2), m_sub)
    pts = seg.endpoints[0][None, :] + rule.points * (seg.endpoints[1] - seg.endpoints[0])[None, :]
    w = rule.weights * L
    if len(pts) < n_cand:
        raise TraceBasisError(
            f"degenerate sampling: {len(pts)} points for {n_cand} candidate functions")
    A = candidates(pts) * np.sqrt(w)[None, :]
    U, sing, _ = np.linalg.svd(A, full_matrices=False)
    keep = sing >= SVD_THRESHOLD * sing[0]
    dim = int(np.count_nonzero(keep))
    coeff = (U[:, keep] / sing[keep][None, :]).T
    return TraceBasis(seg, "multiscale", l, dim, eps=eps, coeff=coeff,
                      quad_points=pts, quad_weights=w, candidates=candidates)


def interpolate_on_trace_basis(g, basis: TraceBasis) -> np.ndarray:
    """L2-best-approximation coefficients of ``g`` in the orthonormal basis."""
    pts, w = basis.quadrature()
    vals = basis.eval(pts)
    gv = np.asarray(g(pts), dtype=float)
    return vals @ (w * gv)


def build_trace_bases(mesh, l: int, kind: str = "polynomial", cell: CellSolution = None,
                      eps: float = None, half_width: float = None) -> dict:
    """One TraceBasis per skeleton segment (shared by both sides)."""
    bases = {}
    for seg in mesh.skeleton_segments:
        if kind == "polynomial":
            bases[seg.id] = polynomial_trace_basis(seg, l)
        elif kind == "multiscale":
            if cell is None or eps is None:
                raise TraceBasisError("multiscale bases need a cell solution and eps")
            hw = half_width if half_width is not None else 0.5 * seg.length
            bases[seg.id] = multiscale_trace_basis(seg, l, cell, eps, hw)
        else:
            raise TraceBasisError(f"unknown trace basis kind {kind!r}")
    return bases
