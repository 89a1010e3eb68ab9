import math

import numpy as np
import pytest

from mshdg.basis import (SegmentBasis, SimplexBasis, l2_project_face,
                         orthonormal_face_basis, space_dim)
from mshdg.quadrature import triangle_quadrature


def test_space_dims():
    assert [space_dim(k) for k in range(5)] == [1, 3, 6, 10, 15]


@pytest.mark.parametrize("k", [0, 1, 2, 3, 4])
def test_simplex_basis_spans_pk(k):
    # fitting any polynomial of total degree k at generic points is exact
    basis = SimplexBasis(k, (0.2, 0.1), 0.7)
    rng = np.random.default_rng(k)
    pts = rng.random((basis.dim, 2))
    V = basis.eval(pts)
    coeff_target = rng.standard_normal(basis.dim)

    def poly(p):
        out = np.zeros(len(p))
        for c, (a, b) in zip(coeff_target, basis.exponents):
            out += c * p[:, 0] ** a * p[:, 1] ** b
        return out

    c = np.linalg.solve(V, poly(pts))
    check = rng.random((40, 2))
    np.testing.assert_allclose(basis.eval(check) @ c, poly(check), rtol=1e-9, atol=1e-11)


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_gram_conditioning_bounded(k):
    # centroid-shifted, diameter-scaled monomials on a unit-ish triangle
    verts = np.array([[0.0, 0.0], [0.125, 0.0], [0.125, 0.125]])
    cent = verts.mean(axis=0)
    diam = 0.125 * math.sqrt(2)
    basis = SimplexBasis(k, cent, diam)
    rule = triangle_quadrature(2 * k + 2)
    J = np.stack([verts[1] - verts[0], verts[2] - verts[0]], axis=-1)
    pts = verts[0][None, :] + rule.points @ J.T
    w = rule.weights * 2.0 * (0.5 * abs(np.linalg.det(J)))
    V = basis.eval(pts)
    gram = V.T @ (V * w[:, None])
    cond = np.linalg.cond(gram)
    # monomials are usable but not pretty at k=4; the bound is what matters
    assert cond < 1e9
    # and the Gram system still reproduces members of the space accurately
    rng = np.random.default_rng(k)
    c = rng.standard_normal(basis.dim)
    rhs = V.T @ (w * (V @ c))
    c2 = np.linalg.solve(gram, rhs)
    np.testing.assert_allclose(c2, c, rtol=1e-6, atol=1e-8)


def test_simplex_gradients_match_fd():
    basis = SimplexBasis(3, (0.4, 0.6), 1.3)
    rng = np.random.default_rng(5)
    pts = rng.random((20, 2))
    g = basis.grad(pts)
    h = 1e-6
    for d in range(2):
        dp = np.zeros(2)
        dp[d] = h
        fd = (basis.eval(pts + dp) - basis.eval(pts - dp)) / (2 * h)
        np.testing.assert_allclose(g[:, :, d], fd, rtol=1e-6, atol=1e-7)


def test_orthonormal_face_basis_gram_identity():
    length = 0.37
    from mshdg.quadrature import segment_quadrature

    rule = segment_quadrature(12)
    s = rule.points[:, 0] * length
    w = rule.weights * length
    for deg in range(5):
        psi = orthonormal_face_basis(deg, length, s)
        gram = psi.T @ (psi * w[:, None])
        np.testing.assert_allclose(gram, np.eye(deg + 1), atol=1e-12)


def test_project_constant_reproduced():
    basis = SegmentBasis(2)
    c = l2_project_face(lambda p: np.full(len(p), 3.0),
                        np.array([[0.0, 0.0], [0.5, 0.5]]), basis)
    np.testing.assert_allclose(c, [3.0, 0.0, 0.0], atol=1e-12)


def test_project_linear_onto_constant_is_midvalue():
    basis = SegmentBasis(0)
    # g(s) = s on the reference segment
    c = l2_project_face(lambda s: np.asarray(s), None, basis)
    assert c[0] == pytest.approx(0.5, abs=1e-14)


def test_project_sine_degree_one_moments():
    # best line for sin(pi s) on [0,1]: moments are 2/pi and 1/pi, and the
    # normal equations give the constant 2/pi with zero slope
    basis = SegmentBasis(1)
    c = l2_project_face(lambda s: np.sin(math.pi * np.asarray(s)), None, basis,
                        quad_order=20)
    np.testing.assert_allclose(c, [2.0 / math.pi, 0.0], atol=1e-12)


def test_projection_idempotent_and_orthogonal():
    rng = np.random.default_rng(11)
    ends = np.array([[0.2, 0.1], [0.9, 0.4]])
    basis = SegmentBasis(3)
    coeffs = rng.standard_normal(4)

    def member(p):
        # polynomial in arclength fraction along the face
        s = np.linalg.norm(p - ends[0], axis=1) / np.linalg.norm(ends[1] - ends[0])
        return sum(c * s ** a for a, c in enumerate(coeffs))

    c = l2_project_face(member, ends, basis)
    np.testing.assert_allclose(c, coeffs, rtol=1e-12, atol=1e-12)

    # orthogonality of the residual for a non-member
    def g(p):
        s = np.linalg.norm(p - ends[0], axis=1) / np.linalg.norm(ends[1] - ends[0])
        return np.exp(s)

    cg = l2_project_face(g, ends, basis, quad_order=24)
    from mshdg.quadrature import segment_quadrature

    rule = segment_quadrature(24)
    L = np.linalg.norm(ends[1] - ends[0])
    pts = ends[0][None, :] + rule.points * (ends[1] - ends[0])[None, :]
    w = rule.weights * L
    vals = basis.eval(rule.points[:, 0])
    resid = g(pts) - vals @ cg
    for i in range(basis.dim):
        assert abs(np.dot(w, resid * vals[:, i])) < 1e-12
