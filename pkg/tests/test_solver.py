import math

import numpy as np
import pytest

from mshdg.coefficients import ConstantField
from mshdg.local import SINGLE_FACE, SKELETON_SINGLE_FACE, UNIFORM, assign_tau
from mshdg.mesh import build_structured
from mshdg.solver import (assemble_coarse, condense_subdomain, reconstruct,
                          solve_coarse, solve_monolithic, solve_two_level)
from mshdg.tracespace import build_trace_bases, interpolate_on_trace_basis


def two_level(mesh, alpha, f, policy, tau_bar, k, l, **kw):
    tau = assign_tau(mesh, policy, tau_bar)
    bases = build_trace_bases(mesh, l)
    return solve_two_level(mesh, alpha, f, tau, k, bases, **kw)


# ------------------------------------------------------------------ uniqueness

@pytest.mark.parametrize("policy", [UNIFORM, SINGLE_FACE, SKELETON_SINGLE_FACE])
def test_zero_source_gives_zero_solution(policy):
    mesh = build_structured(n_sub=2, n_seg=2, n_fine=4)
    sol, coarse, _ = two_level(mesh, 1.0, None, policy, 1.0, k=1, l=1)
    assert sol.max_coefficient() <= 1e-9


def test_random_alpha_uniqueness_and_spd():
    mesh = build_structured(n_sub=2, n_seg=1, n_fine=4)
    rng = np.random.default_rng(42)
    a, b, c = rng.uniform(0.5, 3.0, 3)

    def alpha(p):
        return a + 0.4 * np.sin(b * 2 * math.pi * p[:, 0]) * np.cos(c * math.pi * p[:, 1])

    sol, coarse, _ = two_level(mesh, alpha, None, SINGLE_FACE, 1.0, k=1, l=1)
    assert sol.max_coefficient() <= 1e-9
    A = coarse.matrix
    assert np.max(np.abs(A - A.T)) <= 1e-12 * np.max(np.abs(A))
    w = np.linalg.eigvalsh(A)
    assert w.min() > 0


# ---------------------------------------------------- two-level vs. monolithic

def test_two_level_matches_monolithic():
    mesh = build_structured(n_sub=2, n_seg=2, n_fine=4)
    tau = assign_tau(mesh, UNIFORM, 1.0)
    bases = build_trace_bases(mesh, 1)
    f = lambda p: np.ones(len(p))
    sol2, coarse, _ = solve_two_level(mesh, 1.0, f, tau, 1, bases)
    sol1 = solve_monolithic(mesh, 1.0, f, tau, 1, bases)
    for sid in range(4):
        np.testing.assert_allclose(sol2.u_coeff[sid], sol1.u_coeff[sid], atol=1e-8)
        np.testing.assert_allclose(sol2.q_coeff[sid], sol1.q_coeff[sid], atol=1e-8)
        np.testing.assert_allclose(sol2.lam_local[sid], sol1.lam_local[sid], atol=1e-8)
    np.testing.assert_allclose(sol2.xi, sol1.xi, atol=1e-8)


def test_single_subdomain_two_level_equals_monolithic():
    mesh = build_structured(n_sub=1, n_seg=1, n_fine=4)
    tau = assign_tau(mesh, UNIFORM, 1.0)
    f = lambda p: np.cos(p[:, 0])
    sol2, coarse, _ = solve_two_level(mesh, 2.0, f, tau, 1, {})
    sol1 = solve_monolithic(mesh, 2.0, f, tau, 1, {})
    assert coarse.dim == 0
    np.testing.assert_allclose(sol2.u_coeff[0], sol1.u_coeff[0], atol=1e-9)
    np.testing.assert_allclose(sol2.q_coeff[0], sol1.q_coeff[0], atol=1e-9)


# ------------------------------------------------------------------- exactness

def test_polynomial_exactness_bubble_k4():
    # u = x(1-x)y(1-y) has total degree 4 and vanishes on the boundary of the
    # unit square; its skeleton traces are quadratic on axis-aligned segments
    mesh = build_structured(n_sub=2, n_seg=2, n_fine=2)
    alpha_val = 2.0

    def u_exact(p):
        return p[:, 0] * (1 - p[:, 0]) * p[:, 1] * (1 - p[:, 1])

    def q_exact(p):
        # q = -(1/alpha) grad u
        gx = (1 - 2 * p[:, 0]) * p[:, 1] * (1 - p[:, 1])
        gy = p[:, 0] * (1 - p[:, 0]) * (1 - 2 * p[:, 1])
        return np.stack([-gx / alpha_val, -gy / alpha_val], axis=-1)

    def f(p):
        # f = div q = -(1/alpha) lap u
        return (2 * p[:, 1] * (1 - p[:, 1]) + 2 * p[:, 0] * (1 - p[:, 0])) / alpha_val

    for l in (2, 4):
        sol, _, _ = two_level(mesh, alpha_val, f, UNIFORM, 1.0, k=4, l=l)
        rng = np.random.default_rng(3)
        pts = rng.random((200, 2))
        assert np.max(np.abs(sol.eval_u(pts) - u_exact(pts))) <= 1e-9
        assert np.max(np.abs(sol.eval_q(pts) - q_exact(pts))) <= 1e-9


def test_bubble_not_exact_at_low_degree():
    mesh = build_structured(n_sub=2, n_seg=2, n_fine=2)

    def f(p):
        return (2 * p[:, 1] * (1 - p[:, 1]) + 2 * p[:, 0] * (1 - p[:, 0])) / 2.0

    def u_exact(p):
        return p[:, 0] * (1 - p[:, 0]) * p[:, 1] * (1 - p[:, 1])

    sol, _, _ = two_level(mesh, 2.0, f, UNIFORM, 1.0, k=1, l=1)
    pts = np.random.default_rng(4).random((100, 2))
    assert np.max(np.abs(sol.eval_u(pts) - u_exact(pts))) > 1e-4


# ----------------------------------------------------------- condensation unit

def test_condense_zero_source_zero_load():
    mesh = build_structured(n_sub=2, n_seg=1, n_fine=2)
    tau = assign_tau(mesh, UNIFORM, 1.0)
    bases = build_trace_bases(mesh, 1)
    cond = condense_subdomain(mesh.subdomains[0], 1.0, None, tau, 1, bases)
    np.testing.assert_allclose(cond.load, 0.0, atol=1e-14)
    # schur is symmetric PSD
    S = cond.schur
    assert np.max(np.abs(S - S.T)) <= 1e-12 * max(1.0, np.max(np.abs(S)))
    w = np.linalg.eigvalsh(0.5 * (S + S.T))
    assert w.min() > -1e-11 * max(1.0, w.max())


def test_condensed_schur_reproduces_exact_fluxes():
    # subdomain 0 of a 2x2 partition; boundary data u = x + 2y on the outer
    # boundary, exact linear solution, alpha = 1, f = 0, k = l = 1.
    # With xi = interpolated exact trace, -(S_T xi + g_T) must equal the
    # moments of q.n = (-1, -2).n against the segment bases.
    mesh = build_structured(n_sub=2, n_seg=1, n_fine=2)
    tau = assign_tau(mesh, UNIFORM, 1.0)
    bases = build_trace_bases(mesh, 1)
    u_lin = lambda p: p[:, 0] + 2.0 * p[:, 1]
    cond = condense_subdomain(mesh.subdomains[0], 1.0, None, tau, 1, bases,
                              boundary_data=u_lin)
    xi_parts = []
    expected = []
    for sid in cond.segment_ids:
        seg = mesh.skeleton_segments[sid]
        xi_parts.append(interpolate_on_trace_basis(u_lin, bases[sid]))
        # outward normal of subdomain 0 on this segment
        n_out = np.array([1.0, 0.0]) if seg.orientation == "v" else np.array([0.0, 1.0])
        qn = float(np.array([-1.0, -2.0]) @ n_out)
        expected.extend([qn * math.sqrt(seg.length), 0.0])
    xi = np.concatenate(xi_parts)
    flux = -(cond.schur @ xi + cond.load)
    np.testing.assert_allclose(flux, expected, atol=1e-10)


# ------------------------------------------------------------------ book-keeping

def test_coarse_dimension_counting():
    mesh = build_structured(n_sub=2, n_seg=1, n_fine=2)
    tau = assign_tau(mesh, UNIFORM, 1.0)
    bases = build_trace_bases(mesh, 1)
    _, coarse, _ = solve_two_level(mesh, 1.0, None, tau, 1, bases)
    assert coarse.dim == 4 * 2  # |E_H| = 4 segments, l+1 = 2 dofs each


def test_multiplier_dof_count():
    k, l = 1, 1
    mesh = build_structured(n_sub=2, n_seg=2, n_fine=4)
    tau = assign_tau(mesh, UNIFORM, 1.0)
    bases = build_trace_bases(mesh, l)
    sol = solve_monolithic(mesh, 1.0, None, tau, k, bases)
    n_interior_faces = sum(
        int((s.face_class == 0).sum()) for s in mesh.subdomains)
    expected = n_interior_faces * (k + 1) + len(mesh.skeleton_segments) * (l + 1)
    assert sol.multiplier_dof_count() == expected
    assert sol.meta["dim"] == expected


def test_boundary_multipliers_are_zero():
    mesh = build_structured(n_sub=2, n_seg=1, n_fine=2)
    sol, _, _ = two_level(mesh, 1.0, lambda p: np.ones(len(p)), UNIFORM, 1.0, k=1, l=1)
    # boundary faces carry no dofs; their known values are zero
    for sid, sub in enumerate(mesh.subdomains):
        lam_el = sol.lam_elem[sid]
        mmax = sol.mmax[sid]
        for e in range(sub.n_elements):
            for lf in range(3):
                fid = sub.elem_faces[e, lf]
                if sub.face_class[fid] == 2:  # BOUNDARY
                    np.testing.assert_allclose(
                        lam_el[e, lf * mmax:(lf + 1) * mmax], 0.0, atol=1e-15)


def test_coarse_solve_empty_and_trivial():
    from mshdg.solver import CoarseSystem

    empty = CoarseSystem(matrix=np.zeros((0, 0)), rhs=np.zeros(0), segment_offsets={},
                         segment_dims={}, dim=0)
    assert solve_coarse(empty).size == 0
    sys2 = CoarseSystem(matrix=np.eye(3) * 2.0, rhs=np.zeros(3), segment_offsets={},
                        segment_dims={}, dim=3)
    np.testing.assert_allclose(solve_coarse(sys2), 0.0)


def test_coarse_solve_rejects_indefinite():
    from mshdg.solver import CoarseSolveError, CoarseSystem

    bad = CoarseSystem(matrix=np.diag([1.0, -1.0]), rhs=np.ones(2), segment_offsets={},
                       segment_dims={}, dim=2)
    with pytest.raises(CoarseSolveError):
        solve_coarse(bad)


def test_trace_basis_mismatch_detected():
    from mshdg.discretize import SolverError

    mesh = build_structured(n_sub=2, n_seg=1, n_fine=2)
    tau = assign_tau(mesh, UNIFORM, 1.0)
    bases1 = build_trace_bases(mesh, 1)
    conds = [condense_subdomain(s, 1.0, None, tau, 1, bases1) for s in mesh.subdomains]
    bases2 = build_trace_bases(mesh, 2)
    with pytest.raises(SolverError, match="mismatch"):
        assemble_coarse(mesh, conds, bases2)


def test_nonmatching_fine_grids_across_interface():
    # different n_fine on the two sides of every interface still solves and
    # reproduces a compatible exact solution behaviour (zero source -> zero)
    mesh = build_structured(n_sub=2, n_seg=1, n_fine=[2, 4, 4, 2])
    sol, coarse, _ = two_level(mesh, 1.0, None, UNIFORM, 1.0, k=1, l=1)
    assert sol.max_coefficient() <= 1e-9
    w = np.linalg.eigvalsh(coarse.matrix)
    assert w.min() > 0
