import math

import numpy as np
import pytest

from mshdg.homogenize import (HomogenizationError, corrector,
                              homogenized_tensor, solve_cell_problems)


def laminate(pts):
    return np.where(pts[:, 0] % 1.0 < 0.5, 1.0, 4.0)


def laminate_chi1(y1):
    # closed form from the 1D two-point problem: chi' = hmean/alpha - 1 with
    # hmean = 1.6; zero mean fixes the offset
    y1 = np.asarray(y1, dtype=float) % 1.0
    return np.where(y1 < 0.5, 0.6 * y1 - 0.15, -0.6 * (y1 - 0.5) + 0.15)


def test_constant_alpha_zero_correctors():
    for c in (1.0, 3.7):
        cell = solve_cell_problems(lambda p, c=c: np.full(len(p), c), n_cell=8)
        assert np.max(np.abs(cell.chi_nodes)) <= 1e-10
        np.testing.assert_allclose(cell.alpha0, c * np.eye(2), atol=1e-10)


def test_laminate_closed_form_chi():
    cell = solve_cell_problems(laminate, n_cell=32)
    # chi2 vanishes; chi1 is the sawtooth, captured exactly by aligned P1
    assert np.max(np.abs(cell.chi_nodes[1])) <= 1e-9
    ys = np.linspace(0, 1, 33)
    nodal = cell.chi_nodes[0].reshape(33, 33)
    for j in range(33):
        np.testing.assert_allclose(nodal[j], laminate_chi1(ys), atol=1e-9)
    # zero mean and periodicity
    np.testing.assert_allclose(cell.mean_chi(), 0.0, atol=1e-10)
    np.testing.assert_allclose(nodal[:, 0], nodal[:, -1], atol=1e-12)
    np.testing.assert_allclose(nodal[0], nodal[-1], atol=1e-12)


def test_laminate_homogenized_tensor():
    cell = solve_cell_problems(laminate, n_cell=64)
    # harmonic mean 2*1*4/(1+4) = 1.6 across layers, arithmetic 2.5 along
    assert abs(cell.alpha0[0, 0] - 1.6) / 1.6 < 0.01
    assert abs(cell.alpha0[1, 1] - 2.5) / 2.5 < 0.01
    assert abs(cell.alpha0[0, 1]) < 1e-8
    assert cell.asymmetry <= 1e-8


def test_voigt_reuss_bracket_random_fields():
    rng = np.random.default_rng(5)
    for trial in range(10):
        a0 = rng.uniform(0.5, 2.0)
        a1 = rng.uniform(0.1, 0.9)
        kx = rng.integers(1, 3)
        ky = rng.integers(1, 3)
        phase = rng.uniform(0, 2 * math.pi)

        def alpha(p):
            return a0 + a1 * a0 * 0.9 * np.sin(2 * math.pi * kx * p[:, 0] + phase) \
                * np.cos(2 * math.pi * ky * p[:, 1])

        cell = solve_cell_problems(alpha, n_cell=24)
        w = np.linalg.eigvalsh(cell.alpha0)
        assert w.min() >= cell.harmonic_mean - 1e-8
        assert w.max() <= cell.arithmetic_mean + 1e-8


def test_mesh_independence_second_order():
    def alpha(p):
        return 2.0 + np.sin(2 * math.pi * p[:, 0]) * np.sin(2 * math.pi * p[:, 1])

    cells = {n: solve_cell_problems(alpha, n_cell=n) for n in (16, 32, 64)}
    pts = np.random.default_rng(0).random((400, 2))

    def l2diff(c1, c2):
        return np.sqrt(np.mean((c1.eval_chi(pts) - c2.eval_chi(pts)) ** 2))

    e1 = l2diff(cells[16], cells[64])
    e2 = l2diff(cells[32], cells[64])
    # self-convergence at second order: halving the mesh shrinks the
    # difference-to-finest by roughly 4 (between 2.5 and 6 is acceptance)
    assert 2.5 < e1 / e2 < 6.5


def test_alpha_scaling_linearity():
    def alpha(p):
        return 1.5 + np.cos(2 * math.pi * p[:, 0]) * 0.5

    c1 = solve_cell_problems(alpha, n_cell=16)
    c3 = solve_cell_problems(lambda p: 3.0 * alpha(p), n_cell=16)
    np.testing.assert_allclose(c3.alpha0, 3.0 * c1.alpha0, rtol=1e-11, atol=1e-12)
    np.testing.assert_allclose(c3.chi_nodes, c1.chi_nodes, atol=1e-11)


def test_galerkin_residual_small():
    cell = solve_cell_problems(laminate, n_cell=32)
    assert cell.residual <= 1e-10


def test_rejects_bad_input():
    with pytest.raises(HomogenizationError):
        solve_cell_problems(laminate, n_cell=2)
    with pytest.raises(HomogenizationError):
        solve_cell_problems(lambda p: p[:, 0] - 2.0, n_cell=8)


def test_corrector_identity_for_zero_chi():
    cell = solve_cell_problems(lambda p: np.ones(len(p)), n_cell=8)
    u0 = lambda p: np.sin(p[:, 0]) * p[:, 1]
    g0 = lambda p: np.stack([np.cos(p[:, 0]) * p[:, 1], np.sin(p[:, 0])], axis=-1)
    ue = corrector(u0, g0, cell, eps=0.125)
    pts = np.random.default_rng(1).random((50, 2))
    np.testing.assert_allclose(ue(pts), u0(pts), atol=1e-10)


def test_corrector_linear_slope_laminate():
    cell = solve_cell_problems(laminate, n_cell=64)
    eps = 1 / 8
    u0 = lambda p: p[:, 0]
    g0 = lambda p: np.stack([np.ones(len(p)), np.zeros(len(p))], axis=-1)
    ue = corrector(u0, g0, cell, eps=eps)
    pts = np.random.default_rng(2).random((100, 2))
    expected = pts[:, 0] + eps * laminate_chi1(pts[:, 0] / eps)
    np.testing.assert_allclose(ue(pts), expected, atol=1e-8)


def test_homogenized_tensor_recompute_matches():
    cell = solve_cell_problems(laminate, n_cell=32)
    again = homogenized_tensor(cell, laminate)
    np.testing.assert_allclose(again, cell.alpha0, atol=1e-13)
