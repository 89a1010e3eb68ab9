"""Periodic cell problems, homogenized tensor, and first-order corrector.

The two corrector fields solve div_y[alpha (grad_y chi_k + e_k)] = 0 on the
unit cell with periodic boundary conditions; continuous P1 elements on a
uniform triangle grid, with the zero-mean constraint imposed through a single
scalar Lagrange multiplier.  The effective tensor is
alpha0_ij = int_Y alpha (delta_ij + d chi_j / d y_i) dy.

``alpha_cell`` plays the role of the conductivity in -div(alpha grad u):
the harness inverts the mixed-form weight before building correctors.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .quadrature import triangle_quadrature

_TIE = 1e-14


class HomogenizationError(RuntimeError):
    pass


@dataclass
class CellSolution:
    """P1 corrector fields on the periodic unit cell plus diagnostics."""

    n_cell: int
    chi_nodes: np.ndarray        # (2, (n+1)**2) nodal values, wrap duplicated
    alpha0: np.ndarray           # symmetrized 2x2 tensor
    alpha0_raw: np.ndarray       # before symmetrization
    residual: float              # linear-system residual (relative)
    harmonic_mean: float
    arithmetic_mean: float
    meta: dict = field(default_factory=dict)

    @property
    def asymmetry(self) -> float:
        return float(np.max(np.abs(self.alpha0_raw - self.alpha0_raw.T)))

    def mean_chi(self) -> np.ndarray:
        n = self.n_cell
        w = _nodal_integration_weights(n)
        return self.chi_nodes @ w

    def eval_chi(self, y) -> np.ndarray:
        """chi values at cell coordinates (points are wrapped into [0,1)^2).

        Returns (npts, 2).  Point location picks the lower triangle of a grid
        cell on ties (deterministic).
        """
        pts = np.asarray(y, dtype=float)
        pts = pts - np.floor(pts)
        n = self.n_cell
        fx = pts[:, 0] * n
        fy = pts[:, 1] * n
        i = np.clip(np.floor(fx).astype(np.int64), 0, n - 1)
        j = np.clip(np.floor(fy).astype(np.int64), 0, n - 1)
        u = fx - i
        v = fy - j
        lower = v <= u + _TIE
        stride = n + 1

        def node(ii, jj):
            return jj * stride + ii

        out = np.empty((len(pts), 2))
        for k in range(2):
            z = self.chi_nodes[k]
            z00 = z[node(i, j)]
            z10 = z[node(i + 1, j)]
            z11 = z[node(i + 1, j + 1)]
            z01 = z[node(i, j + 1)]
            # lower triangle (0,0)-(1,0)-(1,1): z = z00 + u (z10-z00) + v (z11-z10)
            low = z00 + u * (z10 - z00) + v * (z11 - z10)
            # upper triangle (0,0)-(1,1)-(0,1): z = z00 + u (z11-z01) + v (z01-z00)
            up = z00 + u * (z11 - z01) + v * (z01 - z00)
            out[:, k] = np.where(lower, low, up)
        return out

    def grad_chi(self, y) -> np.ndarray:
        """Piecewise-constant corrector gradients, (npts, 2, 2): [k, d]."""
        pts = np.asarray(y, dtype=float)
        pts = pts - np.floor(pts)
        n = self.n_cell
        fx = pts[:, 0] * n
        fy = pts[:, 1] * n
        i = np.clip(np.floor(fx).astype(np.int64), 0, n - 1)
        j = np.clip(np.floor(fy).astype(np.int64), 0, n - 1)
        u = fx - i
        v = fy - j
        lower = v <= u + _TIE
        stride = n + 1

        def node(ii, jj):
            return jj * stride + ii

        out = np.empty((len(pts), 2, 2))
        for k in range(2):
            z = self.chi_nodes[k]
            z00 = z[node(i, j)]
            z10 = z[node(i + 1, j)]
            z11 = z[node(i + 1, j + 1)]
            z01 = z[node(i, j + 1)]
            gx = np.where(lower, (z10 - z00), (z11 - z01)) * n
            gy = np.where(lower, (z11 - z10), (z01 - z00)) * n
            out[:, k, 0] = gx
            out[:, k, 1] = gy
        return out


def _nodal_integration_weights(n: int) -> np.ndarray:
    """Consistent P1 integration weights on the periodic grid (area/3 rule)."""
    stride = n + 1
    w = np.zeros(stride * stride)
    area = 0.5 / (n * n)
    for j in range(n):
        for i in range(n):
            a = j * stride + i
            b = j * stride + i + 1
            c = (j + 1) * stride + i + 1
            d = (j + 1) * stride + i
            for tri in ((a, b, c), (a, c, d)):
                for v in tri:
                    w[v] += area / 3.0
    return w


def solve_cell_problems(alpha_cell, n_cell: int) -> CellSolution:
    """Solve both cell problems and evaluate the homogenized tensor."""
    if n_cell < 4:
        raise HomogenizationError("n_cell must be >= 4")
    n = int(n_cell)
    stride = n + 1
    s = 1.0 / n
    rule = triangle_quadrature(2)

    # geometry of the two reference sub-triangles of one grid cell
    tri_low = np.array([[0.0, 0.0], [s, 0.0], [s, s]])
    tri_up = np.array([[0.0, 0.0], [s, s], [0.0, s]])
    geoms = []
    for tri in (tri_low, tri_up):
        J = np.stack([tri[1] - tri[0], tri[2] - tri[0]], axis=-1)
        area = 0.5 * np.linalg.det(J)
        ref = np.column_stack([1.0 - rule.points.sum(axis=1), rule.points])
        # P1 gradients: hat functions on this triangle
        G = np.empty((3, 2))
        Jinv = np.linalg.inv(J)
        G[1] = Jinv.T @ np.array([1.0, 0.0])
        G[2] = Jinv.T @ np.array([0.0, 1.0])
        G[0] = -G[1] - G[2]
        qpts = tri[0][None, :] + rule.points @ J.T
        qw = rule.weights * 2.0 * area
        geoms.append((G, qpts, qw, area))

    ndof = n * n
    rows, cols, vals = [], [], []
    b = np.zeros((ndof, 2))
    m_vec = np.zeros(ndof)
    cell_alpha_int = np.empty((n, n, 2))   # integral of alpha per sub-triangle
    for j in range(n):
        for i in range(n):
            origin = np.array([i * s, j * s])
            dofs_cell = [
                (j % n) * n + (i % n),
                (j % n) * n + ((i + 1) % n),
                ((j + 1) % n) * n + ((i + 1) % n),
                ((j + 1) % n) * n + (i % n),
            ]
            tris = ((0, (0, 1, 2)), (1, (0, 2, 3)))
            for which, local in tris:
                G, qpts, qw, area = geoms[which]
                av = np.asarray(alpha_cell(qpts + origin[None, :]), dtype=float)
                if np.any(av <= 0.0):
                    raise HomogenizationError("alpha_cell must be positive on the cell")
                a_int = float(np.dot(qw, av))
                cell_alpha_int[j, i, which] = a_int
                dofs = [dofs_cell[t] for t in local]
                for r in range(3):
                    m_vec[dofs[r]] += area / 3.0
                    for c in range(3):
                        rows.append(dofs[r])
                        cols.append(dofs[c])
                        vals.append(a_int * float(G[r] @ G[c]))
                    for k in range(2):
                        b[dofs[r], k] -= a_int * G[r][k]

    A = sparse.coo_matrix((vals, (rows, cols)), shape=(ndof, ndof)).tocsc()
    K = sparse.bmat([[A, m_vec[:, None]], [m_vec[None, :], None]], format="csc")
    lu = splu(K)
    chi_dof = np.empty((2, ndof))
    resid = 0.0
    for k in range(2):
        rhs = np.concatenate([b[:, k], [0.0]])
        x = lu.solve(rhs)
        chi_dof[k] = x[:-1]
        r = K @ x - rhs
        scale = max(1.0, float(np.linalg.norm(rhs)))
        resid = max(resid, float(np.linalg.norm(r)) / scale)
    if resid > 1e-10:
        raise HomogenizationError(f"cell problem residual {resid:.3e} exceeds 1e-10")

    # expand periodic dofs onto the full (n+1)^2 nodal grid
    chi_nodes = np.empty((2, stride * stride))
    jj, ii = np.meshgrid(np.arange(stride), np.arange(stride), indexing="ij")
    dof_idx = (jj % n) * n + (ii % n)
    for k in range(2):
        chi_nodes[k] = chi_dof[k][dof_idx.ravel()]

    cell = CellSolution(n_cell=n, chi_nodes=chi_nodes, alpha0=np.eye(2),
                        alpha0_raw=np.eye(2), residual=resid,
                        harmonic_mean=0.0, arithmetic_mean=0.0)
    raw = homogenized_tensor(cell, alpha_cell, symmetrize=False)
    cell.alpha0_raw = raw
    cell.alpha0 = 0.5 * (raw + raw.T)
    # Voigt-Reuss bracket data on the same mesh/quadrature
    tot = 0.0
    tot_inv = 0.0
    for which in range(2):
        G, qpts0, qw, area = geoms[which]
        for j in range(n):
            for i in range(n):
                origin = np.array([i * s, j * s])
                av = np.asarray(alpha_cell(qpts0 + origin[None, :]), dtype=float)
                tot += float(np.dot(qw, av))
                tot_inv += float(np.dot(qw, 1.0 / av))
    cell.arithmetic_mean = tot
    cell.harmonic_mean = 1.0 / tot_inv
    return cell


def homogenized_tensor(cell: CellSolution, alpha_cell, symmetrize: bool = True) -> np.ndarray:
    """alpha0_ij = int_Y alpha (delta_ij + d chi_j / d y_i) dy by quadrature."""
    n = cell.n_cell
    s = 1.0 / n
    rule = triangle_quadrature(2)
    tri_low = np.array([[0.0, 0.0], [s, 0.0], [s, s]])
    tri_up = np.array([[0.0, 0.0], [s, s], [0.0, s]])
    out = np.zeros((2, 2))
    for tri in (tri_low, tri_up):
        J = np.stack([tri[1] - tri[0], tri[2] - tri[0]], axis=-1)
        area = 0.5 * np.linalg.det(J)
        qw = rule.weights * 2.0 * area
        base = tri[0][None, :] + rule.points @ J.T
        centers_i, centers_j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        origins = np.column_stack([centers_i.ravel() * s, centers_j.ravel() * s])
        pts = (origins[:, None, :] + base[None, :, :]).reshape(-1, 2)
        av = np.asarray(alpha_cell(pts), dtype=float).reshape(len(origins), -1)
        grads = cell.grad_chi(pts).reshape(len(origins), -1, 2, 2)
        for jcol in range(2):
            for irow in range(2):
                integrand = (1.0 if irow == jcol else 0.0) + grads[:, :, jcol, irow]
                out[irow, jcol] += float(np.einsum("cq,q,cq->", av, qw, integrand))
    if symmetrize:
        return 0.5 * (out + out.T)
    return out


def corrector(u0, grad_u0, cell: CellSolution, eps: float):
    """First-order corrected field x -> u0(x) + eps chi(x/eps) . grad u0(x)."""
    if eps <= 0.0:
        raise HomogenizationError("eps must be positive")

    def u_eps(points):
        pts = np.asarray(points, dtype=float)
        chi = cell.eval_chi(pts / eps)
        g = np.asarray(grad_u0(pts), dtype=float)
        return np.asarray(u0(pts), dtype=float) + eps * np.einsum("nk,nk->n", chi, g)

    return u_eps
