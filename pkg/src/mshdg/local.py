"""Element-level machinery: stabilization policies, local operators, and the
projection used by the verification suite.

The local solver eliminates (q, u) in P^k(K)^2 x P^k(K) in favor of the face
multipliers; the resulting face-to-face map sends stacked multiplier
coefficients to the discrete normal flux tested against the face bases.
"""

from dataclasses import dataclass

import numpy as np

from .basis import (SimplexBasis, monomial_exponents, orthonormal_face_basis,
                    space_dim)
from .coefficients import as_coefficient
from .discretize import SolverError
from .kernels import condense_elements, recover_elements
from .mesh import SKELETON, MeshHierarchy
from .quadrature import segment_quadrature, triangle_quadrature

UNIFORM = "uniform"
SINGLE_FACE = "single_face"
SKELETON_SINGLE_FACE = "skeleton_single_face"
TAU_POLICIES = (UNIFORM, SINGLE_FACE, SKELETON_SINGLE_FACE)


@dataclass
class TauAssignment:
    """Per-face stabilization table: tau is either 0 or tau_bar everywhere."""

    policy: str
    tau_bar: float
    tables: dict  # subdomain id -> (n_elements, 3) array

    def table(self, sid: int) -> np.ndarray:
        return self.tables[sid]


def assign_tau(mesh: MeshHierarchy, policy: str, tau_bar: float) -> TauAssignment:
    """Build the stabilization table for one of the three face policies.

    ``single_face`` puts tau_bar on the face with the smallest face id of
    each element (deterministic tie-break); ``skeleton_single_face``
    additionally forces the positive face of every skeleton-adjacent element
    to be its skeleton face, which requires at most one skeleton face per
    element.
    """
    if policy not in TAU_POLICIES:
        raise ValueError(f"unknown tau policy {policy!r}; choose from {TAU_POLICIES}")
    if tau_bar <= 0.0:
        raise ValueError("tau_bar must be positive")
    tables = {}
    for sub in mesh.subdomains:
        nt = sub.n_elements
        tab = np.zeros((nt, 3))
        if policy == UNIFORM:
            tab[:] = tau_bar
        else:
            for e in range(nt):
                fids = sub.elem_faces[e]
                chosen = int(np.argmin(fids))
                if policy == SKELETON_SINGLE_FACE:
                    skel = [lf for lf in range(3) if sub.face_class[fids[lf]] == SKELETON]
                    if len(skel) > 1:
                        raise SolverError(
                            f"subdomain {sub.id}, element {e} touches {len(skel)} skeleton "
                            "faces; the skeleton-adjacent single-face policy needs at most one")
                    if skel:
                        chosen = skel[0]
                tab[e, chosen] = tau_bar
        tables[sub.id] = tab
    return TauAssignment(policy=policy, tau_bar=float(tau_bar), tables=tables)


class ElementOperator:
    """Condensed local solver for a single triangle.

    ``flux_matrix`` maps stacked face-multiplier coefficients (orthonormal
    Legendre basis per face, canonical face orientation) to the flux
    functionals <q_hat.n, psi>_F.  ``load_response`` is the same functional
    for zero multipliers and the given source.  ``recover`` returns the
    interior (q, u) coefficients in the centroid-scaled monomial basis.
    """

    def __init__(self, verts, alpha, tau, k: int, f=None, quad_order=None):
        verts = np.asarray(verts, dtype=float)
        self.verts = verts
        self.k = int(k)
        self.p = space_dim(k)
        self.tau = np.asarray(tau, dtype=float).reshape(3)
        e0 = verts[1] - verts[0]
        e1 = verts[2] - verts[0]
        self.area = 0.5 * (e0[0] * e1[1] - e0[1] * e1[0])
        if self.area <= 0.0:
            raise SolverError("element must have positive (counter-clockwise) area")
        self.centroid = verts.mean(axis=0)
        self.diameter = max(np.linalg.norm(verts[i] - verts[j])
                            for i in range(3) for j in range(i))
        self.basis = SimplexBasis(k, self.centroid, self.diameter)
        self._build(as_coefficient(alpha), f, quad_order)

    def _build(self, alpha, f, quad_order):
        k = self.k
        rule = triangle_quadrature(quad_order or (2 * k + 2))
        frule = segment_quadrature(quad_order or (2 * k + 2))
        verts = self.verts
        J = np.stack([verts[1] - verts[0], verts[2] - verts[0]], axis=-1)
        vol_pts = verts[0][None, :] + rule.points @ J.T
        wvol = (rule.weights * 2.0 * self.area)[None, :]
        phi = self.basis.eval(vol_pts)[None]
        dphi = self.basis.grad(vol_pts)[None]
        alpha_vals = alpha(vol_pts)[None]
        fvals = (np.zeros(len(vol_pts)) if f is None
                 else np.asarray(f(vol_pts), dtype=float))[None]

        nfq = len(frule.points)
        mdim = k + 1
        wface = np.empty((1, 3, nfq))
        phif = np.empty((1, 3, nfq, self.p))
        psif = np.zeros((1, 3, nfq, mdim))
        nrm = np.empty((1, 3, 2))
        self.face_starts = np.empty((3, 2))
        self.face_tangents = np.empty((3, 2))
        self.face_lengths = np.empty(3)
        for lf in range(3):
            a = verts[lf].copy()
            b = verts[(lf + 1) % 3].copy()
            d = b - a
            ln = np.linalg.norm(d)
            nrm[0, lf] = (d[1] / ln, -d[0] / ln)
            # canonical orientation: lexicographically smaller endpoint first
            if (b[0], b[1]) < (a[0], a[1]):
                a, b = b, a
                d = -d
            self.face_starts[lf] = a
            self.face_tangents[lf] = d / ln
            self.face_lengths[lf] = ln
            s = frule.points[:, 0] * ln
            pts = a[None, :] + s[:, None] * self.face_tangents[lf][None, :]
            wface[0, lf] = frule.weights * ln
            phif[0, lf] = self.basis.eval(pts)
            psif[0, lf] = orthonormal_face_basis(k, ln, s)
        self._args = (wvol, phi, dphi, alpha_vals, fvals, wface, phif, psif, nrm,
                      self.tau[None, :])
        S_el, b_el = condense_elements(*self._args)
        self.flux_matrix = -S_el[0]
        self.load_response = b_el[0]
        self.n_face_dofs = 3 * mdim

    def project_face_trace(self, g) -> np.ndarray:
        """Multiplier coefficients of g on all three faces (stacked)."""
        k = self.k
        frule = segment_quadrature(2 * k + 4)
        out = np.empty(3 * (k + 1))
        for lf in range(3):
            ln = self.face_lengths[lf]
            s = frule.points[:, 0] * ln
            pts = self.face_starts[lf][None, :] + s[:, None] * self.face_tangents[lf][None, :]
            psi = orthonormal_face_basis(k, ln, s)
            gv = np.asarray(g(pts), dtype=float)
            out[lf * (k + 1):(lf + 1) * (k + 1)] = psi.T @ (gv * frule.weights * ln)
        return out

    def recover(self, lam: np.ndarray):
        """(q_coeffs (2, p), u_coeffs (p,)) for the given multiplier values."""
        lam = np.asarray(lam, dtype=float).reshape(1, -1)
        coeffs = recover_elements(*self._args, lam)[0]
        p = self.p
        return coeffs[0:2 * p].reshape(2, p), coeffs[2 * p:]

    def flux(self, lam: np.ndarray) -> np.ndarray:
        """Flux functionals <q_hat.n, psi> for given multipliers and load."""
        return self.flux_matrix @ np.asarray(lam, dtype=float) + self.load_response

    def eval_u(self, coeffs_u, points):
        return self.basis.eval(points) @ coeffs_u

    def eval_q(self, coeffs_q, points):
        vals = self.basis.eval(points)
        return np.stack([vals @ coeffs_q[0], vals @ coeffs_q[1]], axis=-1)


def element_operator(verts, alpha, tau, k: int, f=None, quad_order=None) -> ElementOperator:
    """Condense one triangle; see ElementOperator."""
    return ElementOperator(verts, alpha, tau, k, f=f, quad_order=quad_order)


def hdg_projection(u, q, verts, tau, k: int, quad_order=None):
    """Local projection (Pi_W u, Pi_V q) defined by volume moments of degree
    k-1 and the flux matching condition <Pi_V q . n + tau Pi_W u, mu>_F =
    <q.n + tau u, mu>_F on every face.

    Returns (u_coeffs (p,), q_coeffs (2, p)) in the element monomial basis.
    """
    verts = np.asarray(verts, dtype=float)
    tau = np.asarray(tau, dtype=float).reshape(3)
    if np.all(tau == 0.0):
        raise SolverError("projection needs tau > 0 on at least one face")
    p = space_dim(k)
    pm = space_dim(k - 1) if k >= 1 else 0
    centroid = verts.mean(axis=0)
    diameter = max(np.linalg.norm(verts[i] - verts[j]) for i in range(3) for j in range(i))
    basis = SimplexBasis(k, centroid, diameter)

    order = quad_order or (2 * k + 4)
    rule = triangle_quadrature(order)
    J = np.stack([verts[1] - verts[0], verts[2] - verts[0]], axis=-1)
    area = 0.5 * np.linalg.det(J)
    vol_pts = verts[0][None, :] + rule.points @ J.T
    w = rule.weights * 2.0 * area
    phi = basis.eval(vol_pts)          # (nq, p)
    uv = np.asarray(u(vol_pts), dtype=float)
    qv = np.asarray(q(vol_pts), dtype=float)  # (nq, 2)

    n_rows = 3 * pm + 3 * (k + 1)
    A = np.zeros((n_rows, 3 * p))
    rhs = np.zeros(n_rows)
    # volume moments against P^{k-1} (first pm monomials)
    if pm:
        Mw = phi.T[:pm] * w[None, :]   # (pm, nq) scaled test values
        A[0:pm, 0:p] = Mw @ phi
        rhs[0:pm] = Mw @ qv[:, 0]
        A[pm:2 * pm, p:2 * p] = Mw @ phi
        rhs[pm:2 * pm] = Mw @ qv[:, 1]
        A[2 * pm:3 * pm, 2 * p:3 * p] = Mw @ phi
        rhs[2 * pm:3 * pm] = Mw @ uv
    # face flux matching
    frule = segment_quadrature(order)
    row = 3 * pm
    for lf in range(3):
        a = verts[lf]
        b = verts[(lf + 1) % 3]
        d = b - a
        ln = np.linalg.norm(d)
        nvec = np.array([d[1], -d[0]]) / ln
        s = frule.points[:, 0]
        pts = a[None, :] + s[:, None] * d[None, :]
        wf = frule.weights * ln
        psi = orthonormal_face_basis(k, ln, s * ln)   # (nfq, k+1)
        phif = basis.eval(pts)                         # (nfq, p)
        uf = np.asarray(u(pts), dtype=float)
        qf = np.asarray(q(pts), dtype=float)
        T = psi.T * wf[None, :]
        A[row:row + k + 1, 0:p] = nvec[0] * (T @ phif)
        A[row:row + k + 1, p:2 * p] = nvec[1] * (T @ phif)
        A[row:row + k + 1, 2 * p:3 * p] = tau[lf] * (T @ phif)
        rhs[row:row + k + 1] = T @ (qf @ nvec + tau[lf] * uf)
        row += k + 1
    try:
        z = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise SolverError("singular projection system") from exc
    return z[2 * p:3 * p], z[0:2 * p].reshape(2, p)
