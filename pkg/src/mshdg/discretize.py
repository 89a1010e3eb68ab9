"""Per-subdomain batch data: quadrature tables, basis values, DOF layout.

This is the glue between the geometric mesh, the coefficient/source fields,
the multiplier spaces, and the element kernels.  Interior fine faces carry an
orthonormal Legendre multiplier basis of degree k; skeleton faces carry the
trace basis of their segment; outer-boundary faces carry known (zero, unless
a fixture supplies data) multiplier values.
"""

from dataclasses import dataclass, field
import math
import warnings

import numpy as np

from .basis import SimplexBasis, legendre_values, monomial_exponents, space_dim
from .coefficients import CoefficientField
from .mesh import BOUNDARY, INTERIOR, SKELETON, Subdomain
from .quadrature import (refine_segment_rule, refine_triangle_rule,
                         segment_quadrature, triangle_quadrature)

FACE_OSC_CAP = 16
VOL_OSC_CAP = 8


class SolverError(RuntimeError):
    pass


@dataclass
class QuadratureOptions:
    """Quadrature orders; None means the defaults 2k+2 / 2 max(k, l)+2."""

    element_order: int | None = None
    face_order: int | None = None
    allow_underresolved: bool = False


@dataclass
class MultiplierLayout:
    """Local DOF numbering: interior-face blocks first, segment blocks after."""

    k: int
    interior_faces: np.ndarray         # sorted face ids
    interior_offsets: dict             # face id -> first dof
    n_interior: int
    segment_ids: list                  # sorted segment ids on this subdomain
    segment_dims: dict                 # segment id -> m
    segment_offsets: dict              # segment id -> first dof (local)
    n_dofs: int


@dataclass
class SubdomainBatch:
    """Arrays consumed by the element kernels plus the DOF bookkeeping."""

    sub: Subdomain
    k: int
    p: int
    mmax: int
    layout: MultiplierLayout
    dof_map: np.ndarray     # (nt, 3, mmax), -1 for padded/known slots
    known_vals: np.ndarray  # (nt, 3, mmax)
    wvol: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    alpha: np.ndarray
    fvals: np.ndarray
    wface: np.ndarray
    phif: np.ndarray
    psif: np.ndarray
    nrm: np.ndarray
    tau: np.ndarray
    face_points: np.ndarray = field(default=None)  # (nt, 3, nfq, 2) physical
    vol_points: np.ndarray = field(default=None)   # (nt, nq, 2) physical

    @property
    def n_elements(self) -> int:
        return len(self.sub.triangles)

    def kernel_args(self):
        return (self.wvol, self.phi, self.dphi, self.alpha, self.fvals,
                self.wface, self.phif, self.psif, self.nrm, self.tau)


def _element_basis_tables(sub: Subdomain, k: int, rule):
    """Physical quadrature points/weights and basis values for all elements."""
    pts = sub.vertices[sub.triangles]           # (nt, 3, 2)
    v0 = pts[:, 0]
    J = np.stack([pts[:, 1] - v0, pts[:, 2] - v0], axis=-1)  # (nt, 2, 2)
    ref = rule.points                            # (nq, 2)
    phys = v0[:, None, :] + np.einsum("eab,qb->eqa", J, ref)
    wvol = rule.weights[None, :] * (2.0 * sub.areas)[:, None]

    exps = monomial_exponents(k)
    p = len(exps)
    loc = (phys - sub.centroids[:, None, :]) / sub.diameters[:, None, None]
    nt, nq = loc.shape[:2]
    phi = np.empty((nt, nq, p))
    dphi = np.empty((nt, nq, p, 2))
    x = loc[..., 0]
    y = loc[..., 1]
    for i, (a, b) in enumerate(exps):
        xa = x ** a
        yb = y ** b
        phi[:, :, i] = xa * yb
        dphi[:, :, i, 0] = (a * x ** (a - 1) * yb if a > 0 else 0.0)
        dphi[:, :, i, 1] = (b * xa * y ** (b - 1) if b > 0 else 0.0)
    dphi /= sub.diameters[:, None, None, None]
    return phys, wvol, phi, dphi


def _basis_values_at(sub: Subdomain, k: int, pts):
    """Basis values at physical points of shape (..., 2) for given elements.

    ``pts`` has shape (nt, ..., 2) aligned with element order.
    """
    exps = monomial_exponents(k)
    p = len(exps)
    extra = pts.shape[1:-1]
    cent = sub.centroids.reshape((-1,) + (1,) * len(extra) + (2,))
    diam = sub.diameters.reshape((-1,) + (1,) * len(extra))
    loc = (pts - cent) / diam[..., None]
    out = np.empty(pts.shape[:-1] + (p,))
    x = loc[..., 0]
    y = loc[..., 1]
    for i, (a, b) in enumerate(exps):
        out[..., i] = x ** a * y ** b
    return out


def _oscillation_eps(alpha: CoefficientField, trace_bases, sub: Subdomain):
    eps_candidates = []
    if getattr(alpha, "two_scale_eps", None):
        eps_candidates.append(alpha.two_scale_eps)
    for seg_id in sub.segment_faces:
        tb = trace_bases.get(seg_id) if trace_bases else None
        if tb is not None and getattr(tb, "eps", None):
            eps_candidates.append(tb.eps)
    return min(eps_candidates) if eps_candidates else None


def build_subdomain_batch(sub: Subdomain, alpha: CoefficientField, f, tau_sub,
                          k: int, trace_bases=None, boundary_data=None,
                          quad: QuadratureOptions | None = None) -> SubdomainBatch:
    """Assemble all kernel inputs and the multiplier layout for one subdomain."""
    quad = quad or QuadratureOptions()
    trace_bases = trace_bases or {}
    p = space_dim(k)
    nt = sub.n_elements

    seg_ids = sorted(sub.segment_faces.keys())
    for seg_id in seg_ids:
        if seg_id not in trace_bases:
            raise SolverError(f"missing trace basis for skeleton segment {seg_id}")
    seg_dims = {sid: trace_bases[sid].dim for sid in seg_ids}
    l_poly = max((trace_bases[sid].degree for sid in seg_ids), default=0)
    mmax = max(k + 1, max(seg_dims.values(), default=0))

    # quadrature orders, with oscillation-aware composite refinement
    elem_order = quad.element_order or (2 * k + 2)
    face_order = quad.face_order or (2 * max(k, l_poly) + 2)
    eps = _oscillation_eps(alpha, trace_bases, sub)
    vol_rule = triangle_quadrature(elem_order)
    face_rule = segment_quadrature(face_order)
    if eps is not None:
        h_sub = sub.h
        if h_sub > eps / 2.0 and not quad.allow_underresolved:
            raise SolverError(
                f"fine mesh (h={h_sub:.4g}) does not resolve the oscillation scale "
                f"eps={eps:.4g}; need h <= eps/2 or allow_underresolved=True")
        if h_sub > eps / 2.0:
            warnings.warn("running with an under-resolved two-scale coefficient")
        m_vol = min(VOL_OSC_CAP, max(1, math.ceil(3.0 * h_sub / eps)))
        vol_rule = refine_triangle_rule(vol_rule, m_vol)
        max_face_len = float(sub.face_lengths.max())
        m_face = min(FACE_OSC_CAP, max(1, math.ceil(8.0 * max_face_len / eps)))
        face_rule = refine_segment_rule(face_rule, m_face)

    vol_pts, wvol, phi, dphi = _element_basis_tables(sub, k, vol_rule)
    alpha_vals = alpha(vol_pts.reshape(-1, 2)).reshape(nt, -1)
    if f is None:
        fvals = np.zeros_like(wvol)
    else:
        fvals = np.asarray(f(vol_pts.reshape(-1, 2)), dtype=float).reshape(nt, -1)

    # face geometry per (element, local face)
    fids = sub.elem_faces                       # (nt, 3)
    starts = sub.vertices[sub.face_nodes[fids, 0]]   # (nt, 3, 2)
    ends = sub.vertices[sub.face_nodes[fids, 1]]
    lens = sub.face_lengths[fids]               # (nt, 3)
    tang = (ends - starts) / lens[..., None]
    s_ref = face_rule.points[:, 0]              # (nfq,)
    nfq = len(s_ref)
    face_pts = starts[:, :, None, :] + (s_ref[None, None, :, None] * lens[..., None, None]) \
        * tang[:, :, None, :]
    wface = face_rule.weights[None, None, :] * lens[..., None]
    nrm = sub.outward_normals()
    phif = _basis_values_at(sub, k, face_pts)

    # multiplier basis values: Legendre everywhere, overwritten on skeleton faces
    psif = np.zeros((nt, 3, nfq, mmax))
    t_ref = 2.0 * s_ref - 1.0
    leg = legendre_values(k, t_ref)             # (nfq, k+1)
    scale = np.sqrt((2.0 * np.arange(k + 1) + 1.0)[None, None, :] / lens[..., None])
    psif[:, :, :, :k + 1] = leg[None, None, :, :] * scale[:, :, None, :]

    # DOF layout
    interior_faces = np.nonzero(sub.face_class == INTERIOR)[0]
    interior_offsets = {int(fid): i * (k + 1) for i, fid in enumerate(interior_faces)}
    n_interior = (k + 1) * len(interior_faces)
    seg_offsets = {}
    off = n_interior
    for sid in seg_ids:
        seg_offsets[sid] = off
        off += seg_dims[sid]
    layout = MultiplierLayout(k=k, interior_faces=interior_faces,
                              interior_offsets=interior_offsets, n_interior=n_interior,
                              segment_ids=seg_ids, segment_dims=seg_dims,
                              segment_offsets=seg_offsets, n_dofs=off)

    dof_map = np.full((nt, 3, mmax), -1, dtype=np.int64)
    known_vals = np.zeros((nt, 3, mmax))
    cls = sub.face_class[fids]                  # (nt, 3)
    for e in range(nt):
        for lf in range(3):
            fid = int(fids[e, lf])
            c = cls[e, lf]
            if c == INTERIOR:
                base = interior_offsets[fid]
                dof_map[e, lf, :k + 1] = np.arange(base, base + k + 1)
            elif c == SKELETON:
                sid = int(sub.face_segment[fid])
                m = seg_dims[sid]
                base = seg_offsets[sid]
                dof_map[e, lf, :m] = np.arange(base, base + m)
                vals = trace_bases[sid].eval(face_pts[e, lf])   # (m, nfq)
                psif[e, lf, :, :] = 0.0
                psif[e, lf, :, :m] = vals.T
            else:  # BOUNDARY: known multiplier values (zero by default)
                if boundary_data is not None:
                    g = np.asarray(boundary_data(face_pts[e, lf]), dtype=float)
                    known_vals[e, lf, :k + 1] = psif[e, lf, :, :k + 1].T @ (g * wface[e, lf])
    tau_arr = np.ascontiguousarray(np.asarray(tau_sub, dtype=float))
    if tau_arr.shape != (nt, 3):
        raise SolverError(f"tau table must have shape {(nt, 3)}")

    return SubdomainBatch(sub=sub, k=k, p=p, mmax=mmax, layout=layout,
                          dof_map=dof_map, known_vals=known_vals,
                          wvol=wvol, phi=phi, dphi=dphi, alpha=alpha_vals,
                          fvals=fvals, wface=wface, phif=phif, psif=psif,
                          nrm=nrm, tau=tau_arr,
                          face_points=face_pts, vol_points=vol_pts)


def assemble_multiplier_system(batch: SubdomainBatch, S_el, b_el):
    """Sparse multiplier matrix and rhs from per-element dense blocks."""
    from scipy import sparse

    nt = batch.n_elements
    nl = S_el.shape[1]
    dof = batch.dof_map.reshape(nt, nl)
    kv = batch.known_vals.reshape(nt, nl)
    rhs_el = b_el - np.einsum("eij,ej->ei", S_el, kv)

    rows = np.broadcast_to(dof[:, :, None], (nt, nl, nl))
    cols = np.broadcast_to(dof[:, None, :], (nt, nl, nl))
    mask = (rows >= 0) & (cols >= 0)
    n = batch.layout.n_dofs
    K = sparse.coo_matrix((S_el[mask], (rows[mask], cols[mask])), shape=(n, n)).tocsc()
    rhs = np.zeros(n)
    rmask = dof >= 0
    np.add.at(rhs, dof[rmask], rhs_el[rmask])
    return K, rhs


def gather_lambda(batch: SubdomainBatch, lam_local: np.ndarray) -> np.ndarray:
    """Per-element multiplier values (nt, 3*mmax) from the local dof vector."""
    nt = batch.n_elements
    nl = 3 * batch.mmax
    dof = batch.dof_map.reshape(nt, nl)
    out = batch.known_vals.reshape(nt, nl).copy()
    mask = dof >= 0
    out[mask] = lam_local[dof[mask]]
    return out
