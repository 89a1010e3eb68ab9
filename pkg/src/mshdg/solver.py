"""Two-level solve: subdomain condensation, coarse interface system, recovery.

Per subdomain, element unknowns and interior fine-face multipliers are
eliminated onto the coarse trace DOFs of its skeleton segments; the
subdomain Schur complements S_T (symmetric positive semidefinite) are
scatter-added into the global interface matrix A = sum S_T with right-hand
side b = -sum g_T.  A is symmetric positive definite whenever every element
carries a positive stabilization face, so the coarse solve is a Cholesky
factorization (conjugate gradients beyond dimension 2000).  A monolithic
one-level elimination over all multipliers at once serves as an internal
oracle for the two-level path.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .backend import worker_count
from .basis import monomial_exponents, space_dim
from .coefficients import as_coefficient
from .discretize import (QuadratureOptions, SolverError, SubdomainBatch,
                         assemble_multiplier_system, build_subdomain_batch,
                         gather_lambda)
from .kernels import condense_elements, recover_elements
from .local import TauAssignment

DIRECT_LIMIT = 2000


class CoarseSolveError(SolverError):
    pass


@dataclass
class CondensedSubdomain:
    """Schur complement of one subdomain onto its coarse trace DOFs."""

    sid: int
    batch: SubdomainBatch
    n_interior: int
    factor: object          # splu of the interior-interior block (or None)
    K_is: object            # interior x segment coupling (dense)
    r_interior: np.ndarray
    r_segment: np.ndarray
    schur: np.ndarray       # S_T, maps coarse DOFs to (negated) flux functionals
    load: np.ndarray        # g_T, with the convention b = -sum(g_T)
    segment_ids: list
    segment_dims: dict
    segment_offsets: dict   # within the schur block

    def interior_multipliers(self, xi_local: np.ndarray) -> np.ndarray:
        if self.n_interior == 0:
            return np.zeros(0)
        rhs = self.r_interior
        if xi_local.size:
            rhs = rhs - self.K_is @ xi_local
        return self.factor.solve(rhs)


@dataclass
class CoarseSystem:
    """Global SPD system on the skeleton multipliers (zero on the boundary)."""

    matrix: np.ndarray
    rhs: np.ndarray
    segment_offsets: dict   # segment id -> first global dof
    segment_dims: dict
    dim: int
    meta: dict = field(default_factory=dict)


@dataclass
class DiscreteSolution:
    """Element coefficients, face multipliers, and evaluators."""

    mesh: object
    k: int
    u_coeff: list           # per subdomain (nt, p)
    q_coeff: list           # per subdomain (nt, 2, p)
    lam_local: list         # per subdomain multiplier vector
    lam_elem: list          # per subdomain (nt, 3*mmax) gathered values
    layouts: list
    mmax: list
    tau: TauAssignment
    trace_bases: dict
    xi: np.ndarray
    coarse_offsets: dict
    meta: dict = field(default_factory=dict)

    def max_coefficient(self) -> float:
        vals = [0.0]
        for sid in range(len(self.u_coeff)):
            vals.append(float(np.max(np.abs(self.u_coeff[sid]), initial=0.0)))
            vals.append(float(np.max(np.abs(self.q_coeff[sid]), initial=0.0)))
            vals.append(float(np.max(np.abs(self.lam_local[sid]), initial=0.0)))
        vals.append(float(np.max(np.abs(self.xi), initial=0.0)))
        return max(vals)

    def _basis_values(self, sid, eids, pts):
        sub = self.mesh.subdomains[sid]
        exps = monomial_exponents(self.k)
        loc = (pts - sub.centroids[eids]) / sub.diameters[eids][:, None]
        out = np.empty((len(pts), len(exps)))
        for i, (a, b) in enumerate(exps):
            out[:, i] = loc[:, 0] ** a * loc[:, 1] ** b
        return out

    def eval_u(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        sids, eids = self.mesh.locate_batch(pts)
        out = np.empty(len(pts))
        for sid in range(len(self.mesh.subdomains)):
            mask = sids == sid
            if not mask.any():
                continue
            vals = self._basis_values(sid, eids[mask], pts[mask])
            out[mask] = np.einsum("ni,ni->n", vals, self.u_coeff[sid][eids[mask]])
        return out

    def eval_q(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        sids, eids = self.mesh.locate_batch(pts)
        out = np.empty((len(pts), 2))
        for sid in range(len(self.mesh.subdomains)):
            mask = sids == sid
            if not mask.any():
                continue
            vals = self._basis_values(sid, eids[mask], pts[mask])
            qc = self.q_coeff[sid][eids[mask]]
            out[mask, 0] = np.einsum("ni,ni->n", vals, qc[:, 0])
            out[mask, 1] = np.einsum("ni,ni->n", vals, qc[:, 1])
        return out

    def multiplier_dof_count(self) -> int:
        n = sum(lay.n_interior for lay in self.layouts)
        n += sum(self.trace_bases[sid].dim for sid in self.coarse_offsets)
        return n


def condense_subdomain(sub, alpha, f, tau: TauAssignment, k: int, trace_bases,
                       boundary_data=None, quad: QuadratureOptions | None = None,
                       backend: str | None = None) -> CondensedSubdomain:
    """Eliminate element DOFs and interior fine multipliers of one subdomain."""
    alpha = as_coefficient(alpha)
    batch = build_subdomain_batch(sub, alpha, f, tau.table(sub.id), k,
                                  trace_bases=trace_bases, boundary_data=boundary_data,
                                  quad=quad)
    S_el, b_el = condense_elements(*batch.kernel_args(), backend=backend)
    K, rhs = assemble_multiplier_system(batch, S_el, b_el)
    lay = batch.layout
    ni = lay.n_interior
    ns = lay.n_dofs - ni
    r_i, r_s = rhs[:ni], rhs[ni:]
    if ni > 0:
        K_ii = K[:ni, :ni].tocsc()
        try:
            factor = splu(K_ii)
        except RuntimeError as exc:
            raise SolverError(
                f"singular interior multiplier block on subdomain {sub.id}; "
                "check that every element has a positive stabilization face") from exc
        K_is = np.asarray(K[:ni, ni:].todense()) if ns else np.zeros((ni, 0))
        K_ss = np.asarray(K[ni:, ni:].todense()) if ns else np.zeros((0, 0))
        if ns:
            Y = factor.solve(K_is)
            schur = K_ss - K_is.T @ Y
            load = K_is.T @ factor.solve(r_i) - r_s
        else:
            schur = K_ss
            load = -r_s
    else:
        factor = None
        K_is = np.zeros((0, ns))
        schur = np.asarray(K.todense())
        load = -r_s
    seg_off = {sid: lay.segment_offsets[sid] - ni for sid in lay.segment_ids}
    return CondensedSubdomain(sid=sub.id, batch=batch, n_interior=ni, factor=factor,
                              K_is=K_is, r_interior=r_i, r_segment=r_s, schur=schur,
                              load=load, segment_ids=lay.segment_ids,
                              segment_dims=lay.segment_dims, segment_offsets=seg_off)


def _coarse_layout(mesh, trace_bases):
    offsets = {}
    off = 0
    for seg in mesh.skeleton_segments:
        offsets[seg.id] = off
        off += trace_bases[seg.id].dim
    return offsets, off


def assemble_coarse(mesh, condensed, trace_bases) -> CoarseSystem:
    """Scatter-add the subdomain Schur complements over shared segments."""
    offsets, dim = _coarse_layout(mesh, trace_bases)
    A = np.zeros((dim, dim))
    b = np.zeros(dim)
    for cond in condensed:
        for sid in cond.segment_ids:
            if cond.segment_dims[sid] != trace_bases[sid].dim:
                raise SolverError(
                    f"trace-basis mismatch on segment {sid}: subdomain {cond.sid} "
                    f"condensed with dimension {cond.segment_dims[sid]}, basis has "
                    f"{trace_bases[sid].dim}")
        gdofs = np.concatenate([
            np.arange(offsets[sid], offsets[sid] + cond.segment_dims[sid])
            for sid in cond.segment_ids]) if cond.segment_ids else np.zeros(0, dtype=int)
        if gdofs.size:
            A[np.ix_(gdofs, gdofs)] += cond.schur
            b[gdofs] += -cond.load
    return CoarseSystem(matrix=A, rhs=b, segment_offsets=offsets,
                        segment_dims={s: trace_bases[s].dim for s in offsets},
                        dim=dim, meta={"n_subdomains": len(condensed)})


def solve_coarse(system: CoarseSystem, tol: float = 1e-10) -> np.ndarray:
    """Direct symmetric solve (dim <= 2000) or diagonally preconditioned CG."""
    if system.dim == 0:
        return np.zeros(0)
    A, b = system.matrix, system.rhs
    if system.dim <= DIRECT_LIMIT:
        from scipy.linalg import cho_factor, cho_solve

        try:
            c = cho_factor(A, lower=True)
        except np.linalg.LinAlgError as exc:
            raise CoarseSolveError(f"coarse system not SPD: {exc}") from exc
        xi = cho_solve(c, b)
        system.meta["iterations"] = 0
        return xi
    from scipy.sparse.linalg import LinearOperator, cg

    d = np.diag(A)
    if np.any(d <= 0):
        raise CoarseSolveError(
            f"coarse system not SPD: nonpositive diagonal entry at index {int(np.argmin(d))}")
    M = LinearOperator(A.shape, matvec=lambda x: x / d)
    iters = 0

    def count(_):
        nonlocal iters
        iters += 1

    xi, info = cg(sparse.csr_matrix(A), b, rtol=tol, maxiter=10 * system.dim,
                  M=M, callback=count)
    if info != 0:
        raise CoarseSolveError(f"coarse system not SPD: CG failed to converge "
                               f"(info={info}, iterations={iters})")
    system.meta["iterations"] = iters
    return xi


def _recover_subdomain(cond: CondensedSubdomain, xi, offsets, backend=None):
    lay = cond.batch.layout
    xi_local = np.concatenate([
        xi[offsets[sid]:offsets[sid] + cond.segment_dims[sid]]
        for sid in cond.segment_ids]) if cond.segment_ids else np.zeros(0)
    lam_i = cond.interior_multipliers(xi_local)
    lam_local = np.concatenate([lam_i, xi_local])
    lam_el = gather_lambda(cond.batch, lam_local)
    coeffs = recover_elements(*cond.batch.kernel_args(), lam_el, backend=backend)
    p = cond.batch.p
    nt = cond.batch.n_elements
    q_coeff = coeffs[:, 0:2 * p].reshape(nt, 2, p)
    u_coeff = coeffs[:, 2 * p:]
    return u_coeff, q_coeff, lam_local, lam_el


def reconstruct(mesh, condensed, xi: np.ndarray, coarse: CoarseSystem,
                tau: TauAssignment, trace_bases, backend: str | None = None,
                meta=None) -> DiscreteSolution:
    """Recover the fine-scale solution from the coarse interface DOFs."""
    n_sub = len(mesh.subdomains)
    u_c = [None] * n_sub
    q_c = [None] * n_sub
    lam_loc = [None] * n_sub
    lam_el = [None] * n_sub
    layouts = [None] * n_sub
    mmaxes = [None] * n_sub

    def work(cond):
        return cond.sid, _recover_subdomain(cond, xi, coarse.segment_offsets, backend)

    nw = worker_count(len(condensed))
    if nw > 1:
        with ThreadPoolExecutor(max_workers=nw) as pool:
            results = list(pool.map(work, condensed))
    else:
        results = [work(c) for c in condensed]
    for sid, (u, q, ll, le) in results:
        u_c[sid], q_c[sid], lam_loc[sid], lam_el[sid] = u, q, ll, le
    for cond in condensed:
        layouts[cond.sid] = cond.batch.layout
        mmaxes[cond.sid] = cond.batch.mmax
    return DiscreteSolution(mesh=mesh, k=condensed[0].batch.k, u_coeff=u_c, q_coeff=q_c,
                            lam_local=lam_loc, lam_elem=lam_el, layouts=layouts,
                            mmax=mmaxes, tau=tau, trace_bases=trace_bases, xi=xi,
                            coarse_offsets=coarse.segment_offsets, meta=meta or {})


def solve_two_level(mesh, alpha, f, tau: TauAssignment, k: int, trace_bases,
                    boundary_data=None, quad: QuadratureOptions | None = None,
                    tol: float = 1e-10, backend: str | None = None):
    """Condense every subdomain, solve the coarse system, reconstruct.

    Returns (solution, coarse_system, condensed_list).
    """
    alpha = as_coefficient(alpha)

    def work(sub):
        return condense_subdomain(sub, alpha, f, tau, k, trace_bases,
                                  boundary_data=boundary_data, quad=quad, backend=backend)

    nw = worker_count(len(mesh.subdomains))
    if nw > 1:
        with ThreadPoolExecutor(max_workers=nw) as pool:
            condensed = list(pool.map(work, mesh.subdomains))
    else:
        condensed = [work(s) for s in mesh.subdomains]
    coarse = assemble_coarse(mesh, condensed, trace_bases)
    xi = solve_coarse(coarse, tol=tol)
    sol = reconstruct(mesh, condensed, xi, coarse, tau, trace_bases, backend=backend,
                      meta={"path": "two_level", "dim_coarse": coarse.dim,
                            "iterations": coarse.meta.get("iterations", 0)})
    return sol, coarse, condensed


def solve_monolithic(mesh, alpha, f, tau: TauAssignment, k: int, trace_bases,
                     boundary_data=None, quad: QuadratureOptions | None = None,
                     backend: str | None = None) -> DiscreteSolution:
    """One-level elimination over all fine and coarse multipliers at once."""
    alpha = as_coefficient(alpha)
    batches = []
    blocks = []
    for sub in mesh.subdomains:
        batch = build_subdomain_batch(sub, alpha, f, tau.table(sub.id), k,
                                      trace_bases=trace_bases,
                                      boundary_data=boundary_data, quad=quad)
        S_el, b_el = condense_elements(*batch.kernel_args(), backend=backend)
        batches.append(batch)
        blocks.append((S_el, b_el))

    offsets, n_seg_dofs = _coarse_layout(mesh, trace_bases)
    sub_offset = []
    off = 0
    for batch in batches:
        sub_offset.append(off)
        off += batch.layout.n_interior
    seg_base = off
    dim = off + n_seg_dofs

    rows_all, cols_all, vals_all = [], [], []
    rhs = np.zeros(dim)
    translations = []
    for batch, (S_el, b_el) in zip(batches, blocks):
        lay = batch.layout
        trans = np.empty(lay.n_dofs, dtype=np.int64)
        trans[:lay.n_interior] = sub_offset[batch.sub.id] + np.arange(lay.n_interior)
        for sid in lay.segment_ids:
            lo = lay.segment_offsets[sid]
            m = lay.segment_dims[sid]
            trans[lo:lo + m] = seg_base + offsets[sid] + np.arange(m)
        translations.append(trans)
        nt = batch.n_elements
        nl = S_el.shape[1]
        dof = batch.dof_map.reshape(nt, nl)
        gdof = np.where(dof >= 0, trans[np.maximum(dof, 0)], -1)
        kv = batch.known_vals.reshape(nt, nl)
        rhs_el = b_el - np.einsum("eij,ej->ei", S_el, kv)
        r = np.broadcast_to(gdof[:, :, None], (nt, nl, nl))
        c = np.broadcast_to(gdof[:, None, :], (nt, nl, nl))
        mask = (r >= 0) & (c >= 0)
        rows_all.append(r[mask])
        cols_all.append(c[mask])
        vals_all.append(S_el[mask])
        rmask = gdof >= 0
        np.add.at(rhs, gdof[rmask], rhs_el[rmask])

    K = sparse.coo_matrix((np.concatenate(vals_all),
                           (np.concatenate(rows_all), np.concatenate(cols_all))),
                          shape=(dim, dim)).tocsc()
    try:
        lam = splu(K).solve(rhs) if dim else np.zeros(0)
    except RuntimeError as exc:
        raise SolverError(f"monolithic multiplier system is singular: {exc}") from exc

    xi = lam[seg_base:] if dim else np.zeros(0)
    n_sub = len(mesh.subdomains)
    u_c = [None] * n_sub
    q_c = [None] * n_sub
    lam_loc = [None] * n_sub
    lam_els = [None] * n_sub
    layouts = [None] * n_sub
    mmaxes = [None] * n_sub
    for batch, trans in zip(batches, translations):
        lam_local = lam[trans] if lay_size(batch) else np.zeros(0)
        lam_el = gather_lambda(batch, lam_local)
        coeffs = recover_elements(*batch.kernel_args(), lam_el, backend=backend)
        p = batch.p
        nt = batch.n_elements
        sid = batch.sub.id
        q_c[sid] = coeffs[:, 0:2 * p].reshape(nt, 2, p)
        u_c[sid] = coeffs[:, 2 * p:]
        lam_loc[sid] = lam_local
        lam_els[sid] = lam_el
        layouts[sid] = batch.layout
        mmaxes[sid] = batch.mmax
    coarse_offsets = {sid_: off_ for sid_, off_ in offsets.items()}
    return DiscreteSolution(mesh=mesh, k=k, u_coeff=u_c, q_coeff=q_c,
                            lam_local=lam_loc, lam_elem=lam_els, layouts=layouts,
                            mmax=mmaxes, tau=tau, trace_bases=trace_bases, xi=xi,
                            coarse_offsets=coarse_offsets,
                            meta={"path": "monolithic", "dim": dim})


def lay_size(batch) -> int:
    return batch.layout.n_dofs
