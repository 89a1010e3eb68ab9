"""Batched element kernels: local condensation and interior recovery.

Each element couples its (q, u) polynomial unknowns to the multiplier
coefficients on its three faces through the discrete flux
q_hat.n = q.n + tau (u - lambda).  ``condense_elements`` eliminates (q, u)
and returns, per element, the negated flux map S_el (positive semidefinite)
and the source response b_el, so that the global multiplier system reads
(sum S_el) lambda = sum b_el.  ``recover_elements`` maps multiplier values
back to element coefficients.

Both kernels exist as a numba ``@njit`` build and a vectorized numpy build;
``backend.BACKEND`` picks the default and tests exercise both.

Array layout (nt elements, nq volume points, nfq face points, p basis
functions, mmax multiplier slots per face):

    wvol   (nt, nq)          physical volume weights
    phi    (nt, nq, p)       basis values
    dphi   (nt, nq, p, 2)    basis gradients
    alpha  (nt, nq)          coefficient values
    fvals  (nt, nq)          source values
    wface  (nt, 3, nfq)      physical face weights
    phif   (nt, 3, nfq, p)   basis values on faces
    psif   (nt, 3, nfq, mmax) multiplier basis values (zero padded)
    nrm    (nt, 3, 2)        outward unit normals
    tau    (nt, 3)           stabilization per face
"""

import numpy as np

from .backend import BACKEND


def _condense_loops(wvol, phi, dphi, alpha, fvals, wface, phif, psif, nrm, tau):
    nt, nq, p = phi.shape
    nfq = wface.shape[2]
    mmax = psif.shape[3]
    nl = 3 * mmax
    S_el = np.zeros((nt, nl, nl))
    b_el = np.zeros((nt, nl))
    for e in range(nt):
        w = wvol[e]
        aw = (w * alpha[e]).reshape(nq, 1)
        ph = phi[e]
        M = ph.T @ (ph * aw)
        wc = w.reshape(nq, 1)
        G1 = dphi[e, :, :, 0].T @ (ph * wc)
        G2 = dphi[e, :, :, 1].T @ (ph * wc)

        mint = np.zeros((3 * p, 3 * p))
        mint[0:p, 0:p] = M
        mint[p:2 * p, p:2 * p] = M
        mint[0:p, 2 * p:3 * p] = -G1
        mint[p:2 * p, 2 * p:3 * p] = -G2
        mint[2 * p:3 * p, 0:p] = -G1
        mint[2 * p:3 * p, p:2 * p] = -G2

        rhs = np.zeros((3 * p, nl + 1))
        fw = (w * fvals[e]).reshape(nq, 1)
        rhs[2 * p:3 * p, nl] = (ph * fw).sum(axis=0)

        flux = np.zeros((nl, 3 * p))
        for lf in range(3):
            wf = wface[e, lf].reshape(nfq, 1)
            pf = phif[e, lf]
            sf = pf.T @ (pf * wf)
            psi = psif[e, lf]
            D = pf.T @ (psi * wf)
            n1 = nrm[e, lf, 0]
            n2 = nrm[e, lf, 1]
            t = tau[e, lf]
            mint[2 * p:3 * p, 0:p] += n1 * sf
            mint[2 * p:3 * p, p:2 * p] += n2 * sf
            mint[2 * p:3 * p, 2 * p:3 * p] += t * sf
            c0 = lf * mmax
            rhs[0:p, c0:c0 + mmax] = -n1 * D
            rhs[p:2 * p, c0:c0 + mmax] = -n2 * D
            rhs[2 * p:3 * p, c0:c0 + mmax] = t * D
            flux[c0:c0 + mmax, 0:p] = n1 * D.T
            flux[c0:c0 + mmax, p:2 * p] = n2 * D.T
            flux[c0:c0 + mmax, 2 * p:3 * p] = t * D.T

        X = np.linalg.solve(mint, rhs)
        out = flux @ X
        for lf in range(3):
            wf = wface[e, lf].reshape(nfq, 1)
            psi = psif[e, lf]
            R = psi.T @ (psi * wf)
            c0 = lf * mmax
            out[c0:c0 + mmax, c0:c0 + mmax] -= tau[e, lf] * R
        S_el[e] = -out[:, 0:nl]
        b_el[e] = out[:, nl]
    return S_el, b_el


def _recover_loops(wvol, phi, dphi, alpha, fvals, wface, phif, psif, nrm, tau, lam):
    nt, nq, p = phi.shape
    nfq = wface.shape[2]
    mmax = psif.shape[3]
    coeffs = np.zeros((nt, 3 * p))
    for e in range(nt):
        w = wvol[e]
        aw = (w * alpha[e]).reshape(nq, 1)
        ph = phi[e]
        M = ph.T @ (ph * aw)
        wc = w.reshape(nq, 1)
        G1 = dphi[e, :, :, 0].T @ (ph * wc)
        G2 = dphi[e, :, :, 1].T @ (ph * wc)

        mint = np.zeros((3 * p, 3 * p))
        mint[0:p, 0:p] = M
        mint[p:2 * p, p:2 * p] = M
        mint[0:p, 2 * p:3 * p] = -G1
        mint[p:2 * p, 2 * p:3 * p] = -G2
        mint[2 * p:3 * p, 0:p] = -G1
        mint[2 * p:3 * p, p:2 * p] = -G2

        rhs = np.zeros(3 * p)
        fw = (w * fvals[e]).reshape(nq, 1)
        rhs[2 * p:3 * p] = (ph * fw).sum(axis=0)

        for lf in range(3):
            wf = wface[e, lf].reshape(nfq, 1)
            pf = phif[e, lf]
            sf = pf.T @ (pf * wf)
            psi = psif[e, lf]
            D = pf.T @ (psi * wf)
            n1 = nrm[e, lf, 0]
            n2 = nrm[e, lf, 1]
            t = tau[e, lf]
            mint[2 * p:3 * p, 0:p] += n1 * sf
            mint[2 * p:3 * p, p:2 * p] += n2 * sf
            mint[2 * p:3 * p, 2 * p:3 * p] += t * sf
            lam_f = lam[e, lf * mmax:(lf + 1) * mmax]
            dl = D @ lam_f
            rhs[0:p] += -n1 * dl
            rhs[p:2 * p] += -n2 * dl
            rhs[2 * p:3 * p] += t * dl

        coeffs[e] = np.linalg.solve(mint, rhs)
    return coeffs


def _condense_numpy(wvol, phi, dphi, alpha, fvals, wface, phif, psif, nrm, tau):
    nt, nq, p = phi.shape
    mmax = psif.shape[3]
    nl = 3 * mmax
    aw = wvol * alpha
    M = np.einsum("eq,eqi,eqj->eij", aw, phi, phi, optimize=True)
    G1 = np.einsum("eq,eqi,eqj->eij", wvol, dphi[..., 0], phi, optimize=True)
    G2 = np.einsum("eq,eqi,eqj->eij", wvol, dphi[..., 1], phi, optimize=True)
    Sf = np.einsum("efq,efqi,efqj->efij", wface, phif, phif, optimize=True)
    D = np.einsum("efq,efqi,efqm->efim", wface, phif, psif, optimize=True)
    R = np.einsum("efq,efqm,efqn->efmn", wface, psif, psif, optimize=True)

    mint = np.zeros((nt, 3 * p, 3 * p))
    mint[:, 0:p, 0:p] = M
    mint[:, p:2 * p, p:2 * p] = M
    mint[:, 0:p, 2 * p:] = -G1
    mint[:, p:2 * p, 2 * p:] = -G2
    mint[:, 2 * p:, 0:p] = -G1 + np.einsum("ef,efij->eij", nrm[..., 0], Sf)
    mint[:, 2 * p:, p:2 * p] = -G2 + np.einsum("ef,efij->eij", nrm[..., 1], Sf)
    mint[:, 2 * p:, 2 * p:] = np.einsum("ef,efij->eij", tau, Sf)

    rhs = np.zeros((nt, 3 * p, nl + 1))
    rhs[:, 2 * p:, nl] = np.einsum("eq,eqi->ei", wvol * fvals, phi, optimize=True)
    flux = np.zeros((nt, nl, 3 * p))
    for lf in range(3):
        c0 = lf * mmax
        n1 = nrm[:, lf, 0][:, None, None]
        n2 = nrm[:, lf, 1][:, None, None]
        t = tau[:, lf][:, None, None]
        Dlf = D[:, lf]
        rhs[:, 0:p, c0:c0 + mmax] = -n1 * Dlf
        rhs[:, p:2 * p, c0:c0 + mmax] = -n2 * Dlf
        rhs[:, 2 * p:, c0:c0 + mmax] = t * Dlf
        DT = np.swapaxes(Dlf, 1, 2)
        flux[:, c0:c0 + mmax, 0:p] = n1 * DT
        flux[:, c0:c0 + mmax, p:2 * p] = n2 * DT
        flux[:, c0:c0 + mmax, 2 * p:] = t * DT

    X = np.linalg.solve(mint, rhs)
    out = flux @ X
    for lf in range(3):
        c0 = lf * mmax
        out[:, c0:c0 + mmax, c0:c0 + mmax] -= tau[:, lf][:, None, None] * R[:, lf]
    return -out[:, :, 0:nl], out[:, :, nl]


def _recover_numpy(wvol, phi, dphi, alpha, fvals, wface, phif, psif, nrm, tau, lam):
    nt, nq, p = phi.shape
    mmax = psif.shape[3]
    aw = wvol * alpha
    M = np.einsum("eq,eqi,eqj->eij", aw, phi, phi, optimize=True)
    G1 = np.einsum("eq,eqi,eqj->eij", wvol, dphi[..., 0], phi, optimize=True)
    G2 = np.einsum("eq,eqi,eqj->eij", wvol, dphi[..., 1], phi, optimize=True)
    Sf = np.einsum("efq,efqi,efqj->efij", wface, phif, phif, optimize=True)
    D = np.einsum("efq,efqi,efqm->efim", wface, phif, psif, optimize=True)

    mint = np.zeros((nt, 3 * p, 3 * p))
    mint[:, 0:p, 0:p] = M
    mint[:, p:2 * p, p:2 * p] = M
    mint[:, 0:p, 2 * p:] = -G1
    mint[:, p:2 * p, 2 * p:] = -G2
    mint[:, 2 * p:, 0:p] = -G1 + np.einsum("ef,efij->eij", nrm[..., 0], Sf)
    mint[:, 2 * p:, p:2 * p] = -G2 + np.einsum("ef,efij->eij", nrm[..., 1], Sf)
    mint[:, 2 * p:, 2 * p:] = np.einsum("ef,efij->eij", tau, Sf)

    rhs = np.zeros((nt, 3 * p))
    rhs[:, 2 * p:] = np.einsum("eq,eqi->ei", wvol * fvals, phi, optimize=True)
    lam3 = lam.reshape(nt, 3, mmax)
    dl = np.einsum("efim,efm->efi", D, lam3, optimize=True)
    rhs[:, 0:p] += -np.einsum("ef,efi->ei", nrm[..., 0], dl)
    rhs[:, p:2 * p] += -np.einsum("ef,efi->ei", nrm[..., 1], dl)
    rhs[:, 2 * p:] += np.einsum("ef,efi->ei", tau, dl)
    return np.linalg.solve(mint, rhs[..., None])[..., 0]


_NUMBA_FNS: dict = {}


def _numba_fn(name):
    if name not in _NUMBA_FNS:
        import numba

        src = {"condense": _condense_loops, "recover": _recover_loops}[name]
        _NUMBA_FNS[name] = numba.njit(cache=True, nogil=True)(src)
    return _NUMBA_FNS[name]


def condense_elements(wvol, phi, dphi, alpha, fvals, wface, phif, psif, nrm, tau,
                      backend: str | None = None):
    """Per-element condensation; see module docstring for conventions."""
    be = backend or BACKEND
    args = tuple(np.ascontiguousarray(a, dtype=np.float64)
                 for a in (wvol, phi, dphi, alpha, fvals, wface, phif, psif, nrm, tau))
    if be == "numba":
        return _numba_fn("condense")(*args)
    return _condense_numpy(*args)


def recover_elements(wvol, phi, dphi, alpha, fvals, wface, phif, psif, nrm, tau, lam,
                     backend: str | None = None):
    """Interior (q1, q2, u) coefficients from multiplier values, (nt, 3p)."""
    be = backend or BACKEND
    args = tuple(np.ascontiguousarray(a, dtype=np.float64)
                 for a in (wvol, phi, dphi, alpha, fvals, wface, phif, psif, nrm, tau, lam))
    if be == "numba":
        return _numba_fn("recover")(*args)
    return _recover_numpy(*args)


def warmup(backend: str | None = None):
    """Trigger JIT compilation on a minimal workload (no-op for numpy)."""
    be = backend or BACKEND
    if be != "numba":
        return
    nt, nq, p, nfq, mmax = 1, 1, 1, 1, 1
    wvol = np.ones((nt, nq))
    phi = np.ones((nt, nq, p))
    dphi = np.zeros((nt, nq, p, 2))
    alpha = np.ones((nt, nq))
    fvals = np.zeros((nt, nq))
    wface = np.ones((nt, 3, nfq))
    phif = np.ones((nt, 3, nfq, p))
    psif = np.ones((nt, 3, nfq, mmax))
    nrm = np.zeros((nt, 3, 2))
    nrm[:, :, 0] = 1.0
    tau = np.ones((nt, 3))
    s, b = condense_elements(wvol, phi, dphi, alpha, fvals, wface, phif, psif, nrm, tau,
                             backend="numba")
    lam = np.zeros((nt, 3 * mmax))
    recover_elements(wvol, phi, dphi, alpha, fvals, wface, phif, psif, nrm, tau, lam,
                     backend="numba")
