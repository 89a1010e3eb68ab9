"""Coefficient-field evaluators shared by the solver and the harness.

The solver core works with the scalar weight that multiplies the flux in the
first equation of the mixed system (the reciprocal of the conductivity).
Fields are pure functions of the evaluation point and safe to call from
concurrent workers.
"""

import numpy as np


class CoefficientError(ValueError):
    pass


class CoefficientField:
    """Base class: positive scalar field on the domain."""

    two_scale_eps: float | None = None

    def eval(self, points) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, points) -> np.ndarray:
        vals = np.asarray(self.eval(points), dtype=float)
        if vals.size and np.min(vals) <= 0.0:
            raise CoefficientError("coefficient field must be strictly positive")
        return vals


class ConstantField(CoefficientField):
    def __init__(self, value: float):
        if value <= 0.0:
            raise CoefficientError("constant coefficient must be positive")
        self.value = float(value)

    def eval(self, points):
        pts = np.asarray(points, dtype=float)
        return np.full(pts.shape[0], self.value)


class CallableField(CoefficientField):
    """Wraps an analytic callable of physical points (npts, 2) -> (npts,)."""

    def __init__(self, fn):
        self.fn = fn

    def eval(self, points):
        pts = np.asarray(points, dtype=float)
        out = np.asarray(self.fn(pts), dtype=float)
        if out.shape != (pts.shape[0],):
            out = np.broadcast_to(out, (pts.shape[0],)).copy()
        return out


class TwoScaleField(CoefficientField):
    """alpha(x, frac(x / eps)) for a cell function periodic on [0, 1]^2."""

    def __init__(self, cell_fn, eps: float):
        if eps <= 0.0:
            raise CoefficientError("two-scale period eps must be positive")
        self.cell_fn = cell_fn
        self.eps = float(eps)
        self.two_scale_eps = self.eps

    def eval(self, points):
        pts = np.asarray(points, dtype=float)
        y = np.mod(pts / self.eps, 1.0)
        out = np.asarray(self.cell_fn(pts, y), dtype=float)
        if out.shape != (pts.shape[0],):
            out = np.broadcast_to(out, (pts.shape[0],)).copy()
        return out


class PiecewiseConstantField(CoefficientField):
    """One value per fine cell of a structured subdomain grid.

    ``values`` maps (subdomain id -> (n_elems,) array); evaluation requires
    the owning mesh for point location.
    """

    def __init__(self, mesh, values: dict):
        self.mesh = mesh
        self.values = {sid: np.asarray(v, dtype=float) for sid, v in values.items()}
        for sid, v in self.values.items():
            nt = len(self.mesh.subdomains[sid].triangles)
            if v.shape != (nt,):
                raise CoefficientError(f"subdomain {sid}: expected {nt} cell values")

    def eval(self, points):
        pts = np.asarray(points, dtype=float)
        out = np.empty(pts.shape[0])
        for i, p in enumerate(pts):
            sid, elem = self.mesh.locate(p)
            out[i] = self.values[sid][elem]
        return out


def make_two_scale(alpha_cell, eps: float) -> TwoScaleField:
    """Two-scale field from alpha_cell(x, y) periodic in y on [0, 1]^2."""
    return TwoScaleField(alpha_cell, eps)


def as_coefficient(alpha) -> CoefficientField:
    """Coerce a number or callable into a CoefficientField."""
    if isinstance(alpha, CoefficientField):
        return alpha
    if np.isscalar(alpha):
        return ConstantField(float(alpha))
    if callable(alpha):
        return CallableField(alpha)
    raise CoefficientError(f"cannot interpret {alpha!r} as a coefficient field")
