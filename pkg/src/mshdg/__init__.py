"""mshdg: two-level hybridizable DG solver for mixed-form elliptic problems.

Highlights: three-scale structured meshes, per-element static condensation
onto face multipliers, subdomain Schur complements onto a coarse interface
space, polynomial and homogenization-based trace bases, and a convergence
harness with CSV output.
"""

from .backend import active_backend, worker_count
from .basis import SegmentBasis, SimplexBasis, l2_project_face
from .coefficients import (CallableField, CoefficientField, ConstantField,
                           PiecewiseConstantField, TwoScaleField, as_coefficient,
                           make_two_scale)
from .local import (SINGLE_FACE, SKELETON_SINGLE_FACE, TAU_POLICIES, UNIFORM,
                    ElementOperator, TauAssignment, assign_tau, element_operator,
                    hdg_projection)
from .mesh import (BOUNDARY, INTERIOR, SKELETON, Face, MeshHierarchy, Rect,
                   SkeletonSegment, Subdomain, build_structured, face_sets,
                   validate, write_vtk)
from .quadrature import QuadratureRule, segment_quadrature, triangle_quadrature
from .solver import (CoarseSolveError, CoarseSystem, CondensedSubdomain,
                     DiscreteSolution, assemble_coarse, condense_subdomain,
                     reconstruct, solve_coarse, solve_monolithic, solve_two_level)

__version__ = "0.1.0"
