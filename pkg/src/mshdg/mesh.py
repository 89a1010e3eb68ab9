"""Three-scale structured meshes: subdomains, skeleton segments, fine grids.

A rectangular domain is split into an ``n_sub x n_sub`` grid of rectangular
subdomains (scale L).  Every interior interface between two subdomains is
partitioned into ``n_seg`` skeleton segments (scale H).  Each subdomain is
triangulated by an ``n_fine x n_fine`` grid of squares, each cut along the
lower-left to upper-right diagonal (scale h).  Fine grids may differ between
subdomains, but segment endpoints must be fine vertices on both sides, which
requires n_fine to be divisible by n_seg.

Face classes: 0 = interior fine face, 1 = skeleton-owned, 2 = outer boundary.
"""

from dataclasses import dataclass, field

import numpy as np

INTERIOR, SKELETON, BOUNDARY = 0, 1, 2

_GEOM_TOL = 1e-12


class MeshError(ValueError):
    pass


class NestingError(MeshError):
    pass


@dataclass(frozen=True)
class Rect:
    x0: float
    y0: float
    x1: float
    y1: float

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return self.width * self.height


UNIT_SQUARE = Rect(0.0, 0.0, 1.0, 1.0)


@dataclass(frozen=True)
class SkeletonSegment:
    """One coarse piece of an interface between two subdomains."""

    id: int
    endpoints: np.ndarray  # (2, 2), canonical order (lexicographic)
    subdomains: tuple      # (sid_a, sid_b) of the two adjacent subdomains
    orientation: str       # 'v' for a vertical segment, 'h' for horizontal

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.endpoints[1] - self.endpoints[0]))

    @property
    def tangent(self) -> np.ndarray:
        d = self.endpoints[1] - self.endpoints[0]
        return d / np.linalg.norm(d)

    @property
    def normal(self) -> np.ndarray:
        t = self.tangent
        return np.array([t[1], -t[0]])

    def arclength(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return (pts - self.endpoints[0]) @ self.tangent


@dataclass
class Face:
    """Read-only view of one fine face (public accessor API)."""

    endpoints: np.ndarray
    face_class: int
    segment: int          # segment id, -1 unless skeleton-owned
    elements: tuple       # owning element ids within the subdomain
    local_indices: tuple  # local face index inside each owner
    normal: np.ndarray    # fixed global orientation convention


class Subdomain:
    """A rectangle with a conforming fine triangulation and face tables.

    Cells are cut along the lower-left to upper-right diagonal, except the
    top-left (bottom-right) corner cell when both adjacent subdomain sides
    are interior interfaces: there the opposite diagonal is used so that no
    triangle carries two skeleton faces.
    """

    def __init__(self, sid: int, rect: Rect, n_fine: int,
                 flip_top_left: bool = False, flip_bottom_right: bool = False):
        self.id = sid
        self.rect = rect
        self.n_fine = int(n_fine)
        if self.n_fine < 1:
            raise MeshError("n_fine must be >= 1")
        self._flip_tl = bool(flip_top_left)
        self._flip_br = bool(flip_bottom_right)
        self._build_grid()

    def _build_grid(self):
        n = self.n_fine
        xs = np.linspace(self.rect.x0, self.rect.x1, n + 1)
        ys = np.linspace(self.rect.y0, self.rect.y1, n + 1)
        X, Y = np.meshgrid(xs, ys, indexing="xy")
        self.vertices = np.column_stack([X.ravel(), Y.ravel()])

        def vid(i, j):
            return j * (n + 1) + i

        flipped = np.zeros((n, n), dtype=bool)
        if n > 1:
            if self._flip_tl:
                flipped[n - 1, 0] = True   # cell (i=0, j=n-1)
            if self._flip_br:
                flipped[0, n - 1] = True   # cell (i=n-1, j=0)
        self.flipped_cells = flipped

        tris = np.empty((2 * n * n, 3), dtype=np.int64)
        t = 0
        for j in range(n):
            for i in range(n):
                a, b = vid(i, j), vid(i + 1, j)
                c, d = vid(i + 1, j + 1), vid(i, j + 1)
                if flipped[j, i]:
                    tris[t] = (a, b, d)      # below the b-d diagonal
                    tris[t + 1] = (b, c, d)  # above
                else:
                    tris[t] = (a, b, c)      # below the a-c diagonal
                    tris[t + 1] = (a, c, d)  # above
                t += 2
        self.triangles = tris
        self._build_geometry()
        self._build_faces()

    def _build_geometry(self):
        pts = self.vertices[self.triangles]  # (nt, 3, 2)
        e0 = pts[:, 1] - pts[:, 0]
        e1 = pts[:, 2] - pts[:, 0]
        self.areas = 0.5 * (e0[:, 0] * e1[:, 1] - e0[:, 1] * e1[:, 0])
        self.centroids = pts.mean(axis=1)
        edge_len = np.stack(
            [
                np.linalg.norm(pts[:, 1] - pts[:, 0], axis=1),
                np.linalg.norm(pts[:, 2] - pts[:, 1], axis=1),
                np.linalg.norm(pts[:, 0] - pts[:, 2], axis=1),
            ],
            axis=1,
        )
        self.diameters = edge_len.max(axis=1)

    def _build_faces(self):
        nt = len(self.triangles)
        face_index: dict = {}
        face_nodes = []
        face_elems = []
        face_local = []
        elem_faces = np.empty((nt, 3), dtype=np.int64)
        for e in range(nt):
            tri = self.triangles[e]
            for lf in range(3):
                key = tuple(sorted((int(tri[lf]), int(tri[(lf + 1) % 3]))))
                fid = face_index.get(key)
                if fid is None:
                    fid = len(face_nodes)
                    face_index[key] = fid
                    face_nodes.append(key)
                    face_elems.append([e, -1])
                    face_local.append([lf, -1])
                else:
                    if face_elems[fid][1] != -1:
                        raise MeshError(f"face {key} shared by more than two triangles")
                    face_elems[fid][1] = e
                    face_local[fid][1] = lf
                elem_faces[e, lf] = fid
        self.face_nodes = np.array(face_nodes, dtype=np.int64)
        self.face_elems = np.array(face_elems, dtype=np.int64)
        self.face_local = np.array(face_local, dtype=np.int64)
        self.elem_faces = elem_faces
        # canonical orientation: endpoint with lexicographically smaller
        # coordinates comes first
        a = self.vertices[self.face_nodes[:, 0]]
        b = self.vertices[self.face_nodes[:, 1]]
        swap = (b[:, 0] < a[:, 0] - _GEOM_TOL) | (
            (np.abs(b[:, 0] - a[:, 0]) <= _GEOM_TOL) & (b[:, 1] < a[:, 1] - _GEOM_TOL)
        )
        fn = self.face_nodes.copy()
        fn[swap] = fn[swap][:, ::-1]
        self.face_nodes = fn
        starts = self.vertices[fn[:, 0]]
        ends = self.vertices[fn[:, 1]]
        d = ends - starts
        self.face_lengths = np.linalg.norm(d, axis=1)
        tangents = d / self.face_lengths[:, None]
        self.face_normals = np.column_stack([tangents[:, 1], -tangents[:, 0]])
        # filled in by the mesh-level classification pass
        self.face_class = np.full(len(fn), INTERIOR, dtype=np.int8)
        self.face_segment = np.full(len(fn), -1, dtype=np.int64)
        self.segment_faces: dict = {}

    @property
    def n_elements(self) -> int:
        return len(self.triangles)

    @property
    def h(self) -> float:
        return float(self.diameters.max())

    def face(self, fid: int) -> Face:
        owners = tuple(int(e) for e in self.face_elems[fid] if e >= 0)
        locs = tuple(int(l) for l in self.face_local[fid] if l >= 0)
        return Face(
            endpoints=self.vertices[self.face_nodes[fid]],
            face_class=int(self.face_class[fid]),
            segment=int(self.face_segment[fid]),
            elements=owners,
            local_indices=locs,
            normal=self.face_normals[fid].copy(),
        )

    def outward_normals(self) -> np.ndarray:
        """(nt, 3, 2) outward unit normal per element edge (ccw order)."""
        pts = self.vertices[self.triangles]
        out = np.empty((len(self.triangles), 3, 2))
        for lf in range(3):
            d = pts[:, (lf + 1) % 3] - pts[:, lf]
            ln = np.linalg.norm(d, axis=1)
            out[:, lf, 0] = d[:, 1] / ln
            out[:, lf, 1] = -d[:, 0] / ln
        return out

    def locate(self, point) -> int:
        """Element id containing ``point`` (ties resolved to the first triangle)."""
        n = self.n_fine
        fx = (point[0] - self.rect.x0) / self.rect.width * n
        fy = (point[1] - self.rect.y0) / self.rect.height * n
        i = min(max(int(np.floor(fx)), 0), n - 1)
        j = min(max(int(np.floor(fy)), 0), n - 1)
        u, v = fx - i, fy - j
        if self.flipped_cells[j, i]:
            first = u + v <= 1.0 + _GEOM_TOL
        else:
            first = v <= u + _GEOM_TOL
        return 2 * (j * n + i) + (0 if first else 1)


@dataclass
class MeshHierarchy:
    """The full three-scale partition; immutable after construction."""

    domain: Rect
    n_sub: int
    subdomains: list
    skeleton_segments: list
    scales: tuple = field(default=None)  # (L, H, h); H is nan without a skeleton

    def subdomain_grid_index(self, sid: int):
        return sid % self.n_sub, sid // self.n_sub

    def locate(self, point):
        """(subdomain id, element id) containing a physical point."""
        i = min(max(int((point[0] - self.domain.x0) / self.domain.width * self.n_sub), 0),
                self.n_sub - 1)
        j = min(max(int((point[1] - self.domain.y0) / self.domain.height * self.n_sub), 0),
                self.n_sub - 1)
        sid = j * self.n_sub + i
        return sid, self.subdomains[sid].locate(point)

    def locate_batch(self, points):
        """Vectorized locate: arrays (subdomain ids, element ids)."""
        pts = np.asarray(points, dtype=float)
        gi = np.clip(np.floor((pts[:, 0] - self.domain.x0) / self.domain.width
                              * self.n_sub).astype(np.int64), 0, self.n_sub - 1)
        gj = np.clip(np.floor((pts[:, 1] - self.domain.y0) / self.domain.height
                              * self.n_sub).astype(np.int64), 0, self.n_sub - 1)
        sids = gj * self.n_sub + gi
        eids = np.empty(len(pts), dtype=np.int64)
        for sid in range(len(self.subdomains)):
            mask = sids == sid
            if not mask.any():
                continue
            sub = self.subdomains[sid]
            n = sub.n_fine
            fx = (pts[mask, 0] - sub.rect.x0) / sub.rect.width * n
            fy = (pts[mask, 1] - sub.rect.y0) / sub.rect.height * n
            ci = np.clip(np.floor(fx).astype(np.int64), 0, n - 1)
            cj = np.clip(np.floor(fy).astype(np.int64), 0, n - 1)
            u = fx - ci
            v = fy - cj
            flipped = sub.flipped_cells[cj, ci]
            first = np.where(flipped, u + v <= 1.0 + _GEOM_TOL, v <= u + _GEOM_TOL)
            eids[mask] = 2 * (cj * n + ci) + np.where(first, 0, 1)
        return sids, eids

    @property
    def n_elements(self) -> int:
        return sum(s.n_elements for s in self.subdomains)


def build_structured(domain: Rect = UNIT_SQUARE, n_sub: int = 1, n_seg: int = 1,
                     n_fine=2) -> MeshHierarchy:
    """Structured three-scale mesh of an axis-aligned rectangle.

    ``n_fine`` is either one int for every subdomain or a sequence of
    n_sub**2 ints in row-major subdomain order.  Each n_fine must be
    divisible by n_seg so that segment endpoints are fine vertices.
    """
    if n_sub < 1 or n_seg < 1:
        raise MeshError("n_sub and n_seg must be >= 1")
    if domain.width <= 0 or domain.height <= 0:
        raise MeshError("domain must have positive extent")
    n2 = n_sub * n_sub
    if np.isscalar(n_fine):
        fines = [int(n_fine)] * n2
    else:
        fines = [int(v) for v in n_fine]
        if len(fines) != n2:
            raise MeshError(f"need {n2} per-subdomain n_fine values, got {len(fines)}")
    for nf in fines:
        if nf < 1:
            raise MeshError("n_fine must be >= 1")
        if nf % n_seg != 0:
            raise NestingError(
                f"n_fine={nf} is not divisible by n_seg={n_seg}; segment endpoints "
                "must be fine-grid vertices"
            )

    sw = domain.width / n_sub
    sh = domain.height / n_sub
    subdomains = []
    for j in range(n_sub):
        for i in range(n_sub):
            rect = Rect(domain.x0 + i * sw, domain.y0 + j * sh,
                        domain.x0 + (i + 1) * sw, domain.y0 + (j + 1) * sh)
            left, right = i > 0, i < n_sub - 1
            bottom, top = j > 0, j < n_sub - 1
            subdomains.append(Subdomain(j * n_sub + i, rect, fines[j * n_sub + i],
                                        flip_top_left=left and top,
                                        flip_bottom_right=bottom and right))

    segments = []
    # vertical interfaces between (i, j) and (i+1, j)
    for i in range(n_sub - 1):
        for j in range(n_sub):
            x = domain.x0 + (i + 1) * sw
            y_lo = domain.y0 + j * sh
            sid_a = j * n_sub + i
            sid_b = j * n_sub + i + 1
            for t in range(n_seg):
                ends = np.array([[x, y_lo + t * sh / n_seg], [x, y_lo + (t + 1) * sh / n_seg]])
                segments.append(SkeletonSegment(len(segments), ends, (sid_a, sid_b), "v"))
    # horizontal interfaces between (i, j) and (i, j+1)
    for j in range(n_sub - 1):
        for i in range(n_sub):
            y = domain.y0 + (j + 1) * sh
            x_lo = domain.x0 + i * sw
            sid_a = j * n_sub + i
            sid_b = (j + 1) * n_sub + i
            for t in range(n_seg):
                ends = np.array([[x_lo + t * sw / n_seg, y], [x_lo + (t + 1) * sw / n_seg, y]])
                segments.append(SkeletonSegment(len(segments), ends, (sid_a, sid_b), "h"))

    _classify_faces(domain, subdomains, segments)

    L = max(max(s.rect.width, s.rect.height) for s in subdomains)
    H = max((s.length for s in segments), default=float("nan"))
    h = max(s.h for s in subdomains)
    return MeshHierarchy(domain=domain, n_sub=n_sub, subdomains=subdomains,
                         skeleton_segments=segments, scales=(L, H, h))


def _classify_faces(domain: Rect, subdomains, segments):
    # index segments by (orientation, line coordinate) for fast lookup
    seg_by_line: dict = {}
    for seg in segments:
        if seg.orientation == "v":
            key = ("v", round(seg.endpoints[0][0], 12))
        else:
            key = ("h", round(seg.endpoints[0][1], 12))
        seg_by_line.setdefault(key, []).append(seg)

    for sub in subdomains:
        starts = sub.vertices[sub.face_nodes[:, 0]]
        ends = sub.vertices[sub.face_nodes[:, 1]]
        on_sub_boundary = sub.face_elems[:, 1] < 0
        for fid in np.nonzero(on_sub_boundary)[0]:
            a, b = starts[fid], ends[fid]
            mid = 0.5 * (a + b)
            if (abs(mid[0] - domain.x0) <= _GEOM_TOL or abs(mid[0] - domain.x1) <= _GEOM_TOL
                    or abs(mid[1] - domain.y0) <= _GEOM_TOL or abs(mid[1] - domain.y1) <= _GEOM_TOL):
                sub.face_class[fid] = BOUNDARY
                continue
            if abs(a[0] - b[0]) <= _GEOM_TOL:
                key = ("v", round(a[0], 12))
                coord = mid[1]
            else:
                key = ("h", round(a[1], 12))
                coord = mid[0]
            seg_id = -1
            for seg in seg_by_line.get(key, ()):  # few segments per line
                lo = seg.endpoints[0][1] if seg.orientation == "v" else seg.endpoints[0][0]
                hi = seg.endpoints[1][1] if seg.orientation == "v" else seg.endpoints[1][0]
                if lo - _GEOM_TOL <= coord <= hi + _GEOM_TOL:
                    seg_id = seg.id
                    break
            if seg_id < 0:
                raise MeshError(f"subdomain {sub.id}: boundary face at {mid} matches no "
                                "skeleton segment and is not on the outer boundary")
            sub.face_class[fid] = SKELETON
            sub.face_segment[fid] = seg_id
        sub.segment_faces = {}
        for fid in np.nonzero(sub.face_class == SKELETON)[0]:
            sub.segment_faces.setdefault(int(sub.face_segment[fid]), []).append(int(fid))
        for fids in sub.segment_faces.values():
            fids.sort()


def face_sets(mesh: MeshHierarchy):
    """Per-subdomain face-id lists by class, plus the global skeleton.

    Returns (per_sub, segments) where per_sub[sid] is a dict with keys
    'interior', 'skeleton', 'boundary'.
    """
    per_sub = []
    for sub in mesh.subdomains:
        per_sub.append({
            "interior": np.nonzero(sub.face_class == INTERIOR)[0].tolist(),
            "skeleton": np.nonzero(sub.face_class == SKELETON)[0].tolist(),
            "boundary": np.nonzero(sub.face_class == BOUNDARY)[0].tolist(),
        })
    return per_sub, list(mesh.skeleton_segments)


def validate(mesh: MeshHierarchy) -> list:
    """Structural checks; returns a list of violation strings (empty = valid)."""
    violations = []
    for sub in mesh.subdomains:
        pts = sub.vertices[sub.triangles]
        e0 = pts[:, 1] - pts[:, 0]
        e1 = pts[:, 2] - pts[:, 0]
        areas = 0.5 * (e0[:, 0] * e1[:, 1] - e0[:, 1] * e1[:, 0])
        for e in np.nonzero(areas <= 0.0)[0]:
            violations.append(f"subdomain {sub.id}: element {e} has non-positive (negative "
                              f"area or degenerate) orientation")
        # conformity: interior faces have exactly two owners, others one
        n_owners = (sub.face_elems >= 0).sum(axis=1)
        for fid in range(len(sub.face_nodes)):
            cls = sub.face_class[fid]
            if cls == INTERIOR and n_owners[fid] != 2:
                violations.append(f"subdomain {sub.id}: interior face {fid} has "
                                  f"{n_owners[fid]} owners (non-conforming)")
            if cls != INTERIOR and n_owners[fid] != 1:
                violations.append(f"subdomain {sub.id}: boundary-class face {fid} has "
                                  f"{n_owners[fid]} owners")
        # at most one skeleton face per element
        skel_count = np.zeros(sub.n_elements, dtype=int)
        for fid in np.nonzero(sub.face_class == SKELETON)[0]:
            skel_count[sub.face_elems[fid, 0]] += 1
        for e in np.nonzero(skel_count > 1)[0]:
            violations.append(f"subdomain {sub.id}: element {e} has multiple skeleton faces")
        # nesting: skeleton faces contained in their segment
        for fid in np.nonzero(sub.face_class == SKELETON)[0]:
            seg = mesh.skeleton_segments[sub.face_segment[fid]]
            for node in sub.face_nodes[fid]:
                p = sub.vertices[node]
                s = seg.arclength(p[None, :])[0]
                off = abs((p - seg.endpoints[0]) @ seg.normal)
                if s < -1e-10 or s > seg.length + 1e-10 or off > 1e-10:
                    violations.append(f"subdomain {sub.id}: skeleton face {fid} not nested "
                                      f"in segment {seg.id}")
                    break
    area = sum(float(s.areas.sum()) for s in mesh.subdomains)
    if abs(area - mesh.domain.area) > 1e-12 * mesh.domain.area:
        violations.append(f"triangle areas sum to {area}, domain area is {mesh.domain.area}")
    L, H, h = mesh.scales
    if mesh.skeleton_segments:
        if not (h < H + 1e-15):
            violations.append(f"scale ordering violated: h={h} >= H={H}")
        if not (H <= L + 1e-15):
            violations.append(f"scale ordering violated: H={H} > L={L}")
    if L <= 0 or h <= 0:
        violations.append("scales must be strictly positive")
    return violations


def write_vtk(mesh: MeshHierarchy, path: str, point_data=None, data_name: str = "u"):
    """Legacy ASCII VTK (POLYDATA) export of the fine triangulation.

    ``point_data``: optional per-subdomain list of (n_elements, 3) values
    sampled at triangle vertices (duplicated points keep element-wise
    discontinuities visible).
    """
    points = []
    polys = []
    values = []
    offset = 0
    for sub in mesh.subdomains:
        pts = sub.vertices[sub.triangles].reshape(-1, 2)
        points.append(pts)
        idx = np.arange(len(pts)).reshape(-1, 3) + offset
        polys.append(idx)
        offset += len(pts)
        if point_data is not None:
            values.append(np.asarray(point_data[sub.id], dtype=float).reshape(-1))
    points = np.vstack(points)
    polys = np.vstack(polys)
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\nmshdg mesh\nASCII\nDATASET POLYDATA\n")
        fh.write(f"POINTS {len(points)} double\n")
        for p in points:
            fh.write(f"{p[0]!r} {p[1]!r} 0.0\n")
        fh.write(f"POLYGONS {len(polys)} {4 * len(polys)}\n")
        for t in polys:
            fh.write(f"3 {t[0]} {t[1]} {t[2]}\n")
        if point_data is not None:
            vals = np.concatenate(values)
            fh.write(f"POINT_DATA {len(vals)}\n")
            fh.write(f"SCALARS {data_name} double 1\nLOOKUP_TABLE default\n")
            for v in vals:
                fh.write(f"{v!r}\n")
