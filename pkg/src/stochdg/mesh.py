"""Uniform triangulations of rectangles with the edge topology DG assembly needs.

Triangles are stored counterclockwise. Every edge knows its owning
triangle(s), the local vertex slots of its endpoints inside each owner, its
length and its unit normal. For interior edges the normal points out of the
first owner (``interior_edges[:, 0]``); for boundary edges it is the outward
normal of the domain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidDomainError, ContractViolation


@dataclass(frozen=True)
class Mesh:
    vertices: np.ndarray          # (nv, 2)
    triangles: np.ndarray         # (nt, 3), counterclockwise
    interior_edges: np.ndarray    # (ni, 4): tri_a, tri_b, v0, v1
    boundary_edges: np.ndarray    # (nb, 3): tri, v0, v1
    interior_local: np.ndarray    # (ni, 2, 2): local slot of (v0, v1) in tri_a / tri_b
    boundary_local: np.ndarray    # (nb, 2): local slot of (v0, v1) in tri
    interior_normals: np.ndarray  # (ni, 2), outward from tri_a
    boundary_normals: np.ndarray  # (nb, 2), outward from the domain
    interior_lengths: np.ndarray
    boundary_lengths: np.ndarray
    areas: np.ndarray
    diameters: np.ndarray
    domain: tuple

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_dofs(self) -> int:
        """Linear DG degrees of freedom (three nodal values per triangle)."""
        return 3 * len(self.triangles)

    @property
    def h(self) -> float:
        return float(self.diameters.max())

    def triangle_coords(self) -> np.ndarray:
        """Vertex coordinates per triangle, shape (nt, 3, 2)."""
        return self.vertices[self.triangles]

    def dof_coords(self) -> np.ndarray:
        """Physical location of every nodal DG degree of freedom, shape (3 nt, 2)."""
        return self.triangle_coords().reshape(-1, 2)

    def interior_midpoints(self) -> np.ndarray:
        e = self.interior_edges
        return 0.5 * (self.vertices[e[:, 2]] + self.vertices[e[:, 3]])

    def boundary_midpoints(self) -> np.ndarray:
        e = self.boundary_edges
        return 0.5 * (self.vertices[e[:, 1]] + self.vertices[e[:, 2]])


def _check_domain(domain):
    try:
        x0, x1, y0, y1 = (float(v) for v in domain)
    except (TypeError, ValueError) as exc:
        raise InvalidDomainError(f"domain must be (x0, x1, y0, y1), got {domain!r}") from exc
    if not all(np.isfinite([x0, x1, y0, y1])):
        raise InvalidDomainError(f"domain bounds must be finite, got {domain!r}")
    if not (x1 > x0 and y1 > y0):
        raise InvalidDomainError(f"degenerate rectangle {domain!r}")
    return x0, x1, y0, y1


def build_uniform(domain=(-1.0, 1.0, -1.0, 1.0), refinement_level: int = 0) -> Mesh:
    """Uniform 2^L x 2^L grid, each square cut along its bottom-left/top-right diagonal.

    Level L gives 2 * 4^L triangles and 6 * 4^L linear DG unknowns.
    """
    x0, x1, y0, y1 = _check_domain(domain)
    if int(refinement_level) != refinement_level or refinement_level < 0:
        raise ContractViolation(f"refinement_level must be a non-negative integer, got {refinement_level!r}")
    n = 2 ** int(refinement_level)

    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    i, j = i.ravel(), j.ravel()
    v00 = j * (n + 1) + i
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    return from_triangles(vertices, triangles, domain=(x0, x1, y0, y1))


def from_triangles(vertices, triangles, domain=None) -> Mesh:
    """Build the edge topology for an arbitrary conforming triangulation."""
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.asarray(triangles, dtype=np.int64).copy()

    p = vertices[triangles]
    signed = 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                    - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
    flip = signed < 0
    triangles[flip] = triangles[flip][:, [0, 2, 1]]
    areas = np.abs(signed)
    if np.any(areas <= 0):
        raise InvalidDomainError("triangulation contains zero-area triangles")

    # local edge k joins local vertices (k, k+1 mod 3)
    nt = len(triangles)
    loc_a = np.array([0, 1, 2])
    loc_b = np.array([1, 2, 0])
    ea = triangles[:, loc_a].ravel()
    eb = triangles[:, loc_b].ravel()
    tri_of = np.repeat(np.arange(nt), 3)
    la = np.tile(loc_a, nt)
    lb = np.tile(loc_b, nt)
    key = np.minimum(ea, eb) * len(vertices) + np.maximum(ea, eb)
    order = np.argsort(key, kind="stable")
    key_s = key[order]
    starts = np.flatnonzero(np.r_[True, key_s[1:] != key_s[:-1]])
    counts = np.diff(np.r_[starts, len(key_s)])
    if np.any(counts > 2):
        raise InvalidDomainError("non-manifold edge shared by more than two triangles")

    first = order[starts]
    interior_first = first[counts == 2]
    interior_second = order[starts[counts == 2] + 1]
    boundary_first = first[counts == 1]

    # interior edge oriented along tri_a's local edge (v0 -> v1 counterclockwise in tri_a)
    ta = tri_of[interior_first]
    tb = tri_of[interior_second]
    v0 = ea[interior_first]
    v1 = eb[interior_first]
    interior_edges = np.column_stack([ta, tb, v0, v1])
    # in tri_b the same edge runs v1 -> v0
    interior_local = np.empty((len(ta), 2, 2), dtype=np.int64)
    interior_local[:, 0, 0] = la[interior_first]
    interior_local[:, 0, 1] = lb[interior_first]
    interior_local[:, 1, 0] = lb[interior_second]
    interior_local[:, 1, 1] = la[interior_second]

    tbd = tri_of[boundary_first]
    boundary_edges = np.column_stack([tbd, ea[boundary_first], eb[boundary_first]])
    boundary_local = np.column_stack([la[boundary_first], lb[boundary_first]])

    def normals_of(a, b):
        d = vertices[b] - vertices[a]
        length = np.hypot(d[:, 0], d[:, 1])
        # counterclockwise traversal: outward normal is the tangent rotated clockwise
        n = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]
        return n, length

    interior_normals, interior_lengths = normals_of(v0, v1)
    boundary_normals, boundary_lengths = normals_of(boundary_edges[:, 1], boundary_edges[:, 2])

    sides = np.stack([np.linalg.norm(p[:, 1] - p[:, 0], axis=1),
                      np.linalg.norm(p[:, 2] - p[:, 1], axis=1),
                      np.linalg.norm(p[:, 0] - p[:, 2], axis=1)], axis=1)
    # after orientation fix p is stale only in ordering; side lengths are invariant
    diameters = sides.max(axis=1)

    if domain is None:
        domain = (vertices[:, 0].min(), vertices[:, 0].max(),
                  vertices[:, 1].min(), vertices[:, 1].max())

    return Mesh(vertices=vertices, triangles=triangles,
                interior_edges=interior_edges, boundary_edges=boundary_edges,
                interior_local=interior_local, boundary_local=boundary_local,
                interior_normals=interior_normals, boundary_normals=boundary_normals,
                interior_lengths=interior_lengths, boundary_lengths=boundary_lengths,
                areas=areas, diameters=diameters, domain=tuple(domain))


@dataclass(frozen=True)
class InflowFlags:
    """Upwind classification of every edge, evaluated at edge midpoints.

    ``interior_a`` marks interior edges that are inflow for ``tri_a``
    (b . n_a < 0), ``interior_b`` those that are inflow for ``tri_b``
    (b . n_a > 0). Edges with b . n = 0 are outflow for both owners.
    """
    interior_a: np.ndarray
    interior_b: np.ndarray
    boundary: np.ndarray


def classify_inflow(mesh: Mesh, velocity) -> InflowFlags:
    """``velocity`` maps an (n, 2) array of points to (n, 2) velocities."""
    bi = np.asarray(velocity(mesh.interior_midpoints()), dtype=float).reshape(-1, 2)
    bb = np.asarray(velocity(mesh.boundary_midpoints()), dtype=float).reshape(-1, 2)
    sn_i = np.einsum("ij,ij->i", bi, mesh.interior_normals)
    sn_b = np.einsum("ij,ij->i", bb, mesh.boundary_normals)
    return InflowFlags(interior_a=sn_i < 0, interior_b=sn_i > 0, boundary=sn_b < 0)


def write_mesh(mesh: Mesh, path) -> None:
    """Plain-text dump: ``v x y`` lines followed by ``t i j k`` lines."""
    with open(path, "w") as fh:
        fh.write(f"# vertices {len(mesh.vertices)} triangles {len(mesh.triangles)}\n")
        for x, y in mesh.vertices:
            fh.write(f"v {x:.17g} {y:.17g}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"t {a} {b} {c}\n")
