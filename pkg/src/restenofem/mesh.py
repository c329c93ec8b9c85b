"""Structured hexahedral meshes for the block and artery-quadrant geometries.

Node ordering is lexicographic with the first grid direction running fastest
(x for the block, radial for the cylinder quadrant), which makes connectivity
reproducible bit-for-bit. Hexahedra use the standard trilinear corner order

    0:(-,-,-) 1:(+,-,-) 2:(+,+,-) 3:(-,+,-) 4:(-,-,+) 5:(+,-,+) 6:(+,+,+) 7:(-,+,+)

in local (xi, eta, zeta) coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Local corner -> (i, j, k) offsets on a structured grid. The grid directions
# (fastest, middle, slowest) map to (xi, eta, zeta).
_HEX_CORNERS = np.array(
    [
        (0, 0, 0),
        (1, 0, 0),
        (1, 1, 0),
        (0, 1, 0),
        (0, 0, 1),
        (1, 0, 1),
        (1, 1, 1),
        (0, 1, 1),
    ],
    dtype=int,
)

# Faces of the reference hex, ordered so that the quad normal
# (p1-p0) x (p3-p0) points out of the element.
_HEX_FACES = {
    "xi-": (0, 4, 7, 3),
    "xi+": (1, 2, 6, 5),
    "eta-": (0, 1, 5, 4),
    "eta+": (3, 7, 6, 2),
    "zeta-": (0, 3, 2, 1),
    "zeta+": (4, 5, 6, 7),
}


@dataclass(frozen=True)
class SurfacePatch:
    """Quadrilateral facets projected from the bulk mesh onto a boundary."""

    quads: np.ndarray  # (n_quads, 4) node indices, outward-oriented
    parent_elements: np.ndarray  # (n_quads,) bulk element owning each facet


@dataclass(frozen=True)
class Mesh:
    """Immutable hexahedral mesh with node sets and boundary patches.

    element_frames holds one orthonormal triad per element as rows
    (e_a, e_b, e_n): e_a is the reference axis fiber angles are measured
    from, e_b the in-plane transverse direction, e_n the plane normal.
    """

    nodes: np.ndarray  # (n_nodes, 3) reference coordinates [mm]
    elements: np.ndarray  # (n_elems, 8) connectivity
    layer_tags: np.ndarray  # (n_elems,) index into layer_names
    layer_names: tuple
    node_sets: dict = field(default_factory=dict)
    surface_patches: dict = field(default_factory=dict)
    element_frames: np.ndarray | None = None

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    def element_volumes(self) -> np.ndarray:
        """Reference volume per element by 2x2x2 Gauss quadrature."""
        from .elements import hex_quadrature, shape_hex8

        pts, wts = hex_quadrature()
        vols = np.zeros(self.n_elements)
        xe = self.nodes[self.elements]  # (ne, 8, 3)
        for (xi, eta, zeta), w in zip(pts, wts):
            _, dn = shape_hex8(xi, eta, zeta)
            jac = np.einsum("eai,aj->eij", xe, dn)
            vols += w * np.linalg.det(jac)
        return vols

    def corner_jacobians(self) -> np.ndarray:
        """det(dX/dxi) at the 8 corners of every element."""
        from .elements import shape_hex8

        xe = self.nodes[self.elements]
        dets = np.zeros((self.n_elements, 8))
        for a, (i, j, k) in enumerate(_HEX_CORNERS):
            xi, eta, zeta = 2.0 * i - 1.0, 2.0 * j - 1.0, 2.0 * k - 1.0
            _, dn = shape_hex8(xi, eta, zeta)
            jac = np.einsum("eai,aj->eij", xe, dn)
            dets[:, a] = np.linalg.det(jac)
        return dets


def fiber_frame(mesh: Mesh, element_id: int, alpha_deg: float):
    """Two unit fiber directions at +/- alpha from the element's reference axis.

    The vectors lie in the (e_a, e_b) plane of the element frame: the X-Y
    plane for the block, the longitudinal-circumferential tangent plane for
    the cylinder quadrant.
    """
    if mesh.element_frames is None:
        raise ValueError("mesh carries no element frames")
    if not 0 <= element_id < mesh.n_elements:
        raise IndexError(f"element {element_id} out of range")
    e_a, e_b, _ = mesh.element_frames[element_id]
    a = np.deg2rad(alpha_deg)
    a01 = np.cos(a) * e_a + np.sin(a) * e_b
    a02 = np.cos(a) * e_a - np.sin(a) * e_b
    return a01, a02


def fiber_frames(mesh: Mesh, alpha_by_layer) -> np.ndarray:
    """(n_elems, 2, 3) fiber pairs with a per-layer orientation angle [deg]."""
    if mesh.element_frames is None:
        raise ValueError("mesh carries no element frames")
    alphas = np.deg2rad(np.asarray([alpha_by_layer[mesh.layer_names[t]] for t in mesh.layer_tags]))
    e_a = mesh.element_frames[:, 0]
    e_b = mesh.element_frames[:, 1]
    c, s = np.cos(alphas)[:, None], np.sin(alphas)[:, None]
    return np.stack([c * e_a + s * e_b, c * e_a - s * e_b], axis=1)


def _grid_connectivity(nx: int, ny: int, nz: int) -> np.ndarray:
    """Hex connectivity on an (nx+1, ny+1, nz+1) node grid, x fastest."""

    def nid(i, j, k):
        return i + (nx + 1) * (j + (ny + 1) * k)

    conn = np.empty((nx * ny * nz, 8), dtype=int)
    e = 0
    for k in range(nz):
        for j in range(ny):
            for i in range(nx):
                conn[e] = [nid(i + di, j + dj, k + dk) for di, dj, dk in _HEX_CORNERS]
                e += 1
    return conn


def _face_patch(conn: np.ndarray, elem_ids: np.ndarray, face: str) -> SurfacePatch:
    quads = conn[elem_ids][:, list(_HEX_FACES[face])]
    return SurfacePatch(quads=quads, parent_elements=elem_ids.copy())


def build_block(side_length: float, divisions: int) -> Mesh:
    """Uniform cube mesh with face node sets and a top-face flux patch."""
    if side_length <= 0.0:
        raise ValueError(f"side_length must be positive, got {side_length}")
    if divisions < 1:
        raise ValueError(f"divisions must be >= 1, got {divisions}")

    n = divisions
    ticks = np.linspace(0.0, side_length, n + 1)
    zz, yy, xx = np.meshgrid(ticks, ticks, ticks, indexing="ij")
    nodes = np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])
    conn = _grid_connectivity(n, n, n)

    tol = 1e-12 * max(side_length, 1.0)
    node_sets = {
        "xmin": np.flatnonzero(nodes[:, 0] < tol),
        "xmax": np.flatnonzero(nodes[:, 0] > side_length - tol),
        "ymin": np.flatnonzero(nodes[:, 1] < tol),
        "ymax": np.flatnonzero(nodes[:, 1] > side_length - tol),
        "zmin": np.flatnonzero(nodes[:, 2] < tol),
        "zmax": np.flatnonzero(nodes[:, 2] > side_length - tol),
    }

    # Top layer of elements carries the flux interface on its zeta+ face.
    top_elems = np.arange((n - 1) * n * n, n * n * n)
    patches = {"flux": _face_patch(conn, top_elems, "zeta+")}

    frames = np.tile(np.eye(3), (conn.shape[0], 1, 1))
    return Mesh(
        nodes=nodes,
        elements=conn,
        layer_tags=np.zeros(conn.shape[0], dtype=int),
        layer_names=("homogeneous",),
        node_sets=node_sets,
        surface_patches=patches,
        element_frames=frames,
    )


def build_artery_quadrant(
    length: float,
    r_inner: float,
    r_media_outer: float,
    r_outer: float,
    divisions=(3, 20, 36),
    damage_window=(2.0, 3.0),
) -> Mesh:
    """Quarter-cylinder two-layer artery mesh with a damage-window flux patch.

    divisions = (radial per layer, circumferential, longitudinal);
    damage_window = (start, extent) along the axis. The flux patch collects
    the lumen facets lying inside the window, oriented toward the lumen.
    """
    if not (0.0 < r_inner < r_media_outer < r_outer):
        raise ValueError(
            f"radii must satisfy 0 < r_inner < r_media_outer < r_outer, "
            f"got ({r_inner}, {r_media_outer}, {r_outer})"
        )
    if length <= 0.0:
        raise ValueError(f"length must be positive, got {length}")
    nr, nc, nl = divisions
    if min(nr, nc, nl) < 1:
        raise ValueError(f"divisions must be >= 1, got {divisions}")
    a, ld = damage_window
    if ld <= 0.0 or a < 0.0 or a + ld > length + 1e-12:
        raise ValueError(f"damage window {damage_window} not inside [0, {length}]")

    radii = np.concatenate(
        [
            np.linspace(r_inner, r_media_outer, nr + 1),
            np.linspace(r_media_outer, r_outer, nr + 1)[1:],
        ]
    )
    thetas = np.linspace(0.0, 0.5 * np.pi, nc + 1)
    zs = np.linspace(0.0, length, nl + 1)

    # radial fastest, then circumferential, then longitudinal
    r_grid = radii[None, None, :] * np.ones((nl + 1, nc + 1, 2 * nr + 1))
    t_grid = thetas[None, :, None] * np.ones_like(r_grid)
    z_grid = zs[:, None, None] * np.ones_like(r_grid)
    nodes = np.column_stack(
        [
            (r_grid * np.cos(t_grid)).ravel(),
            (r_grid * np.sin(t_grid)).ravel(),
            z_grid.ravel(),
        ]
    )
    conn = _grid_connectivity(2 * nr, nc, nl)

    # Element grid indices for tagging and patch extraction.
    ne = conn.shape[0]
    ir = np.arange(ne) % (2 * nr)
    layer_tags = (ir >= nr).astype(int)

    rad = np.hypot(nodes[:, 0], nodes[:, 1])
    tol = 1e-10 * r_outer
    node_sets = {
        "theta0": np.flatnonzero(np.abs(nodes[:, 1]) < tol),
        "theta90": np.flatnonzero(np.abs(nodes[:, 0]) < tol),
        "zmin": np.flatnonzero(np.abs(nodes[:, 2]) < tol),
        "zmax": np.flatnonzero(np.abs(nodes[:, 2] - length) < tol),
        "lumen": np.flatnonzero(np.abs(rad - r_inner) < tol),
        "outer": np.flatnonzero(np.abs(rad - r_outer) < tol),
    }

    # Lumen facets (xi- face of innermost-ring elements) within the window.
    inner = np.flatnonzero(ir == 0)
    ztol = 1e-10 * length
    zlo = nodes[conn[inner]][:, :, 2].min(axis=1)
    zhi = nodes[conn[inner]][:, :, 2].max(axis=1)
    lumen_elems = inner[(zlo >= -ztol) & (zhi <= length + ztol)]
    in_window = inner[(zlo >= a - ztol) & (zhi <= a + ld + ztol)]
    if in_window.size == 0:
        raise ValueError(f"damage window {damage_window} contains no lumen facets")
    patches = {
        "flux": _face_patch(conn, in_window, "xi-"),
        "lumen": _face_patch(conn, lumen_elems, "xi-"),
    }

    # Frames: fibers measured from the longitudinal axis within the
    # circumferential-longitudinal tangent plane at the element centroid.
    cen = nodes[conn].mean(axis=1)
    e_r = np.column_stack([cen[:, 0], cen[:, 1], np.zeros(ne)])
    e_r /= np.linalg.norm(e_r, axis=1, keepdims=True)
    e_z = np.tile([0.0, 0.0, 1.0], (ne, 1))
    e_t = np.cross(e_z, e_r)
    frames = np.stack([e_z, e_t, e_r], axis=1)

    return Mesh(
        nodes=nodes,
        elements=conn,
        layer_tags=layer_tags,
        layer_names=("media", "adventitia"),
        node_sets=node_sets,
        surface_patches=patches,
        element_frames=frames,
    )
