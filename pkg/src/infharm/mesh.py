"""Structured triangulations of the square (-1, 1)^2."""

from dataclasses import dataclass, field

import numpy as np


class MeshError(ValueError):
    """Raised for invalid mesh parameters or corrupted (degenerate) elements."""


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Admissible triangulation with counterclockwise triangles.

    ``m`` is the number of grid cells per side for structured meshes and
    ``None`` for meshes assembled by hand (used in tests).
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_vertices: np.ndarray
    m: int | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for arr in (self.vertices, self.triangles, self.boundary_vertices):
            arr.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_elements(self) -> int:
        return len(self.triangles)

    @property
    def areas(self) -> np.ndarray:
        return self._geometry()[0]

    @property
    def grad_basis(self) -> np.ndarray:
        """(E, 3, 2) constant gradients of the local hat functions."""
        return self._geometry()[1]

    @property
    def diameters(self) -> np.ndarray:
        """Element diameters h_K (longest edge)."""
        if "h" not in self._cache:
            P = self.vertices[self.triangles]
            edges = P[:, [1, 2, 0]] - P
            self._cache["h"] = np.linalg.norm(edges, axis=2).max(axis=1)
        return self._cache["h"]

    @property
    def inradii(self) -> np.ndarray:
        if "rho" not in self._cache:
            P = self.vertices[self.triangles]
            perim = np.linalg.norm(P[:, [1, 2, 0]] - P, axis=2).sum(axis=1)
            self._cache["rho"] = 2.0 * self.areas / perim
        return self._cache["rho"]

    @property
    def h_max(self) -> float:
        return float(self.diameters.max())

    @property
    def mu(self) -> float:
        """Shape regularity constant min_K rho_K / h_K."""
        return float((self.inradii / self.diameters).min())

    @property
    def barycenters(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @property
    def free_vertices(self) -> np.ndarray:
        if "free" not in self._cache:
            mask = np.ones(self.n_vertices, dtype=bool)
            mask[self.boundary_vertices] = False
            self._cache["free"] = np.flatnonzero(mask)
        return self._cache["free"]

    def _geometry(self):
        if "geom" not in self._cache:
            P = self.vertices[self.triangles]
            e1 = P[:, 1] - P[:, 0]
            e2 = P[:, 2] - P[:, 0]
            det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
            if np.any(det <= 0):
                bad = int(np.flatnonzero(det <= 0)[0])
                raise MeshError(f"element {bad} is degenerate or clockwise")
            # rows of the inverse Jacobian give gradients of the barycentric coords 1, 2
            g1 = np.stack([e2[:, 1], -e2[:, 0]], axis=1) / det[:, None]
            g2 = np.stack([-e1[:, 1], e1[:, 0]], axis=1) / det[:, None]
            grads = np.stack([-g1 - g2, g1, g2], axis=1)
            self._cache["geom"] = (0.5 * det, grads)
        return self._cache["geom"]

    def element_geometry(self, k: int):
        """Area of element ``k`` and the (3, 2) gradients of its hat functions."""
        if not 0 <= k < self.n_elements:
            raise IndexError(f"element index {k} out of range")
        areas, grads = self._geometry()
        return float(areas[k]), grads[k].copy()

    def edges(self):
        """Unique edges (sorted vertex pairs) and how many triangles share each."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0, return_counts=True)

    def boundary_edges(self) -> np.ndarray:
        uniq, counts = self.edges()
        return uniq[counts == 1]

    def locate(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Containing element and barycentric coordinates for each point.

        Only available on structured meshes, where the cell is found by
        grid arithmetic.
        """
        if self.m is None:
            raise MeshError("point location needs a structured mesh")
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if np.any(np.abs(pts) > 1.0 + 1e-12):
            bad = pts[np.abs(pts).max(axis=1) > 1.0 + 1e-12][0]
            raise MeshError(f"point {tuple(bad)} lies outside the domain")
        m = self.m
        h = 2.0 / m
        s = np.clip((pts + 1.0) / h, 0.0, m)
        ij = np.minimum(np.floor(s).astype(int), m - 1)
        loc = s - ij
        upper = loc[:, 1] > loc[:, 0]
        elem = 2 * (ij[:, 1] * m + ij[:, 0]) + upper
        tri = self.vertices[self.triangles[elem]]
        # barycentric coordinates from the element's affine map
        e1 = tri[:, 1] - tri[:, 0]
        e2 = tri[:, 2] - tri[:, 0]
        r = pts - tri[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        l1 = (r[:, 0] * e2[:, 1] - r[:, 1] * e2[:, 0]) / det
        l2 = (e1[:, 0] * r[:, 1] - e1[:, 1] * r[:, 0]) / det
        bary = np.stack([1.0 - l1 - l2, l1, l2], axis=1)
        return elem, bary


def make_structured_mesh(m: int) -> TriMesh:
    """Split an m x m grid on (-1, 1)^2 into 2 m^2 right triangles.

    Every cell is cut along its bottom-left to top-right diagonal. Element
    ``2*(j*m + i)`` is the lower triangle of cell (i, j), ``+1`` the upper.
    """
    if not isinstance(m, (int, np.integer)) or m < 1:
        raise MeshError(f"mesh resolution must be a positive integer, got {m!r}")
    m = int(m)
    t = np.linspace(-1.0, 1.0, m + 1)
    X, Y = np.meshgrid(t, t)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(m), np.arange(m))
    a = (j * (m + 1) + i).ravel()
    b, c, d = a + 1, a + m + 2, a + m + 1
    lower = np.column_stack([a, b, c])
    upper = np.column_stack([a, c, d])
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)

    on_boundary = np.abs(vertices).max(axis=1) >= 1.0 - 1e-12
    return TriMesh(vertices, triangles, np.flatnonzero(on_boundary), m=m)
