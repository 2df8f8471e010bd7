"""Diagnostics of computed maps: phases, contours, projections, residuals."""

from dataclasses import dataclass, field

import numpy as np

from .fespace import VectorField, element_gradients
from .mesh import TriMesh

DEFAULT_LEVELS = np.round(np.linspace(-1.0, 1.0, 41), 12)


def nodal_average(mesh: TriMesh, element_values) -> np.ndarray:
    """Area-weighted average of element-constant data at the vertices."""
    vals = np.asarray(element_values, dtype=float)
    tail = vals.shape[1:]
    weighted = (mesh.areas.reshape((-1,) + (1,) * len(tail)) * vals)
    num = np.zeros((mesh.n_vertices,) + tail)
    den = np.zeros(mesh.n_vertices)
    for a in range(3):
        np.add.at(num, mesh.triangles[:, a], weighted)
        np.add.at(den, mesh.triangles[:, a], mesh.areas)
    return num / den.reshape((-1,) + (1,) * len(tail))


def recover_nodal_gradient(field: VectorField) -> np.ndarray:
    """(V, N, 2) vertex gradients from area-weighted averaging of element gradients."""
    return nodal_average(field.mesh, field.gradients())


def det_field(field: VectorField, nodal=False) -> np.ndarray:
    """det DU per element, or its nodal average when ``nodal`` is set. Needs N = 2."""
    if field.n_components != 2:
        raise ValueError("det DU is only defined for N = 2; use singular values instead")
    det = np.linalg.det(field.gradients())
    return nodal_average(field.mesh, det) if nodal else det


def singular_values(field: VectorField) -> np.ndarray:
    """(E, 2) singular values of DU per element, descending."""
    return np.linalg.svd(field.gradients(), compute_uv=False)


def area_density(field: VectorField) -> np.ndarray:
    """sigma_1 sigma_2 per element (|det DU| for N = 2)."""
    s = singular_values(field)
    return s[:, 0] * s[:, 1]


@dataclass
class Contour:
    level: float
    points: np.ndarray
    closed: bool

    @property
    def length(self) -> float:
        pts = np.vstack([self.points, self.points[:1]]) if self.closed else self.points
        return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


@dataclass
class PhaseField:
    tau: float
    norm: np.ndarray
    singular_values: np.ndarray
    rank: np.ndarray
    omega1_area: float
    omega2_area: float
    det: np.ndarray | None = None
    contours: list = field(default_factory=list)
    areas: np.ndarray | None = None

    @property
    def rank0_area(self) -> float:
        return float(self.areas[self.rank == 0].sum())


def _perturb_level(values, level):
    while np.any(values == level):
        level = level + 1e-13
    return level


def _segments(mesh, values, level):
    """Crossing segments of one level set, as pairs of (sorted) edge keys."""
    tri = mesh.triangles
    above = values[tri] > level  # (E, 3)
    n_above = above.sum(axis=1)
    cut = np.flatnonzero((n_above == 1) | (n_above == 2))
    segs = []
    for e in cut:
        t = tri[e]
        a = above[e]
        keys = []
        for i, j in ((0, 1), (1, 2), (2, 0)):
            if a[i] != a[j]:
                u, v = t[i], t[j]
                keys.append((u, v) if u < v else (v, u))
        segs.append((keys[0], keys[1]))
    return segs


def _edge_point(mesh, values, key, level):
    u, v = key
    fu, fv = values[u], values[v]
    s = (level - fu) / (fv - fu)
    return mesh.vertices[u] + s * (mesh.vertices[v] - mesh.vertices[u])


def contour_extract(mesh: TriMesh, nodal_values, levels) -> list:
    """Level sets of a P1 scalar field by marching triangles.

    Each level yields polylines through edge-crossing points, stitched
    across shared edges; a polyline is closed when it returns to its start.
    A level hitting a nodal value exactly is nudged up by 1e-13.
    """
    values = np.asarray(nodal_values, dtype=float)
    out = []
    for level in levels:
        if not np.isfinite(level):
            raise ValueError("contour levels must be finite")
        lev = _perturb_level(values, float(level))
        segs = _segments(mesh, values, lev)
        if not segs:
            continue
        touching = {}
        for s, (k1, k2) in enumerate(segs):
            touching.setdefault(k1, []).append(s)
            touching.setdefault(k2, []).append(s)
        used = np.zeros(len(segs), dtype=bool)

        def walk(start_key, s):
            chain = [start_key]
            key = start_key
            while s is not None and not used[s]:
                used[s] = True
                k1, k2 = segs[s]
                key = k2 if k1 == key else k1
                chain.append(key)
                nxt = [t for t in touching[key] if not used[t]]
                s = nxt[0] if nxt else None
            return chain

        # open chains start at edges that belong to a single segment (the boundary)
        for key in sorted(k for k, ss in touching.items() if len(ss) == 1):
            s = touching[key][0]
            if not used[s]:
                chain = walk(key, s)
                pts = np.array([_edge_point(mesh, values, k, lev) for k in chain])
                out.append(Contour(float(level), pts, closed=False))
        for s in range(len(segs)):
            if not used[s]:
                chain = walk(segs[s][0], s)
                pts = np.array([_edge_point(mesh, values, k, lev) for k in chain[:-1]])
                out.append(Contour(float(level), pts, closed=True))
    return out


def rank_classify(field: VectorField, tau=0.05, levels=None) -> PhaseField:
    """Phase classification by thresholded singular values.

    An element's rank counts singular values above tau * max(1, sigma_max).
    Contours of the nodal det field (N = 2) or of sigma_1 sigma_2 (N = 3)
    are extracted at ``levels`` (default -1 to 1 in steps of 0.05).
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    mesh = field.mesh
    G = field.gradients()
    s = np.linalg.svd(G, compute_uv=False)
    thresh = tau * np.maximum(1.0, s[:, 0])
    rank = np.sum(s > thresh[:, None], axis=1)
    areas = mesh.areas
    det = np.linalg.det(G) if field.n_components == 2 else None
    scalar = det if det is not None else s[:, 0] * s[:, 1]
    levels = DEFAULT_LEVELS if levels is None else levels
    contours = contour_extract(mesh, nodal_average(mesh, scalar), levels)
    return PhaseField(
        tau=tau,
        norm=np.sqrt(np.sum(G * G, axis=(1, 2))),
        singular_values=s,
        rank=rank,
        omega1_area=float(areas[rank <= 1].sum()),
        omega2_area=float(areas[rank == 2].sum()),
        det=det,
        contours=contours,
        areas=areas,
    )


def ortho_projection(G, rank_tol=1e-8):
    """Projection onto the orthogonal complement of range(G); batched over leading axes.

    Built as W W^T from the left singular vectors whose singular values are
    at or below rank_tol * sigma_max (plus those beyond the column count),
    so full-rank G gives exactly 0 and G = 0 gives the identity.
    """
    G = np.asarray(G, dtype=float)
    n_rows, n_cols = G.shape[-2:]
    Uf, s, _ = np.linalg.svd(G, full_matrices=True)
    sv = np.zeros(G.shape[:-2] + (n_rows,))
    sv[..., : s.shape[-1]] = s
    smax = s[..., :1]
    null = (sv <= rank_tol * smax) | (smax == 0)
    if n_rows > n_cols:
        null[..., n_cols:] = True
    W = Uf * null[..., None, :]
    return W @ np.swapaxes(W, -1, -2)


def infinity_residuals(field: VectorField, rank_tol=1e-8):
    """Tangential |Du (x) Du : D^2u| and normal | |Du|^2 [Du]^perp Lap u | per element.

    Du is the element mean of the recovered vertex gradient and D^2u the
    gradient of that recovered field, symmetrised.
    """
    mesh = field.mesh
    R = recover_nodal_gradient(field)  # (V, N, 2)
    Du = R[mesh.triangles].mean(axis=1)  # (E, N, 2)
    # H[e, a, j, i] = d_i (D_j u_a)
    H = np.einsum("eanj,eai->enji", R[mesh.triangles], mesh.grad_basis)
    H = 0.5 * (H + np.swapaxes(H, -1, -2))
    tang = np.einsum("eai,ebj,ebij->ea", Du, Du, H)
    lap = np.einsum("enii->en", H)
    P = ortho_projection(Du, rank_tol)
    norm2 = np.sum(Du * Du, axis=(1, 2))
    normal = norm2[:, None] * np.einsum("eab,eb->ea", P, lap)
    return np.linalg.norm(tang, axis=1), np.linalg.norm(normal, axis=1)


def angle_field(field: VectorField) -> np.ndarray:
    """Angle in [0, pi] between D_x U and D_y U per element; NaN where a column vanishes."""
    G = field.gradients()
    cx, cy = G[:, :, 0], G[:, :, 1]
    nx, ny = np.linalg.norm(cx, axis=1), np.linalg.norm(cy, axis=1)
    ok = (nx > 0) & (ny > 0)
    cos = np.full(len(G), np.nan)
    cos[ok] = np.sum(cx[ok] * cy[ok], axis=1) / (nx[ok] * ny[ok])
    return np.arccos(np.clip(cos, -1.0, 1.0))


def angle_spread(field: VectorField) -> float:
    """Area-weighted standard deviation of the angle field over defined elements."""
    ang = angle_field(field)
    ok = np.isfinite(ang)
    w = field.mesh.areas[ok]
    mean = np.sum(w * ang[ok]) / w.sum()
    return float(np.sqrt(np.sum(w * (ang[ok] - mean) ** 2) / w.sum()))


@dataclass
class ImageSurface:
    points: np.ndarray  # (V, N)
    triangles: np.ndarray


def image_surface(field: VectorField) -> ImageSurface:
    """The mesh pushed forward by U, same connectivity."""
    if field.n_components not in (2, 3):
        raise ValueError("image surfaces need N in {2, 3}")
    return ImageSurface(field.nodal_values.copy(), field.mesh.triangles)


def plane_deviation(points) -> float:
    """Largest distance of the points from their least-squares plane."""
    pts = np.asarray(points, dtype=float)
    centered = pts - pts.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    normal = vt[-1]
    return float(np.abs(centered @ normal).max())


def sigma2_integral(field: VectorField) -> float:
    """int_Omega sigma_2(DU), the area of the 'second direction' of the image."""
    return float(np.sum(field.mesh.areas * singular_values(field)[:, 1]))


def mean_over_box(field: VectorField, values, xlim, ylim) -> float:
    """Area-weighted mean of element values whose barycentres lie in the box."""
    c = field.mesh.barycenters
    inside = (c[:, 0] > xlim[0]) & (c[:, 0] < xlim[1]) & (c[:, 1] > ylim[0]) & (c[:, 1] < ylim[1])
    w = field.mesh.areas[inside]
    return float(np.sum(w * np.asarray(values)[inside]) / w.sum())


__all__ = [
    "DEFAULT_LEVELS", "nodal_average", "recover_nodal_gradient", "det_field", "singular_values",
    "area_density", "Contour", "PhaseField", "contour_extract", "rank_classify", "ortho_projection",
    "infinity_residuals", "angle_field", "angle_spread", "ImageSurface", "image_surface",
    "plane_deviation", "sigma2_integral", "mean_over_box", "element_gradients",
]
