"""Checkpoints, CSV tables, legacy VTK, SVG contour plots and run manifests."""

from pathlib import Path

import numpy as np

CHECKPOINT_MAGIC = "INFHARM-CHECKPOINT"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def write_checkpoint(path, nodal_values, **header):
    """Labeled ASCII header lines, then little-endian float64 nodal values.

    Values are stored vertex-major, component-minor. Header values are
    written with repr so floats round-trip exactly.
    """
    vals = np.ascontiguousarray(nodal_values, dtype="<f8")
    lines = [CHECKPOINT_MAGIC, f"version {CHECKPOINT_VERSION}"]
    for key, value in header.items():
        if any(c.isspace() for c in key):
            raise CheckpointError(f"header key {key!r} contains whitespace")
        lines.append(f"{key} {_fmt(value)}")
    lines.append(f"n_vertices {vals.shape[0]}")
    lines.append(f"n_components {vals.shape[1]}")
    lines.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        fh.write(vals.tobytes())


def _parse_value(text):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def read_checkpoint(path):
    """Return (header dict, nodal_values array of shape (n_vertices, N))."""
    data = Path(path).read_bytes()
    end = data.find(b"end_header\n")
    if not data.startswith(CHECKPOINT_MAGIC.encode()) or end < 0:
        raise CheckpointError(f"{path} is not a checkpoint file")
    header = {}
    for line in data[:end].decode("ascii").splitlines()[1:]:
        key, _, value = line.partition(" ")
        header[key] = _parse_value(value)
    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {header.get('version')}")
    shape = (header["n_vertices"], header["n_components"])
    body = data[end + len(b"end_header\n"):]
    if len(body) != 8 * shape[0] * shape[1]:
        raise CheckpointError(f"{path}: expected {shape} values, found {len(body) // 8}")
    return header, np.frombuffer(body, dtype="<f8").reshape(shape).copy()


def write_csv(path, columns: dict):
    """Columns of equal length, written with 17 significant digits."""
    names = list(columns)
    arr = np.column_stack([np.asarray(columns[n], dtype=float) for n in names])
    np.savetxt(path, arr, delimiter=",", header=",".join(names), comments="", fmt="%.17g")


def read_csv(path):
    arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    with open(path) as fh:
        names = fh.readline().strip().split(",")
    return {n: arr[:, i] for i, n in enumerate(names)}


def write_solution_csv(path, field):
    cols = {"x": field.mesh.vertices[:, 0], "y": field.mesh.vertices[:, 1]}
    for a in range(field.n_components):
        cols[f"U{a + 1}"] = field.nodal_values[:, a]
    write_csv(path, cols)


def _pad3(points):
    pts = np.asarray(points, dtype=float)
    if pts.shape[1] < 3:
        pts = np.hstack([pts, np.zeros((len(pts), 3 - pts.shape[1]))])
    return pts


def write_vtk(path, points, triangles, point_data=None, cell_data=None, title="infharm"):
    """Legacy ASCII unstructured grid of triangles (cell type 5).

    Data arrays with one column become SCALARS, with 2 or 3 columns VECTORS
    (padded to 3). NaNs are written as they are, which VTK readers accept.
    """
    pts = _pad3(points)
    tris = np.asarray(triangles)
    out = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII",
           "DATASET UNSTRUCTURED_GRID", f"POINTS {len(pts)} double"]
    out += [" ".join(f"{v:.17g}" for v in row) for row in pts]
    out.append(f"CELLS {len(tris)} {4 * len(tris)}")
    out += [f"3 {a} {b} {c}" for a, b, c in tris]
    out.append(f"CELL_TYPES {len(tris)}")
    out += ["5"] * len(tris)

    def section(kind, n, data):
        if not data:
            return
        out.append(f"{kind} {n}")
        for name, values in data.items():
            v = np.asarray(values, dtype=float)
            if v.ndim == 1:
                out.append(f"SCALARS {name} double 1")
                out.append("LOOKUP_TABLE default")
                out.extend(f"{x:.17g}" for x in v)
            else:
                out.append(f"VECTORS {name} double")
                out.extend(" ".join(f"{x:.17g}" for x in row) for row in _pad3(v))

    section("POINT_DATA", len(pts), point_data)
    section("CELL_DATA", len(tris), cell_data)
    Path(path).write_text("\n".join(out) + "\n")


def _color(value, vmax):
    # blue-white-red, linear in value/vmax
    s = 0.0 if vmax == 0 else float(np.clip(value / vmax, -1.0, 1.0))
    if s >= 0:
        r, g, b = 255, int(round(255 * (1 - s))), int(round(255 * (1 - s)))
    else:
        r, g, b = int(round(255 * (1 + s))), int(round(255 * (1 + s))), 255
    return f"#{r:02x}{g:02x}{b:02x}"


def write_svg(path, mesh, element_values, contours, title="", size=600):
    """Colour-mapped triangles plus one <path> per contour polyline.

    Data coordinates [-1, 1]^2 map onto the drawing square, y pointing up.
    """
    vals = np.asarray(element_values, dtype=float)
    finite = vals[np.isfinite(vals)]
    vmax = float(np.abs(finite).max()) if finite.size else 1.0
    pad = 40
    scale = (size - 2 * pad) / 2.0

    def tx(p):
        return pad + (p[..., 0] + 1.0) * scale, pad + (1.0 - p[..., 1]) * scale

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}" data-xmin="-1" data-xmax="1" data-ymin="-1" data-ymax="1">']
    if title:
        out.append(f"<title>{title}</title>")
    out.append('<g id="field" stroke="none">')
    X, Y = tx(mesh.vertices[mesh.triangles])
    for k in range(len(vals)):
        pts = " ".join(f"{X[k, i]:.2f},{Y[k, i]:.2f}" for i in range(3))
        fill = _color(vals[k], vmax) if np.isfinite(vals[k]) else "#808080"
        out.append(f'<polygon points="{pts}" fill="{fill}" stroke="{fill}" stroke-width="0.3"/>')
    out.append("</g>")
    out.append('<g id="contours" fill="none" stroke="black" stroke-width="0.8">')
    for c in contours:
        cx, cy = tx(c.points)
        d = "M " + " L ".join(f"{x:.3f},{y:.3f}" for x, y in zip(cx, cy))
        if c.closed:
            d += " Z"
        out.append(f'<path d="{d}" data-level="{c.level:.4f}"/>')
    out.append("</g>")
    lo, hi = pad, size - pad
    out.append('<g id="axes" stroke="black" stroke-width="1" font-size="12" font-family="sans-serif">')
    out.append(f'<rect x="{lo}" y="{lo}" width="{hi - lo}" height="{hi - lo}" fill="none"/>')
    for t in (-1.0, -0.5, 0.0, 0.5, 1.0):
        x, _ = tx(np.array([t, 0.0]))
        _, y = tx(np.array([0.0, t]))
        out.append(f'<text x="{x:.1f}" y="{hi + 16}" text-anchor="middle" stroke="none">{t:g}</text>')
        out.append(f'<text x="{lo - 6}" y="{y + 4:.1f}" text-anchor="end" stroke="none">{t:g}</text>')
    out.append("</g>")
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")


def write_manifest(path, entries: dict):
    """Human-readable ``key = value`` lines; nested dicts become dotted keys."""
    lines = []

    def emit(prefix, obj):
        for key, value in obj.items():
            name = f"{prefix}.{key}" if prefix else str(key)
            if isinstance(value, dict):
                emit(name, value)
            elif isinstance(value, (list, tuple)):
                lines.append(f"{name} = {', '.join(_fmt(v) for v in value)}")
            else:
                lines.append(f"{name} = {_fmt(value)}")

    emit("", entries)
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line and not line.lstrip().startswith("#"):
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out
