"""Field sampling on a uniform grid and snapshot file output.

A snapshot samples the discrete fields on a uniform physical grid covering
the bounding box of the active mesh.  Grid points outside the fluid (in the
solid, or outside the active background elements) are masked and carry NaN;
field values are never extrapolated across the solid.

File format: each snapshot is written twice, as a legacy VTK structured-
points ASCII file and as a CSV table.  The VTK layout is, byte for byte::

    # vtk DataFile Version 3.0\n
    <title line: "time=<float>">\n
    ASCII\n
    DATASET STRUCTURED_POINTS\n
    DIMENSIONS <nx> <ny> 1\n
    ORIGIN <x0> <y0> 0.0\n
    SPACING <dx> <dy> 1.0\n
    POINT_DATA <nx*ny>\n
    SCALARS <name> double 1\n
    LOOKUP_TABLE default\n
    <one value per line, x varying fastest, y slowest; "nan" when masked>
    ... (one SCALARS block per field, in the order phi, ux, uy, p, mu, mask)

All floats are written with repr (full double precision); the mask field is
1.0 inside the fluid and 0.0 outside.  The CSV carries the columns
x, y, mask, phi, ux, uy, p, mu with one row per grid point in the same
ordering.
"""

from __future__ import annotations

import csv as csvlib
from dataclasses import dataclass, field

import numpy as np

FIELD_NAMES = ("phi", "ux", "uy", "p", "mu")


@dataclass
class FieldSnapshot:
    """Sampled fields on a uniform physical grid.

    ``values[name]`` has shape (ny, nx); masked-out entries are NaN.
    ``mask`` is True inside the fluid.
    """

    x: np.ndarray            # (nx,)
    y: np.ndarray            # (ny,)
    time: float
    mask: np.ndarray         # (ny, nx) bool
    values: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.y.size, self.x.size


def sample(disc, U, nx=200, ny=100, time=0.0) -> FieldSnapshot:
    """Sample all five fields of a state vector on an nx-by-ny grid.

    The grid covers the physical bounding box of the active elements.
    Points whose containing background element is inactive, or where the
    level set reports solid, are masked.
    """
    mesh = disc.mesh
    amb = mesh.ambient
    corners_amb = []
    for eid in mesh.active_elements:
        lo, hi = amb.element_box(eid)
        corners_amb.append(lo)
        corners_amb.append(hi)
    corners_amb = np.array(corners_amb)
    corners = amb.to_physical(
        np.array([[x, y] for x in (corners_amb[:, 0].min(), corners_amb[:, 0].max())
                  for y in (corners_amb[:, 1].min(), corners_amb[:, 1].max())]))
    xs = np.linspace(corners[:, 0].min(), corners[:, 0].max(), nx)
    ys = np.linspace(corners[:, 1].min(), corners[:, 1].max(), ny)
    X, Y = np.meshgrid(xs, ys)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    pts_amb = amb.to_ambient(pts)

    ox, oy = amb.origin
    ex, ey = amb.extents
    inside_box = ((pts_amb[:, 0] >= ox) & (pts_amb[:, 0] <= ox + ex)
                  & (pts_amb[:, 1] >= oy) & (pts_amb[:, 1] <= oy + ey))
    inside_fluid = mesh.levelset(pts) < 0.0
    active = np.zeros(pts.shape[0], dtype=bool)
    idx = np.flatnonzero(inside_box & inside_fluid)
    if idx.size:
        eids = disc.space.locate(pts_amb[idx])
        active[idx] = np.isin(eids, mesh.active_elements)

    snap = FieldSnapshot(x=xs, y=ys, time=float(time),
                         mask=active.reshape(ny, nx))
    n = disc.n_scalar
    for name in FIELD_NAMES:
        vals = np.full(pts.shape[0], np.nan)
        if np.any(active):
            coeffs = U[disc.off[name]:disc.off[name] + n]
            vals[active] = disc.evaluate_scalar(coeffs, pts_amb[active])
        snap.values[name] = vals.reshape(ny, nx)
    return snap


def _flat(arr):
    # x fastest, y slowest, matching the structured-points convention
    return np.asarray(arr, dtype=float).ravel()


def write_snapshot(snap: FieldSnapshot, base_path) -> tuple:
    """Write a snapshot as <base>.vtk and <base>.csv; returns both paths."""
    base = str(base_path)
    vtk_path, csv_path = base + ".vtk", base + ".csv"
    ny, nx = snap.shape
    dx = float(snap.x[1] - snap.x[0]) if nx > 1 else 1.0
    dy = float(snap.y[1] - snap.y[0]) if ny > 1 else 1.0

    lines = [
        "# vtk DataFile Version 3.0",
        f"time={float(snap.time)!r}",
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {nx} {ny} 1",
        f"ORIGIN {float(snap.x[0])!r} {float(snap.y[0])!r} 0.0",
        f"SPACING {dx!r} {dy!r} 1.0",
        f"POINT_DATA {nx * ny}",
    ]
    blocks = [(name, _flat(snap.values[name])) for name in FIELD_NAMES]
    blocks.append(("mask", _flat(snap.mask.astype(float))))
    for name, vals in blocks:
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(repr(float(v)) for v in vals)
    try:
        with open(vtk_path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        with open(csv_path, "w", newline="") as fh:
            writer = csvlib.writer(fh)
            writer.writerow(["x", "y", "mask"] + list(FIELD_NAMES))
            for j in range(ny):
                for i in range(nx):
                    writer.writerow(
                        [repr(float(snap.x[i])), repr(float(snap.y[j])),
                         int(snap.mask[j, i])]
                        + [repr(float(snap.values[f][j, i]))
                           for f in FIELD_NAMES])
    except OSError as exc:
        raise OSError(f"cannot write snapshot to '{base}': {exc}") from exc
    return vtk_path, csv_path


def read_snapshot(path) -> FieldSnapshot:
    """Parse a snapshot written by :func:`write_snapshot` (the .vtk file)."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or not lines[0].startswith("# vtk DataFile"):
        raise ValueError(f"'{path}' is not a snapshot file")
    time = float(lines[1].split("=", 1)[1])
    header = {}
    i = 3
    while i < len(lines) and not lines[i].startswith("SCALARS"):
        parts = lines[i].split()
        if parts:
            header[parts[0]] = parts[1:]
        i += 1
    nx, ny = int(header["DIMENSIONS"][0]), int(header["DIMENSIONS"][1])
    x0, y0 = float(header["ORIGIN"][0]), float(header["ORIGIN"][1])
    dx, dy = float(header["SPACING"][0]), float(header["SPACING"][1])
    npts = nx * ny
    values = {}
    while i < len(lines):
        if not lines[i].startswith("SCALARS"):
            i += 1
            continue
        name = lines[i].split()[1]
        i += 2  # skip the LOOKUP_TABLE line
        vals = np.array([float(v) for v in lines[i:i + npts]])
        values[name] = vals.reshape(ny, nx)
        i += npts
    mask = values.pop("mask") > 0.5
    return FieldSnapshot(
        x=x0 + dx * np.arange(nx), y=y0 + dy * np.arange(ny),
        time=time, mask=mask, values=values)
