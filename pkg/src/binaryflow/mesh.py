"""Background mesh construction and trimming.

The ambient domain is a rectilinear grid, optionally rigidly rotated; the
fluid domain is carved out of it by a level set.  Elements intersecting the
fluid form the active background mesh; interior faces between active
elements form the skeleton, and skeleton faces touching a trimmed element
form the ghost face set used for small-cut stabilization.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import logging

import numpy as np

from . import cutcell
from .cutcell import LevelSet

log = logging.getLogger(__name__)

SIDES = ("left", "right", "bottom", "top")
TAGS = ("inflow", "outflow", "wall", "symmetric")


class ConfigurationError(ValueError):
    pass


class EmptyDomainError(ValueError):
    pass


@dataclass(frozen=True)
class AmbientMesh:
    """Uniform rectilinear mesh over the (possibly rotated) ambient box.

    The grid lives in its own "ambient" coordinate frame; physical points are
    obtained by rotating ambient points by ``theta`` about the coordinate
    origin.  Level sets and boundary data are always expressed in the
    physical frame.
    """

    origin: tuple
    extents: tuple
    counts: tuple
    theta: float = 0.0
    periodic: tuple = (False, False)

    def __post_init__(self):
        if min(self.counts) < 1:
            raise ConfigurationError("element counts must be >= 1 per axis")
        if min(self.extents) <= 0.0:
            raise ConfigurationError("extents must be positive")

    @property
    def h(self):
        return (self.extents[0] / self.counts[0], self.extents[1] / self.counts[1])

    @property
    def n_elements(self):
        return self.counts[0] * self.counts[1]

    @property
    def rotation(self):
        c, s = np.cos(self.theta), np.sin(self.theta)
        return np.array([[c, -s], [s, c]])

    def to_physical(self, pts):
        return np.asarray(pts, dtype=float) @ self.rotation.T

    def to_ambient(self, pts):
        return np.asarray(pts, dtype=float) @ self.rotation

    def element_id(self, ix, iy):
        return ix * self.counts[1] + iy

    def element_index(self, eid):
        return divmod(eid, self.counts[1])

    def element_box(self, eid):
        ix, iy = self.element_index(eid)
        hx, hy = self.h
        lo = np.array([self.origin[0] + ix * hx, self.origin[1] + iy * hy])
        return lo, lo + np.array([hx, hy])


def build_ambient(origin, extents, counts, theta=0.0, periodic=(False, False)) -> AmbientMesh:
    """Construct the ambient mesh; raises ConfigurationError on bad input."""
    return AmbientMesh(tuple(origin), tuple(extents), tuple(counts),
                       float(theta), tuple(periodic))


@dataclass(frozen=True)
class Face:
    """Interior face between element (ix, iy) and its +axis neighbor."""

    axis: int
    ix: int
    iy: int

    def elements(self, ambient: AmbientMesh):
        if self.axis == 0:
            return (ambient.element_id(self.ix, self.iy),
                    ambient.element_id(self.ix + 1, self.iy))
        return (ambient.element_id(self.ix, self.iy),
                ambient.element_id(self.ix, self.iy + 1))

    def geometry(self, ambient: AmbientMesh):
        """Endpoints of the face segment in ambient coordinates."""
        hx, hy = ambient.h
        x0 = ambient.origin[0] + self.ix * hx
        y0 = ambient.origin[1] + self.iy * hy
        if self.axis == 0:
            a = np.array([x0 + hx, y0])
            b = np.array([x0 + hx, y0 + hy])
        else:
            a = np.array([x0, y0 + hy])
            b = np.array([x0 + hx, y0 + hy])
        return a, b


@dataclass(frozen=True)
class BoundaryFacet:
    """Outer facet of an active element lying on the ambient box boundary."""

    side: str
    element: int
    points: np.ndarray   # trimmed quadrature points, ambient frame (n, 2)
    weights: np.ndarray  # arc-length weights (n,)

    @property
    def measure(self):
        return float(np.sum(self.weights))


@dataclass
class ImmersedMesh:
    """Active background mesh with its trimming data."""

    ambient: AmbientMesh
    levelset: LevelSet
    active_elements: list            # sorted element ids
    cut_elements: set                # subset of active
    quadratures: dict                # eid -> cutcell.ElementQuadrature (ambient frame)
    skeleton_faces: list             # list[Face]
    ghost_faces: list                # list[Face], subset of skeleton
    boundary_facets: list            # list[BoundaryFacet]
    boundary_tags: dict = field(default_factory=dict)   # side -> tag
    octree_depth: int = cutcell.DEFAULT_DEPTH
    gauss_order: int = cutcell.DEFAULT_GAUSS_ORDER

    @property
    def cut_fraction(self):
        return len(self.cut_elements) / max(len(self.active_elements), 1)

    def facet_tag(self, side):
        return self.boundary_tags.get(side, "wall")

    def facets_by_tag(self, tag):
        return [f for f in self.boundary_facets if self.facet_tag(f.side) == tag]

    def domain_area(self):
        return sum(self.quadratures[e].volume for e in self.active_elements)

    def immersed_perimeter(self):
        return sum(self.quadratures[e].surface_measure for e in self.cut_elements)

    def summary(self) -> str:
        amb = self.ambient
        lines = [
            f"ambient mesh: {amb.counts[0]} x {amb.counts[1]} elements, "
            f"h = ({amb.h[0]:.6g}, {amb.h[1]:.6g}), theta = {amb.theta:.6g} rad",
            f"level set: {self.levelset.description}",
            f"active elements: {len(self.active_elements)} of {amb.n_elements}",
            f"cut elements: {len(self.cut_elements)} "
            f"(cut fraction {self.cut_fraction:.3f})",
            f"skeleton faces: {len(self.skeleton_faces)}",
            f"ghost faces: {len(self.ghost_faces)}",
            f"fluid area: {self.domain_area():.6g}",
            f"immersed boundary length: {self.immersed_perimeter():.6g}",
        ]
        for side in SIDES:
            facets = [f for f in self.boundary_facets if f.side == side]
            if facets:
                meas = sum(f.measure for f in facets)
                lines.append(f"boundary '{side}': tag={self.facet_tag(side)}, "
                             f"{len(facets)} facets, length {meas:.6g}")
        return "\n".join(lines)


def _facet_segment(ambient: AmbientMesh, side: str, eid: int):
    lo, hi = ambient.element_box(eid)
    if side == "left":
        return np.array([lo[0], lo[1]]), np.array([lo[0], hi[1]])
    if side == "right":
        return np.array([hi[0], lo[1]]), np.array([hi[0], hi[1]])
    if side == "bottom":
        return np.array([lo[0], lo[1]]), np.array([hi[0], lo[1]])
    return np.array([lo[0], hi[1]]), np.array([hi[0], hi[1]])


def classify_elements(ambient: AmbientMesh, ls: LevelSet,
                      depth: int = cutcell.DEFAULT_DEPTH,
                      gauss_order: int = cutcell.DEFAULT_GAUSS_ORDER) -> ImmersedMesh:
    """Trim the ambient mesh against a level set.

    An element is active when its trimmed quadrature carries positive
    measure; elements whose octree rule reports an intersected configuration
    are marked as cut.
    """
    nx, ny = ambient.counts

    def f_ambient(pts):
        return ls.evaluator(ambient.to_physical(pts))

    active = []
    cut = set()
    quads = {}
    for eid in range(ambient.n_elements):
        lo, hi = ambient.element_box(eid)
        q = cutcell.element_quadrature(lo, hi, f_ambient, depth, gauss_order)
        if q.volume_weights.size == 0:
            continue
        active.append(eid)
        quads[eid] = q
        if q.cut:
            cut.add(eid)

    if not active:
        raise EmptyDomainError(
            f"level set '{ls.description}' leaves no fluid inside the ambient domain")

    active_set = set(active)
    skeleton = []
    ghost = []
    for ix in range(nx):
        for iy in range(ny):
            for axis in (0, 1):
                jx, jy = (ix + 1, iy) if axis == 0 else (ix, iy + 1)
                # wrap the neighbor index on periodic axes (adds the seam face)
                if jx >= nx:
                    if not ambient.periodic[0]:
                        continue
                    jx = 0
                if jy >= ny:
                    if not ambient.periodic[1]:
                        continue
                    jy = 0
                e0 = ambient.element_id(ix, iy)
                e1 = ambient.element_id(jx, jy)
                if e0 in active_set and e1 in active_set:
                    face = Face(axis, ix, iy)
                    skeleton.append(face)
                    if e0 in cut or e1 in cut:
                        ghost.append(face)

    facets = []
    for eid in active:
        ix, iy = ambient.element_index(eid)
        for side, on_boundary in (("left", ix == 0), ("right", ix == nx - 1),
                                  ("bottom", iy == 0), ("top", iy == ny - 1)):
            if not on_boundary:
                continue
            if ambient.periodic[0] and side in ("left", "right"):
                continue
            if ambient.periodic[1] and side in ("bottom", "top"):
                continue
            a, b = _facet_segment(ambient, side, eid)
            pts, wts = cutcell.line_quadrature(a, b, f_ambient, depth, gauss_order)
            if wts.size and np.sum(wts) > 0.0:
                facets.append(BoundaryFacet(side, eid, pts, wts))

    return ImmersedMesh(ambient, ls, active, cut, quads, skeleton, ghost, facets,
                        octree_depth=depth, gauss_order=gauss_order)


def tag_conforming_boundaries(mesh: ImmersedMesh, tag_spec: dict) -> ImmersedMesh:
    """Assign boundary tags per ambient box side; untagged sides default to wall."""
    for side, tag in tag_spec.items():
        if side not in SIDES:
            raise ConfigurationError(
                f"unknown boundary segment '{side}'; conforming segments are {SIDES}")
        if tag not in TAGS:
            raise ConfigurationError(f"unknown boundary tag '{tag}'; valid tags are {TAGS}")
        if not any(f.side == side for f in mesh.boundary_facets):
            raise ConfigurationError(
                f"boundary segment '{side}' does not touch the active mesh")
    for side in SIDES:
        if side not in tag_spec and any(f.side == side for f in mesh.boundary_facets):
            log.info("boundary side '%s' untagged; defaulting to wall", side)
    mesh.boundary_tags = dict(tag_spec)
    return mesh
