"""Tensor-product B-spline spaces of maximal smoothness on the ambient grid.

Univariate bases are degree-k splines with uniform interior knots of
multiplicity one (C^{k-1} continuity), either clamped (open knot vector,
n_elem + k functions) or periodic (n_elem functions realized by wrapping the
connectivity of a uniform unclamped knot vector).  Only functions whose
support meets the active background mesh enter the global numbering.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import AmbientMesh, ImmersedMesh, Face, ConfigurationError
from .cutcell import gauss_legendre_01


def ders_basis_funs(span: int, x: float, degree: int, n_ders: int, knots: np.ndarray):
    """Values and derivatives of the nonzero B-splines on a knot span.

    Standard triangular-table recursion; returns an array of shape
    (n_ders + 1, degree + 1) for functions span-degree .. span.
    """
    p = degree
    ndu = np.empty((p + 1, p + 1))
    ndu[0, 0] = 1.0
    left = np.empty(p + 1)
    right = np.empty(p + 1)
    for j in range(1, p + 1):
        left[j] = x - knots[span + 1 - j]
        right[j] = knots[span + j] - x
        saved = 0.0
        for r in range(j):
            ndu[j, r] = right[r + 1] + left[j - r]
            temp = ndu[r, j - 1] / ndu[j, r]
            ndu[r, j] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        ndu[j, j] = saved

    ders = np.zeros((n_ders + 1, p + 1))
    ders[0, :] = ndu[:, p]

    a = np.empty((2, p + 1))
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[0, 0] = 1.0
        for kk in range(1, n_ders + 1):
            d = 0.0
            rk = r - kk
            pk = p - kk
            if r >= kk:
                a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk]
                d = a[s2, 0] * ndu[rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = kk - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pk + 1, rk + j]
                d += a[s2, j] * ndu[rk + j, pk]
            if r <= pk:
                a[s2, kk] = -a[s1, kk - 1] / ndu[pk + 1, r]
                d += a[s2, kk] * ndu[r, pk]
            ders[kk, r] = d
            s1, s2 = s2, s1

    r = float(p)
    for kk in range(1, n_ders + 1):
        ders[kk, :] *= r
        r *= p - kk
    return ders


class UnivariateSplines:
    """Degree-k spline basis on a uniform 1D partition of [x0, x0 + length]."""

    def __init__(self, k: int, n_elem: int, x0: float, length: float,
                 periodic: bool = False):
        if k < 1:
            raise ConfigurationError("spline order must be >= 1")
        if periodic and n_elem <= k:
            raise ConfigurationError("periodic axis needs more elements than the order")
        self.k = k
        self.n_elem = n_elem
        self.x0 = x0
        self.length = length
        self.h = length / n_elem
        self.periodic = periodic
        if periodic:
            # uniform unclamped knots; trailing functions wrap onto the leading ones
            self.knots = x0 + self.h * (np.arange(n_elem + 2 * k + 1) - k)
            self.n_funcs = n_elem
        else:
            interior = x0 + self.h * np.arange(n_elem + 1)
            self.knots = np.concatenate([
                np.full(k, x0), interior, np.full(k, x0 + length)])
            self.n_funcs = n_elem + k
        self._cache = {}

    def _span_class(self, e: int) -> int:
        """Representative element with identical local basis values.

        Interior elements of a clamped basis share one translation class;
        the k elements adjacent to either clamped end are their own class.
        Periodic spans all see the same uniform knot pattern.
        """
        k, n = self.k, self.n_elem
        if self.periodic:
            return min(k, n - 1)
        if e < k or e >= n - k or n <= 2 * k:
            return e
        return k

    def element_functions(self, e: int) -> np.ndarray:
        """Global (master) indices of the k+1 functions supported on element e."""
        idx = np.arange(e, e + self.k + 1)
        if self.periodic:
            idx = idx % self.n_elem
        return idx

    def evaluate_local(self, e: int, tloc, n_ders: int) -> np.ndarray:
        """Basis derivatives at local coordinates tloc in [0, 1] on element e.

        Returns (n_ders+1, n_points, k+1); derivatives are with respect to the
        ambient axis coordinate.  Values are cached per translation class, so
        interior elements share bit-identical tables.
        """
        tloc = np.atleast_1d(np.asarray(tloc, dtype=float))
        e_rep = self._span_class(e)
        key = (e_rep, n_ders, tloc.tobytes())
        out = self._cache.get(key)
        if out is None:
            span = e_rep + self.k
            xs = self.x0 + (e_rep + tloc) * self.h
            out = np.empty((n_ders + 1, tloc.size, self.k + 1))
            for i, x in enumerate(xs):
                out[:, i, :] = ders_basis_funs(span, x, self.k, n_ders, self.knots)
            self._cache[key] = out
        return out

    def evaluate_at(self, x, n_ders: int):
        """Basis derivatives at arbitrary ambient coordinates.

        Returns (element index array, (n_ders+1, n_points, k+1) values).
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        e = np.clip(((x - self.x0) / self.h).astype(int), 0, self.n_elem - 1)
        vals = np.empty((n_ders + 1, x.size, self.k + 1))
        for i in range(x.size):
            tloc = (x[i] - self.x0) / self.h - e[i]
            vals[:, i, :] = self.evaluate_local(e[i], [tloc], n_ders)[:, 0, :]
        return e, vals

    def kth_jump(self, breakpoint_index: int):
        """Jump of the k-th derivative across interior breakpoint i (1..n-1).

        Returns (master function indices (k+2,), jump values (k+2,)), the
        one-sided limit from the right minus the limit from the left.
        """
        i = breakpoint_index
        i_max = self.n_elem if self.periodic else self.n_elem - 1
        if not (1 <= i <= i_max):
            raise ConfigurationError("jump requested on a non-interior breakpoint")
        k = self.k
        left = self.evaluate_local(i - 1, [1.0], k)[k, 0, :]   # funcs i-1 .. i-1+k
        right = self.evaluate_local(i % self.n_elem, [0.0], k)[k, 0, :]  # funcs i .. i+k
        jump = np.zeros(k + 2)
        jump[:k + 1] -= left
        jump[1:] += right
        idx = np.arange(i - 1, i + k + 1)
        if self.periodic:
            idx = idx % self.n_elem
        return idx, jump

    def greville(self) -> np.ndarray:
        """Greville abscissae (coefficients reproducing the identity map)."""
        k = self.k
        return np.array([np.mean(self.knots[i + 1:i + k + 1])
                         for i in range(self.n_funcs)])

    def mass_matrix(self) -> np.ndarray:
        """Exact (Gauss) univariate mass matrix, wrapping handled for periodic."""
        q, w = gauss_legendre_01(self.k + 1)
        M = np.zeros((self.n_funcs, self.n_funcs))
        for e in range(self.n_elem):
            idx = self.element_functions(e)
            B = self.evaluate_local(e, q, 0)[0]          # (nq, k+1)
            M[np.ix_(idx, idx)] += (B.T * (w * self.h)) @ B
        return M

    def project(self, g) -> np.ndarray:
        """L2 projection of a callable g(x) onto the basis."""
        q, w = gauss_legendre_01(self.k + 2)
        rhs = np.zeros(self.n_funcs)
        for e in range(self.n_elem):
            idx = self.element_functions(e)
            xs = self.x0 + (e + q) * self.h
            B = self.evaluate_local(e, q, 0)[0]
            rhs[idx] += B.T @ (w * self.h * np.asarray(g(xs), dtype=float))
        return np.linalg.solve(self.mass_matrix(), rhs)


@dataclass
class SplineSpace:
    """Scalar tensor-product space restricted to the active background mesh."""

    sx: UnivariateSplines
    sy: UnivariateSplines
    ambient: AmbientMesh
    active_funcs: np.ndarray      # sorted full tensor indices with active support
    full_to_active: np.ndarray    # full index -> active index (-1 if inactive)
    elem_dofs: dict               # active element id -> (nb,) active dof indices

    @property
    def k(self) -> int:
        return self.sx.k

    @property
    def n_dofs(self) -> int:
        return self.active_funcs.size

    @property
    def n_local(self) -> int:
        return (self.k + 1) ** 2

    def full_index(self, a, b):
        return a * self.sy.n_funcs + b

    def element_basis(self, eid: int, ambient_pts: np.ndarray, n_ders: int = 1):
        """Basis tables at ambient points inside element eid.

        Returns a dict with keys (dx, dy) for dx + dy <= n_ders, each of
        shape (n_points, nb), derivatives taken in ambient coordinates.
        Function ordering matches ``elem_dofs``: x-major over the (k+1)^2
        tensor functions.
        """
        ex, ey = self.ambient.element_index(eid)
        hx, hy = self.ambient.h
        pts = np.atleast_2d(ambient_pts)
        tx = (pts[:, 0] - self.ambient.origin[0]) / hx - ex
        ty = (pts[:, 1] - self.ambient.origin[1]) / hy - ey
        Bx = self.sx.evaluate_local(ex, tx, n_ders)
        By = self.sy.evaluate_local(ey, ty, n_ders)
        out = {}
        for dx in range(n_ders + 1):
            for dy in range(n_ders + 1 - dx):
                out[(dx, dy)] = np.einsum("na,nb->nab", Bx[dx], By[dy]).reshape(
                    pts.shape[0], -1)
        return out

    def locate(self, ambient_pts: np.ndarray):
        """Element ids containing the given ambient points (clipped to grid)."""
        pts = np.atleast_2d(ambient_pts)
        hx, hy = self.ambient.h
        ex = np.clip(((pts[:, 0] - self.ambient.origin[0]) / hx).astype(int),
                     0, self.ambient.counts[0] - 1)
        ey = np.clip(((pts[:, 1] - self.ambient.origin[1]) / hy).astype(int),
                     0, self.ambient.counts[1] - 1)
        return ex * self.ambient.counts[1] + ey

    def face_jump(self, face: Face):
        """Active dof indices and k-th normal-derivative jump factors on a face.

        The jump of d^k/dn^k f across the face separates into a 1D jump in
        the normal axis times the tangential basis values; this returns the
        normal-axis part: (normal univariate master ids, jump values,
        tangential univariate spline, tangential element index).
        """
        if face.axis == 0:
            idx, jump = self.sx.kth_jump(face.ix + 1)
            return idx, jump, self.sy, face.iy
        idx, jump = self.sy.kth_jump(face.iy + 1)
        return idx, jump, self.sx, face.ix


def build_space(mesh: ImmersedMesh, k: int) -> SplineSpace:
    """Construct the active scalar spline space over an immersed mesh."""
    amb = mesh.ambient
    sx = UnivariateSplines(k, amb.counts[0], amb.origin[0], amb.extents[0],
                           periodic=amb.periodic[0])
    sy = UnivariateSplines(k, amb.counts[1], amb.origin[1], amb.extents[1],
                           periodic=amb.periodic[1])
    n_full = sx.n_funcs * sy.n_funcs
    mask = np.zeros(n_full, dtype=bool)
    elem_full = {}
    for eid in mesh.active_elements:
        ex, ey = amb.element_index(eid)
        fx = sx.element_functions(ex)
        fy = sy.element_functions(ey)
        full = (fx[:, None] * sy.n_funcs + fy[None, :]).reshape(-1)
        elem_full[eid] = full
        mask[full] = True
    active = np.flatnonzero(mask)
    full_to_active = np.full(n_full, -1, dtype=int)
    full_to_active[active] = np.arange(active.size)
    elem_dofs = {eid: full_to_active[full] for eid, full in elem_full.items()}
    return SplineSpace(sx, sy, amb, active, full_to_active, elem_dofs)


def dirichlet_dofs(space: SplineSpace, side: str, g):
    """Strong Dirichlet data on a conforming ambient box side.

    ``g`` is a callable of physical points (n, 2) -> (n,).  The trace is
    lifted by a univariate L2 projection of the boundary profile onto the
    boundary-adjacent dof layer.  Returns {active dof index: value} for the
    dofs of that layer that are active.
    """
    amb = space.ambient
    if side in ("left", "right"):
        normal_spline, edge_spline = space.sx, space.sy
        x_edge = amb.origin[0] if side == "left" else amb.origin[0] + amb.extents[0]
        def edge_points(s):
            return amb.to_physical(np.column_stack([np.full_like(s, x_edge), s]))
    else:
        normal_spline, edge_spline = space.sy, space.sx
        y_edge = amb.origin[1] if side == "bottom" else amb.origin[1] + amb.extents[1]
        def edge_points(s):
            return amb.to_physical(np.column_stack([s, np.full_like(s, y_edge)]))
    if normal_spline.periodic:
        raise ConfigurationError(f"cannot impose Dirichlet data across periodic side '{side}'")
    layer = 0 if side in ("left", "bottom") else normal_spline.n_funcs - 1

    coeffs = edge_spline.project(lambda s: np.asarray(g(edge_points(s)), dtype=float))
    out = {}
    for b, val in enumerate(coeffs):
        if side in ("left", "right"):
            full = space.full_index(layer, b)
        else:
            full = space.full_index(b, layer)
        dof = space.full_to_active[full]
        if dof >= 0:
            out[int(dof)] = float(val)
    return out
