"""Discrete residual and Jacobian of the stabilized binary-fluid system.

Five scalar dof blocks share one spline space: the two velocity components,
the pressure, the order parameter and the chemical potential.  Rows of the
algebraic system are organized by test function: momentum (velocity block),
continuity (pressure block), chemical-potential closure (order-parameter
block) and phase transport (chemical-potential block); the last pairing
makes the constant test function admissible in the transport row, so the
total amount of each species is conserved exactly by the discrete system.

Stabilization: Nitsche imposition of the impermeability condition on walls
(penalty + consistency + viscous/pressure symmetry terms), a generalized
Navier slip term with Marangoni forcing on the tangential wall dynamics,
a skeleton penalty on the highest normal derivative of the pressure, and
ghost penalties on velocity, order parameter and chemical potential across
faces of trimmed elements.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import physics
from .physics import ModelParams, StabParams
from .cutcell import gauss_legendre_01, surface_normal
from .mesh import ImmersedMesh
from .splines import build_space, dirichlet_dofs

FIELDS = ("ux", "uy", "p", "phi", "mu")

# rows of the block system, keyed by the dof block that carries them
ROW_OF = {"mx": "ux", "my": "uy", "ct": "p", "omega": "phi", "lam": "mu"}

# derivative slots in the stacked basis tables
VN, VGX, VGY = 0, 1, 2


class AssemblyError(RuntimeError):
    pass


def _zero_wall_velocity(pts, t):
    return np.zeros((np.atleast_2d(pts).shape[0], 2))


@dataclass(frozen=True)
class DirichletBC:
    """Strong condition on a conforming ambient-box side.

    ``profile(points, t)`` receives physical points (n, 2) and returns the
    prescribed values (n,).  Valid fields: 'ux', 'uy', 'phi'.
    """

    var: str
    side: str
    profile: object

    def __post_init__(self):
        if self.var not in ("ux", "uy", "phi"):
            raise ValueError("strong conditions supported for ux, uy and phi only")


@dataclass
class BoundaryConditions:
    """Boundary data of a flow problem.

    ``wall_velocity(points, t)`` gives the tangential wall motion entering
    the Navier-slip term on facets tagged as walls (immersed boundaries are
    always walls).  ``dirichlet`` lists strong conditions on conforming
    sides.  ``pin_pressure`` fixes one pressure dof, needed whenever the
    normal velocity is constrained on the entire boundary.
    """

    wall_velocity: object = _zero_wall_velocity
    dirichlet: tuple = ()
    pin_pressure: bool = False


class Discretization:
    """Precomputed quadrature/basis data and assembly routines."""

    def __init__(self, mesh: ImmersedMesh, order: int,
                 params: ModelParams = None, stab: StabParams = None):
        self.mesh = mesh
        self.k = order
        self.params = params if params is not None else ModelParams()
        self.stab = stab if stab is not None else StabParams()
        self.space = build_space(mesh, order)
        n = self.space.n_dofs
        self.n_scalar = n
        self.n_dofs = 5 * n
        self.off = {f: i * n for i, f in enumerate(FIELDS)}
        hx, hy = mesh.ambient.h
        self.h_wall = float(np.sqrt(hx * hy))
        self._build_volume()
        self._build_wall()
        self._build_inout()
        self._build_faces()

    # ------------------------------------------------------------------
    # precomputation

    def _basis_flat(self, eids, pts_amb):
        """Per-point basis tables for points grouped by containing element."""
        R = self.mesh.ambient.rotation
        M = pts_amb.shape[0]
        nb = self.space.n_local
        N = np.empty((M, nb))
        Gx = np.empty((M, nb))
        Gy = np.empty((M, nb))
        dofs = np.empty((M, nb), dtype=int)
        start = 0
        for eid, stop in eids:
            tab = self.space.element_basis(eid, pts_amb[start:stop], 1)
            N[start:stop] = tab[(0, 0)]
            gxa, gya = tab[(1, 0)], tab[(0, 1)]
            Gx[start:stop] = R[0, 0] * gxa + R[0, 1] * gya
            Gy[start:stop] = R[1, 0] * gxa + R[1, 1] * gya
            dofs[start:stop] = self.space.elem_dofs[eid]
            start = stop
        return N, Gx, Gy, dofs

    def _build_volume(self):
        mesh, space = self.mesh, self.space
        R = mesh.ambient.rotation
        buckets = {}
        for eid in mesh.active_elements:
            q = mesh.quadratures[eid]
            buckets.setdefault(q.volume_weights.size, []).append(eid)
        self.volume_groups = []
        for nq, eids in sorted(buckets.items()):
            E = len(eids)
            nb = space.n_local
            w = np.empty((E, nq))
            pts = np.empty((E, nq, 2))
            B = np.empty((E, nq, 3, nb))
            dofs = np.empty((E, nb), dtype=int)
            for i, eid in enumerate(eids):
                q = mesh.quadratures[eid]
                w[i] = q.volume_weights
                tab = space.element_basis(eid, q.volume_points, 1)
                B[i, :, VN] = tab[(0, 0)]
                gxa, gya = tab[(1, 0)], tab[(0, 1)]
                B[i, :, VGX] = R[0, 0] * gxa + R[0, 1] * gya
                B[i, :, VGY] = R[1, 0] * gxa + R[1, 1] * gya
                pts[i] = mesh.ambient.to_physical(q.volume_points)
                dofs[i] = space.elem_dofs[eid]
            self.volume_groups.append(dict(eids=eids, w=w, pts=pts, B=B, dofs=dofs))

    def _build_wall(self):
        """Immersed boundary points plus conforming wall/symmetric facets."""
        mesh = self.mesh
        pts_list, w_list, n_list, gn_list, eids = [], [], [], [], []
        for eid in sorted(mesh.cut_elements):
            q = mesh.quadratures[eid]
            if q.surface_weights.size == 0:
                continue
            p_phys = mesh.ambient.to_physical(q.surface_points)
            pts_list.append(q.surface_points)
            w_list.append(q.surface_weights)
            n_list.append(surface_normal(mesh.levelset, p_phys))
            gn_list.append(np.ones(q.surface_weights.size))
            eids.append((eid, None))
        for facet in mesh.boundary_facets:
            tag = mesh.facet_tag(facet.side)
            if tag not in ("wall", "symmetric"):
                continue
            if facet.weights.size == 0:
                continue
            pts_list.append(facet.points)
            w_list.append(facet.weights)
            nrm = _side_normal(facet.side, mesh.ambient)
            n_list.append(np.tile(nrm, (facet.weights.size, 1)))
            gn_list.append(np.full(facet.weights.size, 1.0 if tag == "wall" else 0.0))
            eids.append((facet.element, None))
        if not pts_list:
            self.wall = None
            return
        pts_amb = np.vstack(pts_list)
        bounds, start = [], 0
        for arr, (eid, _) in zip(w_list, eids):
            start += arr.size
            bounds.append((eid, start))
        N, Gx, Gy, dofs = self._basis_flat(bounds, pts_amb)
        # Jacobian blocks are accumulated per point group (all points of a
        # group share one element) to keep the sparse triplets small
        seg_starts = np.array([0] + [stop for _, stop in bounds[:-1]], dtype=int)
        self.wall = dict(
            pts=self.mesh.ambient.to_physical(pts_amb),
            w=np.concatenate(w_list),
            n=np.vstack(n_list),
            gn=np.concatenate(gn_list),
            N=N, Gx=Gx, Gy=Gy, dofs=dofs,
            seg_starts=seg_starts, seg_dofs=dofs[seg_starts])

    def _build_inout(self):
        mesh = self.mesh
        self.inout = {}
        for tag in ("inflow", "outflow"):
            facets = mesh.facets_by_tag(tag)
            if not facets:
                continue
            pts_amb = np.vstack([f.points for f in facets])
            bounds, start = [], 0
            for f in facets:
                start += f.weights.size
                bounds.append((f.element, start))
            N, Gx, Gy, dofs = self._basis_flat(bounds, pts_amb)
            nrm = np.vstack([np.tile(_side_normal(f.side, mesh.ambient),
                                     (f.weights.size, 1)) for f in facets])
            self.inout[tag] = dict(
                pts=mesh.ambient.to_physical(pts_amb),
                w=np.concatenate([f.weights for f in facets]),
                n=nrm, N=N, dofs=dofs)

    def _face_data(self, faces):
        """Factorized penalty matrices for normal-derivative jumps on faces."""
        space, amb = self.space, self.mesh.ambient
        k = self.k
        if not faces:
            return None
        q1, w1 = gauss_legendre_01(k + 1)
        nf = (k + 2) * (k + 1)
        F = len(faces)
        dofs = np.empty((F, nf), dtype=int)
        mats = np.empty((F, nf, nf))
        hn = np.empty(F)
        mid_dofs = np.empty((F, space.n_local), dtype=int)
        Nmid = np.empty((F, space.n_local))
        mt_cache = {}
        for i, fc in enumerate(faces):
            if fc.axis == 0:
                ns, ts, brk, te = space.sx, space.sy, fc.ix + 1, fc.iy
            else:
                ns, ts, brk, te = space.sy, space.sx, fc.iy + 1, fc.ix
            jn_idx, jn = ns.kth_jump(brk)
            t_idx = ts.element_functions(te)
            key = (fc.axis, ts._span_class(te))
            Mt = mt_cache.get(key)
            if Mt is None:
                Bt = ts.evaluate_local(te, q1, 0)[0]
                Mt = (Bt.T * (w1 * ts.h)) @ Bt
                mt_cache[key] = Mt
            mats[i] = np.kron(np.outer(jn, jn), Mt)
            hn[i] = ns.h
            if fc.axis == 0:
                full = (jn_idx[:, None] * space.sy.n_funcs + t_idx[None, :]).ravel()
            else:
                full = (t_idx[None, :] * space.sy.n_funcs + jn_idx[:, None]).ravel()
            dofs[i] = space.full_to_active[full]
            eid = amb.element_id(fc.ix, fc.iy)
            lo, hi = amb.element_box(eid)
            a, b = fc.geometry(amb)
            mid = 0.5 * (a + b)
            Nmid[i] = space.element_basis(eid, mid[None, :], 0)[(0, 0)][0]
            mid_dofs[i] = space.elem_dofs[eid]
        if np.any(dofs < 0):
            raise AssemblyError("face penalty touches an inactive basis function")
        return dict(dofs=dofs, mats=mats, hn=hn, mid_dofs=mid_dofs, Nmid=Nmid)

    def _build_faces(self):
        self.skeleton = self._face_data(self.mesh.skeleton_faces)
        self.ghost = self._face_data(self.mesh.ghost_faces)

    # ------------------------------------------------------------------
    # boundary constraints

    def constraints(self, bc: BoundaryConditions, t: float = 0.0):
        """Fixed dof indices and values for the strong boundary conditions."""
        idx, vals = [], []
        for cond in bc.dirichlet:
            fixed = dirichlet_dofs(self.space, cond.side,
                                   lambda pts, c=cond: c.profile(pts, t))
            for d, v in fixed.items():
                idx.append(self.off[cond.var] + d)
                vals.append(v)
        if bc.pin_pressure:
            idx.append(self.off["p"])
            vals.append(0.0)
        if not idx:
            return np.empty(0, dtype=int), np.empty(0)
        idx = np.asarray(idx, dtype=int)
        vals = np.asarray(vals)
        order = np.argsort(idx)
        return idx[order], vals[order]

    def free_mask(self, fixed_idx):
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[fixed_idx] = False
        return mask

    # ------------------------------------------------------------------
    # assembly

    def assemble(self, U, U_old=None, inv_dt: float = 0.0,
                 bc: BoundaryConditions = None, t: float = 0.0,
                 want_jacobian: bool = True):
        """Residual (and Jacobian) of the full unconstrained system."""
        if bc is None:
            bc = BoundaryConditions()
        if U_old is None:
            U_old = np.zeros_like(U)
        r = np.zeros(self.n_dofs)
        coo = dict(rows=[], cols=[], vals=[]) if want_jacobian else None

        for grp in self.volume_groups:
            self._volume_terms(grp, U, U_old, inv_dt, r, coo)
        if self.wall is not None:
            self._wall_terms(U, bc, t, r, coo)
        self._inout_terms(U, r, coo)
        self._face_terms(U, r, coo)

        if not np.all(np.isfinite(r)):
            bad = np.flatnonzero(~np.isfinite(r))[0]
            blk = FIELDS[bad // self.n_scalar]
            raise AssemblyError(
                f"non-finite residual in block '{blk}' (dof {bad % self.n_scalar})")
        if not want_jacobian:
            return r, None
        vals = np.concatenate([v.ravel() for v in coo["vals"]])
        if not np.all(np.isfinite(vals)):
            raise AssemblyError("non-finite entries in the Jacobian")
        J = sp.coo_matrix(
            (vals,
             (np.concatenate([a.ravel() for a in coo["rows"]]),
              np.concatenate([a.ravel() for a in coo["cols"]]))),
            shape=(self.n_dofs, self.n_dofs)).tocsr()
        return r, J

    # -- volume ---------------------------------------------------------

    def _volume_terms(self, grp, U, U_old, inv_dt, r, coo):
        pr = self.params
        n = self.n_scalar
        w, B, dofs = grp["w"], grp["B"], grp["dofs"]
        E, nq, _, nb = B.shape

        def val(block, which, vec):
            c = vec[self.off[block]:self.off[block] + n][dofs]
            return np.einsum("eqb,eb->eq", B[:, :, which, :], c)

        ux, uy = val("ux", VN, U), val("uy", VN, U)
        dxx, dxy = val("ux", VGX, U), val("ux", VGY, U)
        dyx, dyy = val("uy", VGX, U), val("uy", VGY, U)
        p = val("p", VN, U)
        phi = val("phi", VN, U)
        gpx, gpy = val("phi", VGX, U), val("phi", VGY, U)
        mu = val("mu", VN, U)
        gmx, gmy = val("mu", VGX, U), val("mu", VGY, U)
        uxo, uyo = val("ux", VN, U_old), val("uy", VN, U_old)
        phio = val("phi", VN, U_old)

        rho = physics.density(phi, pr)
        rhop = physics.density_slope(phi, pr)
        rhopp = physics.density_curvature(phi, pr)
        rho_o = physics.density(phio, pr)
        eta = physics.viscosity(phi, pr)
        etap = physics.viscosity_slope(phi, pr)
        psip = physics.double_well_prime(phi)
        psipp = physics.double_well_second(phi)
        se = pr.sigma * pr.eps
        soe = pr.sigma / pr.eps
        m = pr.mobility
        cJ = 0.5 * (pr.rho1 - pr.rho2) * m
        Jx, Jy = -cJ * gmx, -cJ * gmy
        bx, by = pr.body_force
        gpu = gpx * ux + gpy * uy          # grad(phi) . u
        giso = 0.5 * se * (gpx**2 + gpy**2) + soe * physics.double_well(phi)
        zxx = -se * gpx**2 + giso
        zxy = -se * gpx * gpy
        zyy = -se * gpy**2 + giso

        res = {
            "mx": (
                (rho * ux - rho_o * uxo) * inv_dt
                + 0.5 * rho * (ux * dxx + uy * dxy) + 0.5 * rhop * gpu * ux - bx,
                -0.5 * rho * ux * ux - ux * Jx + 2.0 * eta * dxx + zxx - p,
                -0.5 * rho * uy * ux - ux * Jy + eta * (dxy + dyx) + zxy),
            "my": (
                (rho * uy - rho_o * uyo) * inv_dt
                + 0.5 * rho * (ux * dyx + uy * dyy) + 0.5 * rhop * gpu * uy - by,
                -0.5 * rho * ux * uy - uy * Jx + eta * (dyx + dxy) + zxy,
                -0.5 * rho * uy * uy - uy * Jy + 2.0 * eta * dyy + zyy - p),
            "ct": (dxx + dyy, None, None),
            "omega": (soe * psip - mu, se * gpx, se * gpy),
            "lam": ((phi - phio) * inv_dt, -phi * ux + m * gmx, -phi * uy + m * gmy),
        }
        for row, (cn, cgx, cgy) in res.items():
            acc = np.einsum("eq,eqb->eb", w * cn, B[:, :, VN, :])
            if cgx is not None:
                acc += np.einsum("eq,eqb->eb", w * cgx, B[:, :, VGX, :])
                acc += np.einsum("eq,eqb->eb", w * cgy, B[:, :, VGY, :])
            np.add.at(r, self.off[ROW_OF[row]] + dofs, acc)

        if coo is None:
            return

        blocks = {}

        def C(row, col):
            key = (row, col)
            if key not in blocks:
                blocks[key] = np.zeros((E, nq, 3, 3))
            return blocks[key]

        c = C("mx", "ux")
        c[..., VN, VN] = rho * inv_dt + 0.5 * rho * dxx + 0.5 * rhop * gpu \
            + 0.5 * rhop * gpx * ux
        c[..., VN, VGX] = 0.5 * rho * ux
        c[..., VN, VGY] = 0.5 * rho * uy
        c[..., VGX, VN] = -rho * ux - Jx
        c[..., VGX, VGX] = 2.0 * eta
        c[..., VGY, VN] = -0.5 * rho * uy - Jy
        c[..., VGY, VGY] = eta

        c = C("mx", "uy")
        c[..., VN, VN] = 0.5 * rho * dxy + 0.5 * rhop * gpy * ux
        c[..., VGY, VN] = -0.5 * rho * ux
        c[..., VGY, VGX] = eta

        c = C("mx", "p")
        c[..., VGX, VN] = -1.0

        c = C("mx", "phi")
        c[..., VN, VN] = rhop * ux * inv_dt + 0.5 * rhop * (ux * dxx + uy * dxy) \
            + 0.5 * rhopp * gpu * ux
        c[..., VN, VGX] = 0.5 * rhop * ux * ux
        c[..., VN, VGY] = 0.5 * rhop * uy * ux
        c[..., VGX, VN] = -0.5 * rhop * ux * ux + 2.0 * etap * dxx + soe * psip
        c[..., VGX, VGX] = -se * gpx
        c[..., VGX, VGY] = se * gpy
        c[..., VGY, VN] = -0.5 * rhop * uy * ux + etap * (dxy + dyx)
        c[..., VGY, VGX] = -se * gpy
        c[..., VGY, VGY] = -se * gpx

        c = C("mx", "mu")
        c[..., VGX, VGX] = cJ * ux
        c[..., VGY, VGY] = cJ * ux

        c = C("my", "uy")
        c[..., VN, VN] = rho * inv_dt + 0.5 * rho * dyy + 0.5 * rhop * gpu \
            + 0.5 * rhop * gpy * uy
        c[..., VN, VGX] = 0.5 * rho * ux
        c[..., VN, VGY] = 0.5 * rho * uy
        c[..., VGY, VN] = -rho * uy - Jy
        c[..., VGY, VGY] = 2.0 * eta
        c[..., VGX, VN] = -0.5 * rho * ux - Jx
        c[..., VGX, VGX] = eta

        c = C("my", "ux")
        c[..., VN, VN] = 0.5 * rho * dyx + 0.5 * rhop * gpx * uy
        c[..., VGX, VN] = -0.5 * rho * uy
        c[..., VGX, VGY] = eta

        c = C("my", "p")
        c[..., VGY, VN] = -1.0

        c = C("my", "phi")
        c[..., VN, VN] = rhop * uy * inv_dt + 0.5 * rhop * (ux * dyx + uy * dyy) \
            + 0.5 * rhopp * gpu * uy
        c[..., VN, VGX] = 0.5 * rhop * ux * uy
        c[..., VN, VGY] = 0.5 * rhop * uy * uy
        c[..., VGY, VN] = -0.5 * rhop * uy * uy + 2.0 * etap * dyy + soe * psip
        c[..., VGY, VGY] = -se * gpy
        c[..., VGY, VGX] = se * gpx
        c[..., VGX, VN] = -0.5 * rhop * ux * uy + etap * (dyx + dxy)
        c[..., VGX, VGY] = -se * gpx
        c[..., VGX, VGX] = -se * gpy

        c = C("my", "mu")
        c[..., VGX, VGX] = cJ * uy
        c[..., VGY, VGY] = cJ * uy

        c = C("ct", "ux")
        c[..., VN, VGX] = 1.0
        c = C("ct", "uy")
        c[..., VN, VGY] = 1.0

        c = C("omega", "phi")
        c[..., VN, VN] = soe * psipp
        c[..., VGX, VGX] = se
        c[..., VGY, VGY] = se
        c = C("omega", "mu")
        c[..., VN, VN] = -1.0

        c = C("lam", "phi")
        c[..., VN, VN] = inv_dt
        c[..., VGX, VN] = -ux
        c[..., VGY, VN] = -uy
        c = C("lam", "ux")
        c[..., VGX, VN] = -phi
        c = C("lam", "uy")
        c[..., VGY, VN] = -phi
        c = C("lam", "mu")
        c[..., VGX, VGX] = m
        c[..., VGY, VGY] = m

        Bflat = B.reshape(E, nq * 3, nb)
        BT = Bflat.transpose(0, 2, 1)
        base_rows = np.broadcast_to(dofs[:, :, None], (E, nb, nb))
        base_cols = np.broadcast_to(dofs[:, None, :], (E, nb, nb))
        for (row, col), ct in blocks.items():
            tmp = np.matmul(ct * w[:, :, None, None], B)   # (E, nq, 3, nb)
            vals = np.matmul(BT, tmp.reshape(E, nq * 3, nb))
            coo["rows"].append(base_rows + self.off[ROW_OF[row]])
            coo["cols"].append(base_cols + self.off[col])
            coo["vals"].append(vals)

    # -- wall (Nitsche + generalized Navier slip) -----------------------

    def _wall_terms(self, U, bc, t, r, coo):
        pr, st = self.params, self.stab
        n = self.n_scalar
        wd = self.wall
        w, nx, ny = wd["w"], wd["n"][:, 0], wd["n"][:, 1]
        tx, ty = -ny, nx
        gn = wd["gn"]
        N, Gx, Gy, dofs = wd["N"], wd["Gx"], wd["Gy"], wd["dofs"]

        def val(block, tab, vec=U):
            c = vec[self.off[block]:self.off[block] + n][dofs]
            return np.einsum("mb,mb->m", tab, c)

        ux, uy = val("ux", N), val("uy", N)
        dxx, dxy = val("ux", Gx), val("ux", Gy)
        dyx, dyy = val("uy", Gx), val("uy", Gy)
        p = val("p", N)
        phi = val("phi", N)
        gpx, gpy = val("phi", Gx), val("phi", Gy)

        eta = physics.viscosity(phi, pr)
        etap = physics.viscosity_slope(phi, pr)
        se = pr.sigma * pr.eps
        soe = pr.sigma / pr.eps
        sfp = physics.solid_fluid_tension_prime(phi, pr)
        sfpp = physics.solid_fluid_tension_second(phi, pr)
        uwall = np.atleast_2d(bc.wall_velocity(wd["pts"], t))
        gx, gy = uwall[:, 0], uwall[:, 1]
        alpha = pr.alpha_gn * gn
        pen = st.beta / self.h_wall

        un = ux * nx + uy * ny
        K = nx**2 * dxx + nx * ny * (dxy + dyx) + ny**2 * dyy   # n . grad_s(u) . n
        emix = 0.5 * se * (gpx**2 + gpy**2) + soe * physics.double_well(phi)
        A = p - eta * K - emix
        tgp = tx * gpx + ty * gpy

        # geometric test/trial combinations
        Pnx, Pny = nx[:, None] * N, ny[:, None] * N
        Dnx = nx[:, None]**2 * Gx + (nx * ny)[:, None] * Gy
        Dny = (nx * ny)[:, None] * Gx + ny[:, None]**2 * Gy
        Tt = tx[:, None] * Gx + ty[:, None] * Gy

        sx = pen * eta * un * nx + A * nx + alpha * (ux - gx) \
            - gn * sfp * tgp * tx
        sy = pen * eta * un * ny + A * ny + alpha * (uy - gy) \
            - gn * sfp * tgp * ty
        np.add.at(r, self.off["ux"] + dofs,
                  (w * sx)[:, None] * N - (w * un * eta)[:, None] * Dnx)
        np.add.at(r, self.off["uy"] + dofs,
                  (w * sy)[:, None] * N - (w * un * eta)[:, None] * Dny)
        np.add.at(r, self.off["p"] + dofs, (w * -un)[:, None] * N)
        np.add.at(r, self.off["phi"] + dofs, (w * gn * sfp)[:, None] * N)

        if coo is None:
            return

        seg_starts, seg_dofs = wd["seg_starts"], wd["seg_dofs"]

        def add(row, col, s, Tst, Trl):
            blk = np.einsum("m,mi,mj->mij", w * s, Tst, Trl)
            blk = np.add.reduceat(blk, seg_starts, axis=0)
            coo["vals"].append(blk)
            coo["rows"].append(self.off[ROW_OF[row]]
                               + np.broadcast_to(seg_dofs[:, :, None], blk.shape))
            coo["cols"].append(self.off[col]
                               + np.broadcast_to(seg_dofs[:, None, :], blk.shape))

        for row, Pn, Dn, u_i, g_i, t_i in (("mx", Pnx, Dnx, ux, gx, tx),
                                           ("my", Pny, Dny, uy, gy, ty)):
            # penalty + adjoint symmetry + slip
            add(row, "ux", pen * eta, Pn, Pnx)
            add(row, "uy", pen * eta, Pn, Pny)
            add(row, "ux", -eta, Dn, Pnx)
            add(row, "uy", -eta, Dn, Pny)
            add(row, "phi", pen * etap * un, Pn, N)
            add(row, "phi", -etap * un, Dn, N)
            # consistency
            add(row, "p", np.ones_like(un), Pn, N)
            add(row, "ux", -eta, Pn, Dnx)
            add(row, "uy", -eta, Pn, Dny)
            add(row, "phi", -(etap * K + soe * physics.double_well_prime(phi)),
                Pn, N)
            add(row, "phi", -se * gpx, Pn, Gx)
            add(row, "phi", -se * gpy, Pn, Gy)
            # generalized Navier slip and Marangoni forcing
            add(row, ROW_OF[row], alpha, N, N)
            add(row, "phi", -gn * sfpp * tgp * t_i, N, N)
            add(row, "phi", -gn * sfp * t_i, N, Tt)
        add("ct", "ux", -np.ones_like(un), N, Pnx)
        add("ct", "uy", -np.ones_like(un), N, Pny)
        add("omega", "phi", gn * sfpp, N, N)

    # -- conforming in/outflow ------------------------------------------

    def _inout_terms(self, U, r, coo):
        pr = self.params
        n = self.n_scalar
        for tag, dat in self.inout.items():
            w, N, dofs = dat["w"], dat["N"], dat["dofs"]
            nx, ny = dat["n"][:, 0], dat["n"][:, 1]

            def val(block):
                c = U[self.off[block]:self.off[block] + n][dofs]
                return np.einsum("mb,mb->m", N, c)

            ux, uy, phi = val("ux"), val("uy"), val("phi")
            un = ux * nx + uy * ny
            np.add.at(r, self.off["mu"] + dofs, (w * un * phi)[:, None] * N)
            if tag == "outflow":
                rho = physics.density(phi, pr)
                rhop = physics.density_slope(phi, pr)
                np.add.at(r, self.off["ux"] + dofs, (w * 0.5 * rho * un * ux)[:, None] * N)
                np.add.at(r, self.off["uy"] + dofs, (w * 0.5 * rho * un * uy)[:, None] * N)

            if coo is None:
                continue

            def add(row, col, s):
                coo["vals"].append(np.einsum("m,mi,mj->mij", w * s, N, N))
                coo["rows"].append(self.off[ROW_OF[row]]
                                   + np.broadcast_to(dofs[:, :, None], coo["vals"][-1].shape))
                coo["cols"].append(self.off[col]
                                   + np.broadcast_to(dofs[:, None, :], coo["vals"][-1].shape))

            add("lam", "ux", phi * nx)
            add("lam", "uy", phi * ny)
            add("lam", "phi", un)
            if tag == "outflow":
                add("mx", "ux", 0.5 * rho * (un + nx * ux))
                add("mx", "uy", 0.5 * rho * ny * ux)
                add("mx", "phi", 0.5 * rhop * un * ux)
                add("my", "uy", 0.5 * rho * (un + ny * uy))
                add("my", "ux", 0.5 * rho * nx * uy)
                add("my", "phi", 0.5 * rhop * un * uy)

    # -- skeleton and ghost penalties -----------------------------------

    def _face_terms(self, U, r, coo):
        pr, st = self.params, self.stab
        n = self.n_scalar
        k = self.k
        se = pr.sigma * pr.eps

        def apply(data, terms):
            """terms: list of (row, col, base_scale, eta_power)."""
            if data is None:
                return
            dofs, mats, hn = data["dofs"], data["mats"], data["hn"]
            phi_mid = np.einsum("fb,fb->f",
                                data["Nmid"],
                                U[self.off["phi"]:self.off["phi"] + n][data["mid_dofs"]])
            eta_mid = physics.viscosity(phi_mid, pr)
            etap_mid = physics.viscosity_slope(phi_mid, pr)
            for row, col, base, epow in terms:
                if epow == 0:
                    scale = base
                    dscale = None
                elif epow == 1:
                    scale = base * eta_mid
                    dscale = base * etap_mid
                else:
                    scale = base / eta_mid
                    dscale = -base * etap_mid / eta_mid**2
                cvals = U[self.off[col]:self.off[col] + n][dofs]
                Fc = np.einsum("fij,fj->fi", mats, cvals)
                np.add.at(r, self.off[ROW_OF[row]] + dofs, scale[:, None] * Fc)
                if coo is None:
                    continue
                vals = scale[:, None, None] * mats
                coo["vals"].append(vals)
                coo["rows"].append(self.off[ROW_OF[row]]
                                   + np.broadcast_to(dofs[:, :, None], vals.shape))
                coo["cols"].append(self.off[col]
                                   + np.broadcast_to(dofs[:, None, :], vals.shape))
                if dscale is not None:
                    cvals2 = np.einsum("f,fi,fb->fib", dscale, Fc, data["Nmid"])
                    coo["vals"].append(cvals2)
                    coo["rows"].append(self.off[ROW_OF[row]]
                                       + np.broadcast_to(dofs[:, :, None], cvals2.shape))
                    coo["cols"].append(self.off["phi"]
                                       + np.broadcast_to(data["mid_dofs"][:, None, :],
                                                         cvals2.shape))

        if self.skeleton is not None:
            hsk = st.gamma_skeleton * self.skeleton["hn"] ** (2 * k + 1)
            apply(self.skeleton, [("ct", "p", hsk, -1)])
        if self.ghost is not None:
            hg = st.gamma_ghost * self.ghost["hn"] ** (2 * k - 1)
            apply(self.ghost, [
                ("mx", "ux", hg, 1),
                ("my", "uy", hg, 1),
                ("omega", "phi", hg * se, 0),
                ("lam", "mu", hg * pr.mobility, 0),
            ])

    # ------------------------------------------------------------------
    # helpers used by solver and tests

    def scalar_mass_matrix(self, regularized: bool = True):
        """Mass matrix of the scalar space, optionally with a small face
        penalty on trimmed elements so the projection stays well conditioned."""
        n = self.n_scalar
        rows, cols, vals = [], [], []
        for grp in self.volume_groups:
            w, B, dofs = grp["w"], grp["B"], grp["dofs"]
            E, nq, _, nb = B.shape
            Nt = B[:, :, VN, :]
            vals.append(np.einsum("eq,eqi,eqj->eij", w, Nt, Nt))
            rows.append(np.broadcast_to(dofs[:, :, None], (E, nb, nb)))
            cols.append(np.broadcast_to(dofs[:, None, :], (E, nb, nb)))
        if regularized and self.ghost is not None:
            g = self.ghost
            scale = 0.01 * g["hn"] ** (2 * self.k + 1)
            vals.append(scale[:, None, None] * g["mats"])
            rows.append(np.broadcast_to(g["dofs"][:, :, None], g["mats"].shape))
            cols.append(np.broadcast_to(g["dofs"][:, None, :], g["mats"].shape))
        M = sp.coo_matrix(
            (np.concatenate([v.ravel() for v in vals]),
             (np.concatenate([a.ravel() for a in rows]),
              np.concatenate([a.ravel() for a in cols]))),
            shape=(n, n)).tocsr()
        return M

    def project_scalar(self, g):
        """Stabilized L2 projection of a callable g(points) onto the space."""
        from scipy.sparse.linalg import spsolve
        n = self.n_scalar
        rhs = np.zeros(n)
        for grp in self.volume_groups:
            w, B, dofs = grp["w"], grp["B"], grp["dofs"]
            gv = np.asarray(g(grp["pts"].reshape(-1, 2)), dtype=float)
            gv = gv.reshape(w.shape)
            np.add.at(rhs, dofs, np.einsum("eq,eqb->eb", w * gv, B[:, :, VN, :]))
        return spsolve(self.scalar_mass_matrix(), rhs)

    def evaluate_scalar(self, coeffs, ambient_pts, block_offset=0):
        """Point values of a scalar field given its coefficient vector."""
        pts = np.atleast_2d(ambient_pts)
        eids = self.space.locate(pts)
        out = np.empty(pts.shape[0])
        for i in range(pts.shape[0]):
            eid = int(eids[i])
            tab = self.space.element_basis(eid, pts[i:i + 1], 0)
            out[i] = tab[(0, 0)][0] @ coeffs[self.space.elem_dofs[eid]]
        return out

    def total_phase(self, U):
        """Integral of the order parameter over the trimmed domain."""
        n = self.n_scalar
        total = 0.0
        for grp in self.volume_groups:
            c = U[self.off["phi"]:self.off["phi"] + n][grp["dofs"]]
            total += float(np.sum(grp["w"] * np.einsum(
                "eqb,eb->eq", grp["B"][:, :, VN, :], c)))
        return total

    def total_energy(self, U):
        """Kinetic plus mixture free energy of a discrete state."""
        pr = self.params
        n = self.n_scalar
        total = 0.0
        for grp in self.volume_groups:
            w, B = grp["w"], grp["B"]
            dofs = grp["dofs"]

            def val(block, which):
                c = U[self.off[block]:self.off[block] + n][dofs]
                return np.einsum("eqb,eb->eq", B[:, :, which, :], c)

            ux, uy, phi = val("ux", VN), val("uy", VN), val("phi", VN)
            gpx, gpy = val("phi", VGX), val("phi", VGY)
            rho = physics.density(phi, pr)
            e = 0.5 * rho * (ux**2 + uy**2) + physics.mixture_energy_density(
                phi, np.stack([gpx, gpy], axis=-1), pr)
            total += float(np.sum(w * e))
        return total


def _side_normal(side, ambient):
    amb_n = {"left": (-1.0, 0.0), "right": (1.0, 0.0),
             "bottom": (0.0, -1.0), "top": (0.0, 1.0)}[side]
    return ambient.to_physical(np.asarray(amb_n))
