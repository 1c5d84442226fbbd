"""Built-in flow scenarios.

Each builder assembles the full problem description for one of the bundled
configurations: the trimmed background mesh, the discretization, boundary
conditions, the initial state and the time-stepping controls.  Geometry is
always described in the physical frame; rotating the ambient mesh changes
how elements are cut but not the problem being solved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import cutcell, mesh as bgmesh, physics, solver
from .assembly import BoundaryConditions, DirichletBC, Discretization
from .physics import ModelParams, StabParams


@dataclass
class Scenario:
    """A ready-to-run flow problem.

    ``dt`` is None for problems solved directly for a steady state with a
    single Newton solve; otherwise the scenario is marched in time, stopping
    at ``t_end`` or when the steady-state detector triggers.
    """

    name: str
    description: str
    disc: Discretization
    bc: BoundaryConditions
    U0: np.ndarray
    dt: float = None
    t_end: float = None
    steady_rtol: float = 1e-6
    diagnostics: dict = None


def wall_ramp(t):
    """Plate speed of the counter-moving-plates benchmark in m/s.

    Raised smoothly as (1 - cos(pi t))/2 * 10 over the first second, then
    held at 10.
    """
    t = np.asarray(t, dtype=float)
    out = np.where(t < 1.0, 0.5 * (1.0 - np.cos(np.pi * t)) * 10.0, 10.0)
    return out if out.ndim else float(out)


def slip_velocity(u_wall, height, eta, alpha_gn):
    """Steady slip speed of plane Couette flow with Navier-slip walls."""
    return u_wall / (1.0 + 2.0 * eta / (alpha_gn * height))


def _channel_mesh(h, theta, length, height, order=None):
    """Horizontal channel of the given physical size, trimmed out of a
    rotated ambient box.

    The box is sized so the rotated channel walls stay inside it with a
    two-element margin, while the conforming left/right box sides cut the
    channel ends; inflow and outflow conditions live on those sides.
    """
    nx = max(int(round(length / h)), 1)
    half = (0.5 * height + abs(np.sin(theta)) * 0.5 * length) / np.cos(theta) + 2.0 * h
    ny = 2 * int(np.ceil(half / h))
    origin = (-0.5 * nx * h, -0.5 * ny * h)
    amb = bgmesh.build_ambient(origin, (nx * h, ny * h), (nx, ny), theta)
    ls = cutcell.strip(1, 0.0, 0.5 * height)
    im = bgmesh.classify_elements(amb, ls)
    return bgmesh.tag_conforming_boundaries(im, {"left": "inflow", "right": "outflow"})


def slip_channel(order=2, h=1.25e-6, theta=np.pi / 8, u_wall=5.0,
                 height=10e-6, length=40e-6, stab=None):
    """Single-fluid Couette channel between counter-moving slip walls.

    Both species are water, so the phase field is uniform and the problem
    reduces to plane Couette flow with Navier slip; the steady solution is
    the linear profile through +-u_slip at the walls.  The conforming ends
    carry that far-field profile strongly, and the initial state already
    satisfies it, so the solve measures the consistency of the immersed
    wall treatment.
    """
    params = ModelParams(rho2=1000.0, eta2=1.0e-3)
    im = _channel_mesh(h, theta, length, height)
    disc = Discretization(im, order, params, stab)

    u_s = slip_velocity(u_wall, height, params.eta1, params.alpha_gn)
    slope = 2.0 * u_s / height

    def wall_velocity(pts, t):
        pts = np.atleast_2d(pts)
        out = np.zeros_like(pts)
        out[:, 0] = u_wall * np.sign(pts[:, 1])
        return out

    def ux_profile(pts, t):
        return slope * np.atleast_2d(pts)[:, 1]

    def zero(pts, t):
        return np.zeros(np.atleast_2d(pts).shape[0])

    def one(pts, t):
        return np.ones(np.atleast_2d(pts).shape[0])

    bc = BoundaryConditions(
        wall_velocity=wall_velocity,
        dirichlet=tuple(DirichletBC(var, side, prof)
                        for side in ("left", "right")
                        for var, prof in (("ux", ux_profile), ("uy", zero),
                                          ("phi", one))),
        pin_pressure=True)

    U0 = solver.initial_state(
        disc,
        phi0=lambda p: np.ones(np.atleast_2d(p).shape[0]),
        u0=lambda p: np.column_stack(
            [slope * np.atleast_2d(p)[:, 1],
             np.zeros(np.atleast_2d(p).shape[0])]))
    return Scenario(
        name="slip-channel",
        description="single-fluid Couette channel with Navier-slip walls",
        disc=disc, bc=bc, U0=U0, dt=None,
        diagnostics={"u_slip_exact": u_s, "height": height})


def taylor_couette(order=3, h=0.625e-6, theta=np.pi / 8, dt=0.025,
                   t_end=8.0, length=50e-6, height=10e-6,
                   params=None, stab=None):
    """Binary-fluid flow between counter-moving plates.

    Matched densities and viscosities, reduced mobility, and a vertical
    diffuse interface at mid-length.  The plates are ramped up to 10 m/s
    over the first second; the far-field ends carry the linear slip-
    compatible Couette profile and pin the phase to +-1.  The interface is
    dragged along the walls until capillary and slip forces balance.
    """
    if params is None:
        params = ModelParams(rho2=1000.0, eta2=1.0e-3, mobility=3.0487e-11)
    im = _channel_mesh(h, theta, length, height)
    disc = Discretization(im, order, params, stab)

    def wall_velocity(pts, t):
        pts = np.atleast_2d(pts)
        out = np.zeros_like(pts)
        out[:, 0] = wall_ramp(t) * np.sign(pts[:, 1])
        return out

    def ux_profile(pts, t):
        u_s = slip_velocity(wall_ramp(t), height, params.eta1, params.alpha_gn)
        return 2.0 * u_s / height * np.atleast_2d(pts)[:, 1]

    def zero(pts, t):
        return np.zeros(np.atleast_2d(pts).shape[0])

    def phase(value):
        def prof(pts, t):
            return np.full(np.atleast_2d(pts).shape[0], value)
        return prof

    bc = BoundaryConditions(
        wall_velocity=wall_velocity,
        dirichlet=(DirichletBC("ux", "left", ux_profile),
                   DirichletBC("uy", "left", zero),
                   DirichletBC("phi", "left", phase(1.0)),
                   DirichletBC("ux", "right", ux_profile),
                   DirichletBC("uy", "right", zero),
                   DirichletBC("phi", "right", phase(-1.0))),
        pin_pressure=True)

    U0 = solver.initial_state(
        disc, phi0=lambda p: physics.equilibrium_profile(
            -np.atleast_2d(p)[:, 0], params))
    return Scenario(
        name="taylor-couette",
        description="binary-fluid channel between counter-moving plates",
        disc=disc, bc=bc, U0=U0, dt=dt, t_end=t_end, steady_rtol=1e-6,
        diagnostics={"height": height, "length": length})


def _union_of_discs(circles):
    """Fluid outside a union of circular obstacles with individual radii."""
    centers = np.array([[cx, cy] for cx, cy, _ in circles])
    radii = np.array([r for _, _, r in circles])

    def ev(p):
        d = np.linalg.norm(p[..., None, :] - centers, axis=-1)
        return np.max(radii - d, axis=-1)

    def grad(p):
        d = p[..., None, :] - centers
        n = np.linalg.norm(d, axis=-1)
        idx = np.argmax(radii - n, axis=-1)
        dn = np.take_along_axis(d, idx[..., None, None], axis=-2)[..., 0, :]
        nn = np.take_along_axis(n, idx[..., None], axis=-1)[..., 0]
        nn = np.where(nn == 0.0, 1.0, nn)
        return -dn / nn[..., None]

    return cutcell.LevelSet(ev, grad, f"union_of_discs(n={len(circles)})")


def lattice(order=2, h=0.25e-6, dt=0.5e-6, t_end=30e-6,
            params=None, stab=None):
    """Water-air flow through a periodic lattice of circular obstacles.

    One 40 x 20 um unit cell with staggered radius-10 um obstacles, periodic
    in the flow direction (periodic splines, no left/right boundary) and
    symmetry conditions at top and bottom.  A horizontal body force drives
    vertical lamellae past the obstacles, forcing break-up and realignment.
    """
    if params is None:
        params = ModelParams(body_force=(1.0e9, 0.0))
    width, height_cell = 40e-6, 20e-6
    nx, ny = int(round(width / h)), int(round(height_cell / h))
    amb = bgmesh.build_ambient((0.0, 0.0), (width, height_cell), (nx, ny),
                               periodic=(True, False))
    ls = _union_of_discs([(10e-6, height_cell, 10e-6), (30e-6, 0.0, 10e-6)])
    im = bgmesh.classify_elements(amb, ls)
    im = bgmesh.tag_conforming_boundaries(
        im, {"bottom": "symmetric", "top": "symmetric"})
    disc = Discretization(im, order, params, stab)

    # water lamella in the middle of the cell, interfaces in the throats
    def phi0(p):
        x = np.atleast_2d(p)[:, 0]
        return physics.equilibrium_profile(10e-6 - np.abs(x - 20e-6), params)

    U0 = solver.initial_state(disc, phi0=phi0)
    return Scenario(
        name="lattice",
        description="body-force-driven flow through a periodic obstacle lattice",
        disc=disc, bc=BoundaryConditions(), U0=U0, dt=dt, t_end=t_end)


#: obstacle layout of the bundled porous-medium example (x, y, radius in m);
#: qualitative stand-in, not a reproduction of any particular sample
POROUS_CIRCLES = (
    (25e-6, 52e-6, 18e-6), (60e-6, -4e-6, 16e-6), (95e-6, 50e-6, 20e-6),
    (120e-6, 8e-6, 14e-6), (160e-6, 54e-6, 22e-6), (185e-6, 12e-6, 12e-6),
    (55e-6, 30e-6, 7e-6), (140e-6, 32e-6, 8e-6),
)


def porous(order=2, h=0.625e-6, dt=0.05e-6, t_end=20e-6, u_max=5.0,
           expression=None, params=None, stab=None):
    """Water displacing air through a 200 x 50 um porous sample.

    Obstacles come from the bundled disc layout or a user-supplied level-set
    expression in x and y (positive in the solid).  Water enters on the left
    with a parabolic profile compatible with the slip condition; the top is
    a symmetry plane and the bottom and right boundaries are outflows.
    """
    if params is None:
        params = ModelParams()
    width, height_dom = 200e-6, 50e-6
    nx, ny = int(round(width / h)), int(round(height_dom / h))
    amb = bgmesh.build_ambient((0.0, 0.0), (width, height_dom), (nx, ny))
    if expression is not None:
        ls = cutcell.from_expression(expression, fd_step=1e-3 * h)
    else:
        ls = _union_of_discs(list(POROUS_CIRCLES))
    im = bgmesh.classify_elements(amb, ls)
    im = bgmesh.tag_conforming_boundaries(
        im, {"left": "inflow", "top": "symmetric",
             "bottom": "outflow", "right": "outflow"})
    disc = Discretization(im, order, params, stab)

    # parabolic inflow with the slip offset that balances the wall traction
    c = 4.0 * params.eta1 / (params.alpha_gn * height_dom)

    def ux_profile(pts, t):
        yhat = 2.0 * (np.atleast_2d(pts)[:, 1] - 0.5 * height_dom) / height_dom
        return u_max * (1.0 - yhat**2 + c) / (1.0 + c)

    def zero(pts, t):
        return np.zeros(np.atleast_2d(pts).shape[0])

    def one(pts, t):
        return np.ones(np.atleast_2d(pts).shape[0])

    bc = BoundaryConditions(
        dirichlet=(DirichletBC("ux", "left", ux_profile),
                   DirichletBC("uy", "left", zero),
                   DirichletBC("phi", "left", one)))

    def phi0(p):
        x = np.atleast_2d(p)[:, 0]
        return physics.equilibrium_profile(10e-6 - x, params)

    U0 = solver.initial_state(disc, phi0=phi0)
    return Scenario(
        name="porous",
        description="water displacing air through a porous sample",
        disc=disc, bc=bc, U0=U0, dt=dt, t_end=t_end)


BUILDERS = {
    "slip-channel": slip_channel,
    "taylor-couette": taylor_couette,
    "lattice": lattice,
    "porous": porous,
}
