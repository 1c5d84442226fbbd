"""Newton solver and adaptive backward-Euler time integration."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import splu, spsolve

from .assembly import AssemblyError, Discretization, BoundaryConditions, VN

log = logging.getLogger(__name__)


class NonlinearSolveError(RuntimeError):
    pass


@dataclass
class NewtonInfo:
    converged: bool
    iterations: int
    residual_norm: float
    initial_norm: float


def newton_solve(disc: Discretization, U, bc: BoundaryConditions, t: float,
                 inv_dt: float = 0.0, U_old=None,
                 rtol: float = 1e-8, atol: float = 1e-12, max_iter: int = 20):
    """Solve the nonlinear system at one time level.

    Strongly constrained dofs are substituted before assembly and the
    linearized updates are restricted to the free dofs.  Returns the updated
    state and a NewtonInfo record; a failed solve is reported through
    ``converged`` rather than an exception so time-step control can react.
    """
    fixed_idx, fixed_vals = disc.constraints(bc, t)
    free = disc.free_mask(fixed_idx)
    U = np.array(U, dtype=float)
    U[fixed_idx] = fixed_vals
    norm0 = None
    norm = np.inf
    for it in range(max_iter + 1):
        try:
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                r, J = disc.assemble(U, U_old, inv_dt, bc, t)
        except AssemblyError:
            # a diverged iterate ran the state out of range; report failure
            # so the time-step controller can react
            return U, NewtonInfo(False, it, np.inf, norm0 if norm0 else np.inf)
        rf = r[free]
        norm = float(np.linalg.norm(rf))
        if norm0 is None:
            norm0 = norm
        if norm <= atol or norm <= rtol * max(norm0, atol):
            return U, NewtonInfo(True, it, norm, norm0)
        if not np.isfinite(norm) or norm > 1e8 * max(norm0, 1.0) or it == max_iter:
            return U, NewtonInfo(False, it, norm, norm0)
        Jff = J[free][:, free].tocsc()
        lu = splu(Jff)
        d = lu.solve(-rf)
        # guard against a silently bad factorization of an ill-conditioned system
        lin_res = np.linalg.norm(Jff @ d + rf) / max(norm, atol)
        if not np.isfinite(lin_res) or lin_res > 1e-6:
            log.warning("linear solve inaccurate (relative residual %.2e)", lin_res)
            return U, NewtonInfo(False, it, norm, norm0)
        U[free] += d
    return U, NewtonInfo(False, max_iter, norm, norm0)


def initial_state(disc: Discretization, phi0=None, u0=None):
    """Discrete initial condition.

    The order parameter and velocity are stabilized L2 projections of the
    given callables (physical points -> values); the chemical potential is
    initialized consistently from the discrete closure relation, and the
    pressure starts at zero.
    """
    n = disc.n_scalar
    U = np.zeros(disc.n_dofs)
    if u0 is not None:
        U[disc.off["ux"]:disc.off["ux"] + n] = disc.project_scalar(
            lambda p: np.atleast_2d(u0(p))[:, 0])
        U[disc.off["uy"]:disc.off["uy"] + n] = disc.project_scalar(
            lambda p: np.atleast_2d(u0(p))[:, 1])
    if phi0 is not None:
        U[disc.off["phi"]:disc.off["phi"] + n] = disc.project_scalar(phi0)
        # closure residual at mu = 0 equals M*mu of the consistent potential
        r, _ = disc.assemble(U, want_jacobian=False)
        rhs = r[disc.off["phi"]:disc.off["phi"] + n]
        U[disc.off["mu"]:disc.off["mu"] + n] = spsolve(
            disc.scalar_mass_matrix(), rhs)
    return U


def max_speed(disc: Discretization, U):
    """Largest velocity magnitude over the volume quadrature points."""
    n = disc.n_scalar
    vmax = 0.0
    for grp in disc.volume_groups:
        dofs = grp["dofs"]
        Nt = grp["B"][:, :, VN, :]
        ux = np.einsum("eqb,eb->eq", Nt, U[disc.off["ux"]:disc.off["ux"] + n][dofs])
        uy = np.einsum("eqb,eb->eq", Nt, U[disc.off["uy"]:disc.off["uy"] + n][dofs])
        vmax = max(vmax, float(np.sqrt(ux**2 + uy**2).max()))
    return vmax


@dataclass
class TimeStepper:
    """Backward-Euler stepping with step halving on Newton failure.

    The step is halved when the nonlinear solve fails (up to ``max_halvings``
    levels below the nominal step) and doubled back towards the nominal step
    after ``restore_after`` consecutive successful steps.
    """

    disc: Discretization
    bc: BoundaryConditions
    dt_nominal: float
    rtol: float = 1e-8
    atol: float = 1e-12
    max_iter: int = 20
    max_halvings: int = 12
    restore_after: int = 8
    dt: float = field(default=None)
    _streak: int = field(default=0)

    def __post_init__(self):
        if self.dt is None:
            self.dt = self.dt_nominal

    def step(self, U, t):
        """Advance one accepted step; returns (U_new, t_new, NewtonInfo)."""
        while True:
            t_new = t + self.dt
            U_new, info = newton_solve(
                self.disc, U, self.bc, t_new, 1.0 / self.dt, U,
                rtol=self.rtol, atol=self.atol, max_iter=self.max_iter)
            if info.converged:
                self._streak += 1
                if self._streak >= self.restore_after and self.dt < self.dt_nominal:
                    self.dt = min(2.0 * self.dt, self.dt_nominal)
                    self._streak = 0
                    log.info("time step restored to %.3e", self.dt)
                return U_new, t_new, info
            self._streak = 0
            if self.dt <= self.dt_nominal / 2**self.max_halvings:
                raise NonlinearSolveError(
                    f"Newton failed at t = {t:.6g} with minimal step {self.dt:.3e} "
                    f"(residual {info.residual_norm:.3e})")
            self.dt *= 0.5
            log.info("Newton failed at t = %.6g; halving step to %.3e", t, self.dt)


def run(disc: Discretization, bc: BoundaryConditions, U0, dt,
        t_end=None, max_steps=100000, steady_rtol=1e-6, steady_count=3,
        history_path=None, monitor=None, **newton_opts):
    """Time-march a problem until t_end and/or a steady state.

    Steady state is declared when the relative state increment per unit time,
    ||dU|| / (dt ||U||), stays below ``steady_rtol`` for ``steady_count``
    consecutive accepted steps.  A step history is optionally written as CSV.
    Returns (U, t, steady_flag).
    """
    stepper = TimeStepper(disc, bc, dt, **newton_opts)
    U, t = np.array(U0, dtype=float), 0.0
    writer = fh = None
    if history_path is not None:
        fh = open(history_path, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(["step", "time", "dt", "newton_iterations",
                         "residual", "phase_total", "energy", "max_speed"])
    calm = 0
    steady = False
    try:
        for step in range(1, max_steps + 1):
            U_prev = U
            U, t, info = stepper.step(U, t)
            rate = np.linalg.norm(U - U_prev) / (
                stepper.dt * max(np.linalg.norm(U), 1e-300))
            if writer is not None:
                writer.writerow([step, f"{t:.9g}", f"{stepper.dt:.6g}",
                                 info.iterations, f"{info.residual_norm:.6g}",
                                 f"{disc.total_phase(U):.12g}",
                                 f"{disc.total_energy(U):.9g}",
                                 f"{max_speed(disc, U):.9g}"])
            if monitor is not None:
                monitor(step, t, U, info)
            calm = calm + 1 if rate < steady_rtol else 0
            if calm >= steady_count:
                steady = True
                log.info("steady state reached at t = %.6g after %d steps", t, step)
                break
            if t_end is not None and t >= t_end - 1e-12 * t_end:
                break
    finally:
        if fh is not None:
            fh.close()
    return U, t, steady
