"""Forces on nuclei, the trajectory map, and the coupled field-nuclei solvers.

Force convention: the force on nucleus k is minus the gradient, with respect
to q_k, of the discrete regularized interaction energy plus the internuclear
Coulomb energy,

    F_k = + Z_k h^3 sum_x rho(x) (x - q_k) / (|x - q_k|^2 + eps^2)^(3/2)
          + sum_{l != k} Z_k Z_l (q_k - q_l) / |q_k - q_l|^3,

which is the choice that conserves total energy and momentum of the coupled
system (the field force and the potential share one regularization eps, so
the discrete energy is exactly differentiable in q and the Hellmann-Feynman
identity holds to quadrature roundoff).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dirac import kinetic_expectation
from .hartree import hartree_energy, hartree_potential
from .lattice import SpinorField, as_momentum, as_position, charge, density
from .potentials import NucleusState, Trajectory, admissibility_check, coulomb_field
from .propagator import (
    FieldSolution,
    PropagatorPlan,
    check_contraction_window,
    duhamel_picard,
)


class FixedPointDivergence(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


class CollisionError(RuntimeError):
    pass


@dataclass
class ForceBreakdown:
    t: float
    field: np.ndarray         # (n_nuclei, 3)
    internuclear: np.ndarray  # (n_nuclei, 3)

    @property
    def total(self) -> np.ndarray:
        return self.field + self.internuclear


@dataclass
class EnergyBreakdown:
    field_kinetic: float
    interaction: float
    hartree: float
    nuclear_kinetic: float
    internuclear: float

    @property
    def total(self) -> float:
        return (self.field_kinetic + self.interaction + self.hartree
                + self.nuclear_kinetic + self.internuclear)

    def component_scale(self) -> float:
        return max(abs(self.field_kinetic), abs(self.interaction), abs(self.hartree),
                   abs(self.nuclear_kinetic), abs(self.internuclear), 1e-30)


def field_force(u: SpinorField, nucleus: NucleusState, eps: float) -> np.ndarray:
    """Hellmann-Feynman force of the field on one nucleus (see module docstring)."""
    up = as_position(u)
    if not up.data.any():
        return np.zeros(3)
    grid = up.grid
    rho = density(up)
    dx, dy, dz = grid.displacement_mesh(nucleus.q)
    r2 = dx * dx + dy * dy + dz * dz
    w = rho / (r2 + eps**2) ** 1.5
    h3 = grid.spacing**3
    return nucleus.Z * h3 * np.array([np.sum(w * dx), np.sum(w * dy), np.sum(w * dz)])


def interaction_energy(u: SpinorField, nuclei, eps: float) -> float:
    """``h^3 sum rho V_eps`` with the same regularized potential as the propagator."""
    up = as_position(u)
    V = coulomb_field(nuclei, eps, up.grid)
    return float(up.grid.spacing**3 * np.sum(density(up) * V.data))


def internuclear_force(nuclei) -> np.ndarray:
    """Pairwise Coulomb forces ``Z_k Z_l (q_k - q_l)/|q_k - q_l|^3``; exact action-reaction."""
    nuclei = list(nuclei)
    n = len(nuclei)
    F = np.zeros((n, 3))
    for k in range(n):
        for l in range(k + 1, n):
            d = nuclei[k].q - nuclei[l].q
            r = np.linalg.norm(d)
            if r == 0.0:
                raise CollisionError(f"nuclei {k} and {l} coincide")
            f = nuclei[k].Z * nuclei[l].Z * d / r**3
            F[k] += f
            F[l] -= f
    return F


def force_breakdown(u: SpinorField, nuclei, eps: float, t: float = 0.0) -> ForceBreakdown:
    fld = np.array([field_force(u, nuc, eps) for nuc in nuclei])
    return ForceBreakdown(t=t, field=fld, internuclear=internuclear_force(nuclei))


def internuclear_energy(nuclei) -> float:
    nuclei = list(nuclei)
    total = 0.0
    for k in range(len(nuclei)):
        for l in range(k + 1, len(nuclei)):
            r = np.linalg.norm(nuclei[k].q - nuclei[l].q)
            if r == 0.0:
                raise CollisionError(f"nuclei {k} and {l} coincide")
            total += nuclei[k].Z * nuclei[l].Z / r
    return total


def energy_breakdown(u: SpinorField, nuclei, eps: float) -> EnergyBreakdown:
    nuclei = list(nuclei)
    return EnergyBreakdown(
        field_kinetic=kinetic_expectation(u),
        interaction=interaction_energy(u, nuclei, eps) if nuclei else 0.0,
        hartree=hartree_energy(u),
        nuclear_kinetic=float(sum(0.5 * nuc.m * nuc.qdot @ nuc.qdot for nuc in nuclei)),
        internuclear=internuclear_energy(nuclei) if len(nuclei) > 1 else 0.0,
    )


def field_momentum(u: SpinorField) -> np.ndarray:
    """``<u, -i grad u>`` per axis, computed spectrally (real by construction)."""
    um = as_momentum(u)
    w = np.sum(np.abs(um.data) ** 2, axis=-1)
    kx, ky, kz = um.grid.freq_mesh
    vol = um.grid.volume
    return np.array([np.sum(kx * w), np.sum(ky * w), np.sum(kz * w)]) / vol


def total_momentum(u: SpinorField, nuclei) -> np.ndarray:
    p = field_momentum(u)
    for nuc in nuclei:
        p = p + nuc.m * nuc.qdot
    return p


# ---------------------------------------------------------------------------
# trajectory map P


def _forces_along(fsol: FieldSolution, traj: Trajectory, eps: float) -> np.ndarray:
    """Force time series (n_times, n_nuclei, 3) along the input trajectory."""
    out = np.zeros((len(fsol.times), traj.n_nuclei, 3))
    for j, t in enumerate(fsol.times):
        nuclei = traj.nuclei_at(t)
        fb = force_breakdown(fsol.snapshots[j], nuclei, eps, t=t)
        out[j] = fb.total
    return out


def _integrate_force_series(times: np.ndarray, F: np.ndarray, masses: np.ndarray,
                            a: np.ndarray, b: np.ndarray):
    """Second-order double integration of a known force series from (a, b).

    This is velocity-Verlet specialized to a force that is an explicit
    function of time: drift with half-kick, then trapezoid velocity update.
    """
    M = len(times) - 1
    delta = float(times[1] - times[0])
    n = F.shape[1]
    q = np.zeros((n, M + 1, 3))
    v = np.zeros((n, M + 1, 3))
    q[:, 0] = a
    v[:, 0] = b
    acc = F / masses[None, :, None]
    for j in range(M):
        q[:, j + 1] = q[:, j] + delta * v[:, j] + 0.5 * delta**2 * acc[j]
        v[:, j + 1] = v[:, j] + 0.5 * delta * (acc[j] + acc[j + 1])
    return q, v


def trajectory_map_P(traj_in: Trajectory, u0: SpinorField, T: float,
                     plan: PropagatorPlan = None, picard_tol: float = 1e-8,
                     picard_max_iter: int = 30, n_steps: int = None,
                     eps0: float = None, enforce_window: bool = False,
                     sigma: float = 1.25):
    """One application of the trajectory map: solve the field along ``traj_in``,
    then integrate ``m_k qddot = F_k(t)`` from the input's initial data.

    The force series is evaluated along the *input* trajectory (field force
    from the solved field, internuclear force from the input positions), so
    P is an explicit double integration; its fixed points solve the coupled
    system.  Returns (trajectory, field solution, admissibility report).
    """
    plan = plan or PropagatorPlan()
    grid = u0.grid
    eps = plan.eps_reg if plan.eps_reg is not None else 2.0 * grid.spacing
    M = n_steps if n_steps is not None else max(8, plan.n_slices)
    if charge(u0) == 0.0:
        times = traj_in.t0 + np.linspace(0.0, T, M + 1)
        zero = as_position(u0)
        fsol = FieldSolution(times, [zero] * (M + 1), sigma=sigma)
    else:
        from .lattice import translate
        from .propagator import COMOVING_SINGLE

        # the comoving solve propagates v(t, x) = u(t, x + q(t)); the Hartree
        # term is exactly translation-covariant, so translating in at t0 and
        # back per snapshot recovers the lab-frame field
        comoving = plan.frame == COMOVING_SINGLE
        u_start = translate(u0, traj_in.position(traj_in.t0)[0]) if comoving else u0
        fsol, _ = duhamel_picard(u_start, traj_in, T, tol=picard_tol,
                                 max_iter=picard_max_iter, plan=plan, n_steps=M,
                                 sigma=sigma, enforce_window=enforce_window)
        if comoving:
            snaps = [translate(s, -traj_in.position(t)[0])
                     for s, t in zip(fsol.snapshots, fsol.times)]
            fsol = FieldSolution(fsol.times, snaps, sigma=sigma)
    F = _forces_along(fsol, traj_in, eps)
    a = traj_in.positions[:, 0]
    b = traj_in.velocities[:, 0]
    q, v = _integrate_force_series(fsol.times, F, traj_in.masses, a, b)
    out = Trajectory(traj_in.charges, traj_in.masses, fsol.times, q, v)
    report = admissibility_check(out, eps0=eps0 if eps0 is not None else 0.0,
                                 velocity_cap=plan.velocity_cap)
    return out, fsol, report


@dataclass
class FixedPointReport:
    outer_iterations: int
    step_history: list
    converged: bool
    newton_residual: float
    admissibility_failures: list


def _newton_residual(traj: Trajectory, u_series: FieldSolution, eps: float) -> float:
    """Max over interior nodes of |qddot (central difference) - F/m|."""
    delta = traj.dt
    F = _forces_along(u_series, traj, eps)
    acc_fd = (traj.positions[:, 2:] - 2 * traj.positions[:, 1:-1] + traj.positions[:, :-2]) / delta**2
    acc_force = np.transpose(F[1:-1] / traj.masses[None, :, None], (1, 0, 2))
    return float(np.max(np.linalg.norm(acc_fd - acc_force, axis=2)))


def coupled_fixed_point(u0: SpinorField, nuclei0, T: float, tol: float = 1e-6,
                        max_outer: int = 40, theta: float = 0.5,
                        plan: PropagatorPlan = None, n_steps: int = None,
                        eps0: float = 0.25, picard_tol: float = 1e-9,
                        picard_max_iter: int = 30, sigma: float = 1.25,
                        contraction_const: float = 1.0,
                        enforce_window: bool = True):
    """Damped outer iteration ``q <- (1-theta) q + theta P(q)`` to self-consistency.

    Preconditions: initial separations >= 8*eps0 when several nuclei are
    present, and T inside the contraction window (configurable constant).
    Convergence is declared when the damped update moves the velocity series
    by less than ``tol`` in sup norm; the returned report carries the Newton
    residual of the converged pair.
    """
    nuclei0 = list(nuclei0)
    plan = plan or PropagatorPlan()
    if len(nuclei0) >= 2:
        for k in range(len(nuclei0)):
            for l in range(k + 1, len(nuclei0)):
                sep = np.linalg.norm(nuclei0[k].q - nuclei0[l].q)
                if sep < 8.0 * eps0 - 1e-12:
                    raise ValueError(
                        "separation hypothesis violated: require min |q_k(0) - q_l(0)| "
                        f">= 8*eps0 = {8 * eps0:.6g}, got |q_{k}(0) - q_{l}(0)| = {sep:.6g}")
    if enforce_window and charge(u0) > 0:
        check_contraction_window(T, u0, sigma, contraction_const)
    charges = np.array([nuc.Z for nuc in nuclei0])
    masses = np.array([nuc.m for nuc in nuclei0])
    a = np.array([nuc.q for nuc in nuclei0])
    b = np.array([nuc.qdot for nuc in nuclei0])
    M = n_steps if n_steps is not None else max(8, plan.n_slices)
    traj = Trajectory.constant_velocity(charges, masses, a, b, 0.0, T, M)
    history = []
    converged = False
    fsol = None
    report_adm = None
    for it in range(max_outer):
        traj_P, fsol, report_adm = trajectory_map_P(
            traj, u0, T, plan=plan, picard_tol=picard_tol,
            picard_max_iter=picard_max_iter, n_steps=M, eps0=eps0,
            enforce_window=False, sigma=sigma)
        new_pos = (1 - theta) * traj.positions + theta * traj_P.positions
        new_vel = (1 - theta) * traj.velocities + theta * traj_P.velocities
        step = float(np.max(np.abs(new_vel - traj.velocities)))
        history.append(step)
        traj = Trajectory(charges, masses, traj.times, new_pos, new_vel)
        if step < tol:
            converged = True
            break
    if not converged:
        raise FixedPointDivergence(
            f"outer fixed point did not reach tol={tol} in {max_outer} iterations "
            f"(damped steps: {history})", history)
    # final self-consistent field along the converged trajectory
    _, fsol, report_adm = trajectory_map_P(
        traj, u0, T, plan=plan, picard_tol=picard_tol, picard_max_iter=picard_max_iter,
        n_steps=M, eps0=eps0, enforce_window=False, sigma=sigma)
    eps = plan.eps_reg if plan.eps_reg is not None else 2.0 * u0.grid.spacing
    resid = _newton_residual(traj, fsol, eps)
    report = FixedPointReport(len(history), history, converged, resid,
                              report_adm.failures)
    return fsol, traj, report


# ---------------------------------------------------------------------------
# direct interleaved integrator


@dataclass
class DirectRunReport:
    energies: list               # EnergyBreakdown per step
    momenta: np.ndarray          # (n_times, 3)
    energy_drift: float
    momentum_drift: float
    charge_drift: float


def coupled_direct(u0: SpinorField, nuclei0, T: float, dt: float,
                   eps_reg: float = None, include_hartree: bool = True,
                   sigma: float = 1.25, collision_floor: float = None):
    """Interleaved velocity-Verlet + split-step integrator for the coupled system.

    The field advances by one Strang split-step per nuclear step, with the
    nuclear potential evaluated at the step-start and step-end positions in
    the two half-kicks.  Returns (FieldSolution, Trajectory, DirectRunReport)
    with energy/momentum/charge drift diagnostics.
    """
    from .dirac import step_momentum_data

    nuclei0 = list(nuclei0)
    up = as_position(u0)
    grid = up.grid
    eps = eps_reg if eps_reg is not None else 2.0 * grid.spacing
    floor = collision_floor if collision_floor is not None else 2.0 * grid.spacing
    charges = np.array([nuc.Z for nuc in nuclei0])
    masses = np.array([nuc.m for nuc in nuclei0])
    M = max(1, int(round(T / dt)))
    delta = T / M
    times = np.linspace(0.0, T, M + 1)
    n = len(nuclei0)
    q = np.zeros((n, M + 1, 3))
    v = np.zeros((n, M + 1, 3))
    q[:, 0] = [nuc.q for nuc in nuclei0]
    v[:, 0] = [nuc.qdot for nuc in nuclei0]

    def nuclei_at(j):
        return [NucleusState(charges[k], masses[k], q[k, j], v[k, j]) for k in range(n)]

    def forces(u, nucs):
        fb = force_breakdown(u, nucs, eps)
        return fb.total

    def check_collision(j):
        for k in range(n):
            for l in range(k + 1, n):
                if np.linalg.norm(q[k, j] - q[l, j]) < floor:
                    raise CollisionError(
                        f"nuclei {k} and {l} closer than the resolvable scale {floor:.4g} "
                        f"at t={times[j]:.6g}")

    u = up
    snaps = [u.copy()]
    energies = [energy_breakdown(u, nuclei_at(0), eps)]
    momenta = [total_momentum(u, nuclei_at(0))]
    F = forces(u, nuclei_at(0)) if n else np.zeros((0, 3))
    for j in range(M):
        if n:
            vhalf = v[:, j] + 0.5 * delta * F / masses[:, None]
            q[:, j + 1] = q[:, j] + delta * vhalf
            check_collision(j + 1)
        V1 = coulomb_field(nuclei_at(j), eps, grid).data if n else 0.0
        Vh1 = V1 + (hartree_potential(u).data if include_hartree else 0.0)
        data = u.data * np.exp(-0.5j * delta * Vh1)[..., None] if np.ndim(Vh1) else u.data
        data = np.fft.fftn(data, axes=(0, 1, 2))
        data = step_momentum_data(grid, data, delta, None)
        data = np.fft.ifftn(data, axes=(0, 1, 2))
        w = SpinorField(grid, data, "position")
        nucs_end = [NucleusState(charges[k], masses[k], q[k, j + 1], v[k, j]) for k in range(n)]
        V2 = coulomb_field(nucs_end, eps, grid).data if n else 0.0
        Vh2 = V2 + (hartree_potential(w).data if include_hartree else 0.0)
        u = SpinorField(grid, w.data * np.exp(-0.5j * delta * Vh2)[..., None], "position") \
            if np.ndim(Vh2) else w
        if n:
            F_new = forces(u, nucs_end)
            v[:, j + 1] = vhalf + 0.5 * delta * F_new / masses[:, None]
            F = F_new
        snaps.append(u)
        energies.append(energy_breakdown(u, nuclei_at(j + 1), eps))
        momenta.append(total_momentum(u, nuclei_at(j + 1)))

    fsol = FieldSolution(times, snaps, sigma=sigma)
    traj = Trajectory(charges, masses, times, q, v) if n else None
    momenta = np.array(momenta)
    e_tot = np.array([e.total for e in energies])
    e_scale = max(max(e.component_scale() for e in energies), 1e-30)
    p_scale = max(float(np.max(np.linalg.norm(momenta, axis=1))),
                  max(float(np.sum(masses * np.linalg.norm(v[:, j], axis=-1)))
                      for j in range(M + 1)) if n else 0.0, 1e-30)
    report = DirectRunReport(
        energies=energies,
        momenta=momenta,
        energy_drift=float(np.max(np.abs(e_tot - e_tot[0])) / e_scale),
        momentum_drift=float(np.max(np.linalg.norm(momenta - momenta[0], axis=1)) / p_scale),
        charge_drift=fsol.charge_drift(),
    )
    return fsol, traj, report
