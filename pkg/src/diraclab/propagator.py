"""Two-parameter linear propagator via the product formula, and nonlinear solvers.

The linear flow is approximated by slicing the trajectory window into
``n_slices`` intervals and applying, on each, the exponential of the
Hamiltonian frozen at the slice's left lattice endpoint.  Inside a slice the
exponential is evaluated by Strang splitting between the pointwise potential
factor and the exact per-mode kinetic (plus optional comoving drift) factor,
so every factor is unitary and charge is preserved to roundoff.  Backward
evolution applies the adjoint product (reversed factors, negated durations).

The nonlinear field solver comes in two independent flavours used to check
each other: a Picard iteration on the Duhamel integral form (trapezoid
quadrature on the snapshot grid) and a direct split-step integrator with the
Hartree potential refreshed every half-step.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import dirac
from .lattice import (
    GridSpec,
    SpinorField,
    as_position,
    charge,
    l2_distance,
    l2_norm,
    sobolev_norm,
    translate,
)
from .hartree import hartree_potential
from .potentials import Trajectory, admissibility_check, coulomb_field

LAB = "lab"
COMOVING_SINGLE = "comoving_single"


class AdmissibilityError(RuntimeError):
    """Raised when a trajectory fails its hypotheses; carries the report."""

    def __init__(self, report):
        super().__init__("; ".join(report.failures))
        self.report = report


class ConvergenceFailure(RuntimeError):
    """Raised when the refinement loop does not reach the requested tolerance."""

    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


class ContractionWindowError(ValueError):
    """Raised when T exceeds the configured contraction window."""


@dataclass
class PropagatorPlan:
    """Discretization plan for the sliced propagator.

    ``n_slices`` counts slices over the full trajectory window; ``substeps``
    Strang substeps are taken inside each slice.  ``eps_reg`` is the Coulomb
    regularization scale (defaults to two grid spacings at the point of use).
    """

    frame: str = LAB
    n_slices: int = 16
    substeps: int = 1
    splitting: str = "strang"
    eps_reg: float = None
    tol: float = 1e-3
    max_levels: int = 6
    velocity_cap: float = 0.25

    def __post_init__(self):
        if self.n_slices < 1 or self.substeps < 1:
            raise ValueError("n_slices and substeps must be >= 1")
        if self.frame not in (LAB, COMOVING_SINGLE):
            raise ValueError(f"unknown frame {self.frame!r}")
        if self.splitting != "strang":
            raise ValueError("only strang splitting is implemented")
        if self.eps_reg is not None and not self.eps_reg > 0:
            raise ValueError("eps_reg must be positive")


@dataclass
class FieldSolution:
    """Snapshots of a field evolution with per-step diagnostics (computed lazily)."""

    times: np.ndarray
    snapshots: list
    sigma: float = 1.25

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self._charges = None
        self._hsigma = None

    @property
    def charges(self) -> np.ndarray:
        if self._charges is None:
            self._charges = np.array([charge(u) for u in self.snapshots])
        return self._charges

    @property
    def hsigma(self) -> np.ndarray:
        if self._hsigma is None:
            self._hsigma = np.array([sobolev_norm(u, self.sigma) for u in self.snapshots])
        return self._hsigma

    @property
    def final(self) -> SpinorField:
        return self.snapshots[-1]

    def charge_drift(self) -> float:
        c0 = self.charges[0]
        return float(np.max(np.abs(self.charges - c0)) / c0) if c0 > 0 else 0.0


def _effective_eps(plan: PropagatorPlan, grid: GridSpec) -> float:
    return plan.eps_reg if plan.eps_reg is not None else 2.0 * grid.spacing


def _comoving_potential(traj: Trajectory, eps: float, grid: GridSpec):
    if traj.n_nuclei != 1:
        raise ValueError("comoving frame is implemented for a single nucleus only")
    center_nucleus = traj.nuclei_at(traj.t0)[0]
    from .potentials import NucleusState

    frozen = NucleusState(center_nucleus.Z, center_nucleus.m, np.zeros(3), np.zeros(3))
    return coulomb_field([frozen], eps, grid)


def _strang_segment(u: SpinorField, V: np.ndarray, dt: float, substeps: int,
                    drift=None) -> SpinorField:
    """exp(-i dt (K + V)) by ``substeps`` Strang steps; returns position space."""
    up = as_position(u)
    grid = up.grid
    delta = dt / substeps
    half = np.exp(-0.5j * delta * V)[..., None]
    full = half * half
    data = up.data * half
    for m in range(substeps):
        data = np.fft.fftn(data, axes=(0, 1, 2))
        data = dirac.step_momentum_data(grid, data, delta, drift)
        data = np.fft.ifftn(data, axes=(0, 1, 2))
        data = data * (full if m < substeps - 1 else half)
    return SpinorField(grid, data, "position")


def frozen_step(u: SpinorField, nuclei_frozen, dt: float, plan: PropagatorPlan,
                drift=None, potential=None) -> SpinorField:
    """One frozen-Hamiltonian exponential: Strang potential/kinetic composition.

    ``nuclei_frozen`` is a list of NucleusState at fixed positions; passing a
    precomputed ``potential`` (ScalarField) skips the Coulomb rebuild.
    """
    up = as_position(u)
    if potential is None:
        eps = _effective_eps(plan, up.grid)
        potential = coulomb_field(nuclei_frozen, eps, up.grid)
    return _strang_segment(up, potential.data, dt, plan.substeps, drift=drift)


def _segments(traj: Trajectory, s: float, t: float, n_slices: int):
    """Slice [s, t] along the lattice tau_j = t0 + j*(T/n_slices).

    Yields (a, b, tau_freeze): evolve from a to b with the Hamiltonian frozen
    at the lattice point tau_freeze (the left lattice neighbour of the
    segment, matching the product-formula convention).
    """
    t0, T = traj.t0, traj.duration
    delta = T / n_slices
    tiny = 1e-9 * delta
    J = int(np.floor((s - t0) / delta + 1e-9)) + 1
    K = int(np.floor((t - t0) / delta + 1e-9))
    tau = lambda j: t0 + j * delta
    segs = []
    if K < J:
        segs.append((s, t, tau(J - 1)))
    else:
        if tau(J) - s > tiny:
            segs.append((s, tau(J), tau(J - 1)))
        for j in range(J, K):
            segs.append((tau(j), tau(j + 1), tau(j)))
        if t - tau(K) > tiny:
            segs.append((tau(K), t, tau(K)))
    return segs


def product_formula_evolve(u0: SpinorField, s: float, t: float, traj: Trajectory,
                           plan: PropagatorPlan, check_admissibility: bool = True) -> SpinorField:
    """Evolve u0 from time s to time t under the sliced frozen-Hamiltonian product.

    Positions (lab frame) or drift velocities (comoving frame) are sampled at
    slice left endpoints.  ``t < s`` applies the adjoint product, so forward
    then backward evolution returns the input to roundoff.
    """
    if check_admissibility:
        # eps0 = 0 disables the separation margin here: the plan carries no
        # collision scale, so only the velocity hypothesis is enforced;
        # callers with an eps0 run their own admissibility_check
        report = admissibility_check(traj, eps0=0.0, velocity_cap=plan.velocity_cap)
        if report.failures:
            raise AdmissibilityError(report)
    up = as_position(u0)
    grid = up.grid
    eps = _effective_eps(plan, grid)
    if abs(t - s) == 0.0:
        return up.copy()
    backward = t < s
    a, b = (t, s) if backward else (s, t)
    segs = _segments(traj, a, b, plan.n_slices)
    if backward:
        segs = [(y, x, f) for (x, y, f) in reversed(segs)]
    static_potential = None
    if plan.frame == COMOVING_SINGLE:
        static_potential = _comoving_potential(traj, eps, grid)
    u = up
    for (x, y, tf) in segs:
        dt = y - x
        if plan.frame == COMOVING_SINGLE:
            drift = traj.velocity(tf)[0]
            u = _strang_segment(u, static_potential.data, dt, plan.substeps, drift=drift)
        else:
            V = coulomb_field(traj.nuclei_at(tf), eps, grid)
            u = _strang_segment(u, V.data, dt, plan.substeps, drift=None)
    return u


@dataclass
class RefinementReport:
    levels: list          # (n_slices, substeps, eps, diff-to-previous or None)
    converged: bool
    achieved_n_slices: int
    tol: float


def evolve_linear(u0: SpinorField, s: float, t: float, traj: Trajectory, tol: float,
                  plan: PropagatorPlan = None, record_times=None, sigma: float = 1.25):
    """Refine the sliced propagator until successive answers differ by < tol in L2.

    Doubles ``n_slices`` per level (the slice-freezing error dominates; Strang
    substeps and the regularization eps are held at their plan values and
    recorded per level).  Returns (FieldSolution, RefinementReport); raises
    :class:`ConvergenceFailure` with the level history when the budget is
    exhausted.
    """
    plan = plan or PropagatorPlan()
    grid = u0.grid
    eps = _effective_eps(plan, grid)
    history = []
    prev = None
    achieved = None
    for level in range(plan.max_levels + 1):
        n_slices = plan.n_slices * 2**level
        cur_plan = replace(plan, n_slices=n_slices)
        u = product_formula_evolve(u0, s, t, traj, cur_plan, check_admissibility=(level == 0))
        diff = None if prev is None else l2_distance(u, prev)
        history.append((n_slices, plan.substeps, eps, diff))
        if diff is not None and diff < tol:
            achieved = cur_plan
            break
        prev = u
    if achieved is None:
        raise ConvergenceFailure(
            f"linear evolution did not reach tol={tol} within {plan.max_levels} refinements",
            history)
    times = np.asarray(record_times, dtype=float) if record_times is not None \
        else np.array([s, t])
    snaps = []
    u = as_position(u0)
    t_prev = times[0]
    snaps.append(u.copy())
    for tt in times[1:]:
        u = product_formula_evolve(u, t_prev, tt, traj, achieved, check_admissibility=False)
        snaps.append(u)
        t_prev = tt
    sol = FieldSolution(times, snaps, sigma=sigma)
    return sol, RefinementReport(history, True, achieved.n_slices, tol)


def measured_l2_operator_norm(traj: Trajectory, plan: PropagatorPlan, grid: GridSpec,
                              s: float, t: float, n_probes: int = 5, seed: int = 0) -> float:
    """Max of ||U u|| / ||u|| over random probes (echo of the contraction bound <= 1)."""
    from .lattice import random_smooth_field

    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_probes):
        u = random_smooth_field(grid, rng, kmax=min(5, grid.n // 2 - 1), decay=0.5)
        v = product_formula_evolve(u, s, t, traj, plan, check_admissibility=False)
        worst = max(worst, l2_norm(v) / l2_norm(u))
    return worst


def frame_equivalence_residual(u0: SpinorField, t: float, traj: Trajectory,
                               plan: PropagatorPlan) -> float:
    """Single-nucleus lab-vs-comoving residual through the exact spectral translation.

    Evolves u0 in the lab frame, and the translated datum in the comoving
    frame (fixed singularity + drift term), then compares after translating
    back by -q(t).  The result is normalized by ||u0||.
    """
    if traj.n_nuclei != 1:
        raise ValueError("frame equivalence is defined for a single nucleus")
    lab = product_formula_evolve(u0, traj.t0, t, traj, replace(plan, frame=LAB),
                                 check_admissibility=False)
    q0 = traj.position(traj.t0)[0]
    v0 = translate(u0, q0)
    v_t = product_formula_evolve(v0, traj.t0, t, traj, replace(plan, frame=COMOVING_SINGLE),
                                 check_admissibility=False)
    back = translate(v_t, -traj.position(t)[0])
    return l2_distance(lab, back) / l2_norm(u0)


def trajectory_sensitivity(u0: SpinorField, t: float, traj1: Trajectory, traj2: Trajectory,
                           plan: PropagatorPlan, sigma: float = 1.25) -> float:
    """``||U_{q1} u0 - U_{q2} u0||_{H^(sigma-1)}`` at matched discretization."""
    if not np.allclose(traj1.position(traj1.t0), traj2.position(traj2.t0)):
        raise ValueError("trajectories must share their initial positions")
    u1 = product_formula_evolve(u0, traj1.t0, t, traj1, plan, check_admissibility=False)
    u2 = product_formula_evolve(u0, traj2.t0, t, traj2, plan, check_admissibility=False)
    diff = SpinorField(u0.grid, u1.data - u2.data, "position")
    return sobolev_norm(diff, sigma - 1.0)


# ---------------------------------------------------------------------------
# nonlinear solvers


@dataclass
class PicardReport:
    iterations: int
    distances: list
    converged: bool
    monotone_after_two: bool


def check_contraction_window(T: float, u0: SpinorField, sigma: float,
                             contraction_const: float) -> None:
    R = sobolev_norm(u0, sigma)
    window = 1.0 / (contraction_const * (1.0 + R**2))
    if T > window + 1e-12:
        raise ContractionWindowError(
            f"time hypothesis violated: require T <= 1/(C (1 + ||u0||_Hs^2)) = {window:.6g}, "
            f"got T = {T:.6g} (C = {contraction_const}, ||u0||_Hs = {R:.6g})")


def duhamel_picard(u0: SpinorField, traj: Trajectory, T: float, tol: float = 1e-8,
                   max_iter: int = 30, plan: PropagatorPlan = None, n_steps: int = None,
                   sigma: float = 1.25, contraction_const: float = 1.0,
                   enforce_window: bool = True):
    """Fixed point of the Duhamel map by Picard iteration on a snapshot grid.

    The Duhamel integral is evaluated by composite trapezoid on the snapshot
    grid, propagated stepwise so each iteration costs one linear sweep.
    Returns (FieldSolution, PicardReport); raises :class:`ConvergenceFailure`
    with the iterate-distance history when ``max_iter`` is exhausted.
    """
    plan = plan or PropagatorPlan()
    if enforce_window:
        check_contraction_window(T, u0, sigma, contraction_const)
    up = as_position(u0)
    M = n_steps if n_steps is not None else max(8, plan.n_slices)
    times = traj.t0 + np.linspace(0.0, T, M + 1)
    delta = T / M
    slices_per_step = max(1, int(round(plan.n_slices / M)))
    step_plan = replace(plan, n_slices=M * slices_per_step)

    def linear_step(u: SpinorField, j: int) -> SpinorField:
        return product_formula_evolve(u, times[j], times[j + 1], traj, step_plan,
                                      check_admissibility=False)

    # iterate 0: the linear evolution
    iterates = [up.copy()]
    for j in range(M):
        iterates.append(linear_step(iterates[-1], j))

    from .hartree import apply_nonlinearity

    distances = []
    converged = False
    for it in range(max_iter):
        nonl = [apply_nonlinearity(u) for u in iterates]
        new = [up.copy()]
        for j in range(M):
            mid = SpinorField(up.grid, new[j].data - 0.5j * delta * nonl[j].data, "position")
            propagated = linear_step(mid, j)
            nxt = SpinorField(up.grid, propagated.data - 0.5j * delta * nonl[j + 1].data,
                              "position")
            new.append(nxt)
        dist = max(l2_distance(a, b) for a, b in zip(new[1:], iterates[1:]))
        distances.append(dist)
        iterates = new
        if dist < tol:
            converged = True
            break
    monotone = all(d2 < d1 for d1, d2 in zip(distances[1:], distances[2:])) \
        if len(distances) > 2 else True
    report = PicardReport(len(distances), distances, converged, monotone)
    if not converged:
        raise ConvergenceFailure(
            f"Picard iteration did not reach tol={tol} in {max_iter} iterations "
            f"(distances: {distances})", distances)
    return FieldSolution(times, iterates, sigma=sigma), report


def split_step_nonlinear(u0: SpinorField, traj: Trajectory, T: float, dt: float,
                         eps_reg: float = None, include_hartree: bool = True,
                         sigma: float = 1.25) -> FieldSolution:
    """Strang split-step cross-check integrator with refreshed Hartree potential.

    The nuclear potential is frozen at each step's left endpoint (matching
    the product-formula convention, so disabling the Hartree term reproduces
    that path exactly); the Hartree potential uses the current field in the
    first half-kick and the post-kinetic field in the second.
    """
    up = as_position(u0)
    grid = up.grid
    eps = eps_reg if eps_reg is not None else 2.0 * grid.spacing
    M = max(1, int(round(T / dt)))
    delta = T / M
    times = traj.t0 + np.linspace(0.0, T, M + 1)
    snaps = [up.copy()]
    u = up
    for j in range(M):
        V = coulomb_field(traj.nuclei_at(times[j]), eps, grid).data
        if include_hartree:
            Vh = V + hartree_potential(u).data
        else:
            Vh = V
        data = u.data * np.exp(-0.5j * delta * Vh)[..., None]
        data = np.fft.fftn(data, axes=(0, 1, 2))
        data = dirac.step_momentum_data(grid, data, delta, None)
        data = np.fft.ifftn(data, axes=(0, 1, 2))
        w = SpinorField(grid, data, "position")
        if include_hartree:
            Vh2 = V + hartree_potential(w).data
        else:
            Vh2 = V
        u = SpinorField(grid, w.data * np.exp(-0.5j * delta * Vh2)[..., None], "position")
        snaps.append(u)
    return FieldSolution(times, snaps, sigma=sigma)
