"""Strang-split time stepping.

One step maps ``U^n`` to ``U^{n+1}`` through

1. RK4 on the reaction system ``M dU/dt = F(U)`` over ``[t^n, t^{n+1/2}]``;
2. a semi-Lagrangian BDF2 solve of the advection-diffusion part over a full
   step, one factorised ``A = 3/(2 dt) M + K`` per diffusion coefficient;
3. RK4 on the reaction again over ``[t^{n+1/2}, t^{n+1}]``.

The transport stage ``D`` is linear in its input.  BDF2 needs two levels of
one ``D`` trajectory, but the stage input ``W^n = R(dt/2) U^n`` differs from
the previous stage output ``X^n = D(dt) W^{n-1}`` by the reaction over a
step, ``E = W^n - X^n``.  So ``D(dt) W^n = D(dt) X^n + D(dt) E``: the first
term continues the old trajectory with BDF2 on ``(W^{n-1}, X^n)``, the second
is a homogeneous step of Richardson-extrapolated backward Euler.  Running BDF2
on ``W^n`` with the stale level ``W^{n-1}`` instead drops an ``O(dt^2)``
commutator term every step and the scheme falls to first order.

With ``bc = neumann-exact`` the split is shifted by ``q = f(u*)`` for the
exact solution ``u*``: the reaction stages integrate ``f(u) - q`` and the
transport stage carries the source ``q``.  The full equation is unchanged,
but ``u*`` then solves both sub-problems, so the exact boundary flux and
inflow data are consistent with each stage.  Without the shift the Neumann
data seen by the transport stage is off by the reaction and the scheme drops
to first order.
"""

import logging
import math
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import NumericalError, apply_dirichlet, assemble_mass, assemble_stiffness, edge_load, \
    assemble_reaction_load, load_vector
from .geometry import Mesh, preset_geometry
from .transport import departure_points, evaluate_param, exterior_increment, locate, sl_rhs

log = logging.getLogger(__name__)

BC_KINDS = ("neumann-zero", "neumann-exact", "dirichlet-zero")


class StiffnessError(NumericalError):
    pass


class LinearAlgebraError(RuntimeError):
    pass


class SimulationError(RuntimeError):
    def __init__(self, step, t, cause):
        self.step, self.t, self.cause = step, t, cause
        super().__init__(f"step {step} (t = {t:.6g}): {type(cause).__name__}: {cause}")


@dataclass
class FieldState:
    """Control coefficients ``U`` with shape ``(ncomp, ndof)`` at time ``t``.

    ``U_prev`` is the previous full level.  ``U_half_prev`` and ``U_diff_prev``
    are the input and output of the previous transport stage, which seed the
    BDF2 history.
    """

    U: np.ndarray
    t: float
    U_prev: Optional[np.ndarray] = None
    U_half_prev: Optional[np.ndarray] = None
    step: int = 0
    U_diff_prev: Optional[np.ndarray] = None

    def __post_init__(self):
        self.U = np.atleast_2d(np.asarray(self.U, dtype=float))
        if not np.all(np.isfinite(self.U)):
            raise NumericalError("non-finite state coefficients")

    @property
    def u(self):
        return self.U[0]

    @property
    def v(self):
        return self.U[1] if self.U.shape[0] > 1 else None

    @property
    def ncomp(self):
        return self.U.shape[0]

    def copy(self):
        cp = lambda a: None if a is None else a.copy()  # noqa: E731
        return FieldState(self.U.copy(), self.t, cp(self.U_prev), cp(self.U_half_prev), self.step,
                          cp(self.U_diff_prev))


def default_substeps(problem, dt):
    if problem.stiffness >= 100:
        return max(1, math.ceil(problem.stiffness * dt / 2.0))
    return 1


class SolverWorkspace:
    """Matrices and factorizations shared across steps.

    ``factorizations`` counts every LU computed, by kind: ``"M"``, ``"A"``
    (BDF2 system), ``"A_bootstrap"`` (backward Euler over ``dt``) and
    ``"A_half"`` (backward Euler over ``dt/2``).
    """

    def __init__(self, mesh, bc="neumann-zero"):
        if bc not in BC_KINDS:
            raise ValueError(f"bc must be one of {BC_KINDS}")
        self.mesh = mesh
        self.bc = bc
        self.M = assemble_mass(mesh)
        self.K1 = assemble_stiffness(mesh)
        self.factorizations = Counter()
        self._systems = {}
        self._M_lu = None
        self._dirichlet = bc == "dirichlet-zero"

    def _factor(self, A, kind):
        try:
            # the systems are symmetric: a symmetric ordering without pivoting
            # fills far less than the default column ordering
            lu = spla.splu(A.tocsc(), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                           options=dict(SymmetricMode=True))
        except RuntimeError as exc:
            raise LinearAlgebraError(f"factorization of {kind} failed: {exc}") from exc
        self.factorizations[kind] += 1
        return lu

    def solve_mass(self, rhs):
        if self._M_lu is None:
            self._M_lu = self._factor(self.M, "M")
        return self._M_lu.solve(np.asarray(rhs, dtype=float).T).T

    def system(self, kind, dt, d, K=None):
        """Factorised ``c M + d K1`` (or ``c M + K``), ``c = 3/(2dt)``, ``2/dt`` or ``1/dt``.

        Constant-coefficient systems are cached by ``(kind, dt, d)``; an
        explicit ``K`` is always refactorised.
        """
        key = (kind, float(dt), None if d is None else float(d))
        if K is None and key in self._systems:
            return self._systems[key]
        c = {"A": 1.5 / dt, "A_half": 2.0 / dt}.get(kind, 1.0 / dt)
        A = c * self.M + (d * self.K1 if K is None else K)
        if self._dirichlet:
            A, _ = apply_dirichlet(A, np.zeros(A.shape[0]), self.mesh.boundary)
        entry = (A.tocsr(), self._factor(A, kind))
        if K is None:
            self._systems[key] = entry
        return entry

    def solve(self, entry, rhs):
        A, lu = entry
        b = np.array(rhs, dtype=float)
        if self._dirichlet:
            b[self.mesh.boundary] = 0.0
        x = lu.solve(b)
        bn = np.abs(b).max()
        res = float(np.abs(A @ x - b).max() / bn) if bn > 0 else 0.0
        return x, res


# --------------------------------------------------------------------------
# reaction stage
# --------------------------------------------------------------------------


def _rk4(rhs, y, t0, h, n):
    # blow-up is reported by the callers' finiteness checks, not as warnings
    with np.errstate(over="ignore", invalid="ignore"):
        return _rk4_steps(rhs, y, t0, h, n)


def _rk4_steps(rhs, y, t0, h, n):
    dt = h / n
    t = t0
    for _ in range(n):
        k1 = rhs(y, t)
        k2 = rhs(y + 0.5 * dt * k1, t + 0.5 * dt)
        k3 = rhs(y + 0.5 * dt * k2, t + 0.5 * dt)
        k4 = rhs(y + dt * k3, t + dt)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += dt
    return y


def reaction_flow(U, problem, workspace, t0, h, n_substeps, shift=None):
    """``n_substeps`` classical RK4 steps of ``M dU/dt = F(U, t)`` over ``[t0, t0+h]``.

    For a linear reaction ``shift(t)``, if given, is subtracted from ``L U``.
    """
    if problem.reaction_is_zero() or h == 0:
        return np.array(U, dtype=float, copy=True)
    if problem.linear_reaction is not None:
        L = problem.linear_reaction
        if shift is None:
            out = _rk4(lambda y, t: L @ y, np.asarray(U, dtype=float), t0, h, n_substeps)
        else:
            out = _rk4(lambda y, t: L @ y - shift(t), np.asarray(U, dtype=float), t0, h,
                       n_substeps)
    else:
        mesh = workspace.mesh

        def rhs(y, t):
            return workspace.solve_mass(assemble_reaction_load(mesh, y, problem.reaction, t))

        out = _rk4(rhs, np.asarray(U, dtype=float), t0, h, n_substeps)
    if not np.all(np.isfinite(out)):
        raise StiffnessError(f"reaction stage produced non-finite values on [{t0}, {t0 + h}]; "
                             "increase n_substeps")
    return out


def shifted_reaction(problem):
    """``problem`` with reaction ``f(u) - f(u*)``, ``u*`` its exact solution."""
    f, exact = problem.reaction, problem.exact

    def reaction(vals, x, t):
        return f(vals, x, t) - f(exact(x, t), x, t)

    return problem.with_params(reaction=reaction, linear_reaction=None)


def rk4_reaction_halfstep(state, problem, workspace, h, n_substeps):
    """Advance ``state`` by ``h`` (normally ``dt/2``) through the reaction only."""
    U = reaction_flow(state.U, problem, workspace, state.t, h, n_substeps)
    return FieldState(U, state.t + h, state.U_prev, state.U_half_prev, state.step,
                      state.U_diff_prev)


# --------------------------------------------------------------------------
# advection-diffusion stage
# --------------------------------------------------------------------------


@dataclass
class StepContext:
    """Per-run constants shared by every step."""

    problem: object
    mesh: Mesh
    workspace: SolverWorkspace
    dt: float
    n_substeps: int
    bc: str
    fd_eps: float = 1e-5
    _dep_cache: dict = field(default_factory=dict)
    split_problem: object = None
    _shift_cache: dict = field(default_factory=dict)
    _step_systems: dict = field(default_factory=dict)

    def __post_init__(self):
        p = self.problem
        if self.split_problem is None:
            shifted = self.exact_bc and p.linear_reaction is None
            self.split_problem = shifted_reaction(p) if shifted else p

    def shift(self, t):
        """Coefficients of ``L u*(t)``, the shift of a linear reaction."""
        p = self.problem
        if t not in self._shift_cache:
            if len(self._shift_cache) > 32:
                self._shift_cache.clear()
            self._shift_cache[t] = p.linear_reaction @ project(self.mesh, self.workspace, p.exact, t)
        return self._shift_cache[t]

    @property
    def exact_bc(self):
        return self.bc == "neumann-exact"


class _SolutionVelocity:
    """Velocity built from the solution, linear in time through levels n-1 and n."""

    def __init__(self, ctx, state):
        self.ctx = ctx
        self.U_n = state.U
        self.U_nm1 = state.U if state.U_prev is None else state.U_prev
        self.t_n = state.t
        self.steady = False

    def __call__(self, x, t):
        ctx = self.ctx
        s = (t - self.t_n) / ctx.dt
        U = self.U_n + s * (self.U_n - self.U_nm1)
        uv, clamped, _ = locate(ctx.mesh, x)
        vals = evaluate_param(ctx.mesh, U, uv)
        if ctx.exact_bc and clamped.any():
            vals[:, clamped] += exterior_increment(ctx.mesh, lambda y: ctx.problem.exact(y, t),
                                                   x[clamped], uv[clamped], U.shape[0])
        return ctx.problem.velocity_of_solution(vals)


def _velocity(ctx, state):
    p = ctx.problem
    if p.velocity_of_solution is not None:
        return _SolutionVelocity(ctx, state)
    return p.velocity


def _departures(ctx, velocity, t_arrival, span):
    if velocity is None:
        return None
    steady = getattr(velocity, "steady", False)
    key = round(2 * span / ctx.dt)
    if steady and key in ctx._dep_cache:
        return ctx._dep_cache[key]
    dep = departure_points(ctx.mesh, velocity, t_arrival, span)
    if steady:
        ctx._dep_cache[key] = dep
    return dep


def _projected(ctx, W, dep, exterior):
    if dep is None:
        return (ctx.workspace.M @ W.T).T
    reuse = any(d is dep for d in ctx._dep_cache.values())
    return sl_rhs(ctx.mesh, W, dep, exterior if ctx.exact_bc else None, reuse=reuse)


def _exterior(ctx, t_data):
    p = ctx.problem
    return lambda x: p.exact(x, t_data)


def _shift_source(ctx, t_next):
    """Load of ``q = f(u*)`` at ``t_next``, or 0 without the shifted split."""
    if not ctx.exact_bc:
        return 0.0
    p, mesh = ctx.problem, ctx.mesh
    pts = mesh.points
    vals = np.asarray(p.reaction(p.exact(pts, t_next), pts, t_next), dtype=float)
    return load_vector(mesh, vals.reshape((-1,) + mesh.wdet.shape))


def _boundary_flux(ctx, t_next, diffusion):
    """Load of ``d du*/dn`` at ``t_next`` for the exact solution ``u*``."""
    if not ctx.exact_bc:
        return 0.0
    p = ctx.problem
    eps = ctx.fd_eps
    out = []
    e = ctx.mesh.edge_quadrature()
    wp = p.exact(e.points + eps * e.normals, t_next)
    wm = p.exact(e.points - eps * e.normals, t_next)
    dn = (wp - wm) / (2 * eps)
    if p.diffusion_of_solution is not None:
        dval = p.diffusion_of_solution(p.exact(e.points, t_next))
        dvals = [dval] * p.ncomp
    else:
        dvals = [diffusion[c] for c in range(p.ncomp)]
    for c in range(p.ncomp):
        flux = dvals[c] * dn[c]
        out.append(edge_load(ctx.mesh, lambda pts, nrm, f=flux: f))
    return np.array(out)


def _diffusion_systems(ctx, state, kind, t_next):
    p = ctx.problem
    ws = ctx.workspace
    if p.diffusion_of_solution is not None:
        # frozen over the step; every solve of the step shares K and its systems
        cache = ctx._step_systems
        if cache.get("step") != state.step:
            U_ext = state.U if state.U_prev is None else 2.0 * state.U - state.U_prev
            vals = ctx.mesh.values_at_quadrature(U_ext)
            d = np.asarray(p.diffusion_of_solution(vals), dtype=float)
            cache.clear()
            cache.update(step=state.step, K=assemble_stiffness(ctx.mesh, d))
        if kind not in cache:
            cache[kind] = ws.system(kind, ctx.dt, None, cache["K"])
        return [cache[kind]] * p.ncomp, None
    return [ws.system(kind, ctx.dt, p.diffusion[c]) for c in range(p.ncomp)], p.diffusion


def bdf2_sl_step(state, ctx, W_n, W_nm1):
    """Solve ``(3/(2dt) M + K) x = (2/dt) H(W_n) - (1/(2dt)) H(W_{n-1})`` per component."""
    dt = ctx.dt
    t_next = state.t + dt
    vel = _velocity(ctx, state)
    dep1 = _departures(ctx, vel, t_next, dt)
    dep2 = _departures(ctx, vel, t_next, 2 * dt)
    H1 = _projected(ctx, W_n, dep1, _exterior(ctx, state.t))
    H2 = _projected(ctx, W_nm1, dep2, _exterior(ctx, state.t - dt))
    systems, diffusion = _diffusion_systems(ctx, state, "A", t_next)
    rhs = (2.0 / dt) * H1 - (0.5 / dt) * H2 + _boundary_flux(ctx, t_next, diffusion) \
        + _shift_source(ctx, t_next)
    return _solve_all(ctx, systems, rhs, dep1)


def bootstrap_step(state, ctx, W_n):
    """Backward-Euler version of :func:`bdf2_sl_step` for the first step."""
    dt = ctx.dt
    t_next = state.t + dt
    vel = _velocity(ctx, state)
    dep1 = _departures(ctx, vel, t_next, dt)
    H1 = _projected(ctx, W_n, dep1, _exterior(ctx, state.t))
    systems, diffusion = _diffusion_systems(ctx, state, "A_bootstrap", t_next)
    rhs = H1 / dt + _boundary_flux(ctx, t_next, diffusion) + _shift_source(ctx, t_next)
    return _solve_all(ctx, systems, rhs, dep1)


def _solve_all(ctx, systems, rhs, dep):
    out = np.empty_like(rhs)
    worst = 0.0
    for c, entry in enumerate(systems):
        out[c], res = ctx.workspace.solve(entry, rhs[c])
        worst = max(worst, res)
    if not np.all(np.isfinite(out)):
        raise NumericalError("non-finite solution of the diffusion system")
    return out, {"residual": worst, "clamped": 0 if dep is None else dep.n_clamped}


def _euler(state, ctx, E, t_arrival, span, kind):
    vel = _velocity(ctx, state)
    dep = _departures(ctx, vel, t_arrival, span)
    H = _projected(ctx, E, dep, None)
    systems, _ = _diffusion_systems(ctx, state, kind, t_arrival)
    return _solve_all(ctx, systems, H / span, dep)


def homogeneous_step(state, ctx, E):
    """Transport ``E`` over one step with no boundary data or source.

    Richardson extrapolation of backward Euler, ``2 B(dt/2)^2 - B(dt)``: second
    order, and it still damps stiff modes, where a single Euler step is far
    too weak a damper for the increments of a stiff reaction.
    """
    t, dt = state.t, ctx.dt
    full, info = _euler(state, ctx, E, t + dt, dt, "A_bootstrap")
    half, _ = _euler(state, ctx, E, t + 0.5 * dt, 0.5 * dt, "A_half")
    half, info2 = _euler(state, ctx, half, t + dt, 0.5 * dt, "A_half")
    info["residual"] = max(info["residual"], info2["residual"])
    return 2.0 * half - full, info


def transport_stage(state, ctx, W_n):
    """``D(dt) W^n`` over ``[t^n, t^{n+1}]``; see the module notes."""
    if state.U_half_prev is None:
        return bootstrap_step(state, ctx, W_n)
    if state.U_diff_prev is None:
        raise ValueError("BDF2 history needs the previous transport output")
    X, info = bdf2_sl_step(state, ctx, state.U_diff_prev, state.U_half_prev)
    E = W_n - state.U_diff_prev
    if np.any(E):
        dX, jump = homogeneous_step(state, ctx, E)
        X = X + dX
        info["residual"] = max(info["residual"], jump["residual"])
    return X, info


def strang_step(state, ctx):
    """One full step; returns ``(new_state, info)``."""
    dt, n = ctx.dt, ctx.n_substeps
    ws, p = ctx.workspace, ctx.split_problem
    shift = ctx.shift if ctx.exact_bc and p.linear_reaction is not None else None
    W_n = reaction_flow(state.U, p, ws, state.t, 0.5 * dt, n, shift)
    X, info = transport_stage(state, ctx, W_n)
    U_next = reaction_flow(X, p, ws, state.t + 0.5 * dt, 0.5 * dt, n, shift)
    new = FieldState(U_next, state.t + dt, state.U, W_n, state.step + 1, X)
    return new, info


def bootstrap_first_step(state, ctx):
    if state.U_half_prev is not None:
        raise ValueError("state already has history")
    return strang_step(state, ctx)


# --------------------------------------------------------------------------
# driver
# --------------------------------------------------------------------------


@dataclass
class SimulationResult:
    state: FieldState
    mesh: Mesh
    workspace: SolverWorkspace
    dt: float
    n_substeps: int
    diagnostics: list
    snapshots: list

    @property
    def factorizations(self):
        return dict(self.workspace.factorizations)


def build_mesh(problem, degree, nx, ny=None, quad_points=None, geometry=None):
    kind, params = geometry or problem.geometry
    patch = preset_geometry(kind, **params)
    return Mesh.from_geometry(patch, degree, nx, ny, quad_points)


def project(mesh, workspace, func, t=None):
    """L2 projection: solve ``M c = integral of f N``."""
    pts = mesh.points
    vals = np.asarray(func(pts) if t is None else func(pts, t), dtype=float)
    vals = vals.reshape((-1,) + mesh.wdet.shape)
    return workspace.solve_mass(load_vector(mesh, vals))


def _record(state, info, wall):
    rec = {"step": state.step, "t": state.t, "wall": wall}
    for c, name in zip(range(state.ncomp), "uv"):
        rec[f"min_{name}"] = float(state.U[c].min())
        rec[f"max_{name}"] = float(state.U[c].max())
    rec.update(info)
    return rec


def run_simulation(problem, config, mesh=None, callback=None):
    """Project the initial data, then take Strang steps up to ``config.t_end``.

    ``config`` needs ``degree, nx, ny, dt, t_end, n_substeps, quad_points, bc``
    and ``snapshot_every`` (0 disables snapshots).  ``callback(state, record)``
    is called after every step.
    """
    bc = config.bc or problem.defaults.get("bc", "neumann-zero")
    if bc == "neumann-exact" and not problem.has_exact:
        raise ValueError("bc = neumann-exact needs a problem with an exact solution")
    if mesh is None:
        mesh = build_mesh(problem, config.degree, config.nx, config.ny, config.quad_points)
    ws = SolverWorkspace(mesh, bc)
    t_end = float(config.t_end)
    n_steps = 0 if t_end <= 0 else max(1, math.ceil(t_end / config.dt - 1e-9))
    dt = t_end / n_steps if n_steps else float(config.dt)
    if n_steps and abs(dt - config.dt) > 1e-12 * config.dt:
        log.warning("dt adjusted from %g to %g to land on t_end", config.dt, dt)
    n_sub = config.n_substeps or default_substeps(problem, dt)
    ctx = StepContext(problem, mesh, ws, dt, n_sub, bc)

    state = FieldState(project(mesh, ws, problem.initial), 0.0)
    snapshots = [(0.0, state.U.copy())] if config.snapshot_every else []
    diagnostics = []
    for k in range(n_steps):
        t0 = time.perf_counter()
        try:
            state, info = strang_step(state, ctx)
        except (ArithmeticError, RuntimeError) as exc:
            raise SimulationError(k + 1, state.t + dt, exc) from exc
        if k == n_steps - 1:
            state.t = t_end
        rec = _record(state, info, time.perf_counter() - t0)
        diagnostics.append(rec)
        log.debug("step %(step)d t=%(t).4g residual=%(residual).2e clamped=%(clamped)d", rec)
        if config.snapshot_every and (state.step % config.snapshot_every == 0 or k == n_steps - 1):
            snapshots.append((state.t, state.U.copy()))
        if callback is not None:
            callback(state, rec)
    return SimulationResult(state, mesh, ws, dt, n_sub, diagnostics, snapshots)
