"""Preset advection-diffusion-reaction problems.

Reactions are vectorised callables ``reaction(vals, x, t)`` where ``vals``
stacks the components along axis 0 and ``x`` holds physical points in its last
axis.  Velocities are ``velocity(x, t) -> (..., 2)``.
"""

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    ncomp: int
    reaction: Callable
    diffusion: tuple
    initial: Callable
    geometry: tuple  # (kind, params)
    velocity: Optional[Callable] = None
    velocity_of_solution: Optional[Callable] = None
    diffusion_of_solution: Optional[Callable] = None
    exact: Optional[Callable] = None
    linear_reaction: Optional[np.ndarray] = None
    stiffness: float = 0.0
    params: dict = field(default_factory=dict)
    defaults: dict = field(default_factory=dict)

    @property
    def has_exact(self):
        return self.exact is not None

    @property
    def solution_dependent(self):
        return self.velocity_of_solution is not None or self.diffusion_of_solution is not None

    def reaction_is_zero(self):
        return self.linear_reaction is not None and not np.any(self.linear_reaction)

    def with_params(self, **overrides):
        return replace(self, **overrides)


def _stack(*arrays):
    return np.stack(np.broadcast_arrays(*arrays))


def _xy(x):
    x = np.asarray(x, dtype=float)
    return x[..., 0], x[..., 1]


def velocity_toroidal(omega=8.0):
    """Rigid rotation ``a(x, y) = (-omega y, omega x)`` about the origin."""

    def velocity(x, t=0.0):
        px, py = _xy(x)
        return np.stack([-omega * py, omega * px], axis=-1)

    velocity.omega = omega
    velocity.steady = True
    return velocity


def velocity_constant(a1, a2):
    def velocity(x, t=0.0):
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape)
        out[..., 0], out[..., 1] = a1, a2
        return out

    velocity.steady = True
    return velocity


def zero_reaction(ncomp=2):
    def reaction(vals, x, t):
        return np.zeros_like(np.asarray(vals, dtype=float))

    return reaction


# --------------------------------------------------------------------------
# nonlinear scalar problem with exact solution 1 + sin(x + y - t) / 2
# --------------------------------------------------------------------------


def _ns_exact(x, t):
    px, py = _xy(x)
    return (1.0 + 0.5 * np.sin(px + py - t))[None]


def _ns_source(x, t):
    # u_t + (u, u).grad u - div(u grad u) + u^2 for u = 1 + sin(theta)/2
    px, py = _xy(x)
    th = px + py - t
    s, c = np.sin(th), np.cos(th)
    u = 1.0 + 0.5 * s
    return -0.5 * c + u * c + u * s - 0.5 * c * c + u * u


def problem_fully_nonlinear():
    def reaction(vals, x, t):
        return -vals**2 + _ns_source(x, t)[None]

    return ProblemSpec(
        name="nonlinear-scalar",
        ncomp=1,
        reaction=reaction,
        diffusion=(None,),
        initial=lambda x: _ns_exact(x, 0.0),
        geometry=("rectangle", {"bounds": (0.0, 2 * np.pi, 0.0, 2 * np.pi)}),
        velocity_of_solution=lambda vals: np.stack([vals[0], vals[0]], axis=-1),
        diffusion_of_solution=lambda vals: vals[0],
        exact=_ns_exact,
        stiffness=2.0,
        defaults={"degree": 4, "nx": 32, "dt": 0.02, "t_end": 1.0, "bc": "neumann-exact"},
    )


# --------------------------------------------------------------------------
# linear coupled system with exact solution
# --------------------------------------------------------------------------


def problem_exact_system(b=100.0, c=1.0):
    """Linear pair with closed-form solution, translated by ``(1/2, 1/2)``.

    ``f = -b u + v`` and ``g = -c v``; with ``d1 = d2 = 1/2`` each mode
    ``cos(x + y - t)`` decays at rate ``1`` from diffusion, so
    ``u = (exp(-(b+1)t) + exp(-(c+1)t)) cos(x+y-t)`` and
    ``v = (b-c) exp(-(c+1)t) cos(x+y-t)``.
    """
    L = np.array([[-b, 1.0], [0.0, -c]])

    def reaction(vals, x, t):
        return np.tensordot(L, vals, axes=1)

    def exact(x, t):
        px, py = _xy(x)
        ph = np.cos(px + py - t)
        eb, ec = np.exp(-(b + 1.0) * t), np.exp(-(c + 1.0) * t)
        return _stack((eb + ec) * ph, (b - c) * ec * ph)

    return ProblemSpec(
        name="exact-system",
        ncomp=2,
        reaction=reaction,
        diffusion=(0.5, 0.5),
        initial=lambda x: exact(x, 0.0),
        geometry=("rectangle", {"bounds": (0.0, 2 * np.pi, 0.0, 2 * np.pi)}),
        velocity=velocity_constant(0.5, 0.5),
        exact=exact,
        linear_reaction=L,
        stiffness=float(b),
        params={"b": b, "c": c},
        defaults={"degree": 4, "nx": 32, "dt": 0.02, "t_end": 1.0, "bc": "neumann-exact"},
    )


# --------------------------------------------------------------------------
# pattern-forming systems
# --------------------------------------------------------------------------


def problem_schnakenberg(gamma=100.0, with_advection=False, omega=8.0, alpha=0.1305, beta=0.7695,
                         d1=0.05, d2=1.0, bump_center=(1.0 / 3.0, 1.0 / 3.0)):
    if not gamma > 0:
        raise ValueError("gamma must be positive")

    def reaction(vals, x, t):
        u, v = vals[0], vals[1]
        u2v = u * u * v
        return _stack(gamma * (alpha - u + u2v), gamma * (beta - u2v))

    cx, cy = bump_center
    s = alpha + beta

    def initial(x):
        px, py = _xy(x)
        u = s + 1e-3 * np.exp(-100.0 * ((px - cx) ** 2 + (py - cy) ** 2))
        return _stack(u, np.full_like(u, beta / s**2))

    bounds = (-0.5, 0.5, -0.5, 0.5) if with_advection else (0.0, 1.0, 0.0, 1.0)
    return ProblemSpec(
        name="schnakenberg",
        ncomp=2,
        reaction=reaction,
        diffusion=(d1, d2),
        initial=initial,
        geometry=("rectangle", {"bounds": bounds}),
        velocity=velocity_toroidal(omega) if with_advection else None,
        stiffness=float(gamma),
        params={"gamma": gamma, "alpha": alpha, "beta": beta, "omega": omega,
                "with_advection": with_advection},
        defaults={"degree": 5, "nx": 32, "dt": 0.01, "t_end": 2.0, "bc": "neumann-zero"},
    )


def problem_gray_scott(alpha=0.024, beta=0.06, d1=8e-5, d2=4e-5, center=(1.25, 1.25), radius=1.25):
    def reaction(vals, x, t):
        u, v = vals[0], vals[1]
        uv2 = u * v * v
        return _stack(-uv2 + alpha * (1.0 - u), uv2 - (alpha + beta) * v)

    def initial(x):
        px, py = _xy(x)
        inside = (px >= 1.0) & (px <= 1.5) & (py >= 1.0) & (py <= 1.5)
        v = np.where(inside, 0.25 * np.sin(4 * np.pi * px) ** 2 * np.sin(4 * np.pi * py) ** 2, 0.0)
        return _stack(1.0 - 2.0 * v, v)

    return ProblemSpec(
        name="gray-scott",
        ncomp=2,
        reaction=reaction,
        diffusion=(d1, d2),
        initial=initial,
        geometry=("disk", {"center": center, "radius": radius}),
        stiffness=0.0,
        params={"alpha": alpha, "beta": beta},
        defaults={"degree": 5, "nx": 16, "dt": 1.0, "t_end": 500.0, "bc": "neumann-zero"},
    )


PROBLEMS = {
    "nonlinear-scalar": problem_fully_nonlinear,
    "exact-system": problem_exact_system,
    "schnakenberg": problem_schnakenberg,
    "gray-scott": problem_gray_scott,
}


def get_problem(name, **params):
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
    return factory(**params)
