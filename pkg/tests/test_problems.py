import numpy as np
import pytest

from igadr.problems import PROBLEMS, get_problem, velocity_toroidal

# sixth-order central differences in space; the time step is small because
# the stiff mode of the exact system decays like exp(-101 t)
HX, HT = 2e-2, 1e-4
D1 = np.array([-1, 9, -45, 0, 45, -9, 1]) / 60.0
D2 = np.array([2, -27, 270, -490, 270, -27, 2]) / 180.0


def shifted(f, x, t, axis, s):
    if axis == "t":
        return f(x, t + s)
    y = x.copy()
    y[:, axis] += s
    return f(y, t)


def d1(f, x, t, axis, h):
    return sum(c * shifted(f, x, t, axis, k * h) for k, c in zip(range(-3, 4), D1)) / h


def d2(f, x, t, axis, h):
    return sum(c * shifted(f, x, t, axis, k * h) for k, c in zip(range(-3, 4), D2)) / (h * h)


def sample(rng, n=100):
    x = rng.uniform(0, 2 * np.pi, (n, 2))
    t = rng.uniform(0, 1, n)
    return x, t


def test_exact_system_satisfies_pde(rng):
    p = get_problem("exact-system")
    x, t = sample(rng)
    u = p.exact(x, t)
    a = p.velocity(x, t)
    lap = d2(p.exact, x, t, 0, HX) + d2(p.exact, x, t, 1, HX)
    adv = a[:, 0] * d1(p.exact, x, t, 0, HX) + a[:, 1] * d1(p.exact, x, t, 1, HX)
    d = np.array(p.diffusion)[:, None]
    res = d1(p.exact, x, t, "t", HT) + adv - d * lap - p.reaction(u, x, t)
    assert np.abs(res).max() < 1e-8


def test_nonlinear_scalar_satisfies_pde(rng):
    p = get_problem("nonlinear-scalar")
    x, t = sample(rng)
    u = p.exact(x, t)
    ux, uy = d1(p.exact, x, t, 0, HX), d1(p.exact, x, t, 1, HX)
    lap = d2(p.exact, x, t, 0, HX) + d2(p.exact, x, t, 1, HX)
    div_flux = u * lap + ux**2 + uy**2
    vel = p.velocity_of_solution(u)
    adv = vel[..., 0] * ux + vel[..., 1] * uy
    # the reaction carries -u^2 plus the manufactured source
    res = d1(p.exact, x, t, "t", HT) + adv - div_flux - p.reaction(u, x, t)
    assert np.abs(res).max() < 1e-8
    np.testing.assert_allclose(p.diffusion_of_solution(u), u[0])


def test_exact_system_reaction_sign():
    p = get_problem("exact-system")
    f = p.reaction(np.array([[2.0], [3.0]]), np.zeros((1, 2)), 0.0)
    np.testing.assert_allclose(f.ravel(), [-100 * 2 + 3, -3])
    np.testing.assert_allclose(p.linear_reaction @ [2.0, 3.0], f.ravel())


def test_schnakenberg_initial_data_and_equilibrium():
    p = get_problem("schnakenberg")
    ic = p.initial(np.array([[1 / 3, 1 / 3], [0.9, 0.9]]))
    assert ic[0, 0] == pytest.approx(0.901, abs=1e-15)
    np.testing.assert_allclose(ic[1], 0.95, atol=1e-12)
    eq = np.array([[0.9], [0.7695 / 0.81]])
    np.testing.assert_allclose(p.reaction(eq, np.zeros((1, 2)), 0.0), 0.0, atol=1e-13)


def test_gray_scott_initial_data_and_equilibrium():
    p = get_problem("gray-scott")
    ic = p.initial(np.array([[1.0625, 1.0625], [0.5, 0.5], [1.25, 1.25]]))
    assert ic[1, 0] == pytest.approx(1 / 16, abs=1e-15)
    assert ic[1, 1] == 0.0
    np.testing.assert_allclose(ic[0] + 2 * ic[1], 1.0, atol=1e-15)
    assert np.all(p.reaction(np.array([[1.0], [0.0]]), np.zeros((1, 2)), 0.0) == 0.0)
    assert p.geometry == ("disk", {"center": (1.25, 1.25), "radius": 1.25})


def test_initial_gray_scott_has_four_spots():
    p = get_problem("gray-scott")
    s = np.linspace(1.0, 1.5, 201)
    X, Y = np.meshgrid(s, s)
    v = p.initial(np.stack([X, Y], axis=-1))[1]
    inner = v[1:-1, 1:-1]
    peaks = np.ones_like(inner, bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di or dj:
                peaks &= inner > v[1 + di:200 + di, 1 + dj:200 + dj]
    assert peaks.sum() == 4


def test_toroidal_velocity():
    vel = velocity_toroidal(8.0)
    np.testing.assert_allclose(vel(np.array([[0.5, 0.0], [0.0, 0.0]])), [[0.0, 4.0], [0.0, 0.0]])
    x = np.random.default_rng(0).normal(size=(50, 2))
    h = 1e-6
    div = ((vel(x + [h, 0])[:, 0] - vel(x - [h, 0])[:, 0])
           + (vel(x + [0, h])[:, 1] - vel(x - [0, h])[:, 1])) / (2 * h)
    assert np.abs(div).max() < 1e-10


def test_problem_registry_and_parameters():
    assert set(PROBLEMS) == {"nonlinear-scalar", "exact-system", "schnakenberg", "gray-scott"}
    assert get_problem("schnakenberg", with_advection=True).geometry[1]["bounds"] == (-0.5, 0.5, -0.5, 0.5)
    assert get_problem("schnakenberg", gamma=50.0).stiffness == 50.0
    with pytest.raises(ValueError):
        get_problem("brusselator")
    with pytest.raises(ValueError):
        get_problem("schnakenberg", gamma=-1.0)
