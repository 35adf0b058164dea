import pytest
from hypothesis import given, strategies as st

from igadr.config import ConfigError, RunConfig, describe_keys, load_config, parse_config, serialize


def test_minimal_gray_scott_takes_problem_defaults():
    cfg = parse_config("problem = gray-scott\n")
    assert (cfg.degree, cfg.nx, cfg.ny) == (5, 16, 16)
    prob = cfg.build_problem()
    assert prob.geometry[0] == "disk"
    assert cfg.dt == 1.0 and cfg.t_end == 500.0 and cfg.bc == "neumann-zero"


def test_comments_blank_lines_and_types():
    cfg = parse_config("""
        # a comment
        problem = schnakenberg   # trailing comment
        gamma = 50
        with_advection = true
        bump_center = 0.2, 0.3
        quad_points = 7
        n_substeps = none
    """)
    assert cfg.params == {"gamma": 50, "with_advection": True, "bump_center": (0.2, 0.3)}
    assert cfg.quad_points == 7 and cfg.n_substeps is None
    prob = cfg.build_problem()
    assert prob.stiffness == 50 and prob.velocity is not None


@pytest.mark.parametrize("text,key", [
    ("degree = 0", "degree"),
    ("degree = 2.5", "degree"),
    ("dt = -1", "dt"),
    ("colour = red", "colour"),
    ("problem = gray-scott\ngamma = 3", "gamma"),
    ("radius = 2", "radius"),
    ("bc = periodic", "bc"),
    ("problem = nope", "problem"),
    ("geometry = torus", "geometry"),
])
def test_rejected_entries_name_the_key(text, key):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.key == key


def test_errors_carry_line_numbers():
    with pytest.raises(ConfigError) as info:
        parse_config("problem = exact-system\n\nnx = 8\nbogus = 1\n")
    assert info.value.line == 4
    with pytest.raises(ConfigError) as info:
        parse_config("nx = 8\nnx = 9\n")
    assert info.value.line == 2
    with pytest.raises(ConfigError):
        parse_config("just words")


def test_geometry_override():
    cfg = parse_config("problem = schnakenberg\ngeometry = annulus\nr_in = 0.3\nr_out = 1.0\n")
    assert cfg.build_problem().geometry == ("annulus", {"r_in": 0.3, "r_out": 1.0})


def test_load_serialize_load_roundtrip(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("problem = schnakenberg\ngeometry = disk\nradius = 0.5\ngamma = 80.5\n"
                    "with_advection = false\nnx = 12\nny = 10\nquad_points = 8\n")
    cfg = load_config(path)
    again = parse_config(serialize(cfg))
    assert again == cfg
    assert serialize(again) == serialize(cfg)


@given(st.sampled_from(["exact-system", "schnakenberg", "gray-scott", "nonlinear-scalar"]),
       st.integers(1, 8), st.integers(1, 64), st.floats(1e-4, 10, allow_nan=False),
       st.floats(0, 100, allow_nan=False), st.sampled_from(["neumann-zero", "dirichlet-zero"]))
def test_serialize_roundtrip_property(problem, degree, nx, dt, t_end, bc):
    cfg = RunConfig(problem=problem, degree=degree, nx=nx, dt=dt, t_end=t_end, bc=bc)
    assert parse_config(serialize(cfg)) == cfg


def test_defaults_and_help():
    cfg = RunConfig()
    assert cfg.ny == cfg.nx and cfg.sample_n == 4 * cfg.nx + 1
    text = describe_keys()
    for key in ("quad_points", "snapshot_every", "sample_n", "bc"):
        assert key in text
