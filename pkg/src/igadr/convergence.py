"""Error norms against exact solutions and mesh-refinement studies."""

import math
import time
from dataclasses import dataclass, field
from types import SimpleNamespace

import numpy as np

from .output import sample_grid
from .problems import get_problem
from .stepping import build_mesh, run_simulation
from .transport import evaluate_param

DT_RULES = ("matched", "subdominant", "fixed:<dt>")


def error_norms(state, exact, mesh, sample_n=None, t=None):
    """``(L1, Linf)`` per component, each of shape ``(ncomp,)``.

    L1 integrates ``|u_h - u|`` with the mesh's Gauss rule; Linf is the
    maximum over a ``sample_n x sample_n`` uniform parametric grid (default
    four samples per element and direction).
    """
    if exact is None:
        raise ValueError("error norms need an exact solution")
    U = np.atleast_2d(state.U if hasattr(state, "U") else state)
    if t is None:
        t = getattr(state, "t", 0.0)
    if sample_n is None:
        sample_n = 4 * max(mesh.nel_u, mesh.nel_v) + 1
    ex_q = np.asarray(exact(mesh.points, t), dtype=float).reshape(U.shape[0], *mesh.wdet.shape)
    diff_q = np.abs(mesh.values_at_quadrature(U) - ex_q)
    l1 = np.einsum("kg,ckg->c", mesh.wdet, diff_q)
    uv, X = sample_grid(mesh, sample_n)
    ex_s = np.asarray(exact(X, t), dtype=float).reshape(U.shape[0], -1)
    linf = np.abs(evaluate_param(mesh, U, uv) - ex_s).max(axis=1)
    return l1, linf


def mesh_size(mesh):
    """Characteristic element size ``sqrt(area / n_elements)``."""
    return math.sqrt(float(mesh.wdet.sum()) / mesh.n_elements)


def step_size(rule, degree, h, t_end=1.0):
    """Time step for a refinement study, landed exactly on ``t_end``.

    ``matched``: ``0.1 h^(p/2)``, so the second-order time error scales like
    ``h^p``.  ``subdominant``: ``0.1 h^((p+1)/2)``, which keeps the time error
    below the spatial ``h^(p+1)`` one.  ``fixed:<dt>``: a constant step.
    """
    if rule == "matched":
        dt = 0.1 * h ** (degree / 2.0)
    elif rule == "subdominant":
        dt = 0.1 * h ** ((degree + 1) / 2.0)
    elif rule.startswith("fixed:"):
        try:
            dt = float(rule.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"bad fixed step in dt rule {rule!r}") from None
        if not dt > 0:
            raise ValueError("fixed step must be positive")
    else:
        raise ValueError(f"unknown dt rule {rule!r}; choose from {DT_RULES}")
    if t_end <= 0:
        return dt
    return t_end / math.ceil(t_end / dt - 1e-9)


def fit_slope(h, err):
    """Least-squares slope of ``log err`` against ``log h``."""
    h, err = np.asarray(h, dtype=float), np.asarray(err, dtype=float)
    if h.size < 2:
        return float("nan")
    if np.any(err <= 0):
        return float("nan")
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


@dataclass
class ErrorReport:
    problem: str
    dt_rule: str
    component: int
    rows: list = field(default_factory=list)

    def degrees(self):
        return sorted({r["degree"] for r in self.rows})

    def _column(self, degree, key):
        rows = [r for r in self.rows if r["degree"] == degree]
        return [r["h"] for r in rows], [r[key] for r in rows]

    def slope(self, degree, norm="Linf"):
        return fit_slope(*self._column(degree, norm))

    @property
    def slopes(self):
        return {p: {"L1": self.slope(p, "L1"), "Linf": self.slope(p, "Linf")} for p in self.degrees()}

    def to_text(self):
        out = [f"problem {self.problem}  dt rule {self.dt_rule}  component {self.component}",
               f"{'p':>2} {'n':>4} {'h':>10} {'dt':>10} {'steps':>6} {'L1':>11} {'Linf':>11} {'sec':>7}"]
        for r in self.rows:
            out.append(f"{r['degree']:>2} {r['n']:>4} {r['h']:>10.4e} {r['dt']:>10.4e} {r['steps']:>6} "
                       f"{r['L1']:>11.4e} {r['Linf']:>11.4e} {r['seconds']:>7.2f}")
        for p, s in self.slopes.items():
            out.append(f"slope p={p}: L1 {s['L1']:.3f}  Linf {s['Linf']:.3f}")
        return "\n".join(out)


def convergence_study(problem, degrees, meshes, dt_rule="matched", t_end=1.0, bc=None,
                      component=0, quad_points=None, progress=None):
    """Run every ``(degree, n)`` pair to ``t_end`` and collect error norms.

    ``problem`` is a name or a :class:`~igadr.problems.ProblemSpec` with an
    exact solution.  ``progress(row)`` is called after each run.
    """
    prob = get_problem(problem) if isinstance(problem, str) else problem
    if not prob.has_exact:
        raise ValueError(f"problem {prob.name!r} has no exact solution")
    bc = bc or prob.defaults.get("bc", "neumann-exact")
    report = ErrorReport(prob.name, dt_rule, component)
    for p in degrees:
        for n in meshes:
            t0 = time.perf_counter()
            mesh = build_mesh(prob, p, n, n, quad_points)
            h = mesh_size(mesh)
            dt = step_size(dt_rule, p, h, t_end)
            cfg = SimpleNamespace(degree=p, nx=n, ny=n, dt=dt, t_end=t_end, n_substeps=None,
                                  quad_points=quad_points, bc=bc, snapshot_every=0)
            res = run_simulation(prob, cfg, mesh=mesh)
            l1, linf = error_norms(res.state, prob.exact, mesh)
            row = {"degree": p, "n": n, "h": h, "dt": res.dt, "steps": res.state.step,
                   "L1": float(l1[component]), "Linf": float(linf[component]),
                   "seconds": time.perf_counter() - t0}
            report.rows.append(row)
            if progress is not None:
                progress(row)
    return report
