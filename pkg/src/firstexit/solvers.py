"""Mean exit time and exit-time distribution solvers.

`mean_exit_time` solves the stationary problem L u = -1 with u = 0 on the
box surface; the nodal field approximates x -> E^x[tau_D].  `survival_
function` integrates the companion evolution problem by implicit Euler and
records v(probe, t) = P^probe[tau_D > t] after every step.  Both reduce to
the assembled weak forms and the BiCGStab solver; `integrate_survival`
provides the E[tau] = integral of P[tau > t] cross-check linking them.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .assembly import apply_dirichlet, assemble_elliptic, assemble_parabolic_step
from .meshing import locate_point, mesh_box
from .models import validate_spd
from .sparse import solve

__all__ = [
    "ScalarField",
    "SurvivalCurve",
    "SurvivalIntegral",
    "mean_exit_time",
    "survival_function",
    "evaluate_field",
    "extract_section",
    "integrate_survival",
]

MEAN_EXIT_TIME = "mean-exit-time"
SURVIVAL = "survival"


@dataclass(frozen=True)
class ScalarField:
    """Nodal P1 field on a box mesh; boundary nodes carry exactly 0.

    ``report`` keeps the linear-solver diagnostics when the field came out
    of a single solve (None for time-step snapshots).
    """

    mesh: object
    values: np.ndarray
    kind: str
    report: object = None


@dataclass(frozen=True)
class SurvivalCurve:
    """Probe values of the survival probability after each time step.

    ``times[m-1] = m * eta``; the value at t = 0 is not stored in the rows
    (it is 1 at any interior probe) but kept as ``initial_value``.  Raw
    solver outputs are stored; clip only when writing output.
    """

    times: np.ndarray
    values: np.ndarray
    probe: np.ndarray
    eta: float
    horizon: float
    initial_value: float = 1.0
    snapshots: dict = field(default_factory=dict)

    def clipped_values(self):
        return np.clip(self.values, 0.0, 1.0)


@dataclass(frozen=True)
class SurvivalIntegral:
    """Trapezoidal integral of a survival curve with its tail diagnostic."""

    integral: float
    last_value: float
    tail_indicator: float


def _check_spd(model, domain):
    report = validate_spd(model, domain, samples_per_axis=5)
    if not report.positive_definite:
        raise ValueError(
            f"diffusion matrix is not positive definite inside the domain: "
            f"minimum eigenvalue {report.min_eigenvalue:g} at "
            "(" + ", ".join("%g" % v for v in report.at_point) + ")"
        )
    return report


def mean_exit_time(model, domain, k, tol=1e-10, max_iter=None, mesh=None):
    """Solve L u = -1, u = 0 on the boundary; u(x) is the mean exit time.

    Parameters
    ----------
    model : SdeModel
    domain : BoxDomain
    k : int
        Mesh divisions per axis (at least 2 so interior nodes exist).
    tol, max_iter : solver controls passed to the linear solver.
    mesh : SimplicialMesh, optional
        Reuse an existing mesh of the same domain and k.

    Returns
    -------
    ScalarField

    Raises
    ------
    ValueError
        If the sampled diffusion matrix is not positive definite, or k < 2.
    RuntimeError
        If the linear solver does not converge.
    """
    if k < 2:
        raise ValueError("k must be at least 2 for the elliptic problem")
    _check_spd(model, domain)
    if mesh is None:
        mesh = mesh_box(domain, k)
    system = apply_dirichlet(assemble_elliptic(mesh, model), 0.0)
    u, report = solve(system.matrix, system.rhs, tol=tol, max_iter=max_iter)
    if not report.converged:
        raise RuntimeError(
            f"linear solver failed on the mean-exit-time system: "
            f"residual {report.residual:g} after {report.iterations} iterations"
        )
    u[mesh.boundary] = 0.0
    peak = float(np.max(u)) if u.size else 0.0
    if peak > 0.0 and float(np.min(u)) < -1e-8 * peak:
        warnings.warn(
            f"mean exit time dips to {float(np.min(u)):g} "
            f"(beyond maximum-principle tolerance)",
            RuntimeWarning,
            stacklevel=2,
        )
    return ScalarField(mesh=mesh, values=u, kind=MEAN_EXIT_TIME, report=report)


def survival_function(model, domain, k, eta, T, probe, snapshot_times=(),
                      stop_below=None, tol=1e-10, max_iter=None, mesh=None):
    """March the survival probability and record it at a probe point.

    Starting from the interior indicator (1 inside, 0 on the boundary), each
    implicit Euler step solves (mass + eta * elliptic) u_{m+1} = mass u_m with
    u = 0 on the boundary, warm-starting the iterative solver from u_m.

    Parameters
    ----------
    model : SdeModel
    domain : BoxDomain
    k : int
    eta : float or None
        Time step; None selects T/200.
    T : float
        Horizon; the number of steps is round(T / eta).
    probe : d-vector, strictly interior.
    snapshot_times : sequence of floats, optional
        Times at which a full nodal field copy is kept (nearest step).
    stop_below : float, optional
        Stop early once the probe value falls below this threshold.

    Returns
    -------
    SurvivalCurve
    """
    if T <= 0.0:
        raise ValueError("horizon T must be positive")
    if eta is None:
        eta = T / 200.0
    if eta <= 0.0:
        raise ValueError("eta must be positive")
    if T < eta:
        raise ValueError("horizon T must be at least one time step")
    probe = np.asarray(probe, dtype=float)
    if not domain.contains(probe, open_box=True):
        raise ValueError(f"probe point {tuple(probe)} is not strictly inside the domain")
    _check_spd(model, domain)

    if mesh is None:
        mesh = mesh_box(domain, k)
    step_raw, mass = assemble_parabolic_step(mesh, model, eta)
    step = step_raw.with_identity_rows(mesh.boundary)

    element, bary = locate_point(mesh, probe)
    probe_nodes = mesh.elements[element]

    u = np.where(mesh.boundary, 0.0, 1.0)
    initial_value = float(bary @ u[probe_nodes])

    n_steps = int(round(T / eta))
    snap_steps = {}
    for t_want in snapshot_times:
        m = min(max(int(round(t_want / eta)), 1), n_steps)
        snap_steps.setdefault(m, t_want)

    times = np.empty(n_steps, dtype=float)
    values = np.empty(n_steps, dtype=float)
    snapshots = {}
    recorded = 0
    for m in range(1, n_steps + 1):
        rhs = mass.matvec(u)
        rhs[mesh.boundary] = 0.0
        u, report = solve(step, rhs, x0=u, tol=tol, max_iter=max_iter)
        if not report.converged:
            raise RuntimeError(
                f"linear solver failed at time step {m} (t = {m * eta:g}): "
                f"residual {report.residual:g} after {report.iterations} iterations"
            )
        u[mesh.boundary] = 0.0
        times[recorded] = m * eta
        values[recorded] = float(bary @ u[probe_nodes])
        recorded += 1
        if m in snap_steps:
            snapshots[m * eta] = ScalarField(mesh=mesh, values=u.copy(), kind=SURVIVAL)
        if stop_below is not None and values[recorded - 1] < stop_below:
            break

    return SurvivalCurve(
        times=times[:recorded],
        values=values[:recorded],
        probe=probe,
        eta=float(eta),
        horizon=float(T),
        initial_value=initial_value,
        snapshots=snapshots,
    )


def evaluate_field(scalar_field, point):
    """Barycentric interpolation of a nodal field at a point of the closed box."""
    element, bary = locate_point(scalar_field.mesh, point)
    return float(bary @ scalar_field.values[scalar_field.mesh.elements[element]])


def extract_section(scalar_field, axis, value, eps=1e-6):
    """Nodes on the slice x_axis = value as rows (other coords..., u).

    Rows are sorted lexicographically in the remaining coordinates.  When
    ``value`` misses every grid plane, the error suggests the nearest one.
    """
    mesh = scalar_field.mesh
    d = mesh.dimension
    if not 0 <= axis < d:
        raise ValueError(f"axis must be in 0..{d - 1}")
    coords = mesh.nodes[:, axis]
    on_slice = np.abs(coords - value) < eps
    if not np.any(on_slice):
        lo = mesh.domain.lower[axis]
        h = mesh.domain.widths[axis] / mesh.k
        nearest = lo + np.clip(np.round((value - lo) / h), 0, mesh.k) * h
        raise ValueError(
            f"no mesh nodes within {eps:g} of plane axis{axis} = {value:g}; "
            f"nearest grid plane is {nearest:.12g}"
        )
    others = [j for j in range(d) if j != axis]
    pts = mesh.nodes[on_slice][:, others]
    vals = scalar_field.values[on_slice]
    order = np.lexsort(tuple(pts[:, j] for j in reversed(range(len(others)))))
    return np.column_stack([pts[order], vals[order]])


def integrate_survival(curve):
    """Trapezoidal integral of the curve over [0, T], with tail diagnostic.

    The t = 0 point (value ``initial_value``) is included.  The tail
    indicator last_value * eta flags how much probability mass the horizon
    may have cut off.
    """
    if curve.times.size == 0:
        raise ValueError("survival curve has no recorded steps")
    t = np.concatenate([[0.0], curve.times])
    v = np.concatenate([[curve.initial_value], curve.values])
    integral = float(np.trapezoid(v, t))
    last = float(curve.values[-1])
    return SurvivalIntegral(
        integral=integral,
        last_value=last,
        tail_indicator=last * curve.eta,
    )
