"""Stochastic model construction.

A deterministic jump description (list of change vectors with per-time rates)
is turned into the drift vector B and diffusion matrix A of an Ito diffusion:

    B_k(x)    = sum_i rate_i(x) * change_i[k]
    A_kl(x)   = sum_i rate_i(x) * change_i[k] * change_i[l]

`SdeModel` bundles B, A and the symbolic derivative table d(a_ij)/dx_j used
by the weak form of the generator.  Four ready-made epidemic/population
models are available through `builtin_model`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import expressions as ex
from .expressions import Expression, evaluate_many, parse

__all__ = [
    "TransitionTable",
    "SdeModel",
    "build_drift",
    "build_diffusion",
    "model_from_table",
    "model_from_expressions",
    "builtin_model",
    "builtin_names",
    "builtin_parameters",
    "validate_spd",
    "SpdReport",
]


class TransitionTable:
    """Change vectors and their rates for a jump process.

    Parameters
    ----------
    variables : sequence of str
        Ordered state-variable names (length 2 or 3).
    changes : array_like, shape (n_entries, d)
        Change vector of each transition.
    rates : sequence
        Rate of each transition, as an `Expression` or a string parsed
        against ``variables`` and ``parameters``.
    parameters : mapping, optional
        Numeric values substituted into string rates at parse time.

    The zero-change entry carrying the residual probability is never stored;
    it contributes nothing to either B or A.
    """

    def __init__(self, variables, changes, rates, parameters=None):
        self.variables = tuple(variables)
        d = len(self.variables)
        if d not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {d}")
        self.changes = np.array(changes, dtype=float)
        if self.changes.ndim != 2 or self.changes.shape[1] != d:
            raise ValueError(f"changes must have shape (n, {d})")
        if self.changes.shape[0] == 0:
            raise ValueError("a transition table needs at least one entry")
        self.rates = tuple(
            r if isinstance(r, Expression) else parse(r, self.variables, parameters)
            for r in rates
        )
        if len(self.rates) != self.changes.shape[0]:
            raise ValueError("one rate per change vector is required")

    @property
    def dimension(self):
        return len(self.variables)


def build_drift(table):
    """Drift vector B of the diffusion approximation.

    Component k is the constant-folded sum of rate_i * change_i[k] over all
    table entries.
    """
    d = table.dimension
    drift = []
    for k in range(d):
        acc = ex.Const(0.0)
        for change, rate in zip(table.changes, table.rates):
            acc = ex.add(acc, ex.mul(ex.Const(change[k]), rate))
        drift.append(acc)
    return drift


def build_diffusion(table):
    """Diffusion matrix A of the diffusion approximation.

    Entry (k, l) is the sum of rate_i * change_i[k] * change_i[l]; the
    returned nested list is symmetric with shared entry objects.
    """
    d = table.dimension
    a = [[None] * d for _ in range(d)]
    for k in range(d):
        for l in range(k, d):
            acc = ex.Const(0.0)
            for change, rate in zip(table.changes, table.rates):
                acc = ex.add(acc, ex.mul(ex.Const(change[k] * change[l]), rate))
            a[k][l] = acc
            a[l][k] = acc
    return a


@dataclass(frozen=True)
class SdeModel:
    """Immutable diffusion model dY = B(Y) dt + sigma(Y) dW with A = sigma sigma^T.

    Only A is stored; the matrix square root is never formed (the simulator
    factors A pointwise instead).  ``da[i][j]`` holds d(a_ij)/dx_j.
    """

    name: str
    variables: tuple
    drift: tuple
    diffusion: tuple
    da: tuple = field(default=None)

    def __post_init__(self):
        d = len(self.variables)
        if d not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {d}")
        if len(self.drift) != d or len(self.diffusion) != d:
            raise ValueError("drift and diffusion sizes must match the variables")
        if self.da is None:
            table = tuple(
                tuple(ex.differentiate(self.diffusion[i][j], j) for j in range(d))
                for i in range(d)
            )
            object.__setattr__(self, "da", table)

    @property
    def dimension(self):
        return len(self.variables)

    def a_divergence(self):
        """Row sums sum_j d(a_ij)/dx_j appearing in the weak-form drift term."""
        d = self.dimension
        out = []
        for i in range(d):
            acc = ex.Const(0.0)
            for j in range(d):
                acc = ex.add(acc, self.da[i][j])
            out.append(acc)
        return out


def model_from_table(name, table):
    """Assemble an `SdeModel` from a transition table."""
    return SdeModel(
        name=name,
        variables=table.variables,
        drift=tuple(build_drift(table)),
        diffusion=tuple(tuple(row) for row in build_diffusion(table)),
    )


def model_from_expressions(name, variables, drift, diffusion_upper, parameters=None):
    """Assemble an `SdeModel` from coefficient strings or expressions.

    ``diffusion_upper`` lists the rows of the upper triangle of A, e.g. for
    d=2: [[a11, a12], [a22]].  The lower triangle is mirrored.
    """
    variables = tuple(variables)
    d = len(variables)

    def as_expr(s):
        return s if isinstance(s, Expression) else parse(s, variables, parameters)

    b = tuple(as_expr(s) for s in drift)
    if len(diffusion_upper) != d or any(
        len(row) != d - i for i, row in enumerate(diffusion_upper)
    ):
        raise ValueError("diffusion_upper must list upper-triangle rows [[a11..a1d], [a22..a2d], ...]")
    a = [[None] * d for _ in range(d)]
    for i in range(d):
        for j in range(i, d):
            entry = as_expr(diffusion_upper[i][j - i])
            a[i][j] = entry
            a[j][i] = entry
    return SdeModel(name=name, variables=variables, drift=b,
                    diffusion=tuple(tuple(row) for row in a))


def warn_negative_rates(table, domain, samples_per_axis=5):
    """Warn if any table rate is negative on a grid of interior sample points."""
    pts = domain.interior_grid(samples_per_axis)
    for idx, rate in enumerate(table.rates):
        vals = evaluate_many(rate, pts)
        if np.any(vals < 0.0):
            where = pts[int(np.argmin(vals))]
            warnings.warn(
                f"rate {idx} of the transition table is negative inside the domain "
                f"(e.g. {float(np.min(vals)):g} at {tuple(where)})",
                UserWarning,
                stacklevel=2,
            )


# ---------------------------------------------------------------------------
# Built-in models

_RUMOR_PARAMS = {"Lambda": 0.5, "mu": 0.3, "eta": 0.2, "alpha": 0.1, "beta": 0.4}
_GONORRHEA_PARAMS = {
    "N": 10000.0,
    "mu": 6.84463e-5,
    "gamma": 0.018182,
    "beta": 2.55504e-6,
    "alpha": 1.5e-5,
}
_SIR_PARAMS = {"Lambda": 5.0, "mu": 0.95, "beta": 0.8, "gamma": 0.8, "epsilon": 0.6}
_TUMOR_PARAMS = {
    "s": 1.0,
    "rho": 0.3,
    "alpha": 0.8,
    "beta1": 1.0,
    "d1": 0.3,
    "c1": 0.2,
    "r1": 0.7,
    "b1": 0.6,
    "beta2": 0.1,
    "c2": 0.2,
    "r2": 2.3,
    "b2": 0.2,
    "beta3": 0.3,
    "beta4": 0.3,
    "c3": 0.2,
}


def rumor_table(params):
    """Susceptible/influenced rumor spread as a transition table."""
    return TransitionTable(
        ("S", "I"),
        [(-1.0, 0.0), (0.0, -1.0), (1.0, 0.0), (-1.0, 1.0)],
        [
            "mu*S",
            "(mu + eta)*I + alpha*I^2",
            "Lambda + alpha*I^2",
            "beta*S*I",
        ],
        params,
    )


def tumor_table(params):
    """Effector/normal/tumor cell interactions as a transition table.

    Compound change vectors carry the interaction weights, so several
    components move together in one transition.
    """
    b1, b2_, b3, b4 = (params[k] for k in ("beta1", "beta2", "beta3", "beta4"))
    return TransitionTable(
        ("E", "N", "T"),
        [
            (1.0, 0.0, 0.0),
            (-b1, 0.0, -b3),
            (-1.0, 0.0, 0.0),
            (0.0, 1.0, 0.0),
            (0.0, -b2_, -b4),
            (0.0, -1.0, 0.0),
            (0.0, 0.0, 1.0),
            (0.0, 0.0, -1.0),
        ],
        [
            "s + rho*E*T/(alpha + T)",
            "E*T",
            "(d1 + c1)*E",
            "r1*N*(1 - b1*N)",
            "N*T",
            "c2*N",
            "r2*T*(1 - b2*T)",
            "c3*T",
        ],
        params,
    )


def _build_rumor(params):
    return model_from_table("rumor", rumor_table(params))


def _build_gonorrhea(params):
    # parameter-perturbation model: noise enters as -alpha*S*I dW1 / +alpha*S*I dW2,
    # so A is diagonal and is written down directly rather than via a table
    return model_from_expressions(
        "gonorrhea",
        ("S", "I"),
        [
            "mu*N - beta*S*I + gamma*I - mu*S",
            "beta*S*I - (mu + gamma)*I",
        ],
        [
            ["alpha^2*S^2*I^2", "0"],
            ["alpha^2*S^2*I^2"],
        ],
        params,
    )


def _build_sir(params):
    # written directly from the closed-form B and A; the jump-table route is
    # not used because its displayed fourth change vector disagrees in sign
    # with the drift that accompanies it
    return model_from_expressions(
        "sir",
        ("S", "I", "R"),
        [
            "Lambda - mu*S - beta*S*I",
            "beta*S*I - (mu + gamma + epsilon)*I",
            "gamma*I - mu*R",
        ],
        [
            ["Lambda + mu*S + beta*S*I", "-beta*S*I", "0"],
            ["beta*S*I + (mu + gamma + epsilon)^2*I", "(mu + gamma + epsilon)*gamma*I"],
            ["gamma^2*I + mu*R"],
        ],
        params,
    )


def _build_tumor(params):
    return model_from_table("tumor", tumor_table(params))


_BUILTINS = {
    "rumor": (_RUMOR_PARAMS, _build_rumor),
    "gonorrhea": (_GONORRHEA_PARAMS, _build_gonorrhea),
    "sir": (_SIR_PARAMS, _build_sir),
    "tumor": (_TUMOR_PARAMS, _build_tumor),
}


def builtin_names():
    """Names accepted by `builtin_model`, in a stable order."""
    return tuple(_BUILTINS)


def builtin_parameters(name):
    """Default parameter values of a built-in model."""
    if name not in _BUILTINS:
        raise ValueError(f"unknown model {name!r}; available: {', '.join(_BUILTINS)}")
    return dict(_BUILTINS[name][0])


def builtin_model(name, overrides=None):
    """Construct one of the ready-made models.

    Parameters
    ----------
    name : {'rumor', 'gonorrhea', 'sir', 'tumor'}
    overrides : mapping, optional
        Parameter values replacing the defaults; keys must be known
        parameters of the chosen model.

    Returns
    -------
    SdeModel
    """
    defaults = builtin_parameters(name)
    params = dict(defaults)
    for key, value in (overrides or {}).items():
        if key not in defaults:
            raise ValueError(
                f"unknown parameter {key!r} for model {name!r}; "
                f"known: {', '.join(sorted(defaults))}"
            )
        params[key] = float(value)
    return _BUILTINS[name][1](params)


# ---------------------------------------------------------------------------
# Pointwise positive-definiteness check

@dataclass(frozen=True)
class SpdReport:
    """Result of sampling the smallest eigenvalue of A over a domain."""

    min_eigenvalue: float
    at_point: np.ndarray
    n_sampled: int
    n_nonpositive: int

    @property
    def positive_definite(self):
        return self.n_nonpositive == 0


def _eigvals_min_2x2(a11, a12, a22):
    mean = 0.5 * (a11 + a22)
    radius = np.sqrt((0.5 * (a11 - a22)) ** 2 + a12**2)
    return mean - radius


def _eigvals_min_3x3(a11, a12, a13, a22, a23, a33):
    # trigonometric closed form for symmetric 3x3 eigenvalues
    p1 = a12**2 + a13**2 + a23**2
    q = (a11 + a22 + a33) / 3.0
    p2 = (a11 - q) ** 2 + (a22 - q) ** 2 + (a33 - q) ** 2 + 2.0 * p1
    p = np.sqrt(np.maximum(p2, 0.0) / 6.0)
    safe = p > 0.0
    pinv = np.where(safe, np.where(safe, p, 1.0), 1.0)
    b11 = (a11 - q) / pinv
    b22 = (a22 - q) / pinv
    b33 = (a33 - q) / pinv
    b12 = a12 / pinv
    b13 = a13 / pinv
    b23 = a23 / pinv
    detb = (
        b11 * (b22 * b33 - b23**2)
        - b12 * (b12 * b33 - b23 * b13)
        + b13 * (b12 * b23 - b22 * b13)
    )
    r = np.clip(detb / 2.0, -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    lam_min = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    # p == 0 means A is already a multiple of the identity
    return np.where(safe, lam_min, q)


def validate_spd(model, domain, samples_per_axis=20):
    """Sample the smallest eigenvalue of A over the domain interior.

    Evaluates A on a uniform interior grid (``samples_per_axis`` points per
    axis) and reports the overall minimum, where it occurred, and how many
    sample points failed strict positive definiteness.  Report-only; no
    exception is raised for indefinite samples.
    """
    if samples_per_axis < 2:
        raise ValueError("samples_per_axis must be at least 2")
    pts = domain.interior_grid(samples_per_axis)
    d = model.dimension
    entries = {}
    for i in range(d):
        for j in range(i, d):
            entries[(i, j)] = evaluate_many(model.diffusion[i][j], pts)
    if d == 2:
        lam = _eigvals_min_2x2(entries[(0, 0)], entries[(0, 1)], entries[(1, 1)])
    else:
        lam = _eigvals_min_3x3(
            entries[(0, 0)], entries[(0, 1)], entries[(0, 2)],
            entries[(1, 1)], entries[(1, 2)], entries[(2, 2)],
        )
    k = int(np.argmin(lam))
    return SpdReport(
        min_eigenvalue=float(lam[k]),
        at_point=pts[k].copy(),
        n_sampled=pts.shape[0],
        n_nonpositive=int(np.count_nonzero(lam <= 0.0)),
    )
