"""The four benchmark identification problems and their update laws.

Each problem couples an explicit (or elementwise-implicit) parameter update
with one implicit linear state solve per time window:

- diffusion coefficient in a linear parabolic flow ("darcy"),
- diffusion coefficient with a logistic reaction ("fisher_kpp"),
- reaction potential entering as c·u + c|c|^(2/3)·u ("nonlinear_potential"),
- the same potential against a cubic reaction c·u^3 + c|c|^(2/3)·u
  ("allen_cahn").

For the two diffusion problems the parameter update is fully explicit and
the state solve uses homogeneous Dirichlet conditions.  For the two
potential problems the parameter update is an elementwise scalar solve, the
state solve is incremental with the state clamped to the data on the
boundary, and a norm-dependent damping factor multiplies the diffusion of
the state residual.

Conventions used throughout: ``data_prev``/``data_next`` are the observed
snapshots at the window ends, ``data_rate`` their backward difference
quotient, ``source_next`` the source at the window end; nonlinear functions
of data are evaluated pointwise at quadrature nodes from the P1
interpolants, and two-thirds powers are computed as cbrt(x^2), which is
well-defined for negative arguments.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .fem import (
    CellField,
    NodalField,
    apply_dirichlet,
    assemble_mass,
    assemble_stiffness,
    boundary_flux_form,
    elementwise_gradient_dot,
    grad_coupling,
    l2_norm,
    load_vector,
    quad_cell_integral,
    quad_load,
    quad_point_values,
)
from .mesh import Mesh
from .sparse import SolveReport

__all__ = [
    "ProblemError",
    "StabilizerConfig",
    "lipschitz_bound",
    "stabilizer_constant",
    "DarcyProblem",
    "FisherProblem",
    "PotentialProblem",
    "AllenCahnProblem",
    "CoercivityReport",
    "coercivity_check",
    "PROBLEM_KINDS",
    "make_problem",
]

log = logging.getLogger(__name__)

PROBLEM_KINDS = ("darcy", "fisher_kpp", "nonlinear_potential", "allen_cahn")


class ProblemError(RuntimeError):
    """Raised when an update law's preconditions are violated."""


def two_thirds_power(x: np.ndarray) -> np.ndarray:
    """|x|^(2/3), computed as cbrt(x*x)."""
    x = np.asarray(x, dtype=np.float64)
    return np.cbrt(x * x)


@dataclass(frozen=True)
class StabilizerConfig:
    """Constants feeding the norm-dependent damping of the state solve.

    ``z_lower``/``z_upper`` are the assumed positivity bounds of the data,
    ``embedding_constant`` the H1-to-L6 Sobolev embedding constant,
    ``true_param_norm_bound`` an a-priori bound standing in for the L2 norm
    of the unknown true parameter.  ``damping_scale`` and ``damping_offset``
    multiply and shift the raw damping factor; their defaults (36/25 and
    25/36) make the combined factor come out as
    ``embedding² · (2 z̄²/z̲) · (‖c‖^⅔+bound^⅔+‖c̃‖^⅔)² + 1``.
    """

    z_lower: float = 1.0
    z_upper: float = 2.0
    embedding_constant: float = 1.0
    true_param_norm_bound: float = 0.0
    damping_scale: float = 36.0 / 25.0
    damping_offset: float = 25.0 / 36.0

    def __post_init__(self):
        if not self.z_lower > 0.0:
            raise ProblemError(f"z_lower must be positive, got {self.z_lower!r}")
        if not self.z_upper >= self.z_lower:
            raise ProblemError(
                f"z_upper={self.z_upper!r} must be at least z_lower={self.z_lower!r}"
            )
        if not self.damping_offset > 0.0:
            raise ProblemError(f"damping_offset must be positive, got {self.damping_offset!r}")
        if not self.damping_scale >= 1.0:
            raise ProblemError(f"damping_scale must be at least 1, got {self.damping_scale!r}")


def lipschitz_bound(
    param_norm: float, cfg: StabilizerConfig, linearization_norm: float = 0.0
) -> float:
    """Bound for the parameter-direction derivative mismatch of the reaction law.

    Grows with the two-thirds powers of the current, true and linearization
    parameter norms; scales with the data upper bound and the embedding
    constant.
    """
    s = (
        param_norm ** (2.0 / 3.0)
        + cfg.true_param_norm_bound ** (2.0 / 3.0)
        + linearization_norm ** (2.0 / 3.0)
    )
    return (5.0 / 3.0) * cfg.z_upper * cfg.embedding_constant * s


def stabilizer_constant(
    param: CellField, cfg: StabilizerConfig, linearization: CellField | None = None
) -> float:
    """Damping factor in front of the residual diffusion of the state solve.

    Computed as scale·(L²/(2 z̲) + offset) with L the Lipschitz bound at the
    current parameter norm; with the default scale and offset this equals
    embedding²·(2 z̄²/z̲)·(sum of two-thirds-power norms)² + 1.  Always ≥ the
    scale times the offset and nondecreasing in the parameter norm.
    """
    lin_norm = l2_norm(linearization) if linearization is not None else 0.0
    lip = lipschitz_bound(l2_norm(param), cfg, lin_norm)
    return cfg.damping_scale * (lip**2 / (2.0 * cfg.z_lower) + cfg.damping_offset)


def _ensure_same_mesh(mesh: Mesh, *fields) -> None:
    for f in fields:
        if f is not None and f.mesh is not mesh:
            raise ProblemError("all fields of one step must live on one mesh")


class DarcyProblem:
    """Linear parabolic flow with unknown diffusion coefficient."""

    kind = "darcy"
    sigma = 0
    boundary_mode = "homogeneous_dirichlet"

    def update_parameter(
        self,
        param: CellField,
        state: NodalField,
        *,
        data_prev: NodalField,
        data_next: NodalField,
        data_rate: NodalField,
        source_next: NodalField,
        dt: float,
    ) -> CellField:
        # explicit per-element update: a += dt * grad(data) . grad(state - data)
        _ensure_same_mesh(param.mesh, state, data_prev)
        mismatch = NodalField(state.mesh, state.values - data_prev.values)
        drive = elementwise_gradient_dot(data_prev, mismatch)
        return CellField(param.mesh, param.values + dt * drive.values)

    def _state_rhs(self, mesh, state, data_next, source_next, dt):
        mass = assemble_mass(mesh)
        stiff = assemble_stiffness(mesh)
        rhs = mass.matvec(state.values)
        rhs += dt * load_vector(mesh, source_next)
        rhs += dt * stiff.matvec(data_next.values)
        return rhs

    def update_state(
        self,
        param_prev: CellField,
        param_new: CellField,
        state: NodalField,
        *,
        data_prev: NodalField,
        data_next: NodalField,
        source_next: NodalField,
        dt: float,
        tol: float = 1e-10,
    ) -> tuple[NodalField, SolveReport]:
        mesh = state.mesh
        _ensure_same_mesh(mesh, param_new, data_next, source_next)
        mass = assemble_mass(mesh)
        stiff = assemble_stiffness(mesh)
        system = mass + stiff.scaled(dt)
        rhs = self._state_rhs(mesh, state, data_next, source_next, dt)
        rhs -= dt * grad_coupling(mesh, data_next).apply(param_new)
        reduced = apply_dirichlet(system, rhs, mesh.boundary_vertex_flags, 0.0)
        solution, report = reduced.solve(tol=tol)
        return NodalField(mesh, solution), report


class FisherProblem(DarcyProblem):
    """Diffusion identification with a logistic reaction fed by the data.

    Shares the explicit parameter update with the plain diffusion problem;
    the state solve replaces the source by source - data + data² evaluated
    pointwise at quadrature nodes.
    """

    kind = "fisher_kpp"

    def _state_rhs(self, mesh, state, data_next, source_next, dt):
        mass = assemble_mass(mesh)
        stiff = assemble_stiffness(mesh)
        gq = quad_point_values(source_next)
        zq = quad_point_values(data_next)
        rhs = mass.matvec(state.values)
        rhs += dt * quad_load(mesh, gq - zq + zq**2)
        rhs += dt * stiff.matvec(data_next.values)
        return rhs


class _PotentialBase:
    """Shared machinery of the two reaction-potential problems.

    ``data_power`` is the exponent on the data inside the c·z-type volume
    terms (1 for the plain potential, 3 for the cubic reaction); the
    |c|^(2/3)·c terms always carry the first power of the data.
    """

    sigma = 1
    boundary_mode = "data_dirichlet"
    data_power = 1

    def __init__(
        self,
        stabilizer: StabilizerConfig,
        linearization: CellField | None = None,
        data_index_mode: str = "printed",
    ):
        if data_index_mode not in ("printed", "uniform"):
            raise ProblemError(
                f"data_index_mode must be 'printed' or 'uniform', got {data_index_mode!r}"
            )
        self.stabilizer = stabilizer
        self.linearization = linearization
        self.data_index_mode = data_index_mode

    def update_parameter(
        self,
        param: CellField,
        state: NodalField,
        *,
        data_prev: NodalField,
        data_next: NodalField,
        data_rate: NodalField,
        source_next: NodalField,
        dt: float,
    ) -> CellField:
        mesh = param.mesh
        _ensure_same_mesh(mesh, state, data_prev, data_next, data_rate, source_next)
        sig = float(self.sigma)
        p = self.data_power
        c = param.values
        c23 = two_thirds_power(c)

        z0q = quad_point_values(data_prev)
        z1q = quad_point_values(data_next)
        uq = quad_point_values(state)
        # data index entering the |c|^(2/3) volume terms: the derivation keeps
        # the old snapshot there; 'uniform' switches it to the new one
        z_frac_q = z1q if self.data_index_mode == "uniform" else z0q

        int_z1p = quad_cell_integral(mesh, z1q**p)
        int_zfrac = quad_cell_integral(mesh, z_frac_q)
        denom = mesh.element_areas + sig * dt * (int_z1p + c23 * int_zfrac)
        if np.any(denom <= 0.0):
            bad = int(np.argmin(denom))
            raise ProblemError(
                "nonpositive parameter-update denominator on element "
                f"{bad}: the data violates the positivity assumption"
            )

        if self.linearization is not None:
            _ensure_same_mesh(mesh, self.linearization)
            lin_factor = 1.0 + (5.0 / 3.0) * two_thirds_power(self.linearization.values)
        else:
            lin_factor = 1.0
        drive = quad_cell_integral(mesh, z0q * (uq - z0q)) * lin_factor

        gq = quad_point_values(source_next)
        rateq = quad_point_values(data_rate)
        residual_q = rateq + c[:, None] * z1q**p + (c23 * c)[:, None] * z_frac_q - gq
        int_residual = quad_cell_integral(mesh, residual_q)
        flux = boundary_flux_form(data_next).values

        rhs = dt * drive + sig * dt * flux - sig * dt * int_residual
        return CellField(mesh, c + rhs / denom)

    def update_state(
        self,
        param_prev: CellField,
        param_new: CellField,
        state: NodalField,
        *,
        data_prev: NodalField,
        data_next: NodalField,
        source_next: NodalField,
        dt: float,
        tol: float = 1e-10,
    ) -> tuple[NodalField, SolveReport]:
        mesh = state.mesh
        _ensure_same_mesh(mesh, param_prev, param_new, data_prev, data_next, source_next)
        p = self.data_power
        c_old = param_prev.values
        c23 = two_thirds_power(c_old)
        delta_c = param_new.values - c_old

        damping = stabilizer_constant(param_prev, self.stabilizer, self.linearization)
        mass = assemble_mass(mesh)
        stiff = assemble_stiffness(mesh)
        system = mass + stiff.scaled(dt * damping)

        z1q = quad_point_values(data_next)
        gq = quad_point_values(source_next)
        # both increment and residual reaction terms sit on the new snapshot here
        increment_q = delta_c[:, None] * z1q**p + (c23 * delta_c)[:, None] * z1q
        residual_q = c_old[:, None] * z1q**p + (c23 * c_old)[:, None] * z1q - gq

        rhs = -dt * quad_load(mesh, increment_q + residual_q)
        rhs -= dt * stiff.matvec(data_next.values)
        rhs += dt * damping * stiff.matvec(data_prev.values - state.values)

        boundary_delta = data_next.values - state.values
        reduced = apply_dirichlet(system, rhs, mesh.boundary_vertex_flags, boundary_delta)
        delta_u, report = reduced.solve(tol=tol)
        return NodalField(mesh, state.values + delta_u), report


class PotentialProblem(_PotentialBase):
    """Reaction-potential identification with a linear-in-state reaction."""

    kind = "nonlinear_potential"
    data_power = 1


class AllenCahnProblem(_PotentialBase):
    """Reaction-potential identification against a cubic reaction."""

    kind = "allen_cahn"
    data_power = 3


def make_problem(
    kind: str,
    stabilizer: StabilizerConfig | None = None,
    linearization: CellField | None = None,
    data_index_mode: str = "printed",
):
    """Instantiate a problem by kind name."""
    if kind == "darcy":
        return DarcyProblem()
    if kind == "fisher_kpp":
        return FisherProblem()
    if kind == "nonlinear_potential":
        return PotentialProblem(stabilizer or StabilizerConfig(), linearization, data_index_mode)
    if kind == "allen_cahn":
        return AllenCahnProblem(stabilizer or StabilizerConfig(), linearization, data_index_mode)
    raise ProblemError(f"unknown problem kind {kind!r}; expected one of {PROBLEM_KINDS}")


@dataclass(frozen=True)
class CoercivityReport:
    """Sampled lower-bound audit of the reaction law's parameter monotonicity."""

    n_samples: int
    min_ratio: float
    failures: int
    z_lower: float

    @property
    def passed(self) -> bool:
        return self.failures == 0


def coercivity_check(
    data: NodalField,
    truth: CellField,
    n_samples: int = 1000,
    seed: int = 0,
    z_lower: float = 1.0,
    data_power: int = 1,
) -> CoercivityReport:
    """Audit ⟨f(c,z)−f(c†,z), c−c†⟩ ≥ z̲·‖c−c†‖² on random parameter samples.

    Draws ``n_samples`` cell fields with entries uniform in [−5, 5] and
    evaluates both sides by quadrature; an entry counts as a failure when
    the left side drops below the right side by more than 1e-10.  The
    reported ``min_ratio`` is the smallest observed left/right quotient.
    """
    mesh = data.mesh
    _ensure_same_mesh(mesh, truth)
    zq = quad_point_values(data)
    p = int(data_power)
    int_zp = quad_cell_integral(mesh, zq**p)  # per-element integral of the data power
    int_z = quad_cell_integral(mesh, zq) if p != 1 else int_zp
    areas = mesh.element_areas
    ct = truth.values
    mt = ct * two_thirds_power(ct)

    rng = np.random.default_rng(seed)
    min_ratio = np.inf
    failures = 0
    for _ in range(int(n_samples)):
        c = rng.uniform(-5.0, 5.0, size=mesh.n_triangles)
        dc = c - ct
        dm = c * two_thirds_power(c) - mt
        lhs = float(np.sum(dc * dc * int_zp) + np.sum(dm * dc * int_z))
        rhs = float(z_lower * np.sum(areas * dc * dc))
        if lhs < rhs - 1e-10:
            failures += 1
        if rhs > 0.0:
            min_ratio = min(min_ratio, lhs / rhs)
    if not np.isfinite(min_ratio):
        min_ratio = 1.0  # all samples hit c = truth exactly
    return CoercivityReport(
        n_samples=int(n_samples), min_ratio=float(min_ratio), failures=failures, z_lower=z_lower
    )
