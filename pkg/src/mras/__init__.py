"""Online parameter identification for parabolic problems.

The package assimilates a stream of noisy state observations into a joint
parameter/state estimate, one observation window per time step.  Four
benchmark problems are built in: linear diffusion with an unknown
conductivity, diffusion with a logistic reaction, and two reaction-potential
problems (linear and cubic in the state).

Typical use::

    from mras import synthesize, make_problem, run, TimeGrid

    grid = TimeGrid(dt=0.005, n_steps=400)
    data = synthesize("darcy", recon_h=0.15, truth_h=0.1, grid=grid, deltas=(0.0,))
    problem = make_problem("darcy")
    result = run(problem, grid, data.observations[0.0],
                 truth_param=data.truth.param, truth_states=data.truth.states,
                 initial_param=initial_guess)
"""

from .config import ConfigError, RunConfig, load_config
from .diagnostics import ErrorSeries, RunReport, fit_decay, monotonicity_stats
from .fem import (
    CellField,
    FemError,
    NodalField,
    apply_dirichlet,
    assemble_mass,
    assemble_stiffness,
    l2_norm,
    transfer,
)
from .mesh import Mesh, MeshError, disk_mesh, rect_mesh
from .problems import (
    PROBLEM_KINDS,
    CoercivityReport,
    ProblemError,
    StabilizerConfig,
    coercivity_check,
    make_problem,
)
from .sparse import CsrMatrix, SolveReport, SolverError, cg_solve, csr_from_triplets
from .stepper import MrasState, RunResult, StepInputs, StepperError, TimeGrid, mras_step, run
from .synth import (
    BenchmarkRecipe,
    ObservationSeries,
    SynthError,
    SynthesisResult,
    TruthBundle,
    add_noise,
    forward_solve,
    make_truth,
    random_source,
    restrict,
    synthesize,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "Mesh",
    "MeshError",
    "rect_mesh",
    "disk_mesh",
    "CsrMatrix",
    "csr_from_triplets",
    "cg_solve",
    "SolveReport",
    "SolverError",
    "NodalField",
    "CellField",
    "FemError",
    "assemble_mass",
    "assemble_stiffness",
    "apply_dirichlet",
    "l2_norm",
    "transfer",
    "PROBLEM_KINDS",
    "ProblemError",
    "StabilizerConfig",
    "make_problem",
    "coercivity_check",
    "CoercivityReport",
    "TimeGrid",
    "MrasState",
    "StepInputs",
    "StepperError",
    "mras_step",
    "run",
    "RunResult",
    "ErrorSeries",
    "RunReport",
    "fit_decay",
    "monotonicity_stats",
    "SynthError",
    "BenchmarkRecipe",
    "make_truth",
    "random_source",
    "forward_solve",
    "restrict",
    "add_noise",
    "TruthBundle",
    "ObservationSeries",
    "SynthesisResult",
    "synthesize",
    "ConfigError",
    "RunConfig",
    "load_config",
]
