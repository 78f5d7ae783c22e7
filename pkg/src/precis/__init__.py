"""Minimum-precision sensor selection and H2/Hinf estimator design.

Layers, bottom up: :mod:`precis.linalg` (dense kernels), :mod:`precis.model`
(plants and sensors), :mod:`precis.lmi` (the four synthesis programs),
:mod:`precis.admm` (the splitting solver), :mod:`precis.estimator` (design
and certification), :mod:`precis.selection` (subset search),
:mod:`precis.bench` (benchmark protocols), and :mod:`precis.cli`.
"""

from .admm import AdmmConfig, AdmmResult, solve
from .errors import (
    BudgetError,
    InfeasibleDesign,
    PrecisError,
    RecoveryError,
    UnstableError,
)
from .estimator import DesignSpec, EstimatorResult, design, h2_norm, hinf_norm
from .lmi import AffineLmiProgram, build_program, certify
from .model import (
    LtiPlant,
    SensorCatalog,
    SensorDef,
    SensorSubset,
    assemble_measurement,
    example1_plant,
    random_plant,
    spring_mass_plant,
)
from .selection import SelectionProblem, SelectionResult, eval_f, eval_h, exhaustive, gse, lpe, rlm

__version__ = "0.1.0"

__all__ = [
    "AdmmConfig",
    "AdmmResult",
    "AffineLmiProgram",
    "BudgetError",
    "DesignSpec",
    "EstimatorResult",
    "InfeasibleDesign",
    "LtiPlant",
    "PrecisError",
    "RecoveryError",
    "SelectionProblem",
    "SelectionResult",
    "SensorCatalog",
    "SensorDef",
    "SensorSubset",
    "UnstableError",
    "assemble_measurement",
    "build_program",
    "certify",
    "design",
    "eval_f",
    "eval_h",
    "example1_plant",
    "exhaustive",
    "gse",
    "h2_norm",
    "hinf_norm",
    "lpe",
    "random_plant",
    "rlm",
    "solve",
    "spring_mass_plant",
    "__version__",
]
