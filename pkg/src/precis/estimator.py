"""High-level design entry points: build, solve, recover, certify.

A design request is dispatched to the matching LMI builder, solved by the
splitting solver, and the estimator matrices are recovered from the
variables.  Certification never trusts the solver: the achieved H2/Hinf
norm of the closed error system is recomputed from the recovered matrices,
and the precisions are uniformly inflated by a small factor when the raw
solution sits on the constraint boundary (the objective is linear in ``p``
and the error norm is monotone in every noise level, so a ``(1+delta)``
scaling is a certified, bounded-loss repair).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import admm, lmi
from .errors import (
    DimensionError,
    FileFormatError,
    InfeasibleDesign,
    InvalidArgument,
    RecoveryError,
    UnstableError,
)
from .linalg import lyap_solve
from .model import (
    LtiPlant,
    MeasurementModel,
    SensorCatalog,
    SensorSubset,
    _LineReader,
    assemble_measurement,
    augment_disturbance,
    hautus_detectable,
    read_matrix,
    validate_precisions,
    write_matrix,
)

__all__ = [
    "DesignSpec",
    "EstimatorResult",
    "ErrorSystem",
    "design",
    "recover",
    "error_system",
    "hinf_norm",
    "h2_norm",
    "tighten",
    "save_result",
    "load_result",
]

FRAMEWORKS = ("h2", "hinf")
ESTIMATORS = ("observer", "filter")

#: delta schedule of the tighten step: doubling from 1e-3, capped at 0.2.
TIGHTEN_DELTAS = (0.0,) + tuple(1e-3 * 2**k for k in range(8))


@dataclass(frozen=True)
class DesignSpec:
    """What to design: framework, estimator kind, bound, weights, subset.

    ``rho`` weights are indexed by catalog id (length ``n_sensors``); when
    None the catalog weights apply.
    """

    framework: str
    estimator: str
    gamma: float
    subset: SensorSubset
    rho: np.ndarray = None

    def __post_init__(self):
        if self.framework not in FRAMEWORKS:
            raise InvalidArgument(f"framework must be one of {FRAMEWORKS}")
        if self.estimator not in ESTIMATORS:
            raise InvalidArgument(f"estimator must be one of {ESTIMATORS}")
        if self.gamma <= 0:
            raise InvalidArgument("gamma must be positive")
        if self.rho is not None:
            rho = np.asarray(self.rho, dtype=float).reshape(-1)
            if np.any(rho <= 0):
                raise InvalidArgument("rho must be positive")
            object.__setattr__(self, "rho", rho)

    def subset_weights(self, catalog: SensorCatalog) -> np.ndarray:
        base = catalog.weights if self.rho is None else self.rho
        if len(base) != catalog.n_sensors:
            raise DimensionError(
                f"rho length {len(base)} != {catalog.n_sensors} catalog sensors"
            )
        return np.array([base[i] for i in self.subset])


@dataclass(frozen=True)
class EstimatorResult:
    """A recovered design with its certification status."""

    spec: DesignSpec
    p: np.ndarray
    objective: float
    achieved_norm: float
    certified: bool
    gain: np.ndarray = None
    filter_A: np.ndarray = None
    filter_B: np.ndarray = None
    filter_C: np.ndarray = None
    variables: dict = None
    solver: admm.AdmmResult = None


@dataclass(frozen=True)
class ErrorSystem:
    """Closed error system ``xdot = A x + B w``, ``err = C x`` (no feedthrough)."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray


def recover(variables: dict, spec: DesignSpec) -> dict:
    """Invert the change of variables to the estimator matrices.

    Observer: ``L = inv(X) Y``.  Filter: ``A_F = inv(X) P``,
    ``B_F = inv(X) Y``, ``C_F`` is the output-map variable of the
    framework.  Raises :class:`RecoveryError` when ``X`` is too badly
    conditioned to invert trustworthily.
    """
    x = np.asarray(variables["X"], dtype=float)
    if np.linalg.cond(x) > 1e12:
        raise RecoveryError("X is numerically singular (cond > 1e12)")
    y = np.asarray(variables["Y"], dtype=float)
    if spec.estimator == "observer":
        return {"L": np.linalg.solve(x, y)}
    a_f = np.linalg.solve(x, np.asarray(variables["P"], dtype=float))
    b_f = np.linalg.solve(x, y)
    c_f = variables["Q_filter"] if spec.framework == "hinf" else variables["N"]
    return {"A_F": a_f, "B_F": b_f, "C_F": np.asarray(c_f, dtype=float)}


def error_system(
    plant: LtiPlant,
    meas: MeasurementModel,
    matrices: dict,
    p: np.ndarray,
) -> ErrorSystem:
    """Closed error system for a candidate design at noise levels ``1/sqrt(p)``.

    Observer gain ``L`` gives ``(A + L C_y, B_w + L D_w, C_z)``; a filter
    triple stacks plant and filter states.
    """
    p = validate_precisions(p, meas.n_y)
    sigma = 1.0 / np.sqrt(p)
    b_w, d_w = augment_disturbance(plant, meas, sigma)
    if "L" in matrices:
        gain = np.asarray(matrices["L"], dtype=float)
        return ErrorSystem(
            plant.A + gain @ meas.C_y, b_w + gain @ d_w, plant.C_z.copy()
        )
    a_f = np.asarray(matrices["A_F"], dtype=float)
    b_f = np.asarray(matrices["B_F"], dtype=float)
    c_f = np.asarray(matrices["C_F"], dtype=float)
    n_x = plant.n_x
    a_e = np.block([[plant.A, np.zeros((n_x, a_f.shape[0]))], [b_f @ meas.C_y, a_f]])
    b_e = np.vstack([b_w, b_f @ d_w])
    c_e = np.hstack([plant.C_z, -c_f])
    return ErrorSystem(a_e, b_e, c_e)


def _require_stable(a: np.ndarray) -> np.ndarray:
    eigs = np.linalg.eigvals(a)
    if np.max(eigs.real) >= 0.0:
        raise UnstableError(
            f"closed-loop matrix is not Hurwitz; spectrum {np.sort_complex(eigs)}"
        )
    return eigs


def _sval(a, b, c, w: float) -> float:
    n = a.shape[0]
    g = c @ np.linalg.solve(1j * w * np.eye(n) - a, b)
    return float(np.linalg.svd(g, compute_uv=False)[0])


def hinf_norm(sys: ErrorSystem, tol: float = 1e-6) -> float:
    """Peak gain of ``C (sI - A)^{-1} B`` by Hamiltonian bisection.

    ``gamma`` exceeds the norm iff the Hamiltonian
    ``[[A, B B'/g], [-C'C/g, -A']]`` has no imaginary-axis eigenvalues;
    bisection tightens the bracket to relative width ``tol`` and the upper
    endpoint is returned, so the result never understates the norm by more
    than roundoff.
    """
    a, b, c = sys.A, sys.B, sys.C
    eigs = _require_stable(a)
    if np.linalg.norm(b) == 0.0 or np.linalg.norm(c) == 0.0:
        return 0.0

    probes = {0.0}
    for lam in eigs:
        probes.add(abs(lam.imag))
        probes.add(abs(lam))
    lo = max(_sval(a, b, c, w) for w in probes)
    if lo == 0.0:
        lo = 1e-12

    def no_imag_axis(g: float) -> bool:
        ham = np.block([[a, (b @ b.T) / g], [-(c.T @ c) / g, -a.T]])
        ew = np.linalg.eigvals(ham)
        scale = max(1.0, np.max(np.abs(ew)))
        return not np.any(np.abs(ew.real) <= 1e-9 * scale)

    hi = 2.0 * lo
    for _ in range(64):
        if no_imag_axis(hi):
            break
        hi *= 2.0
    else:
        raise InvalidArgument("hinf_norm: failed to bracket the norm")
    lo = max(lo, hi / 4.0) if hi > 2.0 * lo else lo
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if no_imag_axis(mid):
            hi = mid
        else:
            lo = mid
    return hi


def h2_norm(sys: ErrorSystem) -> float:
    """H2 norm via the controllability Gramian of the error system."""
    _require_stable(sys.A)
    gram = lyap_solve(sys.A, sys.B @ sys.B.T)
    val = float(np.trace(sys.C @ gram @ sys.C.T))
    return math.sqrt(max(val, 0.0))


def _achieved_norm(plant, meas, matrices, p, framework: str) -> float:
    sys = error_system(plant, meas, matrices, p)
    return hinf_norm(sys) if framework == "hinf" else h2_norm(sys)


def tighten(
    result: EstimatorResult,
    plant: LtiPlant,
    meas: MeasurementModel,
    spec: DesignSpec,
) -> EstimatorResult:
    """Certify a candidate, inflating precisions if needed.

    The solver stops at moderate accuracy, so the raw solution usually sits
    on the constraint boundary.  Scaling ``p`` by ``1 + delta`` (delta
    doubling from 1e-3, capped at 0.2) shrinks every noise level until the
    recomputed norm of the recovered estimator meets the bound; the
    weighted objective scales by exactly ``1 + delta``.  Fails with
    :class:`InfeasibleDesign` when the cap is reached.

    The gate is the norm itself, recomputed independently of the solver;
    an eigenvalue certificate of the solver's LMI variables (available via
    :func:`precis.lmi.certify`) is deliberately not required here, because
    sparse optimal designs sit on the cone boundary where that certificate
    cannot be repaired by scaling ``p`` even though the recovered
    estimator genuinely meets the bound.
    """
    matrices = _matrices_of(result)
    for delta in TIGHTEN_DELTAS:
        p_try = result.p * (1.0 + delta)
        try:
            norm = _achieved_norm(plant, meas, matrices, p_try, spec.framework)
        except UnstableError:
            break
        if norm > spec.gamma:
            continue
        return replace(
            result,
            p=p_try,
            objective=result.objective * (1.0 + delta),
            achieved_norm=norm,
            certified=True,
        )
    raise InfeasibleDesign(
        f"candidate could not be certified within the +20% precision budget "
        f"(norm bound {spec.gamma})"
    )


def _matrices_of(result: EstimatorResult) -> dict:
    if result.gain is not None:
        return {"L": result.gain}
    return {"A_F": result.filter_A, "B_F": result.filter_B, "C_F": result.filter_C}


def design(
    plant: LtiPlant,
    catalog: SensorCatalog,
    spec: DesignSpec,
    config: admm.AdmmConfig = None,
    preview_every: int = None,
) -> EstimatorResult:
    """Full pipeline: assemble, pre-check, solve, recover, certify.

    Raises :class:`InfeasibleDesign` when the subset cannot meet the bound
    (undetectable pair for observers, solver-declared infeasibility, or a
    candidate that fails certification).

    ``preview_every`` trades optimality for time: every that many solver
    iterations the current candidate is test-certified and the solve stops
    at the first success.  The result is then certified but may cost up to
    roughly the tighten budget (~20%) more than the fully converged
    design; batch subset searches use this to avoid polishing estimators
    they only need a price for.
    """
    config = config or admm.AdmmConfig()
    meas = assemble_measurement(plant, catalog, spec.subset)
    weights = spec.subset_weights(catalog)
    if spec.estimator == "observer" and not hautus_detectable(plant.A, meas.C_y):
        raise InfeasibleDesign("pair (A, C_y) is not detectable for this subset")
    program = lmi.build_program(
        spec.framework, spec.estimator, plant, meas, weights, spec.gamma
    )
    stop_check = None
    if preview_every:
        delta_max = 1.0 + TIGHTEN_DELTAS[-1]

        def stop_check(state):
            try:
                mats = recover(state.variables, spec)
                norm = _achieved_norm(
                    plant, meas, mats, state.p * delta_max, spec.framework
                )
            except (RecoveryError, UnstableError):
                return False
            return norm <= spec.gamma

    solved = admm.solve(program, config, stop_check=stop_check,
                        stop_every=preview_every or 0)
    if solved.status == "infeasible":
        raise InfeasibleDesign(
            f"solver reports infeasibility (primal residual "
            f"{solved.primal_residual:.3g} after {solved.iterations} iterations)"
        )
    matrices = recover(solved.variables, spec)
    candidate = EstimatorResult(
        spec=spec,
        p=solved.p,
        objective=float(weights @ solved.p),
        achieved_norm=float("nan"),
        certified=False,
        gain=matrices.get("L"),
        filter_A=matrices.get("A_F"),
        filter_B=matrices.get("B_F"),
        filter_C=matrices.get("C_F"),
        variables=solved.variables,
        solver=solved,
    )
    return tighten(candidate, plant, meas, spec)


# ---------------------------------------------------------------------------
# Result file I/O (text; matrices in the shared matrix text format).

RESULT_HEADER = "precis-result-v1"


def save_result(path, result: EstimatorResult) -> None:
    """Write a result file: scalars, subset, precisions, matrices."""
    lines = [RESULT_HEADER]
    spec = result.spec
    lines.append(f"framework {spec.framework}")
    lines.append(f"estimator {spec.estimator}")
    lines.append(f"gamma {spec.gamma:.17g}")
    lines.append(f"certified {int(result.certified)}")
    lines.append(f"achieved_norm {result.achieved_norm:.17g}")
    lines.append(f"objective {result.objective:.17g}")
    if result.solver is not None:
        lines.append(f"status {result.solver.status}")
        lines.append(f"iterations {result.solver.iterations}")
    lines.append("subset0 " + " ".join(str(i) for i in spec.subset))
    lines.append("p " + " ".join(f"{v:.17g}" for v in result.p))
    for name, m in _matrices_of(result).items():
        lines.append(f"matrix {name}")
        write_matrix(lines, m)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


@dataclass(frozen=True)
class LoadedResult:
    """Parsed result file (enough to re-verify a design)."""

    framework: str
    estimator: str
    gamma: float
    certified: bool
    achieved_norm: float
    objective: float
    subset: SensorSubset
    p: np.ndarray
    matrices: dict


def load_result(path) -> LoadedResult:
    """Read a result file written by :func:`save_result`."""
    with open(path) as fh:
        reader = _LineReader(fh.read())
    if reader.next("header") != RESULT_HEADER:
        raise FileFormatError("not a result file", line=1, field="header")
    scalars = {}
    subset = None
    p = None
    matrices = {}
    while True:
        peeked, _ = reader.peek()
        if peeked is None:
            break
        line = reader.next("entry")
        key, _, rest = line.partition(" ")
        if key == "matrix":
            matrices[rest.strip()] = read_matrix(reader, rest.strip())
        elif key == "subset0":
            subset = SensorSubset(int(v) for v in rest.split())
        elif key == "p":
            p = np.array([float(v) for v in rest.split()])
        else:
            scalars[key] = rest
    try:
        framework = scalars["framework"]
        estimator = scalars["estimator"]
        gamma = float(scalars["gamma"])
    except KeyError as exc:
        raise FileFormatError("missing required entry", field=str(exc)) from None
    if subset is None or p is None:
        raise FileFormatError("missing subset0 or p entry", field="subset0/p")
    if framework not in FRAMEWORKS or estimator not in ESTIMATORS:
        raise FileFormatError("bad framework/estimator", field="framework")
    needed = ("L",) if estimator == "observer" else ("A_F", "B_F", "C_F")
    for name in needed:
        if name not in matrices:
            raise FileFormatError("missing matrix section", field=name)
    return LoadedResult(
        framework=framework,
        estimator=estimator,
        gamma=gamma,
        certified=scalars.get("certified", "0") == "1",
        achieved_norm=float(scalars.get("achieved_norm", "nan")),
        objective=float(scalars.get("objective", "nan")),
        subset=subset,
        p=p,
        matrices={k: matrices[k] for k in needed},
    )
