"""Sensor subset selection under a cardinality constraint.

The set function ``f(Q)`` is the weighted sum of optimal precisions of a
certified design on subset ``Q``, or ``inf`` when no such design exists
(``f`` of the empty set is ``inf``).  Three heuristics search for a subset
of at most ``k_s`` sensors:

* greedy elimination (``gse``): repeatedly drop the sensor whose removal
  increases the cost least; ``n_s*(n_s+1)/2 - k_s*(k_s+1)/2`` evaluations;
* least-precise elimination (``lpe``): repeatedly drop the sensor with the
  smallest optimal precision; ``n_s - k_s`` loop solves;
* reweighted l1 minimization (``rlm``): resolve on the full set with
  weights ``1/(eps + p)`` until at most ``k_s`` precisions stay above a
  threshold.

``exhaustive`` enumerates every subset of size exactly ``k_s`` (enough, by
monotonicity of ``f``) and is the reference the heuristics are judged
against.  Leave-one-out and enumeration evaluations are independent and can
fan out over processes.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .admm import AdmmConfig
from .errors import BudgetError, InfeasibleDesign, InvalidArgument, RecoveryError
from .estimator import DesignSpec, design
from .model import LtiPlant, SensorCatalog, SensorSubset

__all__ = [
    "SelectionProblem",
    "SelectionResult",
    "TraceRow",
    "eval_f",
    "eval_h",
    "gse",
    "lpe",
    "rlm",
    "exhaustive",
    "write_selection_csv",
]

INF = float("inf")


@dataclass(frozen=True)
class SelectionProblem:
    """A selection instance: plant, catalog, design template, and budget."""

    plant: LtiPlant
    catalog: SensorCatalog
    k_s: int
    framework: str = "hinf"
    estimator: str = "observer"
    gamma: float = 1.0
    rho: np.ndarray = None
    admm: AdmmConfig = None
    jobs: int = 1
    preview_every: int = None

    def __post_init__(self):
        if not 1 <= self.k_s <= self.catalog.n_sensors:
            raise InvalidArgument(
                f"k_s must be in 1..{self.catalog.n_sensors}, got {self.k_s}"
            )
        if self.jobs < 1:
            raise InvalidArgument("jobs must be >= 1")

    @property
    def n_s(self) -> int:
        return self.catalog.n_sensors

    def spec_for(self, subset: SensorSubset, rho=None) -> DesignSpec:
        weights = self.rho if rho is None else rho
        return DesignSpec(
            self.framework, self.estimator, self.gamma, subset, weights
        )


@dataclass(frozen=True)
class TraceRow:
    """One line of the selection trace CSV."""

    round: int
    candidate: str
    cost: float
    action: str


@dataclass(frozen=True)
class SelectionResult:
    """Outcome of a selection run.

    ``evaluation_count`` counts the algorithm's loop solves (the quantity
    the closed-form cost formulas describe); ``total_solves`` additionally
    includes any final design pass.
    """

    algorithm: str
    status: str
    subset: SensorSubset
    cost: float
    precisions: dict
    evaluation_count: int
    total_solves: int
    trace: tuple

    @property
    def feasible(self) -> bool:
        return self.status == "feasible"


@dataclass(frozen=True)
class _Eval:
    cost: float
    precisions: dict


def _solve_subset(problem: SelectionProblem, ids: tuple, rho=None) -> _Eval:
    """One certified design; infeasibility becomes an infinite cost."""
    if len(ids) == 0:
        return _Eval(INF, {})
    subset = SensorSubset(ids)
    try:
        result = design(
            problem.plant, problem.catalog, problem.spec_for(subset, rho),
            problem.admm, preview_every=problem.preview_every,
        )
    except (InfeasibleDesign, RecoveryError):
        return _Eval(INF, {i: INF for i in subset})
    return _Eval(result.objective, dict(zip(subset.ids, result.p)))


def _solve_many(problem: SelectionProblem, id_tuples: list, rho=None) -> list:
    """Evaluate several subsets, fanning out over processes when asked.

    Results come back in input order, so downstream tie-breaking does not
    depend on completion order.
    """
    if problem.jobs == 1 or len(id_tuples) <= 1:
        return [_solve_subset(problem, ids, rho) for ids in id_tuples]
    workers = min(problem.jobs, len(id_tuples))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(
            pool.map(_solve_subset, itertools.repeat(problem),
                     id_tuples, itertools.repeat(rho))
        )


def eval_f(problem: SelectionProblem, subset: SensorSubset) -> float:
    """Weighted optimal precision sum on ``subset``; ``inf`` if infeasible."""
    return _solve_subset(problem, tuple(subset)).cost


def eval_h(problem: SelectionProblem, subset: SensorSubset) -> dict:
    """Per-sensor optimal precisions on ``subset`` (all ``inf`` if infeasible)."""
    return _solve_subset(problem, tuple(subset)).precisions


def _argmin_by_id(pairs) -> tuple:
    """(key, value) with minimal value; ties go to the smallest key."""
    best_key, best_val = None, INF
    for key, val in pairs:
        if best_key is None or val < best_val:
            best_key, best_val = key, val
    return best_key, best_val


def gse(problem: SelectionProblem) -> SelectionResult:
    """Greedy sensor elimination.

    Starting from the full catalog, each round evaluates the cost of every
    single-sensor removal and drops the least damaging sensor (ties to the
    lowest id).  A round where every removal is infeasible aborts with an
    empty result.
    """
    current = tuple(range(problem.n_s))
    rounds = problem.n_s - problem.k_s
    trace = []
    evaluations = 0
    total = 0
    best = None
    for rnd in range(1, rounds + 1):
        candidates = [tuple(i for i in current if i != s) for s in current]
        evals = _solve_many(problem, candidates)
        evaluations += len(candidates)
        total += len(candidates)
        for s, ev in zip(current, evals):
            trace.append(TraceRow(rnd, str(s), ev.cost, "evaluate-drop"))
        drop, cost = _argmin_by_id(zip(current, (e.cost for e in evals)))
        if not math.isfinite(cost):
            trace.append(TraceRow(rnd, "-", INF, "all-infeasible"))
            return SelectionResult(
                "gse", "infeasible", SensorSubset(()), INF, {},
                evaluations, total, tuple(trace),
            )
        best = evals[current.index(drop)]
        current = tuple(i for i in current if i != drop)
        trace.append(TraceRow(rnd, str(drop), cost, "eliminate"))
    if best is None:
        # k_s == n_s: nothing to eliminate, price the full set once.
        best = _solve_subset(problem, current)
        total += 1
        if not math.isfinite(best.cost):
            return SelectionResult(
                "gse", "infeasible", SensorSubset(()), INF, {},
                evaluations, total, tuple(trace),
            )
    return SelectionResult(
        "gse", "feasible", SensorSubset(current), best.cost, best.precisions,
        evaluations, total, tuple(trace),
    )


def lpe(problem: SelectionProblem) -> SelectionResult:
    """Least-precise sensor elimination.

    Each round solves once on the current subset and drops the sensor with
    the smallest optimal precision (ties to the lowest id), then a final
    design pass prices the surviving subset.
    """
    current = tuple(range(problem.n_s))
    rounds = problem.n_s - problem.k_s
    trace = []
    loop_solves = 0
    for rnd in range(1, rounds + 1):
        ev = _solve_subset(problem, current)
        loop_solves += 1
        if not math.isfinite(ev.cost):
            trace.append(TraceRow(rnd, "-", INF, "infeasible"))
            return SelectionResult(
                "lpe", "infeasible", SensorSubset(()), INF, {},
                loop_solves, loop_solves, tuple(trace),
            )
        drop, p_min = _argmin_by_id(ev.precisions.items())
        trace.append(TraceRow(rnd, str(drop), p_min, "eliminate"))
        current = tuple(i for i in current if i != drop)
    final = _solve_subset(problem, current)
    total = loop_solves + 1
    if not math.isfinite(final.cost):
        trace.append(TraceRow(rounds + 1, "-", INF, "final-infeasible"))
        return SelectionResult(
            "lpe", "infeasible", SensorSubset(()), INF, {},
            loop_solves, total, tuple(trace),
        )
    trace.append(TraceRow(rounds + 1, "+".join(map(str, current)), final.cost, "final"))
    return SelectionResult(
        "lpe", "feasible", SensorSubset(current), final.cost, final.precisions,
        loop_solves, total, tuple(trace),
    )


def rlm(problem: SelectionProblem, i_max: int = 50, eps_rlm: float = None) -> SelectionResult:
    """Reweighted l1 minimization.

    Solves on the full set with weights starting at one, keeps the sensors
    whose precision exceeds the threshold, and updates the weights to
    ``1/(eps + p)``.  When unset, the threshold is 1e-3 times the largest
    precision of the first solve.  Succeeds as soon as at most ``k_s``
    sensors survive; the surviving subset is then priced with the caller's
    original weights.
    """
    if i_max < 1:
        raise InvalidArgument("i_max must be >= 1")
    if eps_rlm is not None and eps_rlm <= 0:
        raise InvalidArgument("eps_rlm must be positive")
    full = tuple(range(problem.n_s))
    weights = np.ones(problem.n_s)
    trace = []
    eps = eps_rlm
    for it in range(1, i_max + 1):
        ev = _solve_subset(problem, full, rho=weights)
        if not math.isfinite(ev.cost):
            trace.append(TraceRow(it, "-", INF, "infeasible"))
            return SelectionResult(
                "rlm", "infeasible", SensorSubset(()), INF, {},
                it, it, tuple(trace),
            )
        p = np.array([ev.precisions[i] for i in full])
        if eps is None:
            eps = 1e-3 * float(np.max(p)) if np.max(p) > 0 else 1.0
        survivors = tuple(i for i in full if p[i] > eps)
        trace.append(TraceRow(it, "+".join(map(str, survivors)) or "-", ev.cost,
                              f"survivors={len(survivors)}"))
        if len(survivors) <= problem.k_s:
            final = _solve_subset(problem, survivors)
            if not math.isfinite(final.cost):
                trace.append(TraceRow(it, "-", INF, "final-infeasible"))
                return SelectionResult(
                    "rlm", "infeasible", SensorSubset(()), INF, {},
                    it, it + 1, tuple(trace),
                )
            return SelectionResult(
                "rlm", "feasible", SensorSubset(survivors), final.cost,
                final.precisions, it, it + 1, tuple(trace),
            )
        weights = 1.0 / (eps + p)
    trace.append(TraceRow(i_max, "-", INF, "iteration-limit"))
    return SelectionResult(
        "rlm", "infeasible", SensorSubset(()), INF, {}, i_max, i_max, tuple(trace),
    )


def exhaustive(problem: SelectionProblem, budget: int = 10_000) -> SelectionResult:
    """Reference optimum over all subsets of size exactly ``k_s``.

    Monotonicity of ``f`` makes some size-``k_s`` subset optimal among all
    subsets of size at most ``k_s``.  Ties resolve to the lexicographically
    smallest subset.  Refuses (``BudgetError``) when the binomial count
    exceeds ``budget``.
    """
    count = math.comb(problem.n_s, problem.k_s)
    if count > budget:
        raise BudgetError(
            f"{count} subsets exceed the enumeration budget of {budget}"
        )
    combos = list(itertools.combinations(range(problem.n_s), problem.k_s))
    evals = _solve_many(problem, combos)
    trace = []
    best_ids, best = None, None
    for ids, ev in zip(combos, evals):
        trace.append(TraceRow(0, "+".join(map(str, ids)), ev.cost, "enumerate"))
        if best is None or ev.cost < best.cost:
            best_ids, best = ids, ev
    if not math.isfinite(best.cost):
        return SelectionResult(
            "exhaustive", "infeasible", SensorSubset(()), INF, {},
            count, count, tuple(trace),
        )
    return SelectionResult(
        "exhaustive", "feasible", SensorSubset(best_ids), best.cost,
        best.precisions, count, count, tuple(trace),
    )


def write_selection_csv(result: SelectionResult, path) -> None:
    """Write the per-round trace: round, candidate_id, cost, action."""
    with open(path, "w") as fh:
        fh.write("round,candidate_id,cost,action\n")
        for row in result.trace:
            fh.write(f"{row.round},{row.candidate},{row.cost:.12g},{row.action}\n")
