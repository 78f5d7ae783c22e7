"""Selection-layer tests on small plants (fast solves)."""

import math

import numpy as np
import pytest

from precis import estimator, model, selection
from precis.admm import AdmmConfig
from precis.errors import BudgetError, InvalidArgument
from precis.model import SensorCatalog, SensorDef, SensorSubset


def micro_problem(k_s=2, gamma=None, jobs=1):
    """Two-state plant, three sensors, mildly binding bound."""
    plant = model.LtiPlant(
        np.array([[-0.5, 1.0], [0.0, -0.7]]),
        np.array([[1.0], [0.5]]),
        np.eye(2),
    )
    catalog = SensorCatalog(
        (
            SensorDef(0, np.array([1.0, 0.0]), np.array([0.0])),
            SensorDef(1, np.array([0.0, 1.0]), np.array([0.0])),
            SensorDef(2, np.array([1.0, 1.0]), np.array([0.0])),
        )
    )
    if gamma is None:
        open_loop = estimator.hinf_norm(
            estimator.ErrorSystem(plant.A, plant.B_d, plant.C_z)
        )
        gamma = 0.6 * open_loop
    return selection.SelectionProblem(
        plant, catalog, k_s, "hinf", "observer", gamma, jobs=jobs
    )


def undetectable_problem(k_s=1):
    """Sensor 0 cannot see the unstable mode; sensor 1 can."""
    plant = model.LtiPlant(np.diag([1.0, -1.0]), np.eye(2), np.eye(2))
    catalog = SensorCatalog(
        (
            SensorDef(0, np.array([0.0, 1.0]), np.zeros(2)),
            SensorDef(1, np.array([1.0, 0.0]), np.zeros(2)),
        )
    )
    return selection.SelectionProblem(
        plant, catalog, k_s, "hinf", "observer", 50.0
    )


def test_eval_f_empty_subset_is_infinite():
    problem = micro_problem()
    assert eval_f_inf(problem, ())


def eval_f_inf(problem, ids):
    return math.isinf(selection.eval_f(problem, SensorSubset(ids)))


def test_eval_f_and_eval_h_agree():
    problem = micro_problem()
    subset = SensorSubset((0, 1))
    f = selection.eval_f(problem, subset)
    h = selection.eval_h(problem, subset)
    assert set(h) == {0, 1}
    assert all(v >= 1e-6 for v in h.values())
    # same deterministic solve underneath: exact agreement
    weights = problem.catalog.weights
    assert f == sum(weights[i] * h[i] for i in subset)


def test_eval_h_infeasible_marks_every_sensor():
    problem = undetectable_problem()
    h = selection.eval_h(problem, SensorSubset((0,)))
    assert h == {0: float("inf")}


def test_gse_vacuous_when_k_equals_catalog():
    problem = micro_problem(k_s=3)
    result = selection.gse(problem)
    assert result.feasible
    assert tuple(result.subset) == (0, 1, 2)
    assert result.evaluation_count == 0
    assert result.total_solves == 1
    assert math.isfinite(result.cost)


def test_gse_evaluation_count_formula():
    problem = micro_problem(k_s=1)
    result = selection.gse(problem)
    n_s, k_s = 3, 1
    assert result.evaluation_count == n_s * (n_s + 1) // 2 - k_s * (k_s + 1) // 2
    assert len(result.subset) == 1
    assert result.feasible


def test_gse_steps_around_infeasible_candidates():
    problem = undetectable_problem(k_s=1)
    result = selection.gse(problem)
    assert result.feasible
    assert tuple(result.subset) == (1,)


def test_gse_all_infeasible_round_returns_empty():
    # Both single-sensor subsets fail: sensor 1 also blind to the unstable
    # mode makes the final round all-infeasible.
    plant = model.LtiPlant(np.diag([1.0, -1.0]), np.eye(2), np.eye(2))
    catalog = SensorCatalog(
        (
            SensorDef(0, np.array([0.0, 1.0]), np.zeros(2)),
            SensorDef(1, np.array([0.0, 2.0]), np.zeros(2)),
        )
    )
    problem = selection.SelectionProblem(plant, catalog, 1, "hinf", "observer", 50.0)
    result = selection.gse(problem)
    assert not result.feasible
    assert len(result.subset) == 0
    assert math.isinf(result.cost)


def test_lpe_counts_and_final_pass():
    problem = micro_problem(k_s=1)
    result = selection.lpe(problem)
    assert result.evaluation_count == 2  # n_s - k_s
    assert result.total_solves == 3
    assert result.feasible
    assert len(result.subset) == 1


def test_lpe_vacuous():
    problem = micro_problem(k_s=3)
    result = selection.lpe(problem)
    assert result.feasible
    assert tuple(result.subset) == (0, 1, 2)
    assert result.evaluation_count == 0


def test_rlm_immediate_success_when_k_covers_survivors():
    problem = micro_problem(k_s=3)
    result = selection.rlm(problem, i_max=1)
    assert result.feasible
    assert result.evaluation_count == 1


def test_rlm_iteration_limit_reports_infeasible():
    # k_s = 1 but the bound needs at least two sensors at this gamma, so
    # the survivor set never shrinks enough.
    problem = micro_problem(k_s=1, gamma=None)
    result = selection.rlm(problem, i_max=2, eps_rlm=1e-9)
    assert not result.feasible
    assert result.evaluation_count == 2
    assert math.isinf(result.cost)


def test_rlm_validates_arguments():
    problem = micro_problem()
    with pytest.raises(InvalidArgument):
        selection.rlm(problem, i_max=0)
    with pytest.raises(InvalidArgument):
        selection.rlm(problem, eps_rlm=-1.0)


def test_exhaustive_single_subset():
    problem = micro_problem(k_s=3)
    result = selection.exhaustive(problem)
    assert result.evaluation_count == 1
    assert tuple(result.subset) == (0, 1, 2)


def test_exhaustive_budget():
    problem = micro_problem(k_s=2)
    with pytest.raises(BudgetError):
        selection.exhaustive(problem, budget=2)


def test_exhaustive_not_worse_than_gse():
    problem = micro_problem(k_s=1)
    best = selection.exhaustive(problem)
    greedy = selection.gse(problem)
    assert best.cost <= greedy.cost * (1 + 1e-9)


def test_exhaustive_lexicographic_tie_break():
    # Two identical sensors: subsets {0} and {1} build the same program,
    # hence bit-identical costs; the tie must resolve to {0}.
    plant = model.LtiPlant(
        np.array([[-1.0, 0.2], [0.0, -0.8]]), np.array([[1.0], [1.0]]), np.eye(2)
    )
    catalog = SensorCatalog(
        (
            SensorDef(0, np.array([1.0, 1.0]), np.array([0.0])),
            SensorDef(1, np.array([1.0, 1.0]), np.array([0.0])),
        )
    )
    problem = selection.SelectionProblem(plant, catalog, 1, "hinf", "observer", 5.0)
    result = selection.exhaustive(problem)
    assert tuple(result.subset) == (0,)


def test_parallel_gse_matches_serial():
    serial = selection.gse(micro_problem(k_s=1, jobs=1))
    parallel = selection.gse(micro_problem(k_s=1, jobs=2))
    assert tuple(serial.subset) == tuple(parallel.subset)
    assert serial.cost == parallel.cost
    assert serial.evaluation_count == parallel.evaluation_count


def test_monotone_and_subadditive_on_micro():
    problem = micro_problem(k_s=2)
    f01 = selection.eval_f(problem, SensorSubset((0, 1)))
    f012 = selection.eval_f(problem, SensorSubset((0, 1, 2)))
    f2 = selection.eval_f(problem, SensorSubset((2,)))
    tol = 0.05
    assert f012 <= f01 * (1 + tol)
    if math.isfinite(f2):
        assert f012 <= f01 + f2 + tol * min(f01, f2)


@pytest.fixture(scope="module")
def ex1_problem():
    plant, catalog = model.example1_plant()

    def make(k_s):
        return selection.SelectionProblem(
            plant, catalog, k_s, "hinf", "observer", 0.5
        )

    return make


def test_gse_on_known_four_state_example(ex1_problem):
    # Dropping the fourth sensor leaves the cheapest three-sensor set
    # (cost ~18.84 vs ~22.52 for the other removals).
    result = selection.gse(ex1_problem(3))
    assert tuple(result.subset) == (0, 1, 2)
    assert result.cost == pytest.approx(18.84, rel=0.03)
    assert result.evaluation_count == 4


def test_exhaustive_on_known_four_state_example(ex1_problem):
    # Two of the six pairs tie at the optimum ~22.52; the lexicographically
    # smaller pair wins.
    result = selection.exhaustive(ex1_problem(2))
    assert result.cost == pytest.approx(22.52, rel=0.03)
    assert tuple(result.subset) in ((0, 3), (1, 2))
    assert result.evaluation_count == 6


def test_selection_csv(tmp_path):
    problem = micro_problem(k_s=2)
    result = selection.lpe(problem)
    path = tmp_path / "trace.csv"
    selection.write_selection_csv(result, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "round,candidate_id,cost,action"
    assert len(lines) == len(result.trace) + 1


def test_problem_validation():
    with pytest.raises(InvalidArgument):
        micro_problem(k_s=9)
