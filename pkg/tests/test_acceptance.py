"""Acceptance suite: one test per exit criterion, one PASS line each.

Criteria at a glance (tolerances pinned in the asserts):

1. Four-state example regression: the five tabulated subset costs within
   3 percent, plus the non-sub/supermodularity witnesses.
2. Certification soundness on 50 random desk-scale plants across all four
   framework/estimator combinations.
3. Exhaustive-vs-greedy agreement on 10 random six-sensor systems.
4. Kernel properties against independent oracles.
5. Monotonicity and subadditivity of the subset cost function.
6. Exact evaluation-count bookkeeping (68 / 8 at n_s=12, k_s=4).
7. Log-log scaling slope of the solver on the spring-mass family.
8. Qualitative echo of the expected algorithm ranking on a 20-system
   ensemble (greedy never infeasible, greedy error below least-precise
   error).

The heavy ensemble runs (2, 3, 8) use explicitly stated solver budgets;
everything else runs at library defaults.
"""

import math
import time

import numpy as np
import pytest

from precis import admm, bench, estimator, linalg, model, selection
from precis.admm import AdmmConfig
from precis.errors import InfeasibleDesign
from precis.estimator import DesignSpec, ErrorSystem
from precis.model import SensorSubset


def _report(criterion, name, passed):
    print(f"ACCEPTANCE {criterion} ({name}): {'PASS' if passed else 'FAIL'}")
    assert passed


def _open_loop_norm(plant, framework):
    sys = ErrorSystem(plant.A, plant.B_d, plant.C_z)
    return estimator.hinf_norm(sys) if framework == "hinf" else estimator.h2_norm(sys)


# -------------------------------------------------------------- criterion 1


def test_acceptance_1_example_regression(tmp_path):
    t0 = time.time()
    report = bench.run_example1_regression()
    elapsed = time.time() - t0
    for ids, expected, actual, ok in report.rows:
        print(f"  f({set(i + 1 for i in ids)}) = {actual:.4f} vs {expected} "
              f"{'ok' if ok else 'FAIL'}")
    print(f"  submodularity violated: {report.submodularity_violated}, "
          f"supermodularity violated: {report.supermodularity_violated}, "
          f"{elapsed:.0f}s")
    report.to_csv(tmp_path / "example1.csv")
    lines = (tmp_path / "example1.csv").read_text().splitlines()
    assert sum(1 for l in lines if l.endswith("PASS")) >= 5
    _report(1, "example regression", report.passed and elapsed <= 60.0)


# -------------------------------------------------------------- criterion 2


def test_acceptance_2_certification_soundness():
    t0 = time.time()
    combos = [("hinf", "observer"), ("h2", "observer"),
              ("hinf", "filter"), ("h2", "filter")]
    rng = np.random.default_rng(123)
    certified = 0
    infeasible = 0
    for i in range(50):
        framework, kind = combos[i % 4]
        n_x = int(rng.integers(2, 5))
        n_d = int(rng.integers(1, 3))
        n_s = int(rng.integers(2, 5))
        plant, catalog = model.random_plant(1000 + i, n_x, n_d, n_s)
        gamma = _open_loop_norm(plant, framework) * (1.15 if i % 2 == 0 else 0.7)
        spec = DesignSpec(framework, kind, gamma, catalog.full_subset())
        try:
            result = estimator.design(plant, catalog, spec)
        except InfeasibleDesign:
            infeasible += 1
            continue
        assert result.certified
        # Independent recomputation from the recovered matrices.
        meas = model.assemble_measurement(plant, catalog, spec.subset)
        mats = ({"L": result.gain} if kind == "observer" else
                {"A_F": result.filter_A, "B_F": result.filter_B,
                 "C_F": result.filter_C})
        sys = estimator.error_system(plant, meas, mats, result.p)
        norm = (estimator.hinf_norm(sys) if framework == "hinf"
                else estimator.h2_norm(sys))
        assert norm <= gamma * (1 + 1e-6), (
            f"plant {i} {framework}/{kind}: norm {norm} > gamma {gamma}"
        )
        certified += 1
    elapsed = time.time() - t0
    print(f"  {certified} certified, {infeasible} infeasible of 50 "
          f"({elapsed:.0f}s)")
    _report(2, "certification soundness",
            certified >= 25 and elapsed <= 600.0)


# -------------------------------------------------------------- criterion 3


def test_acceptance_3_oracle_equivalence():
    matches = 0
    comparable = 0
    for i in range(10):
        plant, catalog = model.random_plant(2000 + i, 4, 2, 6)
        gamma = 0.6 * _open_loop_norm(plant, "hinf")
        problem = selection.SelectionProblem(
            plant, catalog, 3, "hinf", "observer", gamma, jobs=2
        )
        best = selection.exhaustive(problem)
        greedy = selection.gse(problem)
        if best.feasible and greedy.feasible:
            assert best.cost <= greedy.cost * 1.05, (
                f"system {i}: exhaustive {best.cost} > gse {greedy.cost} * 1.05"
            )
            comparable += 1
            if tuple(best.subset) == tuple(greedy.subset):
                matches += 1
        elif best.feasible and not greedy.feasible:
            pytest.fail(f"system {i}: greedy missed a feasible subset")
        print(f"  system {i}: exhaustive {best.cost:.4g} {tuple(best.subset)}, "
              f"gse {greedy.cost:.4g} {tuple(greedy.subset)}")
    _report(3, "oracle equivalence",
            comparable >= 6 and matches * 2 > comparable)


# -------------------------------------------------------------- criterion 4


def test_acceptance_4_kernel_properties():
    rng = np.random.default_rng(7)
    ok = True

    # vec/kron identity
    for _ in range(10):
        a, b, c = (rng.standard_normal((3, 3)) for _ in range(3))
        ok &= np.allclose(linalg.vec(a @ b @ c),
                          linalg.kron(c.T, a) @ linalg.vec(b), atol=1e-12)

    # commutation matrix
    y = rng.standard_normal((4, 3))
    ok &= np.allclose(linalg.commutation_matrix(4, 3) @ linalg.vec(y),
                      linalg.vec(y.T))

    # reduced-vec round trip
    rv = linalg.ReducedVecMap(5)
    x = rng.standard_normal((5, 5))
    x = x + x.T
    ok &= np.array_equal(rv.unvec_r(rv.vec_r(x)), x)

    # PSD projection optimality against sampled clamped spectra
    p = rng.standard_normal((4, 4))
    p = p + p.T
    proj = linalg.psd_project(p, 1e-6)
    dist = np.linalg.norm(p - proj)
    for _ in range(200):
        q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
        lam = np.maximum(1e-6, rng.standard_normal(4) * 2)
        ok &= np.linalg.norm(p - (q * lam) @ q.T) >= dist - 1e-9

    # precision update against a golden-section line search
    plant, catalog = model.example1_plant()
    meas = model.assemble_measurement(plant, catalog, catalog.full_subset())
    from precis.lmi import build_hinf_observer

    prog = build_hinf_observer(plant, meas, np.ones(4), 0.5)
    config = AdmmConfig(mu=2.5)
    state = admm.init_state(prog, config)
    off = prog.blocks[0].prec_offset
    idx = np.arange(4) + off
    state.H[0][:] = 0.0
    state.U[0][:] = 0.0
    state.H[0][idx, idx] = rng.standard_normal(4) * 2
    p_new = admm.p_update(state, prog, config)
    for i in range(4):
        c = state.H[0][off + i, off + i]
        grid = np.linspace(1e-6, 30.0, 200_001)
        costs = grid + 0.5 * 2.5 * (0.5 * grid - c) ** 2
        ok &= abs(p_new[i] - grid[np.argmin(costs)]) <= 1e-3

    # Lyapunov residual
    a = rng.standard_normal((5, 5))
    a = a - (np.max(np.linalg.eigvals(a).real) + 0.6) * np.eye(5)
    w = rng.standard_normal((5, 5))
    w = w @ w.T
    sol = linalg.lyap_solve(a, w)
    ok &= np.linalg.norm(a @ sol + sol @ a.T + w) <= 1e-8 * np.linalg.norm(w)

    # Hinf bisection against a 1e4-point frequency sweep
    for _ in range(3):
        a = rng.standard_normal((4, 4))
        a = a - (np.max(np.linalg.eigvals(a).real) + 0.5) * np.eye(4)
        sys = ErrorSystem(a, rng.standard_normal((4, 2)), rng.standard_normal((3, 4)))
        ws = np.logspace(-3, 3, 10_000)
        eigs = np.linalg.eigvals(a)
        ws = np.unique(np.concatenate([ws, np.abs(eigs.imag[eigs.imag != 0])]))
        peak = max(
            np.linalg.svd(sys.C @ np.linalg.solve(1j * w * np.eye(4) - sys.A, sys.B),
                          compute_uv=False)[0]
            for w in ws
        )
        ok &= abs(estimator.hinf_norm(sys, tol=1e-8) - peak) <= 1e-3 * peak

    _report(4, "kernel properties", bool(ok))


# -------------------------------------------------------------- criterion 5


def test_acceptance_5_monotone_subadditive():
    rng = np.random.default_rng(31)
    tol = 0.05
    checked = 0
    for sys_idx in range(4):
        plant, catalog = model.random_plant(3000 + sys_idx, 3, 2, 5)
        gamma = 0.65 * _open_loop_norm(plant, "hinf")
        problem = selection.SelectionProblem(
            plant, catalog, 5, "hinf", "observer", gamma
        )
        cache = {}

        def f(ids):
            key = tuple(sorted(ids))
            if key not in cache:
                cache[key] = selection.eval_f(problem, SensorSubset(key))
            return cache[key]

        for _ in range(5):
            q = tuple(sorted(rng.choice(5, size=2, replace=False).tolist()))
            extra = [s for s in range(5) if s not in q]
            r = tuple(sorted(q + tuple(
                rng.choice(extra, size=2, replace=False).tolist()
            )))
            fq, fr = f(q), f(r)
            if math.isfinite(fq):
                assert fr <= fq * (1 + tol), f"monotonicity: f{r}={fr} > f{q}={fq}"
            union = tuple(sorted(set(q) | set(r)))
            fu = f(union)
            if math.isfinite(fq) and math.isfinite(fr):
                assert fu <= fq + fr + tol * min(fq, fr), "subadditivity"
            checked += 1
    _report(5, "monotone and subadditive", checked == 20)


# -------------------------------------------------------------- criterion 6


def test_acceptance_6_bookkeeping():
    # Easy instance (generous bound) so the 68 + 8 solves are quick; the
    # counters themselves are what this criterion checks.
    plant, catalog = model.random_plant(77, 3, 1, 12)
    gamma = 2.0 * _open_loop_norm(plant, "hinf")
    problem = selection.SelectionProblem(
        plant, catalog, 4, "hinf", "observer", gamma, jobs=2
    )
    greedy = selection.gse(problem)
    least = selection.lpe(problem)
    n_s, k_s = 12, 4
    expected_gse = n_s * (n_s + 1) // 2 - k_s * (k_s + 1) // 2
    print(f"  gse evaluations {greedy.evaluation_count} (expect {expected_gse}), "
          f"lpe loop {least.evaluation_count} (expect {n_s - k_s})")
    _report(6, "evaluation-count bookkeeping",
            greedy.evaluation_count == 68 == expected_gse
            and least.evaluation_count == 8 == n_s - k_s)


# -------------------------------------------------------------- criterion 7


def test_acceptance_7_scaling_shape():
    table = bench.run_scaling([2, 4, 8], gamma=0.5, repetitions=3)
    for m, n_x, seconds, _ in table.rows:
        print(f"  masses={m} n_x={n_x}: median {seconds:.3g}s")
    print(f"  log-log slope {table.slope:.3g}")
    times = [r[2] for r in table.rows]
    _report(7, "scaling shape", table.slope <= 4.0 and times == sorted(times))


# -------------------------------------------------------------- criterion 8


def test_acceptance_8_comparison_echo():
    # Solver budget stated explicitly: the gamma = 0.1 ensemble is made of
    # deliberately tight, near-degenerate programs, and the echo being
    # checked is qualitative (greedy reliability and ordering vs the
    # least-precise heuristic), not absolute accuracy.
    spec = bench.EnsembleSpec(count=20, seed=0)
    cfg = AdmmConfig(max_iter=2000, eps_abs=1e-4, eps_rel=1e-4)
    t0 = time.time()
    report = bench.run_comparison(spec, jobs=2, admm_config=cfg,
                                  preview_every=1000)
    elapsed = time.time() - t0
    summary = report.summary()
    for name, s in summary.items():
        print(f"  {name}: exact {s['exact']}/20, infeasible {s['infeasible']}, "
              f"mean%err {s['mean_pct_error']:.3g}")
    print(f"  ({elapsed:.0f}s)")
    # the enumerated reference can never lose to greedy under the shared
    # evaluator
    for row in report.rows:
        if math.isfinite(row.reference_cost) and math.isfinite(row.costs["gse"]):
            assert row.reference_cost <= row.costs["gse"] * (1 + 1e-9)
    gse_ok = summary["gse"]["infeasible"] == 0
    errs_ok = (math.isnan(summary["lpe"]["mean_pct_error"])
               or summary["gse"]["mean_pct_error"] <= summary["lpe"]["mean_pct_error"])
    _report(8, "comparison echo", gse_ok and errs_ok)
