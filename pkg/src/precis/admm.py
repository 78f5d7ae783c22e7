"""Operator-splitting solver for the affine LMI programs.

Each negative-definite block constraint ``M_b(p, vars) < 0`` is slacked as
``M_b + H_b = 0`` with ``H_b > 0``.  The scaled augmented Lagrangian

    L = rho @ p + (mu/2) * sum_b ||M_b + H_b + U_b||_F**2

is minimized one variable at a time per sweep: the precision update has a
closed soft-threshold form, each matrix variable solves a linear
least-squares problem over its vectorization (reduced to the free entries
for symmetric variables), the slack update is an eigenvalue clamp, and the
scaled duals accumulate the residuals.

SPD variables need their least-squares step constrained to the cone.  Two
modes exist: ``inner-admm`` (default) runs a small inner splitting loop
that solves the constrained subproblem essentially exactly (warm-started
across sweeps, so a handful of inner iterations suffice), while
``projected-least-squares`` projects the unconstrained symmetric solution
onto the cone.  The single projection is cheaper per sweep but is an
approximation that can stall or drift on problems whose optimal ``X`` is
nearly singular; the inner loop is the dependable choice.

Least-squares coefficient matrices depend only on the plant data, so their
pseudo-inverses are computed once per solve and reused every iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import InvalidArgument, ProgramError
from .lmi import SPD, SYMMETRIC, AffineLmiProgram, evaluate_block

__all__ = [
    "AdmmConfig",
    "AdmmState",
    "AdmmResult",
    "solve",
    "init_state",
    "p_update",
    "matrix_var_update",
    "slack_update",
    "dual_update",
    "residuals",
    "inner_psd_lstsq",
    "write_trace_csv",
]

PROJECTED_LS = "projected-least-squares"
INNER_ADMM = "inner-admm"

#: Primal residual must exceed this multiple of its tolerance (while
#: stagnant) before a run is declared infeasible.
INFEASIBLE_FACTOR = 1e3


@dataclass(frozen=True)
class AdmmConfig:
    """Solver knobs.

    ``mu`` left at None picks ``5 / gamma**2`` per program (clamped to
    [5, 5e4]): the precision sub-block and the optimal precisions both
    scale with the performance bound, and the penalty has to keep up with
    them for tightly specified problems.  This is a static, data-dependent
    default fixed before the first iteration, not a varying-penalty
    scheme.

    ``stall_window``, when set, lets a run that is clearly stuck (primal
    residual far above tolerance and not decreasing over that many
    iterations) exit before ``max_iter``; by default runs go the full
    distance before infeasibility is declared.
    """

    mu: float = None
    eps_abs: float = 1e-5
    eps_rel: float = 1e-5
    max_iter: int = 5000
    eps_p: float = 1e-6
    eps_slack: float = 1e-8
    x_update_mode: str = INNER_ADMM
    inner_mu: float = 1.0
    inner_max_iter: int = 2
    inner_tol: float = 1e-6
    stall_window: int = None

    def __post_init__(self):
        checked = [self.eps_abs, self.eps_rel, self.eps_p, self.eps_slack,
                   self.inner_mu, self.inner_tol]
        if self.mu is not None:
            checked.append(self.mu)
        if min(checked) <= 0:
            raise InvalidArgument("ADMM parameters must be positive")
        if self.max_iter < 1 or self.inner_max_iter < 1:
            raise InvalidArgument("iteration limits must be >= 1")
        if self.x_update_mode not in (PROJECTED_LS, INNER_ADMM):
            raise InvalidArgument(f"unknown x_update_mode {self.x_update_mode!r}")
        if self.stall_window is not None and self.stall_window < 10:
            raise InvalidArgument("stall_window must be >= 10 iterations")

    def penalty_for(self, program: AffineLmiProgram) -> float:
        """Effective penalty: explicit ``mu`` or the gamma-scaled default."""
        if self.mu is not None:
            return self.mu
        return min(max(5.0 / program.gamma**2, 5.0), 5e4)


def _clamp_psd(sym: np.ndarray, eps: float) -> np.ndarray:
    """Eigenvalue clamp for matrices that are symmetric by construction."""
    w, r = np.linalg.eigh(sym)
    if w[0] >= eps:
        return sym
    out = (r * np.maximum(w, eps)) @ r.T
    return 0.5 * (out + out.T)


class _Term:
    """Precompiled linear term: identity factors are skipped at run time."""

    __slots__ = ("var", "left", "right", "transpose", "symmetrize")

    def __init__(self, term):
        self.var = term.var
        self.left = None if _is_identity(term.left) else term.left
        self.right = None if _is_identity(term.right) else term.right
        self.transpose = term.transpose
        self.symmetrize = term.symmetrize

    def value(self, variables):
        v = variables[self.var]
        if self.transpose:
            v = v.T
        if self.left is not None:
            v = self.left @ v
        if self.right is not None:
            v = v @ self.right
        if self.symmetrize:
            v = v + v.T
        return v


def _is_identity(m) -> bool:
    return m.shape[0] == m.shape[1] and np.array_equal(m, np.eye(m.shape[0]))


class _BlockEval:
    """Precompiled evaluator for one block."""

    __slots__ = ("const", "places", "prec_coeff", "prec_idx")

    def __init__(self, block):
        self.const = block.constant
        offs = block.offsets
        sizes = block.cell_sizes
        self.places = []
        for t in block.terms:
            rs = slice(offs[t.row_cell], offs[t.row_cell] + sizes[t.row_cell])
            cs = slice(offs[t.col_cell], offs[t.col_cell] + sizes[t.col_cell])
            self.places.append((_Term(t), rs, cs, t.row_cell != t.col_cell))
        self.prec_coeff = block.prec_coeff
        self.prec_idx = None  # filled by _Compiled once n_p is known

    def evaluate(self, variables, p):
        m = self.const.copy()
        for term, rs, cs, mirror in self.places:
            val = term.value(variables)
            m[rs, cs] += val
            if mirror:
                m[cs, rs] += val.T
        if self.prec_idx is not None:
            m[self.prec_idx, self.prec_idx] -= self.prec_coeff * p
        return m


class _CellRef:
    """One grid cell of one block, as seen by a variable's update."""

    __slots__ = ("block", "rs", "cs", "weight", "const", "others", "has_prec", "count")

    def __init__(self, block_idx, rs, cs, weight, const, others, has_prec, count):
        self.block = block_idx
        self.rs = rs
        self.cs = cs
        self.weight = weight
        self.const = const
        self.others = tuple(_Term(t) for t in others)
        self.has_prec = has_prec
        self.count = count


class _VarPlan:
    """Cached least-squares data for one matrix variable."""

    __slots__ = ("spec", "cells", "rows_total", "kmat", "pinv", "rvmap", "_inner")

    def __init__(self, spec, cells, rows_total, kmat, pinv_, rvmap):
        self.spec = spec
        self.cells = cells
        self.rows_total = rows_total
        self.kmat = kmat
        self.pinv = pinv_
        self.rvmap = rvmap
        self._inner = {}

    def inner_pinv(self, inner_mu: float) -> np.ndarray:
        if inner_mu not in self._inner:
            scale = math.sqrt(inner_mu / 2.0)
            stacked = np.vstack([self.kmat, scale * self.rvmap.duplication()])
            self._inner[inner_mu] = linalg.pinv(stacked)
        return self._inner[inner_mu]


class _Compiled:
    """Per-program precomputation shared by all update steps."""

    def __init__(self, program: AffineLmiProgram):
        if len(program.variables) == 0:
            raise ProgramError("program has no matrix variables")
        self.program = program
        self.total_entries = sum(b.size**2 for b in program.blocks)
        self.sqrt_entries = math.sqrt(self.total_entries)
        self.prec_index, prec_block = program.precision_block()
        self.prec_coeff = prec_block.prec_coeff
        off = prec_block.prec_offset
        self.prec_slice = slice(off, off + program.n_p)
        cell = prec_block.prec_cell
        self.prec_const = prec_block.constant[self.prec_slice, self.prec_slice]
        self.prec_terms = tuple(
            _Term(t) for t in prec_block.terms
            if t.row_cell == cell and t.col_cell == cell
        )
        self.evaluators = []
        for b in program.blocks:
            ev = _BlockEval(b)
            if b.prec_coeff is not None:
                ev.prec_idx = np.arange(program.n_p) + b.prec_offset
            self.evaluators.append(ev)
        self.plans = {}
        for spec in program.variables:
            plan = self._build_plan(program, spec)
            if not plan.cells:
                raise ProgramError(f"variable {spec.name!r} appears in no block")
            self.plans[spec.name] = plan

    @staticmethod
    def _build_plan(program, spec):
        cells = []
        blocks_k = []
        rows_total = 0
        for bi, block in enumerate(program.blocks):
            offs = block.offsets
            sizes = block.cell_sizes
            by_cell = {}
            for t in block.terms:
                by_cell.setdefault((t.row_cell, t.col_cell), []).append(t)
            for (ci, cj) in sorted(by_cell):
                own = [t for t in by_cell[(ci, cj)] if t.var == spec.name]
                if not own:
                    continue
                others = tuple(t for t in by_cell[(ci, cj)] if t.var != spec.name)
                nr, nc = sizes[ci], sizes[cj]
                weight = 1.0 if ci == cj else math.sqrt(2.0)
                k_cell = np.zeros((nr * nc, spec.size))
                for t in own:
                    w = linalg.kron(t.right.T, t.left)
                    if t.transpose:
                        w = w @ linalg.commutation_matrix(spec.rows, spec.cols)
                    if t.symmetrize:
                        w = w + linalg.commutation_matrix(nr, nr) @ w
                    k_cell += w
                k_cell *= weight
                rs = slice(offs[ci], offs[ci] + nr)
                cs = slice(offs[cj], offs[cj] + nc)
                has_prec = (
                    block.prec_cell is not None and ci == cj == block.prec_cell
                )
                const = block.constant[rs, cs].copy()
                cells.append(
                    _CellRef(bi, rs, cs, weight, const, others, has_prec, nr * nc)
                )
                blocks_k.append(k_cell)
                rows_total += nr * nc
        if not cells:
            return _VarPlan(spec, [], 0, None, None, None)
        kmat = np.vstack(blocks_k)
        rvmap = None
        if spec.structure in (SYMMETRIC, SPD):
            rvmap = linalg.ReducedVecMap(spec.rows)
            kmat = rvmap.reduced_columns(kmat)
        return _VarPlan(spec, cells, rows_total, kmat, linalg.pinv(kmat), rvmap)


@dataclass
class AdmmState:
    """Mutable iterates of one solve.

    ``inner_state`` holds the warm-started inner-loop iterates (``Z``,
    ``U``) per SPD variable; clearing it falls back to a cold start.
    """

    p: np.ndarray
    variables: dict
    H: list
    U: list
    block_values: list
    iteration: int = 0
    inner_state: dict = None
    _compiled: _Compiled = None

    def compiled(self, program: AffineLmiProgram) -> "_Compiled":
        if self._compiled is None or self._compiled.program is not program:
            self._compiled = _Compiled(program)
        return self._compiled


@dataclass(frozen=True)
class AdmmResult:
    """Outcome of :func:`solve`."""

    status: str
    p: np.ndarray
    variables: dict
    objective: float
    iterations: int
    primal_residual: float
    dual_residual: float
    eps_pri: float
    eps_dual: float
    history: tuple


def init_state(program: AffineLmiProgram, config: AdmmConfig = None) -> AdmmState:
    """Deterministic initial iterates: ``p = 1``, SPD/symmetric variables
    at identity, general variables at zero, slacks projected feasible,
    duals zero."""
    config = config or AdmmConfig()
    compiled = _Compiled(program)
    variables = {}
    for spec in program.variables:
        if spec.structure in (SPD, SYMMETRIC):
            variables[spec.name] = np.eye(spec.rows)
        else:
            variables[spec.name] = np.zeros((spec.rows, spec.cols))
    p = np.ones(program.n_p)
    values = [evaluate_block(b, variables, p) for b in program.blocks]
    h = [_clamp_psd(-m, config.eps_slack) for m in values]
    u = [np.zeros((b.size, b.size)) for b in program.blocks]
    state = AdmmState(p, variables, h, u, values, inner_state={})
    state._compiled = compiled
    return state


def p_update(state: AdmmState, program: AffineLmiProgram, config: AdmmConfig) -> np.ndarray:
    """Closed-form precision update.

    With the precision sub-block contributing ``-c_p * diag(p)``, the
    minimizer of ``rho @ p + (mu/2) * || -c_p diag(p) + G ||_F**2`` over
    ``p >= eps_p`` is ``max(eps_p, S(diag(G)/c_p, rho/(mu*c_p**2)))`` with
    ``S`` the soft-threshold operator and ``G`` the rest of the cell plus
    slack and dual.
    """
    comp = state.compiled(program)
    g = comp.prec_const.copy()
    for t in comp.prec_terms:
        g = g + t.value(state.variables)
    g = g + state.H[comp.prec_index][comp.prec_slice, comp.prec_slice]
    g = g + state.U[comp.prec_index][comp.prec_slice, comp.prec_slice]
    c = np.diag(g)
    cp = comp.prec_coeff
    mu = config.penalty_for(program)
    shrunk = linalg.soft_threshold(c / cp, program.rho / (mu * cp**2))
    state.p = np.maximum(config.eps_p, shrunk)
    return state.p


def _cell_rhs(plan: _VarPlan, state: AdmmState, cp: float) -> np.ndarray:
    vbar = np.empty(plan.rows_total)
    pos = 0
    for cell in plan.cells:
        base = cell.const.copy()
        for t in cell.others:
            base += t.value(state.variables)
        if cell.has_prec:
            idx = np.arange(state.p.shape[0])
            base[idx, idx] -= cp * state.p
        base += state.H[cell.block][cell.rs, cell.cs]
        base += state.U[cell.block][cell.rs, cell.cs]
        vbar[pos : pos + cell.count] = cell.weight * base.ravel(order="F")
        pos += cell.count
    return vbar


def matrix_var_update(
    state: AdmmState, program: AffineLmiProgram, var_name: str, config: AdmmConfig
) -> np.ndarray:
    """Least-squares update of one matrix variable.

    Stacks the weighted, vectorized residuals of every cell the variable
    appears in and solves via the cached pseudo-inverse; symmetric
    variables are solved over their free entries, SPD ones additionally
    constrained to the cone (inner loop or projection, per the mode).
    """
    comp = state.compiled(program)
    if var_name not in comp.plans:
        raise ProgramError(f"variable {var_name!r} is not part of the program")
    plan = comp.plans[var_name]
    vbar = _cell_rhs(plan, state, comp.prec_coeff)
    spec = plan.spec
    if spec.structure == SPD and config.x_update_mode == INNER_ADMM:
        if state.inner_state is None:
            state.inner_state = {}
        warm = state.inner_state.get(var_name)
        value, warm = _inner_loop(
            plan.pinv, plan.inner_pinv(config.inner_mu), plan.rvmap, vbar,
            config, warm,
        )
        state.inner_state[var_name] = warm
    else:
        x = -(plan.pinv @ vbar)
        if plan.rvmap is not None:
            value = plan.rvmap.unvec_r(x)
        else:
            value = linalg.unvec(x, spec.rows, spec.cols)
        if spec.structure == SPD:
            value = _clamp_psd(value, config.eps_p)
    state.variables[var_name] = value
    return value


def slack_update(state: AdmmState, program: AffineLmiProgram, config: AdmmConfig) -> list:
    """Project ``-M_b - U_b`` onto the cone of matrices with eig >= eps.

    Also refreshes ``state.block_values`` with the blocks evaluated at the
    current iterates.
    """
    comp = state.compiled(program)
    state.block_values = [
        ev.evaluate(state.variables, state.p) for ev in comp.evaluators
    ]
    state.H = [
        _clamp_psd(-m - u, config.eps_slack)
        for m, u in zip(state.block_values, state.U)
    ]
    return state.H


def dual_update(state: AdmmState, program: AffineLmiProgram) -> list:
    """Scaled dual ascent ``U_b += M_b + H_b`` (uses stored block values)."""
    state.U = [
        u + m + h for u, m, h in zip(state.U, state.block_values, state.H)
    ]
    return state.U


def residuals(prev_h: list, state: AdmmState, mu: float = 1.0) -> tuple[float, float]:
    """Primal and dual residual norms between consecutive iterations.

    ``prev_h`` holds the slack blocks from the previous iteration; the
    primal residual is the stacked constraint violation and the dual
    residual is ``mu`` times the stacked slack change.
    """
    primal = math.sqrt(
        sum(float(np.sum((m + h) ** 2)) for m, h in zip(state.block_values, state.H))
    )
    dual = mu * math.sqrt(
        sum(float(np.sum((h - hp) ** 2)) for h, hp in zip(state.H, prev_h))
    )
    return primal, dual


def _inner_loop(pinv_plain, pinv_stacked, rvmap, vbar, config: AdmmConfig, warm=None):
    """SPD-constrained least squares by a small inner splitting loop.

    Alternates a symmetric least-squares step (proximity rows appended),
    a projection onto the PSD cone, and a dual update; returns the
    projected iterate (feasible by construction) plus the ``(Z, U)`` pair
    for warm-starting the next call.
    """
    scale = math.sqrt(config.inner_mu / 2.0)
    if warm is None:
        x_hat = rvmap.unvec_r(-(pinv_plain @ vbar))
        z_hat = _clamp_psd(x_hat, config.eps_p)
        u_hat = x_hat - z_hat
    else:
        z_hat, u_hat = warm
    for _ in range(config.inner_max_iter):
        rhs = np.concatenate([vbar, scale * linalg.vec(u_hat - z_hat)])
        x_hat = rvmap.unvec_r(-(pinv_stacked @ rhs))
        z_new = _clamp_psd(x_hat + u_hat, config.eps_p)
        u_hat = u_hat + x_hat - z_new
        diff = x_hat - z_new
        pr = math.sqrt(float(np.sum(diff * diff)))
        step = z_new - z_hat
        du = math.sqrt(float(np.sum(step * step)))
        z_hat = z_new
        if (
            pr <= config.inner_tol * max(1.0, math.sqrt(float(np.sum(x_hat * x_hat))))
            and du <= config.inner_tol * max(1.0, math.sqrt(float(np.sum(z_hat * z_hat))))
        ):
            break
    return z_hat, (z_hat, u_hat)


def inner_psd_lstsq(abar: np.ndarray, vbar: np.ndarray, n: int,
                    config: AdmmConfig = None) -> np.ndarray:
    """Solve ``min ||abar @ vec(X) + vbar||`` over ``X = X.T, X >= eps I``.

    ``abar`` may act on the full ``n*n`` vectorization or directly on the
    ``n*(n+1)/2`` free entries.
    """
    config = config or AdmmConfig()
    abar = np.atleast_2d(np.asarray(abar, dtype=float))
    vbar = np.asarray(vbar, dtype=float).reshape(-1)
    rvmap = linalg.ReducedVecMap(n)
    if abar.shape[1] == n * n:
        abar = rvmap.reduced_columns(abar)
    elif abar.shape[1] != rvmap.size:
        raise ProgramError(
            f"coefficient matrix has {abar.shape[1]} columns; expected "
            f"{n * n} or {rvmap.size}"
        )
    scale = math.sqrt(config.inner_mu / 2.0)
    stacked = np.vstack([abar, scale * rvmap.duplication()])
    out, _ = _inner_loop(linalg.pinv(abar), linalg.pinv(stacked), rvmap, vbar, config)
    return out


def solve(
    program: AffineLmiProgram,
    config: AdmmConfig = None,
    stop_check=None,
    stop_every: int = 0,
) -> AdmmResult:
    """Run the splitting iteration until the stopping criteria are met.

    One sweep updates ``p``, each matrix variable in declaration order, the
    slacks, and the duals.  Stops when both residuals fall below their
    combined absolute/relative tolerances; a run that exhausts
    ``max_iter`` with a large, stagnant primal residual is reported
    infeasible.

    ``stop_check``, called every ``stop_every`` iterations with the live
    state, may return True to stop early (status ``"stopped"``); callers
    use this to cut a run short once the iterates are already good enough
    for their purpose.
    """
    config = config or AdmmConfig()
    mu = config.penalty_for(program)
    state = init_state(program, config)
    comp = state.compiled(program)

    history = []
    primal_hist = []
    primal = dual = float("inf")
    eps_pri = eps_dual = 0.0
    status = None
    it = 0
    for it in range(1, config.max_iter + 1):
        state.iteration = it
        p_update(state, program, config)
        for spec in program.variables:
            matrix_var_update(state, program, spec.name, config)
        prev_h = state.H
        slack_update(state, program, config)
        dual_update(state, program)

        primal, dual = residuals(prev_h, state, mu)
        norm_m = math.sqrt(sum(float(np.sum(m**2)) for m in state.block_values))
        norm_h = math.sqrt(sum(float(np.sum(h**2)) for h in state.H))
        norm_u = math.sqrt(sum(float(np.sum(u**2)) for u in state.U))
        eps_pri = comp.sqrt_entries * config.eps_abs + config.eps_rel * max(norm_m, norm_h)
        eps_dual = comp.sqrt_entries * config.eps_abs + config.eps_rel * mu * norm_u

        objective = program.objective(state.p)
        history.append((it, objective, primal, dual))
        primal_hist.append(primal)

        if primal <= eps_pri and dual <= eps_dual:
            status = "converged"
            break
        if stop_check is not None and stop_every > 0 and it % stop_every == 0:
            if stop_check(state):
                status = "stopped"
                break
        if config.stall_window is not None and it >= config.stall_window:
            window = primal_hist[-config.stall_window :]
            if primal > INFEASIBLE_FACTOR * eps_pri and min(window) >= 0.99 * window[0]:
                status = "infeasible"
                break

    if status is None:
        w = max(1, int(round(0.2 * len(primal_hist))))
        window = primal_hist[-w:]
        stalled = min(window) >= 0.99 * window[0]
        if primal > INFEASIBLE_FACTOR * eps_pri and stalled:
            status = "infeasible"
        else:
            status = "max-iter"

    return AdmmResult(
        status=status,
        p=state.p.copy(),
        variables={k: v.copy() for k, v in state.variables.items()},
        objective=program.objective(state.p),
        iterations=it,
        primal_residual=primal,
        dual_residual=dual,
        eps_pri=eps_pri,
        eps_dual=eps_dual,
        history=tuple(history),
    )


def write_trace_csv(history, path) -> None:
    """Write the per-iteration trace (iter, objective, residuals) as CSV."""
    with open(path, "w") as fh:
        fh.write("iter,objective,primal_residual,dual_residual\n")
        for it, obj, pri, dua in history:
            fh.write(f"{it},{obj:.12g},{pri:.12g},{dua:.12g}\n")
