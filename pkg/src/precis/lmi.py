"""Affine LMI programs for minimum-precision estimator synthesis.

All four synthesis problems (H2/Hinf x observer/filter) are expressed in one
common form: minimize ``rho @ p`` over the precision vector ``p > 0`` and a
set of matrix variables, subject to affine matrix blocks that must be
negative definite.  Each block is a symmetric grid of cells; a cell holds a
constant part plus linear terms ``L @ V @ R`` (optionally on ``V.T``, and
optionally symmetrized ``T + T.T`` for diagonal cells).  At most one diagonal
cell per block carries the precision contribution ``-c_p * diag(p)``.

Scalar constraints (a trace bound, for instance) are ordinary 1x1 blocks, so
one solver handles every program.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AssignmentError, DimensionError, InvalidArgument, ProgramError
from .linalg import sym_eig
from .model import LtiPlant, MeasurementModel

__all__ = [
    "MatrixVarSpec",
    "LinearTerm",
    "LmiBlock",
    "AffineLmiProgram",
    "Certificate",
    "build_hinf_observer",
    "build_h2_observer",
    "build_hinf_filter",
    "build_h2_filter",
    "build_program",
    "evaluate_block",
    "certify",
]

GENERAL = "general"
SYMMETRIC = "symmetric"
SPD = "spd"


@dataclass(frozen=True, eq=False)
class MatrixVarSpec:
    """Shape and structure of one matrix decision variable."""

    name: str
    rows: int
    cols: int
    structure: str = GENERAL

    def __post_init__(self):
        if self.structure not in (GENERAL, SYMMETRIC, SPD):
            raise InvalidArgument(f"unknown structure {self.structure!r}")
        if self.structure in (SYMMETRIC, SPD) and self.rows != self.cols:
            raise DimensionError(f"variable {self.name}: symmetric flag needs square shape")
        if self.rows < 1 or self.cols < 1:
            raise DimensionError(f"variable {self.name}: empty shape")

    @property
    def size(self) -> int:
        return self.rows * self.cols


@dataclass(frozen=True, eq=False)
class LinearTerm:
    """Contribution ``left @ op(V) @ right`` to cell ``(row_cell, col_cell)``.

    ``op`` is transposition when ``transpose`` is set.  ``symmetrize`` adds
    the transpose of the product as well and is only valid on diagonal
    cells.  Off-diagonal cells are mirrored automatically when a block is
    evaluated, so terms are declared for the upper triangle only.
    """

    var: str
    row_cell: int
    col_cell: int
    left: np.ndarray
    right: np.ndarray
    transpose: bool = False
    symmetrize: bool = False

    def __post_init__(self):
        object.__setattr__(self, "left", np.atleast_2d(np.asarray(self.left, dtype=float)))
        object.__setattr__(self, "right", np.atleast_2d(np.asarray(self.right, dtype=float)))
        if self.row_cell > self.col_cell:
            raise ProgramError("terms must be declared in the upper triangle")
        if self.symmetrize and self.row_cell != self.col_cell:
            raise ProgramError("symmetrize is only valid on diagonal cells")

    def value(self, v: np.ndarray) -> np.ndarray:
        t = self.left @ (v.T if self.transpose else v) @ self.right
        if self.symmetrize:
            t = t + t.T
        return t


@dataclass(frozen=True, eq=False)
class LmiBlock:
    """One affine block constrained to be negative definite."""

    name: str
    cell_sizes: tuple[int, ...]
    constant: np.ndarray
    terms: tuple[LinearTerm, ...] = ()
    prec_coeff: float = None
    prec_cell: int = None

    def __post_init__(self):
        object.__setattr__(self, "cell_sizes", tuple(int(s) for s in self.cell_sizes))
        object.__setattr__(self, "terms", tuple(self.terms))
        const = np.atleast_2d(np.asarray(self.constant, dtype=float))
        s = self.size
        if const.shape != (s, s):
            raise DimensionError(f"block {self.name}: constant shape {const.shape} != {(s, s)}")
        if np.linalg.norm(const - const.T) > 1e-12 * max(1.0, np.linalg.norm(const)):
            raise DimensionError(f"block {self.name}: constant must be symmetric")
        object.__setattr__(self, "constant", const)
        if (self.prec_coeff is None) != (self.prec_cell is None):
            raise ProgramError(f"block {self.name}: precision coefficient and cell go together")
        for t in self.terms:
            if t.col_cell >= len(self.cell_sizes):
                raise ProgramError(f"block {self.name}: cell index out of range")

    @property
    def size(self) -> int:
        return sum(self.cell_sizes)

    @property
    def offsets(self) -> tuple[int, ...]:
        out = [0]
        for s in self.cell_sizes[:-1]:
            out.append(out[-1] + s)
        return tuple(out)

    @property
    def prec_offset(self) -> int:
        if self.prec_cell is None:
            return None
        return self.offsets[self.prec_cell]

    def cell_slice(self, cell: int) -> slice:
        off = self.offsets[cell]
        return slice(off, off + self.cell_sizes[cell])


@dataclass(frozen=True, eq=False)
class AffineLmiProgram:
    """Precision-minimization program: ``min rho @ p`` s.t. every block < 0."""

    n_p: int
    rho: np.ndarray
    gamma: float
    framework: str
    estimator: str
    variables: tuple[MatrixVarSpec, ...]
    blocks: tuple[LmiBlock, ...]

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=float).reshape(-1)
        if rho.shape != (self.n_p,):
            raise DimensionError(f"rho length {rho.shape[0]} != {self.n_p}")
        if np.any(rho <= 0):
            raise InvalidArgument("rho must be positive")
        if self.gamma <= 0:
            raise InvalidArgument("gamma must be positive")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "blocks", tuple(self.blocks))
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise ProgramError(f"duplicate variable names in {names}")
        prec_blocks = [b for b in self.blocks if b.prec_coeff is not None]
        if len(prec_blocks) != 1:
            raise ProgramError("exactly one block must carry the precision term")

    def variable(self, name: str) -> MatrixVarSpec:
        for v in self.variables:
            if v.name == name:
                return v
        raise AssignmentError(f"unknown variable {name!r}")

    def precision_block(self) -> tuple[int, LmiBlock]:
        for i, b in enumerate(self.blocks):
            if b.prec_coeff is not None:
                return i, b
        raise ProgramError("no precision block")  # unreachable by construction

    def objective(self, p: np.ndarray) -> float:
        return float(self.rho @ np.asarray(p, dtype=float))


def evaluate_block(
    block: LmiBlock, variables: dict, p: np.ndarray = None
) -> np.ndarray:
    """Evaluate a block's affine map at the given assignment.

    ``variables`` maps variable names to matrices; ``p`` is required when
    the block carries the precision term.  The result is exactly symmetric.
    """
    m = block.constant.copy()
    offs = block.offsets
    sizes = block.cell_sizes
    for t in block.terms:
        if t.var not in variables:
            raise AssignmentError(f"assignment is missing variable {t.var!r}")
        val = t.value(np.atleast_2d(np.asarray(variables[t.var], dtype=float)))
        ri, ci = t.row_cell, t.col_cell
        rs = slice(offs[ri], offs[ri] + sizes[ri])
        cs = slice(offs[ci], offs[ci] + sizes[ci])
        m[rs, cs] += val
        if ri != ci:
            m[cs, rs] += val.T
    if block.prec_coeff is not None:
        if p is None:
            raise AssignmentError(f"block {block.name} needs the precision vector")
        p = np.asarray(p, dtype=float).reshape(-1)
        idx = np.arange(p.shape[0]) + block.prec_offset
        m[idx, idx] -= block.prec_coeff * p
    return m


@dataclass(frozen=True)
class Certificate:
    """Eigenvalue check of a candidate assignment against a program."""

    block_lambda_max: tuple[float, ...]
    margin: float
    feasible: bool


def certify(
    program: AffineLmiProgram,
    variables: dict,
    p: np.ndarray,
    margin_tol: float = 1e-9,
    eps_p: float = 1e-6,
) -> Certificate:
    """Check strict feasibility of an assignment by eigenvalue tests.

    Feasible means every block's largest eigenvalue is below ``-margin_tol``
    and every SPD-flagged variable has smallest eigenvalue at least
    ``eps_p`` (up to roundoff).
    """
    lam_max = []
    for b in program.blocks:
        w, _ = sym_eig(evaluate_block(b, variables, p))
        lam_max.append(float(w[-1]))
    feasible = all(lm < -margin_tol for lm in lam_max)
    for v in program.variables:
        if v.structure != SPD:
            continue
        val = np.atleast_2d(np.asarray(variables[v.name], dtype=float))
        w, _ = sym_eig(val)
        if w[0] < eps_p - 1e-12 * max(1.0, abs(w[-1])):
            feasible = False
    p = np.asarray(p, dtype=float).reshape(-1)
    if np.any(p <= 0):
        feasible = False
    return Certificate(tuple(lam_max), -max(lam_max), feasible)


# ---------------------------------------------------------------------------
# Builders.  One per synthesis problem; shapes follow the standard synthesis
# LMIs with the change of variables Y = X L (observer) or the usual filter
# parametrization (X, R, Y, P, ...).  The trace-bound auxiliary variable of
# the H2 problems is named Q_trace; the Hinf filter output map is Q_filter.


def _check_inputs(plant: LtiPlant, meas: MeasurementModel, rho, gamma: float):
    if gamma <= 0:
        raise InvalidArgument("gamma must be positive")
    rho = np.asarray(rho, dtype=float).reshape(-1)
    if rho.shape != (meas.n_y,):
        raise DimensionError(f"rho length {rho.shape[0]} != {meas.n_y} sensors")
    if meas.C_y.shape[1] != plant.n_x:
        raise DimensionError("measurement model does not match plant state size")
    if meas.D_d.shape[1] != plant.n_d:
        raise DimensionError("measurement model does not match plant noise size")
    return rho


def _trace_terms(var: str, n: int) -> list:
    terms = []
    for i in range(n):
        e_row = np.zeros((1, n))
        e_row[0, i] = 1.0
        terms.append(LinearTerm(var, 0, 0, e_row, e_row.T))
    return terms


def build_hinf_observer(
    plant: LtiPlant, meas: MeasurementModel, rho, gamma: float
) -> AffineLmiProgram:
    """Program whose solution gives an Hinf observer ``L = inv(X) @ Y``.

    One block of size ``n_x + n_d + n_z + n_y``:

    ``[[sym(XA + Y C_y), X B_d + Y D_d, C_z.T, Y      ],
      [ .,              -g I,           0,     0      ],
      [ .,               .,            -g I,   0      ],
      [ .,               .,             .,    -g diag(p)]]``
    """
    rho = _check_inputs(plant, meas, rho, gamma)
    n_x, n_d, n_z, n_y = plant.n_x, plant.n_d, plant.n_z, meas.n_y
    sizes = (n_x, n_d, n_z, n_y)
    s = sum(sizes)
    const = np.zeros((s, s))
    o_x, o_d, o_z, _ = 0, n_x, n_x + n_d, n_x + n_d + n_z
    const[o_d : o_d + n_d, o_d : o_d + n_d] = -gamma * np.eye(n_d)
    const[o_z : o_z + n_z, o_z : o_z + n_z] = -gamma * np.eye(n_z)
    const[o_x:o_d, o_z : o_z + n_z] = plant.C_z.T
    const[o_z : o_z + n_z, o_x:o_d] = plant.C_z
    i_x = np.eye(n_x)
    terms = (
        LinearTerm("X", 0, 0, i_x, plant.A, symmetrize=True),
        LinearTerm("Y", 0, 0, i_x, meas.C_y, symmetrize=True),
        LinearTerm("X", 0, 1, i_x, plant.B_d),
        LinearTerm("Y", 0, 1, i_x, meas.D_d),
        LinearTerm("Y", 0, 3, i_x, np.eye(n_y)),
    )
    block = LmiBlock("hinf_obs", sizes, const, terms, prec_coeff=gamma, prec_cell=3)
    variables = (
        MatrixVarSpec("X", n_x, n_x, SPD),
        MatrixVarSpec("Y", n_x, n_y, GENERAL),
    )
    return AffineLmiProgram(n_y, rho, gamma, "hinf", "observer", variables, (block,))


def build_h2_observer(
    plant: LtiPlant, meas: MeasurementModel, rho, gamma: float
) -> AffineLmiProgram:
    """Program whose solution gives an H2 observer ``L = inv(X) @ Y``.

    Three blocks: the main ``n_x + n_d + n_y`` block with ``-diag(p)``, the
    coupling block ``[[-Q_trace, C_z], [C_z.T, -X]]``, and the scalar bound
    ``trace(Q_trace) - gamma**2 < 0``.
    """
    rho = _check_inputs(plant, meas, rho, gamma)
    n_x, n_d, n_z, n_y = plant.n_x, plant.n_d, plant.n_z, meas.n_y
    i_x = np.eye(n_x)

    sizes = (n_x, n_d, n_y)
    const = np.zeros((sum(sizes), sum(sizes)))
    const[n_x : n_x + n_d, n_x : n_x + n_d] = -np.eye(n_d)
    main = LmiBlock(
        "h2_obs",
        sizes,
        const,
        (
            LinearTerm("X", 0, 0, i_x, plant.A, symmetrize=True),
            LinearTerm("Y", 0, 0, i_x, meas.C_y, symmetrize=True),
            LinearTerm("X", 0, 1, i_x, plant.B_d),
            LinearTerm("Y", 0, 1, i_x, meas.D_d),
            LinearTerm("Y", 0, 2, i_x, np.eye(n_y)),
        ),
        prec_coeff=1.0,
        prec_cell=2,
    )

    sizes2 = (n_z, n_x)
    const2 = np.zeros((n_z + n_x, n_z + n_x))
    const2[:n_z, n_z:] = plant.C_z
    const2[n_z:, :n_z] = plant.C_z.T
    coupling = LmiBlock(
        "h2_obs_coupling",
        sizes2,
        const2,
        (
            LinearTerm("Q_trace", 0, 0, -np.eye(n_z), np.eye(n_z)),
            LinearTerm("X", 1, 1, -i_x, i_x),
        ),
    )

    trace = LmiBlock(
        "h2_obs_trace",
        (1,),
        np.array([[-(gamma**2)]]),
        tuple(_trace_terms("Q_trace", n_z)),
    )

    variables = (
        MatrixVarSpec("X", n_x, n_x, SPD),
        MatrixVarSpec("Y", n_x, n_y, GENERAL),
        MatrixVarSpec("Q_trace", n_z, n_z, SYMMETRIC),
    )
    return AffineLmiProgram(
        n_y, rho, gamma, "h2", "observer", variables, (main, coupling, trace)
    )


def build_hinf_filter(
    plant: LtiPlant, meas: MeasurementModel, rho, gamma: float
) -> AffineLmiProgram:
    """Program for an Hinf filter ``A_F = inv(X) P, B_F = inv(X) Y, C_F = Q_filter``.

    Two blocks: the main ``2 n_x + n_z + n_d + n_y`` block and ``X - R < 0``.
    """
    rho = _check_inputs(plant, meas, rho, gamma)
    n_x, n_d, n_z, n_y = plant.n_x, plant.n_d, plant.n_z, meas.n_y
    i_x = np.eye(n_x)

    sizes = (n_x, n_x, n_z, n_d, n_y)
    offs = np.cumsum((0,) + sizes)[:-1]
    s = sum(sizes)
    const = np.zeros((s, s))
    const[offs[2] : offs[2] + n_z, offs[2] : offs[2] + n_z] = -gamma * np.eye(n_z)
    const[offs[3] : offs[3] + n_d, offs[3] : offs[3] + n_d] = -gamma * np.eye(n_d)
    const[offs[0] : offs[0] + n_x, offs[2] : offs[2] + n_z] = plant.C_z.T
    const[offs[2] : offs[2] + n_z, offs[0] : offs[0] + n_x] = plant.C_z
    terms = (
        LinearTerm("R", 0, 0, i_x, plant.A, symmetrize=True),
        LinearTerm("Y", 0, 0, i_x, meas.C_y, symmetrize=True),
        LinearTerm("P", 0, 1, i_x, i_x),
        LinearTerm("X", 0, 1, plant.A.T, i_x, transpose=True),
        LinearTerm("Y", 0, 1, meas.C_y.T, i_x, transpose=True),
        LinearTerm("R", 0, 3, i_x, plant.B_d),
        LinearTerm("Y", 0, 3, i_x, meas.D_d),
        LinearTerm("Y", 0, 4, i_x, np.eye(n_y)),
        LinearTerm("P", 1, 1, i_x, i_x, symmetrize=True),
        LinearTerm("Q_filter", 1, 2, -i_x, np.eye(n_z), transpose=True),
        LinearTerm("X", 1, 3, i_x, plant.B_d),
        LinearTerm("Y", 1, 3, i_x, meas.D_d),
        LinearTerm("Y", 1, 4, i_x, np.eye(n_y)),
    )
    main = LmiBlock("hinf_fil", sizes, const, terms, prec_coeff=gamma, prec_cell=4)

    xr = LmiBlock(
        "x_below_r",
        (n_x,),
        np.zeros((n_x, n_x)),
        (LinearTerm("X", 0, 0, i_x, i_x), LinearTerm("R", 0, 0, -i_x, i_x)),
    )

    variables = (
        MatrixVarSpec("X", n_x, n_x, SPD),
        MatrixVarSpec("R", n_x, n_x, SYMMETRIC),
        MatrixVarSpec("Y", n_x, n_y, GENERAL),
        MatrixVarSpec("P", n_x, n_x, GENERAL),
        MatrixVarSpec("Q_filter", n_z, n_x, GENERAL),
    )
    return AffineLmiProgram(n_y, rho, gamma, "hinf", "filter", variables, (main, xr))


def build_h2_filter(
    plant: LtiPlant, meas: MeasurementModel, rho, gamma: float
) -> AffineLmiProgram:
    """Program for an H2 filter ``A_F = inv(X) P, B_F = inv(X) Y, C_F = N``.

    Four blocks: the main ``2 n_x + n_d + n_y`` block, ``X - R < 0``, the
    scalar trace bound, and the output coupling block of size
    ``n_z + 2 n_x``.
    """
    rho = _check_inputs(plant, meas, rho, gamma)
    n_x, n_d, n_z, n_y = plant.n_x, plant.n_d, plant.n_z, meas.n_y
    i_x = np.eye(n_x)

    sizes = (n_x, n_x, n_d, n_y)
    const = np.zeros((sum(sizes), sum(sizes)))
    o_d = 2 * n_x
    const[o_d : o_d + n_d, o_d : o_d + n_d] = -np.eye(n_d)
    main = LmiBlock(
        "h2_fil",
        sizes,
        const,
        (
            LinearTerm("R", 0, 0, i_x, plant.A, symmetrize=True),
            LinearTerm("Y", 0, 0, i_x, meas.C_y, symmetrize=True),
            LinearTerm("P", 0, 1, i_x, i_x),
            LinearTerm("X", 0, 1, plant.A.T, i_x, transpose=True),
            LinearTerm("Y", 0, 1, meas.C_y.T, i_x, transpose=True),
            LinearTerm("R", 0, 2, i_x, plant.B_d),
            LinearTerm("Y", 0, 2, i_x, meas.D_d),
            LinearTerm("Y", 0, 3, i_x, np.eye(n_y)),
            LinearTerm("P", 1, 1, i_x, i_x, symmetrize=True),
            LinearTerm("X", 1, 2, i_x, plant.B_d),
            LinearTerm("Y", 1, 2, i_x, meas.D_d),
            LinearTerm("Y", 1, 3, i_x, np.eye(n_y)),
        ),
        prec_coeff=1.0,
        prec_cell=3,
    )

    xr = LmiBlock(
        "x_below_r",
        (n_x,),
        np.zeros((n_x, n_x)),
        (LinearTerm("X", 0, 0, i_x, i_x), LinearTerm("R", 0, 0, -i_x, i_x)),
    )

    trace = LmiBlock(
        "h2_fil_trace",
        (1,),
        np.array([[-(gamma**2)]]),
        tuple(_trace_terms("Q_trace", n_z)),
    )

    sizes4 = (n_z, n_x, n_x)
    s4 = sum(sizes4)
    const4 = np.zeros((s4, s4))
    const4[:n_z, n_z : n_z + n_x] = plant.C_z
    const4[n_z : n_z + n_x, :n_z] = plant.C_z.T
    coupling = LmiBlock(
        "h2_fil_coupling",
        sizes4,
        const4,
        (
            LinearTerm("Q_trace", 0, 0, -np.eye(n_z), np.eye(n_z)),
            LinearTerm("N", 0, 2, np.eye(n_z), i_x),
            LinearTerm("R", 1, 1, -i_x, i_x),
            LinearTerm("X", 1, 2, -i_x, i_x),
            LinearTerm("X", 2, 2, -i_x, i_x),
        ),
    )

    variables = (
        MatrixVarSpec("X", n_x, n_x, SPD),
        MatrixVarSpec("R", n_x, n_x, SYMMETRIC),
        MatrixVarSpec("Y", n_x, n_y, GENERAL),
        MatrixVarSpec("P", n_x, n_x, GENERAL),
        MatrixVarSpec("Q_trace", n_z, n_z, SYMMETRIC),
        MatrixVarSpec("N", n_z, n_x, GENERAL),
    )
    return AffineLmiProgram(
        n_y, rho, gamma, "h2", "filter", variables, (main, xr, trace, coupling)
    )


_BUILDERS = {
    ("hinf", "observer"): build_hinf_observer,
    ("h2", "observer"): build_h2_observer,
    ("hinf", "filter"): build_hinf_filter,
    ("h2", "filter"): build_h2_filter,
}


def build_program(
    framework: str,
    estimator: str,
    plant: LtiPlant,
    meas: MeasurementModel,
    rho,
    gamma: float,
) -> AffineLmiProgram:
    """Dispatch to the matching theorem builder."""
    key = (framework, estimator)
    if key not in _BUILDERS:
        raise InvalidArgument(
            f"unknown framework/estimator combination {framework!r}/{estimator!r}"
        )
    return _BUILDERS[key](plant, meas, rho, gamma)
