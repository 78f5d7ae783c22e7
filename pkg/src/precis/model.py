"""Plant, sensor catalog, and measurement assembly.

A plant is the triple ``(A, B_d, C_z)`` of a continuous LTI system driven by
process noise, together with a catalog of scalar sensors.  Each sensor ``i``
contributes one measurement row ``y_i = C_i x + D_i d + sigma_i n_i`` where
``sigma_i`` is the unknown noise level tied to the sensor precision
``p_i = 1 / sigma_i**2``.  Precisions travel through the package as plain
positive 1-D arrays aligned with the selected subset.

All types here are immutable after construction and safe to share across
workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionError,
    EmptySubset,
    FileFormatError,
    InvalidArgument,
    InvalidSensor,
)

__all__ = [
    "LtiPlant",
    "SensorDef",
    "SensorCatalog",
    "SensorSubset",
    "MeasurementModel",
    "assemble_measurement",
    "augment_disturbance",
    "spring_mass_plant",
    "example1_plant",
    "random_plant",
    "hautus_detectable",
    "validate_precisions",
    "write_matrix",
    "read_matrix",
    "save_plant",
    "load_plant",
]


def _as_matrix(value, name: str) -> np.ndarray:
    m = np.atleast_2d(np.asarray(value, dtype=float))
    if not np.all(np.isfinite(m)):
        raise InvalidArgument(f"{name} has non-finite entries")
    m = m.copy()
    m.setflags(write=False)
    return m


@dataclass(frozen=True, eq=False)
class LtiPlant:
    """Continuous LTI plant ``xdot = A x + B_d d``, output of interest ``z = C_z x``."""

    A: np.ndarray
    B_d: np.ndarray
    C_z: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A", _as_matrix(self.A, "A"))
        object.__setattr__(self, "B_d", _as_matrix(self.B_d, "B_d"))
        object.__setattr__(self, "C_z", _as_matrix(self.C_z, "C_z"))
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise DimensionError(f"A must be square, got {self.A.shape}")
        if self.B_d.shape[0] != n:
            raise DimensionError(f"B_d row count {self.B_d.shape[0]} != {n}")
        if self.C_z.shape[1] != n:
            raise DimensionError(f"C_z column count {self.C_z.shape[1]} != {n}")
        if n < 1 or self.n_d < 1 or self.n_z < 1:
            raise DimensionError("plant dimensions must all be >= 1")

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_d(self) -> int:
        return self.B_d.shape[1]

    @property
    def n_z(self) -> int:
        return self.C_z.shape[0]


@dataclass(frozen=True, eq=False)
class SensorDef:
    """One scalar sensor: measurement row ``C`` and feedthrough row ``D``."""

    id: int
    C: np.ndarray
    D: np.ndarray
    label: str = ""

    def __post_init__(self):
        c = np.asarray(self.C, dtype=float).reshape(-1).copy()
        d = np.asarray(self.D, dtype=float).reshape(-1).copy()
        c.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "C", c)
        object.__setattr__(self, "D", d)
        if self.id < 0:
            raise InvalidSensor(f"sensor id must be nonnegative, got {self.id}")


@dataclass(frozen=True, eq=False)
class SensorCatalog:
    """Ordered set of available sensors with positive selection weights."""

    sensors: tuple[SensorDef, ...]
    weights: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, "sensors", tuple(self.sensors))
        n = len(self.sensors)
        if n == 0:
            raise EmptySubset("catalog must contain at least one sensor")
        ids = [s.id for s in self.sensors]
        if ids != list(range(n)):
            raise InvalidSensor(f"catalog ids must be 0..{n - 1}, got {ids}")
        w = self.weights
        w = np.ones(n) if w is None else np.asarray(w, dtype=float).reshape(-1).copy()
        if w.shape != (n,):
            raise DimensionError(f"weights length {w.shape[0]} != {n} sensors")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise InvalidArgument("sensor weights must be positive and finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n_sensors(self) -> int:
        return len(self.sensors)

    def full_subset(self) -> "SensorSubset":
        return SensorSubset(range(self.n_sensors))


@dataclass(frozen=True, eq=False)
class SensorSubset:
    """Sorted, duplicate-free set of catalog ids."""

    ids: tuple[int, ...]

    def __init__(self, ids):
        ids = tuple(int(i) for i in ids)
        if any(i < 0 for i in ids):
            raise InvalidSensor(f"negative sensor id in {ids}")
        if len(set(ids)) != len(ids):
            raise InvalidSensor(f"duplicate sensor id in {ids}")
        object.__setattr__(self, "ids", tuple(sorted(ids)))

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self):
        return iter(self.ids)

    def __contains__(self, i) -> bool:
        return i in self.ids

    def without(self, sensor_id: int) -> "SensorSubset":
        return SensorSubset(i for i in self.ids if i != sensor_id)


@dataclass(frozen=True, eq=False)
class MeasurementModel:
    """Stacked measurement matrices for a selected subset, in ascending id order."""

    C_y: np.ndarray
    D_d: np.ndarray
    subset: SensorSubset

    def __post_init__(self):
        object.__setattr__(self, "C_y", _as_matrix(self.C_y, "C_y"))
        object.__setattr__(self, "D_d", _as_matrix(self.D_d, "D_d"))
        if self.C_y.shape[0] != len(self.subset) or self.D_d.shape[0] != len(self.subset):
            raise DimensionError("row counts must equal the subset size")

    @property
    def n_y(self) -> int:
        return self.C_y.shape[0]


def validate_precisions(p, n_y: int, eps_p: float = 0.0) -> np.ndarray:
    """Coerce ``p`` to a positive 1-D array of length ``n_y``."""
    p = np.asarray(p, dtype=float).reshape(-1)
    if p.shape != (n_y,):
        raise DimensionError(f"precision vector length {p.shape[0]} != {n_y}")
    if np.any(p < eps_p) or np.any(p <= 0) or not np.all(np.isfinite(p)):
        raise InvalidArgument("precisions must be positive and finite")
    return p


def assemble_measurement(
    plant: LtiPlant, catalog: SensorCatalog, subset: SensorSubset
) -> MeasurementModel:
    """Stack the subset's sensor rows into ``C_y`` and ``D_d``.

    Rows appear in ascending catalog id order regardless of how the subset
    was constructed, so identical subsets always produce identical matrices.
    """
    if len(subset) == 0:
        raise EmptySubset("cannot assemble measurements for an empty subset")
    for i in subset:
        if i >= catalog.n_sensors:
            raise InvalidSensor(f"sensor id {i} out of range 0..{catalog.n_sensors - 1}")
    rows_c = []
    rows_d = []
    for i in subset:
        s = catalog.sensors[i]
        if s.C.shape != (plant.n_x,):
            raise DimensionError(f"sensor {i}: C row length {s.C.shape[0]} != {plant.n_x}")
        if s.D.shape != (plant.n_d,):
            raise DimensionError(f"sensor {i}: D row length {s.D.shape[0]} != {plant.n_d}")
        rows_c.append(s.C)
        rows_d.append(s.D)
    return MeasurementModel(np.vstack(rows_c), np.vstack(rows_d), subset)


def augment_disturbance(
    plant: LtiPlant, meas: MeasurementModel, sigma
) -> tuple[np.ndarray, np.ndarray]:
    """Input matrices for the stacked disturbance ``w = [d; n]``.

    Returns ``B_w = [B_d, 0]`` and ``D_w = [D_d, diag(sigma)]`` where
    ``sigma`` holds the per-sensor noise levels (``1/sqrt(p)``).
    """
    sigma = np.asarray(sigma, dtype=float).reshape(-1)
    if sigma.shape != (meas.n_y,):
        raise DimensionError(f"sigma length {sigma.shape[0]} != {meas.n_y}")
    if np.any(sigma <= 0):
        raise InvalidArgument("sigma entries must be positive")
    b_w = np.hstack([plant.B_d, np.zeros((plant.n_x, meas.n_y))])
    d_w = np.hstack([meas.D_d, np.diag(sigma)])
    return b_w, d_w


def _per_state_catalog(n_x: int, n_d: int, labels=None) -> SensorCatalog:
    sensors = []
    for i in range(n_x):
        c = np.zeros(n_x)
        c[i] = 1.0
        label = labels[i] if labels is not None else f"s{i + 1}"
        sensors.append(SensorDef(i, c, np.zeros(n_d), label))
    return SensorCatalog(tuple(sensors))


def spring_mass_plant(masses: int) -> tuple[LtiPlant, SensorCatalog]:
    """Serially connected spring-mass-damper chain with ``masses`` unit masses.

    Units masses, springs, and dampers between rigid walls; state is
    positions then velocities (``n_x = 2*masses``), a process-noise force
    acts on each mass, every state has its own unit sensor, and all states
    are outputs of interest.
    """
    if masses < 1:
        raise InvalidArgument(f"mass count must be >= 1, got {masses}")
    m = masses
    h = np.zeros((m, m))
    np.fill_diagonal(h, -2.0)
    for i in range(m - 1):
        h[i, i + 1] = 1.0
        h[i + 1, i] = 1.0
    a = np.block([[np.zeros((m, m)), np.eye(m)], [h, h]])
    b_d = np.vstack([np.zeros((m, m)), np.eye(m)])
    plant = LtiPlant(a, b_d, np.eye(2 * m))
    labels = [f"x{i + 1}" for i in range(m)] + [f"v{i + 1}" for i in range(m)]
    return plant, _per_state_catalog(2 * m, m, labels)


def example1_plant() -> tuple[LtiPlant, SensorCatalog]:
    """Four-state coupled oscillator used in the selection regression tests.

    Two lightly damped masses with cross coupling, two process-noise
    channels, one sensor per state, all states outputs of interest.
    """
    a = np.array(
        [
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [-2.0, 1.0, -1.0, 0.0],
            [1.0, -2.0, 0.0, -1.0],
        ]
    )
    b_d = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    plant = LtiPlant(a, b_d, np.eye(4))
    return plant, _per_state_catalog(4, 2)


def random_plant(
    seed: int, n_x: int, n_d: int, n_s: int
) -> tuple[LtiPlant, SensorCatalog]:
    """Deterministic random stable plant with ``n_s`` random sensors.

    Eigenvalues of ``A`` have real parts drawn uniformly from [-2, -0.1];
    complex pairs (chosen with probability 1/2 while two slots remain) get
    imaginary parts +/- u with u uniform in [0, 1].  The block-diagonal
    normal form is conjugated by a random orthogonal matrix.  ``B_d`` and
    the sensor rows are standard normal, sensor feedthroughs are zero, and
    ``C_z = I``.
    """
    if min(n_x, n_d, n_s) < 1:
        raise InvalidArgument("plant dimensions must all be >= 1")
    rng = np.random.default_rng(seed)
    blocks = []
    remaining = n_x
    while remaining > 0:
        re = rng.uniform(-2.0, -0.1)
        if remaining >= 2 and rng.uniform() < 0.5:
            im = rng.uniform(0.0, 1.0)
            blocks.append(np.array([[re, im], [-im, re]]))
            remaining -= 2
        else:
            blocks.append(np.array([[re]]))
            remaining -= 1
    a0 = np.zeros((n_x, n_x))
    at = 0
    for blk in blocks:
        k = blk.shape[0]
        a0[at : at + k, at : at + k] = blk
        at += k
    q, _ = np.linalg.qr(rng.standard_normal((n_x, n_x)))
    a = q @ a0 @ q.T
    b_d = rng.standard_normal((n_x, n_d))
    sensors = tuple(
        SensorDef(i, rng.standard_normal(n_x), np.zeros(n_d), f"s{i + 1}")
        for i in range(n_s)
    )
    return LtiPlant(a, b_d, np.eye(n_x)), SensorCatalog(sensors)


def hautus_detectable(a: np.ndarray, c_y: np.ndarray) -> bool:
    """Hautus test: every eigenvalue of ``A`` with ``Re >= 0`` is observable."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    c_y = np.atleast_2d(np.asarray(c_y, dtype=float))
    n = a.shape[0]
    if a.shape != (n, n) or c_y.shape[1] != n:
        raise DimensionError("hautus_detectable: inconsistent shapes")
    for lam in np.linalg.eigvals(a):
        if lam.real < -1e-12:
            continue
        stacked = np.vstack([lam * np.eye(n) - a, c_y.astype(complex)])
        if np.linalg.matrix_rank(stacked) < n:
            return False
    return True


# ---------------------------------------------------------------------------
# Text serialization.  Matrix text format: first line "rows cols", then
# `rows` lines of space-separated decimal values.  A plant file is a header
# line followed by named "matrix NAME" sections and an optional "labels"
# line.


def write_matrix(lines: list, m: np.ndarray) -> None:
    """Append the text form of ``m`` to ``lines``."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    lines.append(f"{m.shape[0]} {m.shape[1]}")
    for row in m:
        lines.append(" ".join(f"{v:.17g}" for v in row))


class _LineReader:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.pos = 0

    def next(self, field: str) -> str:
        while self.pos < len(self.lines):
            line = self.lines[self.pos].strip()
            self.pos += 1
            if line:
                return line
        raise FileFormatError("unexpected end of file", line=self.pos, field=field)

    def peek(self):
        pos = self.pos
        while pos < len(self.lines):
            if self.lines[pos].strip():
                return self.lines[pos].strip(), pos
            pos += 1
        return None, pos


def read_matrix(reader: _LineReader, field: str) -> np.ndarray:
    """Read one matrix in text format from ``reader``."""
    header = reader.next(field)
    parts = header.split()
    if len(parts) != 2:
        raise FileFormatError(
            f"expected 'rows cols', got {header!r}", line=reader.pos, field=field
        )
    try:
        rows, cols = int(parts[0]), int(parts[1])
    except ValueError:
        raise FileFormatError(
            f"non-integer matrix size {header!r}", line=reader.pos, field=field
        ) from None
    if rows < 1 or cols < 1:
        raise FileFormatError(
            f"matrix size must be positive, got {rows}x{cols}",
            line=reader.pos,
            field=field,
        )
    data = np.empty((rows, cols))
    for r in range(rows):
        line = reader.next(field)
        vals = line.split()
        if len(vals) != cols:
            raise FileFormatError(
                f"expected {cols} values, got {len(vals)}",
                line=reader.pos,
                field=field,
            )
        try:
            data[r] = [float(v) for v in vals]
        except ValueError:
            raise FileFormatError(
                "non-numeric matrix entry", line=reader.pos, field=field
            ) from None
    return data


PLANT_HEADER = "precis-plant-v1"


def save_plant(path, plant: LtiPlant, catalog: SensorCatalog) -> None:
    """Write a plant and its sensor catalog to a single text file."""
    lines = [PLANT_HEADER]
    for name, m in (("A", plant.A), ("B_d", plant.B_d), ("C_z", plant.C_z)):
        lines.append(f"matrix {name}")
        write_matrix(lines, m)
    lines.append("matrix C")
    write_matrix(lines, np.vstack([s.C for s in catalog.sensors]))
    lines.append("matrix D")
    write_matrix(lines, np.vstack([s.D for s in catalog.sensors]))
    lines.append("matrix rho")
    write_matrix(lines, catalog.weights.reshape(1, -1))
    lines.append("labels " + " ".join(s.label or f"s{s.id + 1}" for s in catalog.sensors))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_plant(path) -> tuple[LtiPlant, SensorCatalog]:
    """Read a plant file written by :func:`save_plant`."""
    with open(path) as fh:
        reader = _LineReader(fh.read())
    header = reader.next("header")
    if header != PLANT_HEADER:
        raise FileFormatError(f"not a plant file (header {header!r})", line=1,
                              field="header")
    matrices = {}
    labels = None
    while True:
        peeked, _ = reader.peek()
        if peeked is None:
            break
        if peeked.startswith("labels"):
            labels = reader.next("labels").split()[1:]
            continue
        line = reader.next("section")
        parts = line.split()
        if len(parts) != 2 or parts[0] != "matrix":
            raise FileFormatError(
                f"expected 'matrix NAME', got {line!r}", line=reader.pos,
                field="section"
            )
        matrices[parts[1]] = read_matrix(reader, parts[1])
    for required in ("A", "B_d", "C_z", "C", "D"):
        if required not in matrices:
            raise FileFormatError("missing matrix section", field=required)
    plant = LtiPlant(matrices["A"], matrices["B_d"], matrices["C_z"])
    c, d = matrices["C"], matrices["D"]
    if c.shape[0] != d.shape[0]:
        raise FileFormatError(
            f"C has {c.shape[0]} sensors but D has {d.shape[0]}", field="D"
        )
    n_s = c.shape[0]
    rho = matrices.get("rho")
    weights = None if rho is None else rho.reshape(-1)
    if labels is not None and len(labels) != n_s:
        raise FileFormatError(
            f"{len(labels)} labels for {n_s} sensors", field="labels"
        )
    sensors = tuple(
        SensorDef(i, c[i], d[i], labels[i] if labels else f"s{i + 1}")
        for i in range(n_s)
    )
    return plant, SensorCatalog(sensors, weights)
