"""Entity index spaces, matrix containers and block operations.

Nodes are always ordered agents, then parameters, then KPIs. Every other
module indexes through :class:`EntityDims` so that no offsets are computed
ad hoc.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from rancl.errors import SchemaError, StructuralError


def _frozen(a, dtype=None):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class EntityDims:
    n_agents: int
    n_params: int
    n_kpis: int

    def __post_init__(self):
        for name in ("n_agents", "n_params", "n_kpis"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def n_learned(self) -> int:
        return self.n_params + self.n_kpis

    @property
    def n_total(self) -> int:
        return self.n_agents + self.n_params + self.n_kpis

    @property
    def agents(self) -> range:
        return range(0, self.n_agents)

    @property
    def params(self) -> range:
        return range(self.n_agents, self.n_agents + self.n_params)

    @property
    def kpis(self) -> range:
        return range(self.n_agents + self.n_params, self.n_total)

    def labels(self) -> list[str]:
        """Labels for every node in global order: ``a0.. p0.. k0..``."""
        return (
            [f"a{i}" for i in range(self.n_agents)]
            + [f"p{i}" for i in range(self.n_params)]
            + [f"k{i}" for i in range(self.n_kpis)]
        )

    def learned_labels(self) -> list[str]:
        return self.labels()[self.n_agents:]

    def label(self, node: int) -> str:
        return self.labels()[node]

    def kind_of(self, node: int) -> str:
        if node < self.n_agents:
            return "agent"
        if node < self.n_agents + self.n_params:
            return "param"
        if node < self.n_total:
            return "kpi"
        raise IndexError(node)


def _check_binary(m, what):
    if not np.all((m == 0) | (m == 1)):
        raise StructuralError(f"{what} must be binary")


@dataclass(frozen=True, eq=False)
class KnownRelations:
    """Agent rows against (parameter, KPI) columns; 1 = controls / subscribes."""

    matrix: np.ndarray
    dims: EntityDims

    def __post_init__(self):
        m = _frozen(self.matrix, np.int8)
        expected = (self.dims.n_agents, self.dims.n_learned)
        if m.shape != expected:
            raise StructuralError(f"known relations shape {m.shape} != {expected}")
        _check_binary(m, "known relations")
        object.__setattr__(self, "matrix", m)

    @property
    def control(self) -> np.ndarray:
        return self.matrix[:, : self.dims.n_params]

    @property
    def subscribe(self) -> np.ndarray:
        return self.matrix[:, self.dims.n_params:]

    def problems(self) -> list[str]:
        out = []
        for a in range(self.dims.n_agents):
            if not self.control[a].any():
                out.append(f"agent a{a} controls no parameter")
            if not self.subscribe[a].any():
                out.append(f"agent a{a} subscribes to no KPI")
        return out


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    values: np.ndarray
    dims: EntityDims

    def __post_init__(self):
        v = _frozen(self.values, np.float64)
        n = self.dims.n_learned
        if v.shape != (n, n):
            raise StructuralError(f"score matrix shape {v.shape} != {(n, n)}")
        if not np.all(np.isfinite(v)):
            raise StructuralError("score matrix has non-finite entries")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True, eq=False)
class LearnedAdjacency:
    """Binary parameter/KPI block; zero diagonal."""

    matrix: np.ndarray

    def __post_init__(self):
        m = _frozen(self.matrix, np.int8)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise StructuralError(f"learned adjacency must be square, got {m.shape}")
        _check_binary(m, "learned adjacency")
        if np.any(np.diag(m)):
            raise StructuralError("learned adjacency must have a zero diagonal")
        object.__setattr__(self, "matrix", m)

    @property
    def is_symmetric(self) -> bool:
        return bool(np.array_equal(self.matrix, self.matrix.T))


@dataclass(frozen=True, eq=False)
class FullAdjacency:
    matrix: np.ndarray
    dims: EntityDims

    def __post_init__(self):
        m = _frozen(self.matrix, np.int8)
        n = self.dims.n_total
        if m.shape != (n, n):
            raise StructuralError(f"full adjacency shape {m.shape} != {(n, n)}")
        object.__setattr__(self, "matrix", m)

    @property
    def known(self) -> np.ndarray:
        na = self.dims.n_agents
        return self.matrix[:na, na:]

    @property
    def learned(self) -> np.ndarray:
        na = self.dims.n_agents
        return self.matrix[na:, na:]


def blocks(s: ScoreMatrix | np.ndarray, dims: EntityDims | None = None):
    """Split a score matrix into ``(S_pp, S_pk, S_kp, S_kk)``."""
    if isinstance(s, ScoreMatrix):
        values, dims = s.values, s.dims
    else:
        if dims is None:
            raise TypeError("dims required for a raw array")
        values = np.asarray(s)
    n = dims.n_learned
    if values.shape != (n, n):
        raise StructuralError(f"score matrix shape {values.shape} != {(n, n)}")
    np_ = dims.n_params
    return values[:np_, :np_], values[:np_, np_:], values[np_:, :np_], values[np_:, np_:]


def reassemble(s_pp, s_pk, s_kp, s_kk) -> np.ndarray:
    return np.block([[s_pp, s_pk], [s_kp, s_kk]])


def boxplus_augment(learned: LearnedAdjacency, known: KnownRelations) -> FullAdjacency:
    """Assemble the full adjacency ``[[I, A_known], [A_knownᵀ, A_learned]]``."""
    dims = known.dims
    if learned.matrix.shape != (dims.n_learned, dims.n_learned):
        raise StructuralError(
            f"learned block {learned.matrix.shape} does not match "
            f"{dims.n_params} params + {dims.n_kpis} KPIs"
        )
    full = np.block(
        [
            [np.eye(dims.n_agents, dtype=np.int8), known.matrix],
            [known.matrix.T, learned.matrix],
        ]
    )
    return FullAdjacency(full, dims)


def validate_full_adjacency(a: FullAdjacency | np.ndarray, dims: EntityDims | None = None) -> list[str]:
    """Return one diagnostic per violated invariant; empty when valid."""
    if isinstance(a, FullAdjacency):
        m, dims = a.matrix, a.dims
    else:
        m = np.asarray(a)
    n = dims.n_total
    if m.shape != (n, n):
        return [f"shape {m.shape} != {(n, n)}"]
    diags = []
    if not np.all((m == 0) | (m == 1)):
        diags.append("non-binary entries")
    asym = np.argwhere(np.triu(m != m.T, 1))
    labels = dims.labels()
    for i, j in asym:
        diags.append(f"asymmetry at ({labels[i]}, {labels[j]})")
    na = dims.n_agents
    if not np.array_equal(m[:na, :na], np.eye(na)):
        diags.append("agent block is not the identity")
    if np.any(np.diag(m)[na:]):
        diags.append("learned block has a nonzero diagonal")
    return diags


# -- CSV ------------------------------------------------------------------


def write_matrix_csv(path, matrix, header: list[str], fmt: str = "%.17g"):
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[1] != len(header):
        raise StructuralError(f"header has {len(header)} labels for {matrix.shape} matrix")
    integer = np.issubdtype(matrix.dtype, np.integer)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in matrix:
            w.writerow([str(int(x)) if integer else fmt % x for x in row])


def read_matrix_csv(path, dtype=np.float64, header: list[str] | None = None) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaError(f"{path}: empty file")
    head, body = rows[0], rows[1:]
    if header is not None and head != header:
        raise SchemaError(f"{path}: header {head} != {header}")
    for r, row in enumerate(body):
        if len(row) != len(head):
            raise SchemaError(f"{path}: row {r + 1} has {len(row)} columns, expected {len(head)}")
    try:
        m = np.array([[float(x) for x in row] for row in body], dtype=np.float64).reshape(len(body), len(head))
    except ValueError as exc:
        raise SchemaError(f"{path}: {exc}") from None
    return head, m.astype(dtype)


def write_score_csv(path, s: ScoreMatrix):
    write_matrix_csv(path, s.values, s.dims.learned_labels())


def write_learned_csv(path, a: LearnedAdjacency, dims: EntityDims):
    write_matrix_csv(path, a.matrix.astype(np.int64), dims.learned_labels())


def write_full_csv(path, a: FullAdjacency):
    write_matrix_csv(path, a.matrix.astype(np.int64), a.dims.labels())


def read_full_csv(path, dims: EntityDims) -> FullAdjacency:
    _, m = read_matrix_csv(Path(path), dtype=np.int8, header=dims.labels())
    return FullAdjacency(m, dims)
