"""Synthetic parameter/KPI telemetry from a known linear-Gaussian conflict model.

Parameters are drawn i.i.d. Gaussian and mixed through the parameter
coupling, KPIs are a linear response of the effective parameters, mixed
through the KPI coupling, plus Gaussian noise::

    x_p_eff = (I + beta * C_p) @ x_p
    x_k_eff = (I + beta * C_k) @ (W.T @ x_p_eff) + noise
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from rancl.errors import ChecksumError, SchemaError, StructuralError
from rancl.graph import (
    EntityDims,
    KnownRelations,
    LearnedAdjacency,
    read_matrix_csv,
    write_matrix_csv,
)

SCHEMA_VERSION = 1
DATASET_FILES = ("spec.json", "x_p.csv", "x_k.csv", "labels.csv", "truth_learned.csv", "known.csv")


def _ro(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ConflictModelSpec:
    dims: EntityDims
    control: np.ndarray  # N_a x N_p, binary
    subscribe: np.ndarray  # N_a x N_k, binary
    influence: np.ndarray  # N_p x N_k, W; zero = no influence
    param_coupling: np.ndarray  # N_p x N_p, binary symmetric
    kpi_coupling: np.ndarray  # N_k x N_k, binary symmetric
    noise_std: float = 0.1
    param_mean: np.ndarray | None = None
    param_std: np.ndarray | None = None
    seed: int = 0
    coupling_strength: float = 0.5

    def __post_init__(self):
        d = self.dims
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("control", _ro(self.control, np.int8))
        set_("subscribe", _ro(self.subscribe, np.int8))
        set_("influence", _ro(self.influence, np.float64))
        set_("param_coupling", _ro(self.param_coupling, np.int8))
        set_("kpi_coupling", _ro(self.kpi_coupling, np.int8))
        set_("param_mean", _ro(np.zeros(d.n_params) if self.param_mean is None else self.param_mean, np.float64))
        set_("param_std", _ro(np.ones(d.n_params) if self.param_std is None else self.param_std, np.float64))
        set_("noise_std", float(self.noise_std))
        set_("coupling_strength", float(self.coupling_strength))
        set_("seed", int(self.seed))
        shapes = {
            "control": (d.n_agents, d.n_params),
            "subscribe": (d.n_agents, d.n_kpis),
            "influence": (d.n_params, d.n_kpis),
            "param_coupling": (d.n_params, d.n_params),
            "kpi_coupling": (d.n_kpis, d.n_kpis),
            "param_mean": (d.n_params,),
            "param_std": (d.n_params,),
        }
        for name, shape in shapes.items():
            if getattr(self, name).shape != shape:
                raise StructuralError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    def problems(self) -> list[str]:
        """Invariant violations, empty when the conflict model is valid."""
        out = []
        for name in ("control", "subscribe", "param_coupling", "kpi_coupling"):
            m = getattr(self, name)
            if not np.all((m == 0) | (m == 1)):
                out.append(f"{name} is not binary")
        for name in ("param_coupling", "kpi_coupling"):
            m = getattr(self, name)
            if not np.array_equal(m, m.T):
                out.append(f"{name} is not symmetric")
            if np.any(np.diag(m)):
                out.append(f"{name} has a nonzero diagonal")
        for name in ("influence", "param_mean", "param_std"):
            if not np.all(np.isfinite(getattr(self, name))):
                out.append(f"{name} has non-finite entries")
        if not (math.isfinite(self.noise_std) and self.noise_std > 0):
            out.append("noise_std must be finite and > 0")
        if not math.isfinite(self.coupling_strength):
            out.append("coupling_strength must be finite")
        if np.any(self.param_std < 0):
            out.append("param_std must be >= 0")
        for p in np.flatnonzero(~self.control.any(axis=0)):
            out.append(f"parameter p{p} is controlled by no agent")
        for k in np.flatnonzero(~(self.influence != 0).any(axis=0)):
            out.append(f"KPI k{k} is influenced by no parameter")
        out.extend(self.known().problems())
        return out

    def validate(self):
        problems = self.problems()
        if problems:
            raise ValueError("invalid conflict model: " + "; ".join(problems))
        return self

    def labels(self) -> np.ndarray:
        return (self.influence != 0).astype(np.int8)

    def known(self) -> KnownRelations:
        return KnownRelations(np.hstack([self.control, self.subscribe]), self.dims)

    def truth_learned(self) -> LearnedAdjacency:
        """Ground-truth parameter/KPI block: couplings plus influence edges."""
        y = self.labels()
        return LearnedAdjacency(np.block([[self.param_coupling, y], [y.T, self.kpi_coupling]]))

    def with_seed(self, seed: int) -> "ConflictModelSpec":
        return replace(self, seed=int(seed))

    def to_json(self) -> dict:
        return {
            "dims": {"n_agents": self.dims.n_agents, "n_params": self.dims.n_params, "n_kpis": self.dims.n_kpis},
            "control": self.control.tolist(),
            "subscribe": self.subscribe.tolist(),
            "influence": self.influence.tolist(),
            "param_coupling": self.param_coupling.tolist(),
            "kpi_coupling": self.kpi_coupling.tolist(),
            "noise_std": self.noise_std,
            "param_mean": self.param_mean.tolist(),
            "param_std": self.param_std.tolist(),
            "seed": self.seed,
            "coupling_strength": self.coupling_strength,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ConflictModelSpec":
        try:
            fields = dict(obj)
            fields["dims"] = EntityDims(**fields["dims"])
            return cls(**fields)
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"bad conflict model spec: {exc}") from None


def default_topology() -> ConflictModelSpec:
    """The 4-agent / 7-parameter / 4-KPI conflict model used by the experiments.

    Coupled parameters share their KPI influence set and coupled KPIs share
    their influencing parameters, so the same-entity blocks are recoverable
    from embeddings trained on the cross block alone. Ground truth contains:

    * direct:   a0 and a1 both control p0
    * indirect: a1 (p1) and a2 (p2) both reach k0
    * implicit: a3 controls p4, coupled to p3, which drives k1 watched by a0
    """
    dims = EntityDims(4, 7, 4)
    control = np.zeros((4, 7))
    for a, ps in {0: [0], 1: [0, 1, 3], 2: [2, 5], 3: [4, 6]}.items():
        control[a, ps] = 1
    subscribe = np.zeros((4, 4))
    for a, k in {0: 1, 1: 0, 2: 2, 3: 3}.items():
        subscribe[a, k] = 1
    w = np.zeros((7, 4))
    w[1, 0], w[2, 0] = 0.8, 0.7
    w[3, 1], w[4, 1] = 0.9, 0.6
    w[0, 2], w[0, 3] = 0.9, 0.6
    w[5, 2], w[5, 3] = 0.7, 0.8
    w[6, 2], w[6, 3] = 0.5, 0.7
    cp = np.zeros((7, 7))
    for i, j in [(1, 2), (3, 4), (0, 5), (0, 6), (5, 6)]:
        cp[i, j] = cp[j, i] = 1
    ck = np.zeros((4, 4))
    ck[2, 3] = ck[3, 2] = 1
    return ConflictModelSpec(dims, control, subscribe, w, cp, ck, noise_std=0.1, seed=0)


@dataclass(frozen=True, eq=False)
class Dataset:
    x_p: np.ndarray
    x_k: np.ndarray
    labels: np.ndarray
    truth_learned: LearnedAdjacency
    known: KnownRelations
    spec: ConflictModelSpec = field(repr=False)

    @property
    def length(self) -> int:
        return self.x_p.shape[1]

    @property
    def dims(self) -> EntityDims:
        return self.spec.dims


def generate(spec: ConflictModelSpec, length: int) -> Dataset:
    """Draw ``length`` i.i.d. samples from ``spec``; reproducible in ``spec.seed``."""
    if int(length) != length or length < 1:
        raise ValueError(f"length must be a positive integer, got {length!r}")
    spec.validate()
    d = spec.dims
    rng = np.random.default_rng(spec.seed)
    x_p = spec.param_mean[:, None] + spec.param_std[:, None] * rng.standard_normal((d.n_params, length))
    x_p = (np.eye(d.n_params) + spec.coupling_strength * spec.param_coupling) @ x_p
    x_k = spec.influence.T @ x_p
    x_k = (np.eye(d.n_kpis) + spec.coupling_strength * spec.kpi_coupling) @ x_k
    x_k = x_k + spec.noise_std * rng.standard_normal((d.n_kpis, length))
    if not (np.all(np.isfinite(x_p)) and np.all(np.isfinite(x_k))):
        raise ValueError("generated samples are not finite")
    return Dataset(
        x_p=_ro(x_p, np.float64),
        x_k=_ro(x_k, np.float64),
        labels=spec.labels(),
        truth_learned=spec.truth_learned(),
        known=spec.known(),
        spec=spec,
    )


# -- on-disk layout -------------------------------------------------------


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_samples(path: Path, x: np.ndarray):
    with open(path, "w") as fh:
        for row in x:
            fh.write(",".join("%.17g" % v for v in row))
            fh.write("\n")


def _read_samples(path: Path, rows: int, cols: int) -> np.ndarray:
    lines = path.read_text().splitlines()
    if len(lines) != rows:
        raise StructuralError(f"{path.name}: {len(lines)} rows, dims say {rows}")
    out = np.empty((rows, cols))
    for r, line in enumerate(lines):
        cells = line.split(",")
        if len(cells) != cols:
            raise SchemaError(f"{path.name}: row {r} has {len(cells)} columns, expected {cols}")
        try:
            out[r] = [float(c) for c in cells]
        except ValueError as exc:
            raise SchemaError(f"{path.name}: {exc}") from None
    return out


def write_dataset(ds: Dataset, path) -> Path:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    d = ds.dims
    _write_samples(root / "x_p.csv", ds.x_p)
    _write_samples(root / "x_k.csv", ds.x_k)
    kl = [f"k{j}" for j in range(d.n_kpis)]
    write_matrix_csv(root / "labels.csv", ds.labels.astype(np.int64), kl)
    write_matrix_csv(root / "truth_learned.csv", ds.truth_learned.matrix.astype(np.int64), d.learned_labels())
    write_matrix_csv(root / "known.csv", ds.known.matrix.astype(np.int64), d.learned_labels())
    meta = {
        "schema_version": SCHEMA_VERSION,
        "length": ds.length,
        "spec": ds.spec.to_json(),
        "checksums": {name: _sha256(root / name) for name in DATASET_FILES[1:]},
    }
    (root / "spec.json").write_text(json.dumps(meta, indent=2) + "\n")
    return root


def read_dataset(path) -> Dataset:
    root = Path(path)
    try:
        meta = json.loads((root / "spec.json").read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"spec.json: {exc}") from None
    if meta.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(f"schema version {meta.get('schema_version')!r}, expected {SCHEMA_VERSION}")
    spec = ConflictModelSpec.from_json(meta["spec"])
    d, length = spec.dims, int(meta["length"])
    x_p = _read_samples(root / "x_p.csv", d.n_params, length)
    x_k = _read_samples(root / "x_k.csv", d.n_kpis, length)
    _, labels = read_matrix_csv(root / "labels.csv", np.int8, [f"k{j}" for j in range(d.n_kpis)])
    _, truth = read_matrix_csv(root / "truth_learned.csv", np.int8, d.learned_labels())
    _, known = read_matrix_csv(root / "known.csv", np.int8, d.learned_labels())
    if labels.shape != (d.n_params, d.n_kpis):
        raise StructuralError(f"labels.csv has shape {labels.shape}, dims say {(d.n_params, d.n_kpis)}")
    if truth.shape != (d.n_learned, d.n_learned):
        raise StructuralError(f"truth_learned.csv has shape {truth.shape}")
    # structure first so corruption reports what is wrong, then integrity
    for name, digest in meta.get("checksums", {}).items():
        if _sha256(root / name) != digest:
            raise ChecksumError(f"{name}: checksum mismatch")
    return Dataset(
        x_p=_ro(x_p, np.float64),
        x_k=_ro(x_k, np.float64),
        labels=_ro(labels, np.int8),
        truth_learned=LearnedAdjacency(truth),
        known=KnownRelations(known, d),
        spec=spec,
    )
