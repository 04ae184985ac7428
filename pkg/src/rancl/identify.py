"""Rule-based conflict identification on the full adjacency matrix.

* Direct: two agents control the same parameter.
* Indirect: two agents control distinct parameters that both influence a
  common KPI.
* Implicit: one agent controls a parameter that reaches a KPI subscribed by
  the other agent through a chain that uses at least one same-entity
  (parameter/parameter or KPI/KPI) coupling. A chain is not reported when the
  same agents are already in a direct conflict over the parameter, or in an
  indirect conflict over the chain's end KPI through that parameter.

Nodes are addressed by global index (agents, then parameters, then KPIs).
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass

from rancl import kernels
from rancl.errors import StructuralError
from rancl.graph import EntityDims, FullAdjacency, boxplus_augment, validate_full_adjacency


class ConflictKind(enum.IntEnum):
    DIRECT = kernels.DIRECT
    INDIRECT = kernels.INDIRECT
    IMPLICIT = kernels.IMPLICIT

    def __str__(self):
        return self.name.lower()


@dataclass(frozen=True, order=True)
class Conflict:
    kind: ConflictKind
    agents: tuple[int, int]
    witness: tuple[int, ...]

    def __post_init__(self):
        a, b = self.agents
        if not a < b:
            raise ValueError(f"agent pair must be ordered and distinct, got {self.agents}")
        object.__setattr__(self, "kind", ConflictKind(self.kind))
        object.__setattr__(self, "agents", (int(a), int(b)))
        object.__setattr__(self, "witness", tuple(int(x) for x in self.witness))

    def format(self, dims: EntityDims) -> list[str]:
        labels = dims.labels()
        return [str(self.kind), labels[self.agents[0]], labels[self.agents[1]], ";".join(labels[n] for n in self.witness)]


class ConflictSet:
    """Deduplicated conflicts kept in canonical (kind, agents, witness) order."""

    def __init__(self, conflicts=()):
        self._items = tuple(sorted(set(conflicts)))

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __contains__(self, item):
        return item in set(self._items)

    def __eq__(self, other):
        return isinstance(other, ConflictSet) and self._items == other._items

    def __hash__(self):
        return hash(self._items)

    def __repr__(self):
        return f"ConflictSet({list(self._items)!r})"

    def of_kind(self, kind: ConflictKind) -> "ConflictSet":
        return ConflictSet(c for c in self._items if c.kind == kind)

    def agent_pairs(self) -> set:
        """(kind, agents) keys, for matching that ignores witnesses."""
        return {(c.kind, c.agents) for c in self._items}

    def counts(self) -> dict:
        return {str(k): sum(c.kind == k for c in self._items) for k in ConflictKind}


def identify_conflicts(a: FullAdjacency, max_path_len: int = 2) -> ConflictSet:
    """All direct, indirect and implicit conflicts present in ``a``."""
    problems = validate_full_adjacency(a)
    if problems:
        raise StructuralError("invalid full adjacency: " + "; ".join(problems))
    if max_path_len < 2:
        raise ValueError("max_path_len must be >= 2")
    d = a.dims
    raw = kernels.scan_conflicts(a.matrix, d.n_agents, d.n_params, d.n_kpis, max_path_len)
    return ConflictSet(Conflict(kind, (lo, hi), witness) for kind, lo, hi, witness in raw)


def ground_truth_adjacency(spec) -> FullAdjacency:
    return boxplus_augment(spec.truth_learned(), spec.known())


def ground_truth_conflicts(spec, max_path_len: int = 2) -> ConflictSet:
    """Conflicts of the true graph described by a conflict model spec."""
    return identify_conflicts(ground_truth_adjacency(spec), max_path_len)


def write_conflicts(path, conflicts: ConflictSet, dims: EntityDims):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "agent_i", "agent_j", "witness"])
        for c in conflicts:
            w.writerow(c.format(dims))


def read_conflicts(path, dims: EntityDims) -> ConflictSet:
    index = {label: i for i, label in enumerate(dims.labels())}
    kinds = {str(k): k for k in ConflictKind}
    out = []
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    for row in rows[1:]:
        kind, ai, aj, witness = row
        out.append(Conflict(kinds[kind], (index[ai], index[aj]), tuple(index[x] for x in witness.split(";"))))
    return ConflictSet(out)


def conflicts_from_learned(learned, known, max_path_len: int = 2) -> ConflictSet:
    return identify_conflicts(boxplus_augment(learned, known), max_path_len)

