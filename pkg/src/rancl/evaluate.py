"""Multi-seed experiment harness: train, binarize every epoch, score.

Run ``r`` of a sweep uses seed ``root_seed + r`` both for its dataset and for
its weight initialization. At every epoch each binarizer is applied to the
current score matrix and scored against the ground truth: graph F1 over the
learned block, and F1 of the identified indirect and implicit conflicts.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from rancl import binarize as bz
from rancl.datagen import ConflictModelSpec, generate
from rancl.errors import TrainingError
from rancl.identify import ConflictKind, conflicts_from_learned, ground_truth_conflicts
from rancl.metrics import epochs_to_target, f1_binary
from rancl.twotower import Hyperparams, full_score_matrix, score_matrix, train

TASKS = ("graph", "indirect", "implicit")
DEFAULT_LENGTH = 10_000
TUNING_EPOCHS = 200
HELDOUT_OFFSET = 1_000_000  # tuning seed = root + offset, clear of the run seeds


@dataclass(frozen=True)
class MetricRecord:
    run_id: int
    epoch: int
    binarizer: str
    f1_graph: float
    f1_indirect: float
    f1_implicit: float
    accuracy: float
    auc: float


@dataclass(frozen=True)
class TaskSummary:
    binarizer: str
    task: str
    median_epochs: float  # inf when fewer than half the runs reached the target
    q1: float
    q3: float
    n_reached: int
    n_runs: int


@dataclass
class SweepResult:
    binarizers: list[str]
    n_runs: int
    records: list[MetricRecord] = field(default_factory=list)
    failures: dict[int, int] = field(default_factory=dict)  # run_id -> diverged epoch
    f1_target: float = 1.0

    def series(self, run_id: int, binarizer: str, column: str) -> list[float]:
        return [getattr(r, column) for r in self.records if r.run_id == run_id and r.binarizer == binarizer]

    def epochs_to(self, binarizer: str, task: str, target: float | None = None) -> list[int | None]:
        """Per-run first epoch at which ``f1_<task>`` reaches ``target``."""
        target = self.f1_target if target is None else target
        out = []
        for run in range(self.n_runs):
            s = self.series(run, binarizer, f"f1_{task}")
            out.append(epochs_to_target(s, target) if s else None)
        return out

    def learn_epochs(self, acc_target: float = 0.8, auc_target: float = 0.8) -> list[int | None]:
        """Per-run first epoch with accuracy and AUC both at their targets."""
        first = self.binarizers[0]
        out = []
        for run in range(self.n_runs):
            rows = [r for r in self.records if r.run_id == run and r.binarizer == first]
            both = [1.0 if r.accuracy >= acc_target and r.auc >= auc_target else 0.0 for r in rows]
            out.append(epochs_to_target(both, 1.0) if both else None)
        return out

    def summary(self) -> list[TaskSummary]:
        rows = []
        for b in self.binarizers:
            for task in TASKS:
                epochs = self.epochs_to(b, task)
                med, q1, q3 = summarize_epochs(epochs)
                rows.append(TaskSummary(b, task, med, q1, q3, sum(e is not None for e in epochs), self.n_runs))
        return rows


def _quantile_sorted(xs: list[float], q: float) -> float:
    # linear interpolation between order statistics; inf-safe
    h = (len(xs) - 1) * q
    lo = math.floor(h)
    hi = min(lo + 1, len(xs) - 1)
    frac = h - lo
    if frac == 0 or xs[lo] == xs[hi]:
        return xs[lo]
    return xs[lo] + (xs[hi] - xs[lo]) * frac


def summarize_epochs(epochs) -> tuple[float, float, float]:
    """Median, first and third quartile; runs that never reached count as inf."""
    xs = sorted(math.inf if e is None else float(e) for e in epochs)
    if not xs:
        raise ValueError("no runs to summarize")
    return _quantile_sorted(xs, 0.5), _quantile_sorted(xs, 0.25), _quantile_sorted(xs, 0.75)


# -- baseline parameter resolution -----------------------------------------


def truth_density(spec: ConflictModelSpec) -> float:
    """Fraction of unordered learned-node pairs that are true edges."""
    t = np.asarray(spec.truth_learned().matrix)
    n = t.shape[0]
    return float(np.sum(np.triu(t, 1)) / (n * (n - 1) / 2))


def default_topk(spec: ConflictModelSpec) -> int:
    """Mean true degree of the learned nodes, rounded up."""
    t = np.asarray(spec.truth_learned().matrix)
    return max(1, math.ceil(t.sum() / t.shape[0]))


def best_threshold(s: np.ndarray, truth: np.ndarray) -> float:
    """Midpoint of the widest threshold interval with maximal graph F1."""
    s = np.asarray(s, dtype=np.float64)
    iu = np.triu_indices(s.shape[0], 1)
    values = np.unique(s[iu])
    # every distinct cut lies between consecutive scores (or outside them)
    edges = np.concatenate([[values[0] - 1.0], values, [values[-1] + 1.0]])
    best = (-1.0, -1.0, 0.0)
    for lo, hi in zip(edges[:-1], edges[1:]):
        tau = 0.5 * (lo + hi)
        f1 = f1_binary((s > tau).astype(np.int8), np.asarray(truth))[2]
        key = (f1, hi - lo)
        if key > best[:2]:
            best = (f1, hi - lo, tau)
    return float(best[2])


def tune_threshold(spec: ConflictModelSpec, hp: Hyperparams, seed: int, length: int = DEFAULT_LENGTH,
                   epochs: int = TUNING_EPOCHS) -> float:
    """Threshold maximizing graph F1 on a held-out run's scores after ``epochs``."""
    ds = generate(spec.with_seed(seed), length)
    params, _ = train(ds, replace(hp, seed=seed, epochs=epochs))
    return best_threshold(score_matrix(ds, params).values, spec.truth_learned().matrix)


def resolve_binarizers(names, spec: ConflictModelSpec, hp: Hyperparams, root_seed: int,
                       length: int = DEFAULT_LENGTH) -> list[bz.BinarizationMethod]:
    """Parse binarizer strings; ``threshold:tuned``, ``topk:auto`` and
    ``quantile:auto`` are resolved against the conflict model (tuning uses the held-out
    seed ``root_seed + HELDOUT_OFFSET``)."""
    out = []
    for name in names:
        key = name.strip().lower()
        if key == "threshold:tuned":
            out.append(bz.StaticThreshold(tune_threshold(spec, hp, root_seed + HELDOUT_OFFSET, length)))
        elif key == "topk:auto":
            out.append(bz.TopK(default_topk(spec)))
        elif key == "quantile:auto":
            out.append(bz.Quantile(truth_density(spec)))
        else:
            out.append(bz.parse_binarizer(name))
    return out


# -- runs --------------------------------------------------------------------


def _conflict_f1(pred, truth, kind, match):
    p, t = pred.of_kind(kind), truth.of_kind(kind)
    if match == "agents":
        return f1_binary(p.agent_pairs(), t.agent_pairs())[2]
    return f1_binary(set(p), set(t))[2]


def _run(args):
    run_id, spec, hp, methods, labels, length, root_seed, match, max_path_len = args
    seed = root_seed + run_id
    run_spec = spec.with_seed(seed)
    ds = generate(run_spec, length)
    truth_graph = np.asarray(ds.truth_learned.matrix)
    truth_conflicts = ground_truth_conflicts(run_spec, max_path_len)
    rows = []

    def on_epoch(epoch, state):
        s = full_score_matrix(state.z_p, state.z_k, state.log_alpha, ds.dims)
        for method, label in zip(methods, labels):
            learned = bz.binarize(s, method)
            found = conflicts_from_learned(learned, ds.known, max_path_len)
            rows.append([
                run_id, epoch, label,
                f1_binary(learned.matrix, truth_graph)[2],
                _conflict_f1(found, truth_conflicts, ConflictKind.INDIRECT, match),
                _conflict_f1(found, truth_conflicts, ConflictKind.IMPLICIT, match),
            ])

    failed = None
    try:
        _, trace = train(ds, replace(hp, seed=seed), callback=on_epoch, run_id=run_id)
        records = trace.records
    except TrainingError as exc:
        failed = exc.epoch
        records = []
    by_epoch = {r.epoch: r for r in records}
    out = []
    for row in rows:
        r = by_epoch.get(row[1])
        if r is None:
            continue
        out.append(MetricRecord(*row, r.accuracy, r.auc))
    return run_id, out, failed


def run_sweep(spec: ConflictModelSpec, hp: Hyperparams, n_runs: int, binarizers, root_seed: int = 0,
              length: int = DEFAULT_LENGTH, jobs: int = 1, match: str = "strict", max_path_len: int = 2,
              f1_target: float = 1.0) -> SweepResult:
    """Train ``n_runs`` seeded runs and score every binarizer at every epoch.

    ``binarizers`` holds method objects or strings (see
    :func:`resolve_binarizers`). A run that diverges is recorded in
    ``failures`` and counts as never reaching any target.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    if match not in ("strict", "agents"):
        raise ValueError(f"unknown match mode {match!r}")
    spec.validate()
    hp.validate()
    methods = [b if not isinstance(b, str) else None for b in binarizers]
    strings = [b for b in binarizers if isinstance(b, str)]
    resolved = iter(resolve_binarizers(strings, spec, hp, root_seed, length))
    methods = [m if m is not None else next(resolved) for m in methods]
    labels = [str(m) for m in methods]
    if len(set(labels)) != len(labels):
        raise ValueError(f"duplicate binarizers: {labels}")
    tasks = [(r, spec, hp, methods, labels, length, root_seed, match, max_path_len) for r in range(n_runs)]
    result = SweepResult(binarizers=labels, n_runs=n_runs, f1_target=f1_target)
    jobs = max(1, min(jobs or os.cpu_count() or 1, n_runs))
    if jobs == 1:
        outputs = [_run(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outputs = list(pool.map(_run, tasks))
    for run_id, records, failed in sorted(outputs, key=lambda o: o[0]):
        result.records.extend(records)
        if failed is not None:
            result.failures[run_id] = failed
    return result


# -- output ------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, float):
        return "NA" if not math.isfinite(x) else f"{x:.17g}"
    return str(x)


def write_sweep_csv(path, result: SweepResult):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run_id", "epoch", "binarizer", "f1_graph", "f1_indirect", "f1_implicit", "accuracy", "auc"])
        for r in result.records:
            w.writerow([_fmt(x) for x in (r.run_id, r.epoch, r.binarizer, r.f1_graph, r.f1_indirect,
                                          r.f1_implicit, r.accuracy, r.auc)])


def write_summary_csv(path, rows: list[TaskSummary]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["binarizer", "task", "median_epochs", "q1", "q3", "n_reached", "n_runs"])
        for r in rows:
            w.writerow([r.binarizer, r.task, _fmt(r.median_epochs), _fmt(r.q1), _fmt(r.q3), r.n_reached, r.n_runs])


def read_summary_csv(path) -> list[TaskSummary]:
    def num(x):
        return math.inf if x == "NA" else float(x)

    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [TaskSummary(r["binarizer"], r["task"], num(r["median_epochs"]), num(r["q1"]), num(r["q3"]),
                        int(r["n_reached"]), int(r["n_runs"])) for r in rows]
