"""Turning a real-valued score matrix into a binary learned adjacency.

Sparsemax projects each row onto the probability simplex and keeps the
support; the baselines threshold the scores directly. Every method is
followed by OR-symmetrization and the diagonal is always zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from rancl import kernels
from rancl.graph import LearnedAdjacency, ScoreMatrix


@dataclass(frozen=True)
class Sparsemax:
    """Keep the sparsemax support of each row.

    By default the whole row, self-score included, is projected, and the
    self-pair is dropped afterwards. ``mask_diagonal`` leaves the self-score
    out of the projection instead.
    """

    mask_diagonal: bool = False

    def __str__(self):
        return "sparsemax:masked" if self.mask_diagonal else "sparsemax"


@dataclass(frozen=True)
class StaticThreshold:
    tau: float

    def __post_init__(self):
        if not math.isfinite(self.tau):
            raise ValueError("threshold must be finite")

    def __str__(self):
        return f"threshold:{self.tau:g}"


@dataclass(frozen=True)
class TopK:
    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"top-k needs an integer k >= 1, got {self.k!r}")

    def __str__(self):
        return f"topk:{self.k}"


@dataclass(frozen=True)
class Quantile:
    """Keep the top ``q`` fraction of off-diagonal scores."""

    q: float

    def __post_init__(self):
        if not 0.0 < self.q < 1.0:
            raise ValueError(f"quantile fraction must lie in (0, 1), got {self.q!r}")

    def __str__(self):
        return f"quantile:{self.q:g}"


BinarizationMethod = Sparsemax | StaticThreshold | TopK | Quantile


def parse_binarizer(text: str) -> BinarizationMethod:
    """Parse ``sparsemax``, ``sparsemax:masked``, ``threshold:<tau>``, ``topk:<k>``
    or ``quantile:<q>``."""
    name, _, arg = text.strip().partition(":")
    name = name.lower()
    try:
        if name == "sparsemax":
            if arg not in ("", "masked", "unmasked"):
                raise ValueError(f"unknown sparsemax mode {arg!r}")
            return Sparsemax(mask_diagonal=arg == "masked")
        if name == "threshold":
            return StaticThreshold(float(arg))
        if name == "topk":
            return TopK(int(arg))
        if name == "quantile":
            return Quantile(float(arg))
    except ValueError as exc:
        raise ValueError(f"bad binarizer {text!r}: {exc}") from None
    raise ValueError(f"unknown binarizer {text!r}")


def sparsemax_row(z) -> np.ndarray:
    """Euclidean projection of a vector onto the probability simplex."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1 or z.size == 0:
        raise ValueError("sparsemax needs a non-empty vector")
    if not np.all(np.isfinite(z)):
        raise ValueError("sparsemax needs finite entries")
    return kernels.sparsemax_rows(z[None, :])[0]


def sparsemax_threshold(z) -> float:
    """The shift ``tau`` with ``sparsemax(z) = max(z - tau, 0)``."""
    z = np.asarray(z, dtype=np.float64)
    p = sparsemax_row(z)
    i = int(np.argmax(p))
    return float(z[i] - p[i])


def sparse_probabilities(s, mask_diagonal: bool = False) -> np.ndarray:
    """Row-wise sparsemax of a square score matrix."""
    return kernels.sparsemax_rows(_values(s), mask_diagonal)


def symmetrize(a) -> np.ndarray:
    """OR-rule symmetrization of a square binary matrix."""
    a = np.asarray(a) != 0
    return (a | a.T).astype(np.int8)


def _values(s) -> np.ndarray:
    v = np.asarray(s.values if isinstance(s, ScoreMatrix) else s, dtype=np.float64)
    if v.ndim != 2 or v.shape[0] != v.shape[1]:
        raise ValueError(f"score matrix must be square, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("score matrix must be finite")
    return v


def _offdiag(n):
    return ~np.eye(n, dtype=bool)


def directed_edges(s, method: BinarizationMethod) -> np.ndarray:
    """Row-wise edge decisions before symmetrization (diagonal zero)."""
    v = _values(s)
    n = v.shape[0]
    off = _offdiag(n)
    if isinstance(method, Sparsemax):
        edges = kernels.sparsemax_rows(v, method.mask_diagonal) > 0
    elif isinstance(method, StaticThreshold):
        edges = v > method.tau
    elif isinstance(method, TopK):
        if method.k >= n:
            raise ValueError(f"top-k needs k < row length {n}, got {method.k}")
        masked = np.where(off, v, -np.inf)
        order = np.argsort(-masked, axis=1, kind="stable")[:, : method.k]
        edges = np.zeros((n, n), dtype=bool)
        np.put_along_axis(edges, order, True, axis=1)
    elif isinstance(method, Quantile):
        cut = np.quantile(v[off], 1.0 - method.q)
        edges = v > cut
    else:
        raise TypeError(f"not a binarization method: {method!r}")
    return (edges & off).astype(np.int8)


def binarize(s, method: BinarizationMethod) -> LearnedAdjacency:
    """Binary, symmetric, zero-diagonal adjacency from a score matrix."""
    return LearnedAdjacency(symmetrize(directed_edges(s, method)))
