"""Two-tower interaction learner.

Each tower maps an entity's L samples through ``linear -> ReLU -> linear``
into a shared H-dimensional space. Rows are L2-normalized and compared by a
scaled cosine similarity whose scale ``alpha = exp(log_alpha)`` is learned.
Training minimizes BCE-with-logits between the parameter/KPI scores and the
label matrix using full-batch Adam; gradients are analytic.

All trainable scalars live in one flat float64 vector so that the optimizer
step is a single fused kernel call.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from rancl import kernels
from rancl.errors import SchemaError, StructuralError, TrainingError
from rancl.graph import EntityDims, ScoreMatrix
from rancl.metrics import accuracy, roc_auc

NORM_EPS = 1e-12
_TENSORS = ("w1", "b1", "w2", "b2")


@dataclass
class Hyperparams:
    latent_dim: int = 16
    hidden: int = 64
    learning_rate: float = 1e-3
    epochs: int = 500
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    init_scale: float | None = None  # None: 1/sqrt(fan_in) per layer
    seed: int = 0

    def validate(self):
        if self.latent_dim < 1 or self.hidden < 1:
            raise ValueError("latent_dim and hidden must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.init_scale is not None and not self.init_scale > 0:
            raise ValueError("init_scale must be > 0")
        return self


@dataclass
class TowerWeights:
    w1: np.ndarray  # hidden x L
    b1: np.ndarray  # hidden
    w2: np.ndarray  # H x hidden
    b2: np.ndarray  # H

    @property
    def shapes(self):
        return self.w1.shape[1], self.w1.shape[0], self.w2.shape[0]


@dataclass
class ModelParams:
    tower_p: TowerWeights
    tower_k: TowerWeights
    log_alpha: float

    @property
    def alpha(self) -> float:
        return math.exp(self.log_alpha)

    def flat(self) -> np.ndarray:
        parts = [getattr(t, n).ravel() for t in (self.tower_p, self.tower_k) for n in _TENSORS]
        return np.concatenate(parts + [np.array([self.log_alpha])])

    def to_json(self) -> dict:
        length, hidden, latent = self.tower_p.shapes

        def tower(t):
            return {n: {"shape": list(getattr(t, n).shape), "data": getattr(t, n).ravel().tolist()} for n in _TENSORS}

        return {
            "schema_version": 1,
            "input_dim": length,
            "hidden": hidden,
            "latent_dim": latent,
            "tower_p": tower(self.tower_p),
            "tower_k": tower(self.tower_k),
            "log_alpha": self.log_alpha,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ModelParams":
        if obj.get("schema_version") != 1:
            raise SchemaError(f"model schema version {obj.get('schema_version')!r}, expected 1")
        try:
            towers = []
            for key in ("tower_p", "tower_k"):
                arrays = {n: np.array(obj[key][n]["data"], dtype=np.float64).reshape(obj[key][n]["shape"]) for n in _TENSORS}
                towers.append(TowerWeights(**arrays))
            return cls(towers[0], towers[1], float(obj["log_alpha"]))
        except (KeyError, ValueError, TypeError) as exc:
            raise SchemaError(f"bad model file: {exc}") from None


def save_params(params: ModelParams, path):
    Path(path).write_text(json.dumps(params.to_json()) + "\n")


def load_params(path) -> ModelParams:
    try:
        return ModelParams.from_json(json.loads(Path(path).read_text()))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: {exc}") from None


@dataclass
class Embeddings:
    z_p: np.ndarray
    z_k: np.ndarray


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    accuracy: float
    auc: float


@dataclass
class TrainTrace:
    run_id: int = 0
    initial_loss: float = float("nan")
    records: list[EpochRecord] = field(default_factory=list)

    def column(self, name: str) -> list[float]:
        return [getattr(r, name) for r in self.records]

    def write_csv(self, path, append: bool = True):
        path = Path(path)
        new = not (append and path.exists() and path.stat().st_size > 0)
        with open(path, "w" if new else "a") as fh:
            if new:
                fh.write("run_id,epoch,loss,accuracy,auc\n")
            for r in self.records:
                fh.write(f"{self.run_id},{r.epoch},{r.loss:.17g},{r.accuracy:.17g},{r.auc:.17g}\n")


# -- forward pieces -------------------------------------------------------


def standardize_rows(x: np.ndarray) -> np.ndarray:
    """Z-score each entity row over its samples (constant rows become 0)."""
    x = np.asarray(x, dtype=np.float64)
    sd = x.std(axis=1, keepdims=True)
    sd[sd == 0] = 1.0
    return (x - x.mean(axis=1, keepdims=True)) / sd


def encode(x: np.ndarray, w: TowerWeights) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != w.w1.shape[1]:
        raise StructuralError(f"input {x.shape} does not match tower input dim {w.w1.shape[1]}")
    return np.maximum(x @ w.w1.T + w.b1, 0.0) @ w.w2.T + w.b2


def l2_normalize_rows(z: np.ndarray, eps: float = NORM_EPS) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    return z / np.maximum(np.linalg.norm(z, axis=1, keepdims=True), eps)


def cross_scores(z_p: np.ndarray, z_k: np.ndarray, log_alpha: float) -> np.ndarray:
    if z_p.shape[1] != z_k.shape[1]:
        raise StructuralError("embeddings must share the latent dimension")
    return math.exp(log_alpha) * (l2_normalize_rows(z_p) @ l2_normalize_rows(z_k).T)


def full_score_matrix(z_p, z_k, log_alpha: float, dims: EntityDims | None = None) -> ScoreMatrix:
    """Scaled cosine similarity over the stacked embeddings."""
    u = l2_normalize_rows(np.vstack([z_p, z_k]))
    s = math.exp(log_alpha) * (u @ u.T)
    s = 0.5 * (s + s.T)  # exact symmetry regardless of BLAS blocking
    if dims is None:
        dims = EntityDims(1, len(z_p), len(z_k))
    return ScoreMatrix(s, dims)


def _softplus_neg_abs(x):
    return np.log1p(np.exp(-np.abs(x)))


def _sigmoid(x):
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def bce_loss(s_pk, y) -> float:
    """Mean of ``max(x,0) - x*y + log(1 + exp(-|x|))`` over all cells."""
    x = np.asarray(s_pk, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise StructuralError(f"shape mismatch {x.shape} vs {y.shape}")
    return float(np.mean(np.maximum(x, 0.0) - x * y + _softplus_neg_abs(x)))


# -- flat parameter layout -------------------------------------------------


class _Layout:
    def __init__(self, length: int, hidden: int, latent: int):
        self.shapes = {"w1": (hidden, length), "b1": (hidden,), "w2": (latent, hidden), "b2": (latent,)}
        self.slices = {}
        off = 0
        for tower in ("p", "k"):
            for name in _TENSORS:
                size = math.prod(self.shapes[name])
                self.slices[tower, name] = (off, off + size)
                off += size
        self.log_alpha = off
        self.size = off + 1

    def tower(self, theta: np.ndarray, tower: str) -> TowerWeights:
        return TowerWeights(**{n: theta[slice(*self.slices[tower, n])].reshape(self.shapes[n]) for n in _TENSORS})

    def unpack(self, theta: np.ndarray) -> ModelParams:
        return ModelParams(self.tower(theta, "p"), self.tower(theta, "k"), float(theta[self.log_alpha]))

    def group(self, name: str) -> slice:
        """Slice for ``"log_alpha"`` or ``"<tower>.<tensor>"`` e.g. ``"p.w1"``."""
        if name == "log_alpha":
            return slice(self.log_alpha, self.log_alpha + 1)
        tower, tensor = name.split(".")
        return slice(*self.slices[tower, tensor])


def init_params(hp: Hyperparams, length: int, rng: np.random.Generator) -> np.ndarray:
    layout = _Layout(length, hp.hidden, hp.latent_dim)
    theta = np.zeros(layout.size)
    fan_in = {"w1": length, "b1": length, "w2": hp.hidden, "b2": hp.hidden}
    for tower in ("p", "k"):
        for name in _TENSORS:
            bound = hp.init_scale if hp.init_scale is not None else 1.0 / math.sqrt(fan_in[name])
            lo, hi = layout.slices[tower, name]
            theta[lo:hi] = rng.uniform(-bound, bound, hi - lo)
    theta[layout.log_alpha] = 0.0  # alpha starts at 1
    return theta


@dataclass
class _State:
    loss: float
    s_pk: np.ndarray
    z_p: np.ndarray
    z_k: np.ndarray
    log_alpha: float


def _loss_and_grad(theta, layout: _Layout, xp, xk, y, grad=None, need_grad=True):
    """Total BCE loss at ``theta`` and its gradient written into ``grad``."""
    la = theta[layout.log_alpha]
    alpha = math.exp(la)
    cache = {}
    for tower, x in (("p", xp), ("k", xk)):
        w = layout.tower(theta, tower)
        h = x @ w.w1.T
        h += w.b1
        a = np.maximum(h, 0.0)
        z = a @ w.w2.T + w.b2
        norm = np.maximum(np.linalg.norm(z, axis=1, keepdims=True), NORM_EPS)
        cache[tower] = (x, w, h, a, z, norm, z / norm)
    up, uk = cache["p"][6], cache["k"][6]
    s = alpha * (up @ uk.T)
    loss = float(np.mean(np.maximum(s, 0.0) - s * y + _softplus_neg_abs(s)))
    state = _State(loss, s, cache["p"][4], cache["k"][4], float(la))
    if not need_grad:
        return state, None
    if grad is None:
        grad = np.empty_like(theta)
    ds = (_sigmoid(s) - y) / s.size
    grad[layout.log_alpha] = np.sum(ds * s)
    du = {"p": alpha * (ds @ uk), "k": alpha * (ds.T @ up)}
    for tower in ("p", "k"):
        x, w, h, a, z, norm, u = cache[tower]
        d_u = du[tower]
        # through z / max(|z|, eps); rows below eps are scaled linearly
        dz = (d_u - u * np.sum(u * d_u, axis=1, keepdims=True) * (norm > NORM_EPS)) / norm
        g = layout.tower(grad, tower)
        np.matmul(dz.T, a, out=g.w2)
        g.b2[:] = dz.sum(axis=0)
        dh = dz @ w.w2
        dh *= h > 0
        np.matmul(dh.T, x, out=g.w1)
        g.b1[:] = dh.sum(axis=0)
    return state, grad


def _prepare(ds, hp: Hyperparams):
    hp.validate()
    xp = standardize_rows(ds.x_p)
    xk = standardize_rows(ds.x_k)
    if xp.shape[1] != xk.shape[1]:
        raise StructuralError("x_p and x_k must have the same number of samples")
    y = np.asarray(ds.labels, dtype=np.float64)
    layout = _Layout(xp.shape[1], hp.hidden, hp.latent_dim)
    return xp, xk, y, layout


def _auc_or_nan(s, y):
    if y.min() == y.max():
        return float("nan")
    return roc_auc(s, y)


def train(ds, hp: Hyperparams, callback=None, run_id: int = 0) -> tuple[ModelParams, TrainTrace]:
    """Full-batch Adam for ``hp.epochs`` steps; one step per epoch.

    ``callback(epoch, state)`` is invoked after every epoch with the
    post-update embeddings (``state.z_p``, ``state.z_k``, ``state.log_alpha``)
    and cross scores ``state.s_pk``; the arrays are only valid during the call.
    """
    xp, xk, y, layout = _prepare(ds, hp)
    rng = np.random.default_rng(hp.seed)
    theta = init_params(hp, xp.shape[1], rng)
    grad = np.empty_like(theta)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    b1, b2 = hp.adam_beta1, hp.adam_beta2
    state, _ = _loss_and_grad(theta, layout, xp, xk, y, grad, need_grad=hp.epochs > 0)
    trace = TrainTrace(run_id=run_id, initial_loss=state.loss)
    for epoch in range(1, hp.epochs + 1):
        kernels.adam_update(
            theta, grad, m, v, b1, b2, hp.adam_eps,
            hp.learning_rate / (1.0 - b1**epoch), 1.0 / math.sqrt(1.0 - b2**epoch),
        )
        state, _ = _loss_and_grad(theta, layout, xp, xk, y, grad, need_grad=epoch < hp.epochs)
        if not math.isfinite(state.loss):
            raise TrainingError(epoch)
        trace.records.append(EpochRecord(epoch, state.loss, accuracy(state.s_pk, y), _auc_or_nan(state.s_pk, y)))
        if callback is not None:
            callback(epoch, state)
    return _copy_params(layout.unpack(theta)), trace


def _copy_params(p: ModelParams) -> ModelParams:
    copy = lambda t: TowerWeights(*(getattr(t, n).copy() for n in _TENSORS))  # noqa: E731
    return ModelParams(copy(p.tower_p), copy(p.tower_k), p.log_alpha)


def embed(ds, params: ModelParams) -> Embeddings:
    """Embeddings of the dataset's (standardized) entities under ``params``."""
    return Embeddings(encode(standardize_rows(ds.x_p), params.tower_p), encode(standardize_rows(ds.x_k), params.tower_k))


def score_matrix(ds, params: ModelParams) -> ScoreMatrix:
    e = embed(ds, params)
    return full_score_matrix(e.z_p, e.z_k, params.log_alpha, ds.dims)


def loss_and_gradient(ds, hp: Hyperparams, params: ModelParams) -> tuple[float, np.ndarray]:
    """Loss and flat analytic gradient (order of :meth:`ModelParams.flat`)."""
    xp, xk, y, layout = _prepare(ds, hp)
    theta = params.flat()
    if theta.size != layout.size:
        raise StructuralError("params do not match the dataset/hyperparameter shapes")
    state, grad = _loss_and_grad(theta, layout, xp, xk, y)
    return state.loss, grad


def gradient_check(ds, hp: Hyperparams, params: ModelParams | None = None, groups=None,
                   step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``groups`` restricts the check to named parameter groups (``"log_alpha"``,
    ``"p.w1"``, ...); by default every scalar is checked. The relative error
    uses ``max(|a|, |b|, 1e-8)`` as denominator. Call at a generic random
    init: ReLU kinks within ``step`` of a pre-activation are not differentiable.
    """
    xp, xk, y, layout = _prepare(ds, hp)
    if params is None:
        theta = init_params(hp, xp.shape[1], np.random.default_rng(hp.seed))
        theta[layout.log_alpha] = np.random.default_rng(hp.seed + 1).uniform(-0.5, 0.5)
    else:
        theta = params.flat()
    _, grad = _loss_and_grad(theta, layout, xp, xk, y)
    if groups is None:
        index = np.arange(layout.size)
    else:
        index = np.concatenate([np.arange(layout.size)[layout.group(g)] for g in groups])
    worst = 0.0
    for i in index:
        keep = theta[i]
        theta[i] = keep + step
        up = _loss_and_grad(theta, layout, xp, xk, y, need_grad=False)[0].loss
        theta[i] = keep - step
        down = _loss_and_grad(theta, layout, xp, xk, y, need_grad=False)[0].loss
        theta[i] = keep
        numeric = (up - down) / (2 * step)
        err = abs(numeric - grad[i]) / max(abs(numeric), abs(grad[i]), 1e-8)
        worst = max(worst, err)
    return worst


def hyperparams_from_dict(obj: dict) -> Hyperparams:
    known = set(asdict(Hyperparams()))
    unknown = set(obj) - known
    if unknown:
        raise ValueError(f"unknown hyperparameters: {sorted(unknown)}")
    return Hyperparams(**obj).validate()
