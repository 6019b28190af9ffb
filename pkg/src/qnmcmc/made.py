"""Masked autoencoder distribution estimator (MADE) over binary vectors.

Pure numpy with hand-written backpropagation and Adam. A single fixed mask is
used, so ``log_prob`` is one normalised distribution over {0,1}^D.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import InvalidArgumentError


@dataclass
class MadeArchitecture:
    """Layer sizes, variable ordering and hidden connectivity degrees.

    ``ordering[d]`` is the (1-based) position of input variable ``d`` in the
    autoregressive order; ``degrees[l][k]`` is m(k) for hidden unit k of layer l.
    """

    input_dim: int
    hidden_layers: int = 2
    hidden_width: int | None = None
    ordering: np.ndarray | None = None
    degrees: list | None = None

    def __post_init__(self):
        D = self.input_dim
        if D < 1 or self.hidden_layers < 1:
            raise InvalidArgumentError("input_dim and hidden_layers must be >= 1")
        if self.hidden_width is None:
            self.hidden_width = 2 * D
        if self.ordering is None:
            self.ordering = np.arange(1, D + 1)
        self.ordering = np.asarray(self.ordering, dtype=np.int64)
        if sorted(self.ordering.tolist()) != list(range(1, D + 1)):
            raise InvalidArgumentError("ordering must be a permutation of 1..D")
        top = max(D - 1, 1)
        if self.degrees is None:
            k = np.arange(self.hidden_width)
            self.degrees = [k % top + 1 for _ in range(self.hidden_layers)]
        self.degrees = [np.asarray(m, dtype=np.int64) for m in self.degrees]
        if len(self.degrees) != self.hidden_layers:
            raise InvalidArgumentError("need one degree vector per hidden layer")
        for m in self.degrees:
            if m.shape != (self.hidden_width,) or m.min() < 1 or m.max() > top:
                raise InvalidArgumentError(f"hidden degrees must lie in 1..{top}")

    @classmethod
    def random(cls, input_dim: int, hidden_layers: int = 2, hidden_width: int | None = None,
               seed=None) -> "MadeArchitecture":
        rng = np.random.default_rng(seed)
        width = hidden_width or 2 * input_dim
        top = max(input_dim - 1, 1)
        return cls(input_dim, hidden_layers, width,
                   ordering=rng.permutation(input_dim) + 1,
                   degrees=[rng.integers(1, top + 1, size=width) for _ in range(hidden_layers)])

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_layers": self.hidden_layers,
            "hidden_width": self.hidden_width,
            "ordering": self.ordering.tolist(),
            "degrees": [m.tolist() for m in self.degrees],
        }


def build_masks(arch: MadeArchitecture) -> list[np.ndarray]:
    """Binary masks shaped like the weight matrices (out, in), input to output."""
    o, degs = arch.ordering, arch.degrees
    masks = [(degs[0][:, None] >= o[None, :]).astype(np.float64)]
    for prev, cur in zip(degs[:-1], degs[1:]):
        masks.append((cur[:, None] >= prev[None, :]).astype(np.float64))
    masks.append((o[:, None] > degs[-1][None, :]).astype(np.float64))
    return masks


@dataclass
class TrainConfig:
    learning_rate: float = 0.005
    batch_size: int = 8
    epochs: int = 30
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    test_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidArgumentError("learning_rate must be > 0")
        if self.batch_size < 1 or self.epochs < 1:
            raise InvalidArgumentError("batch_size and epochs must be >= 1")
        if not 0 <= self.test_fraction < 1:
            raise InvalidArgumentError("test_fraction must be in [0, 1)")


def _check_binary(x) -> np.ndarray:
    x = np.asarray(x)
    if not np.all((x == 0) | (x == 1)):
        raise InvalidArgumentError("MADE inputs must be binary")
    return x.astype(np.float64)


@dataclass(eq=False)
class MadeModel:
    arch: MadeArchitecture
    weights: list
    biases: list
    masks: list = field(default=None)

    def __post_init__(self):
        if self.masks is None:
            self.masks = build_masks(self.arch)
        for W, M, b in zip(self.weights, self.masks, self.biases):
            if W.shape != M.shape or b.shape != (M.shape[0],):
                raise InvalidArgumentError("weight shapes do not match architecture")
        for M in self.masks:
            M.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.arch.input_dim

    @classmethod
    def initialize(cls, arch: MadeArchitecture, seed=None) -> "MadeModel":
        """Glorot-uniform weights (then masked), zero biases."""
        rng = np.random.default_rng(seed)
        masks = build_masks(arch)
        weights = []
        for M in masks:
            fan_out, fan_in = M.shape
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-lim, lim, size=M.shape) * M)
        return cls(arch, weights, [np.zeros(M.shape[0]) for M in masks], masks)

    @classmethod
    def zeros(cls, arch: MadeArchitecture) -> "MadeModel":
        masks = build_masks(arch)
        return cls(arch, [np.zeros(M.shape) for M in masks], [np.zeros(M.shape[0]) for M in masks], masks)

    def copy(self) -> "MadeModel":
        return MadeModel(self.arch, [W.copy() for W in self.weights],
                         [b.copy() for b in self.biases], self.masks)

    # -- evaluation ---------------------------------------------------------

    def _forward(self, X: np.ndarray):
        acts, pre = [X], []
        h = X
        for W, M, b in zip(self.weights[:-1], self.masks[:-1], self.biases[:-1]):
            z = h @ (W * M).T + b
            pre.append(z)
            h = np.maximum(z, 0.0)
            acts.append(h)
        logits = h @ (self.weights[-1] * self.masks[-1]).T + self.biases[-1]
        return logits, acts, pre

    def logits(self, x) -> np.ndarray:
        return self._forward(np.asarray(x, dtype=np.float64))[0]

    def forward(self, x) -> np.ndarray:
        """Conditionals y_d = p(x_d = 1 | variables earlier in the ordering)."""
        return expit(self.logits(_check_binary(x)))

    def log_prob(self, x):
        X = _check_binary(x)
        a = self.logits(X)
        lp = np.sum(X * a - np.logaddexp(0.0, a), axis=-1)
        return float(lp) if np.ndim(lp) == 0 else lp

    def enumerate_log_probs(self) -> np.ndarray:
        """log p over all 2**D inputs; entry i has bit j of i as variable j."""
        D = self.dim
        idx = np.arange(2**D, dtype=np.int64)
        return self.log_prob(((idx[:, None] >> np.arange(D)) & 1).astype(np.int8))

    def sample(self, count: int, seed) -> tuple[np.ndarray, np.ndarray]:
        """Ancestral sampling; returns (bits (count, D) int8, log p per sample)."""
        if count < 1:
            raise InvalidArgumentError("count must be >= 1")
        rng = np.random.default_rng(seed)
        u = rng.random((count, self.dim))
        X = np.zeros((count, self.dim))
        for step, var in enumerate(np.argsort(self.arch.ordering)):
            p1 = expit(self.logits(X)[:, var])
            X[:, var] = u[:, step] < p1
        bits = X.astype(np.int8)
        return bits, self.log_prob(bits)

    # -- training -----------------------------------------------------------

    def loss_and_grads(self, x):
        """Mean negative log-likelihood over the batch and its parameter gradients."""
        X = np.asarray(x, dtype=np.float64)
        B = X.shape[0]
        a, acts, pre = self._forward(X)
        loss = float(np.mean(np.sum(np.logaddexp(0.0, a) - X * a, axis=1)))
        delta = (expit(a) - X) / B
        gW = [None] * len(self.weights)
        gb = [None] * len(self.biases)
        for layer in range(len(self.weights) - 1, -1, -1):
            gW[layer] = (delta.T @ acts[layer]) * self.masks[layer]
            gb[layer] = delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ (self.weights[layer] * self.masks[layer])) * (pre[layer - 1] > 0)
        return loss, gW, gb

    # -- persistence --------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "architecture": self.arch.to_dict(),
            "weights": [W.tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MadeModel":
        a = d["architecture"]
        arch = MadeArchitecture(a["input_dim"], a["hidden_layers"], a["hidden_width"],
                                ordering=a["ordering"], degrees=a["degrees"])
        return cls(arch, [np.array(W, dtype=np.float64) for W in d["weights"]],
                   [np.array(b, dtype=np.float64) for b in d["biases"]])

    def save(self, path, **meta) -> None:
        Path(path).write_text(json.dumps({**meta, **self.to_dict()}) + "\n")

    @classmethod
    def load(cls, path) -> "MadeModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class LossCurves:
    epochs: list = field(default_factory=list)
    train: list = field(default_factory=list)
    test: list = field(default_factory=list)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "test_loss"])
            for e, tr, te in zip(self.epochs, self.train, self.test):
                w.writerow([e, repr(tr), repr(te)])


def _mean_nll(model: MadeModel, X: np.ndarray) -> float:
    if len(X) == 0:
        return float("nan")
    return float(-np.mean(model.log_prob(X)))


def train(model: MadeModel, data, config: TrainConfig | None = None) -> tuple[MadeModel, LossCurves]:
    """Fit by Adam on minibatch-mean cross-entropy.

    The data are shuffled once with ``config.seed``; the last
    ``test_fraction`` of the shuffled set is held out. Each epoch reshuffles
    the training part from the same stream. Losses are full-pass means
    recorded after every epoch.
    """
    config = config or TrainConfig()
    X = _check_binary(data)
    if X.ndim != 2 or len(X) == 0:
        raise InvalidArgumentError("dataset must be a non-empty (N, D) array")
    if X.shape[1] != model.dim:
        raise InvalidArgumentError(f"dataset width {X.shape[1]} != model dimension {model.dim}")
    rng = np.random.default_rng(config.seed)
    X = X[rng.permutation(len(X))]
    n_test = int(round(len(X) * config.test_fraction))
    if n_test >= len(X):
        n_test = 0
    X_train, X_test = X[: len(X) - n_test], X[len(X) - n_test:]

    model = model.copy()
    params = model.weights + model.biases
    m = [np.zeros_like(q) for q in params]
    v = [np.zeros_like(q) for q in params]
    b1, b2, lr, eps = config.beta1, config.beta2, config.learning_rate, config.eps
    t = 0
    curves = LossCurves()
    bs = config.batch_size
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(X_train))
        for start in range(0, len(order), bs):
            batch = X_train[order[start:start + bs]]
            _, gW, gb = model.loss_and_grads(batch)
            t += 1
            corr1, corr2 = 1 - b1**t, 1 - b2**t
            for q, g, mq, vq in zip(params, gW + gb, m, v):
                mq *= b1
                mq += (1 - b1) * g
                vq *= b2
                vq += (1 - b2) * g * g
                q -= lr * (mq / corr1) / (np.sqrt(vq / corr2) + eps)
        curves.epochs.append(epoch)
        curves.train.append(_mean_nll(model, X_train))
        curves.test.append(_mean_nll(model, X_test))
    return model, curves


def bits_to_lines(bits) -> str:
    return "".join("".join("1" if b else "0" for b in row) + "\n" for row in np.asarray(bits))


def write_dataset(bits, path) -> None:
    Path(path).write_text(bits_to_lines(bits))


def read_dataset(path) -> np.ndarray:
    rows = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not rows:
        raise InvalidArgumentError(f"empty dataset {path}")
    if any(set(r) - {"0", "1"} for r in rows) or len({len(r) for r in rows}) != 1:
        raise InvalidArgumentError("dataset lines must be equal-length strings of 0/1")
    return np.array([[c == "1" for c in r] for r in rows], dtype=np.int8)
