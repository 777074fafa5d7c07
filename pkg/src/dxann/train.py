"""Adam optimisation of the flow classifier, evaluation and metrics logging."""
from __future__ import annotations

import csv
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable

import numpy as np

from . import numeric as nm
from .classifier import LatentHeads, dxann_loss, predict_batch
from .data import Dataset, preprocess
from .errors import ConfigurationError, ContractError
from .flow import FlowConfig, FlowModel, make_flow
from .numeric import Parameter, Tensor

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 200
    batch_size: int = 50
    seed: int = 0
    alpha: float = 3.0
    c: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    dequantize: bool = True  # only affects image datasets
    n_blocks: int = 4
    conditioner: str = "mlp"
    hidden: tuple[int, ...] = (64, 64)
    mask: str | None = None
    conv_channels: tuple[int, ...] = (16,) * 8
    kernel_size: int = 3
    dense_width: int = 64
    clip_norm: float = 100.0
    learnable_means: bool = False

    def __post_init__(self):
        if self.lr < 0:
            raise ConfigurationError(f"learning rate must be non-negative, got {self.lr}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigurationError("epochs must be >= 0 and batch size >= 1")
        if self.c <= 0 or self.alpha <= 0 or self.eps <= 0 or self.clip_norm <= 0:
            raise ConfigurationError("c, alpha, eps and clip_norm must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigurationError("Adam betas must lie in [0, 1)")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        object.__setattr__(self, "conv_channels", tuple(int(c) for c in self.conv_channels))

    def flow_config(self, dim: int, spatial_shape=None) -> FlowConfig:
        return FlowConfig(dim=dim, n_blocks=self.n_blocks, mask=self.mask,
                          conditioner=self.conditioner, hidden=self.hidden,
                          conv_channels=self.conv_channels, kernel_size=self.kernel_size,
                          dense_width=self.dense_width, alpha=self.alpha,
                          spatial_shape=spatial_shape, seed=self.seed)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        d["conv_channels"] = list(self.conv_channels)
        # json cannot encode inf
        d["clip_norm"] = None if math.isinf(self.clip_norm) else self.clip_norm
        return d

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        d = dict(d)
        if d.get("clip_norm", 0) is None:
            d["clip_norm"] = math.inf
        return cls(**d)


@dataclass
class OptimizerState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(params: Iterable[Parameter], state: OptimizerState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """Bias-corrected Adam update in place; gradients are left untouched.

    Elements whose gradient is exactly zero keep their value (their moments
    still decay), so parameters a loss does not depend on never drift.
    """
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for p in params:
        g = p.grad
        m = state.m.setdefault(p.name, np.zeros_like(p.data))
        v = state.v.setdefault(p.name, np.zeros_like(p.data))
        if m.shape != p.shape or v.shape != p.shape:
            raise ContractError(f"optimizer state for {p.name} has shape {m.shape}, parameter is {p.shape}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        step = lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
        p.data -= np.where(g != 0, step, 0.0)


def clip_grad_norm(params: list[Parameter], max_norm: float) -> float:
    total = math.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params))
    if math.isfinite(max_norm) and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for p in params:
            p.grad *= scale
    return total


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    test_acc: float
    seconds: float = field(default=float("nan"), compare=False)


@dataclass
class MetricsLog:
    records: list[EpochRecord] = field(default_factory=list)

    def append(self, rec: EpochRecord) -> None:
        if self.records and rec.epoch <= self.records[-1].epoch:
            raise ContractError("metrics epochs must be strictly increasing")
        self.records.append(rec)

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, i) -> EpochRecord:
        return self.records[i]

    def to_csv(self, path: str | os.PathLike, timing: bool = False) -> None:
        """Write ``epoch,train_loss,train_acc,test_acc,seconds``.

        ``seconds`` is left empty unless ``timing`` is set, so that the file
        is a pure function of the training inputs.
        """
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "train_acc", "test_acc", "seconds"])
            for r in self.records:
                w.writerow([r.epoch, repr(r.train_loss), repr(r.train_acc), repr(r.test_acc),
                            repr(r.seconds) if timing else ""])


@dataclass
class EvalResult:
    accuracy: float
    mean_loss: float
    confusion: np.ndarray  # rows: true label, columns: predicted label


def evaluate(model: FlowModel, heads: LatentHeads, dataset: Dataset) -> EvalResult:
    if len(dataset) == 0:
        raise ContractError("cannot evaluate on an empty dataset")
    y = dataset.labels
    pred, z, ld = predict_batch(dataset.features, model, heads)
    confusion = np.zeros((2, 2), dtype=np.int64)
    np.add.at(confusion, (y, pred), 1)
    acc = float(np.trace(confusion)) / len(dataset)
    loss = dxann_loss(z, y, ld, LatentHeads(heads.mu0, heads.mu1, heads.c))
    return EvalResult(acc, loss, confusion)


def _accuracy(model: FlowModel, heads: LatentHeads, x: np.ndarray, y: np.ndarray) -> float:
    if len(y) == 0:
        return float("nan")
    pred, _, _ = predict_batch(x, model, heads)
    return float(np.mean(pred == y))


def train(train_set: Dataset, test_set: Dataset | None, config: TrainConfig = TrainConfig(),
          model: FlowModel | None = None,
          callback: Callable[[EpochRecord, FlowModel, LatentHeads], None] | None = None,
          ) -> tuple[FlowModel, LatentHeads, MetricsLog]:
    """Minimise the class-conditional flow loss with Adam over fixed-size shuffled batches.

    Features are expected to be preprocessed already (pixels in [0, 1]);
    fresh dequantization noise is drawn every epoch when enabled.
    ``callback`` is invoked after every epoch with the new metrics record.
    """
    n = len(train_set)
    if n == 0:
        raise ConfigurationError("training set is empty")
    n0, n1 = train_set.class_counts()
    if n0 == 0 or n1 == 0:
        raise ConfigurationError(f"training set must contain both classes (got {n0} of class 0, {n1} of class 1)")
    if config.batch_size > n:
        raise ConfigurationError(f"batch size {config.batch_size} exceeds training set size {n}")

    if model is None:
        model = make_flow(config.flow_config(train_set.dim, train_set.spatial_shape))
    elif model.dim != train_set.dim:
        raise ConfigurationError(f"model dimension {model.dim} vs data dimension {train_set.dim}")
    heads = LatentHeads.symmetric(train_set.dim, config.c, config.learnable_means)
    params = model.parameters() + heads.parameters()
    state = OptimizerState()
    rng = np.random.default_rng(config.seed)

    x_clean = train_set.features
    y = train_set.labels
    x_test = test_set.features if test_set is not None else np.zeros((0, train_set.dim))
    y_test = test_set.labels if test_set is not None else np.zeros(0, int)
    metrics = MetricsLog()
    start = time.perf_counter()
    nm.zero_grads(params)
    for epoch in range(1, config.epochs + 1):
        if config.dequantize and train_set.is_image:
            noise_seed = int(rng.integers(2**63))
            x_epoch = preprocess(train_set, dequantize=True, seed=noise_seed).features
        else:
            x_epoch = x_clean
        order = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, config.batch_size):
            idx = order[lo:lo + config.batch_size]
            z, ld = model.forward(Tensor(x_epoch[idx]))
            loss = dxann_loss(z, y[idx], ld, heads)
            nm.gradient(loss, params)
            clip_grad_norm(params, config.clip_norm)
            adam_step(params, state, config.lr, config.beta1, config.beta2, config.eps)
            nm.zero_grads(params)
            total += loss.item() * len(idx)
        rec = EpochRecord(epoch, total / n,
                          _accuracy(model, heads, x_clean, y),
                          _accuracy(model, heads, x_test, y_test),
                          time.perf_counter() - start)
        metrics.append(rec)
        if callback is not None:
            callback(rec, model, heads)
        log.debug("epoch %d loss %.4f train %.3f test %.3f", epoch, rec.train_loss,
                  rec.train_acc, rec.test_acc)
    return model, heads, metrics
