"""Class-conditional latent Gaussians, losses, prediction and ECS scores.

Each class ``i`` is modelled in latent space as ``N(mu_i, I)``. Prediction
picks the class under which the embedded sample is most likely, and the
Explainability Contribution Score of feature ``m`` is ``|z_m - mu_i,m|``
for the predicted class ``i``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numeric as nm
from .errors import ContractError, DimensionError
from .flow import FlowModel
from .numeric import Parameter, Tensor

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class LatentHeads:
    mu0: np.ndarray
    mu1: np.ndarray
    c: float = 1.0
    learnable: bool = False

    def __post_init__(self):
        self.mu0 = np.asarray(self.mu0, dtype=float)
        self.mu1 = np.asarray(self.mu1, dtype=float)
        if self.mu0.shape != self.mu1.shape or self.mu0.ndim != 1:
            raise DimensionError(f"class means must be vectors of equal length, got "
                                 f"{self.mu0.shape} and {self.mu1.shape}")
        if np.array_equal(self.mu0, self.mu1):
            raise ContractError("class means must differ in at least one coordinate")
        self._params: tuple[Parameter, Parameter] | None = None
        if self.learnable:
            self._params = (Parameter(self.mu0, "heads.mu0"), Parameter(self.mu1, "heads.mu1"))
            # share storage so optimizer updates show up in mu0/mu1
            self.mu0, self.mu1 = self._params[0].data, self._params[1].data

    @classmethod
    def symmetric(cls, dim: int, c: float = 1.0, learnable: bool = False) -> LatentHeads:
        """Antipodal means ``mu0 = -c * 1`` and ``mu1 = +c * 1``."""
        if c <= 0:
            raise ContractError(f"mean separation c must be positive, got {c}")
        return cls(-c * np.ones(dim), c * np.ones(dim), c, learnable)

    @property
    def dim(self) -> int:
        return len(self.mu0)

    def mean(self, label: int) -> np.ndarray:
        return self.mu1 if label == 1 else self.mu0

    def parameters(self) -> list[Parameter]:
        return list(self._params) if self._params else []


@dataclass(frozen=True)
class Prediction:
    label: int
    logp0: float
    logp1: float


@dataclass
class ECSMap:
    raw: np.ndarray
    normalized: np.ndarray
    label: int
    spatial_shape: tuple[int, int] | None = None

    def as_image(self, normalized: bool = True) -> np.ndarray:
        if self.spatial_shape is None:
            raise ContractError("ECS map has no spatial shape")
        values = self.normalized if normalized else self.raw
        return values.reshape(self.spatial_shape)


def gaussian_logpdf(z, mu) -> float | np.ndarray:
    """Log-density of ``N(mu, I)`` at ``z``; rows of a 2-D ``z`` are scored separately."""
    z = np.asarray(z, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if z.shape[-1] != mu.shape[-1] or mu.ndim != 1:
        raise DimensionError(f"gaussian_logpdf: z shape {z.shape} vs mean shape {mu.shape}")
    d = z.shape[-1]
    sq = np.sum((z - mu) ** 2, axis=-1)
    out = -0.5 * d * LOG_2PI - 0.5 * sq
    return float(out) if np.ndim(out) == 0 else out


def realnvp_loss(z, total_log_det, mu) -> float:
    """Negative log-likelihood of one sample under a single Gaussian target."""
    return -gaussian_logpdf(z, mu) - float(total_log_det)


def _check_labels(labels: np.ndarray, n: int) -> None:
    if n == 0:
        raise ContractError("dxann_loss: empty batch")
    if labels.shape != (n,):
        raise DimensionError(f"dxann_loss: {labels.shape[0] if labels.ndim else 0} labels for {n} samples")
    if not np.all((labels == 0) | (labels == 1)):
        raise ContractError(f"dxann_loss: labels must be 0 or 1, got {sorted(set(labels.tolist()))}")


def dxann_loss(zs, labels, log_dets, heads: LatentHeads):
    """Mean over the batch of ``-log q_y(z) - log_det``.

    Tensor inputs build a differentiable graph and return a scalar Tensor;
    plain arrays return a float.
    """
    differentiable = isinstance(zs, Tensor) or isinstance(log_dets, Tensor) or heads.learnable
    labels = np.asarray(labels)
    zs_t = nm.as_tensor(zs)
    if zs_t.data.ndim != 2:
        raise DimensionError(f"dxann_loss: expected a [B, D] batch, got shape {zs_t.shape}")
    n, d = zs_t.shape
    _check_labels(labels, n)
    if d != heads.dim:
        raise DimensionError(f"dxann_loss: latent dimension {d} vs heads dimension {heads.dim}")
    ld = nm.as_tensor(log_dets)
    if ld.shape != (n,):
        raise DimensionError(f"dxann_loss: {ld.shape} log-dets for {n} samples")

    y = labels.astype(zs_t.dtype)[:, None]
    if heads.learnable:
        mu0, mu1 = heads.parameters()
        target = (nm.matmul(Tensor(y), nm.reshape(mu1, (1, d)))
                  + nm.matmul(Tensor(1.0 - y), nm.reshape(mu0, (1, d))))
    else:
        target = Tensor(np.where(y == 1, heads.mu1, heads.mu0).astype(zs_t.dtype))
    sq = nm.reduce_sum(nm.square(zs_t - target), axes=1)
    nll = sq * 0.5 + 0.5 * d * LOG_2PI
    loss = nm.reduce_sum(nll - ld) * (1.0 / n)
    return loss if differentiable else loss.item()


def _nearest_mean(z: np.ndarray, heads: LatentHeads) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    d0 = np.sum((z - heads.mu0) ** 2, axis=-1)
    d1 = np.sum((z - heads.mu1) ** 2, axis=-1)
    # ties go to class 0
    return (d1 < d0).astype(int), d0, d1


def predict_latent(z, heads: LatentHeads) -> Prediction:
    """Prediction for a sample already mapped to latent space."""
    z = np.asarray(z, dtype=float)
    label, d0, d1 = _nearest_mean(z, heads)
    const = -0.5 * len(z) * LOG_2PI
    return Prediction(int(label), float(const - 0.5 * d0), float(const - 0.5 * d1))


def predict(x, model: FlowModel, heads: LatentHeads) -> Prediction:
    """Class whose latent Gaussian gives the embedded sample the higher likelihood.

    With identity covariances this is the nearest-mean rule, which is what is
    evaluated so that the tie-break is exact.
    """
    z, _ = model.transform(np.asarray(x, dtype=float))
    return predict_latent(z, heads)


def predict_batch(xs, model: FlowModel, heads: LatentHeads) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Labels, latent codes and log-dets for a ``[B, D]`` batch."""
    z, ld = model.transform(np.asarray(xs, dtype=float))
    labels, _, _ = _nearest_mean(z, heads)
    return labels, z, ld


def ecs_normalize(raw) -> np.ndarray:
    """Per-sample min-max scaling to [0, 1]; a constant map becomes all zeros."""
    raw = np.asarray(raw, dtype=float)
    if np.any(raw < 0):
        raise ContractError("ECS scores must be non-negative")
    lo, hi = raw.min(axis=-1, keepdims=True), raw.max(axis=-1, keepdims=True)
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (raw - lo) / safe, 0.0)


def ecs_raw(x, model: FlowModel, heads: LatentHeads) -> ECSMap:
    """Distance of every embedded feature from the predicted class mean."""
    z, _ = model.transform(np.asarray(x, dtype=float))
    pred = predict_latent(z, heads)
    raw = np.abs(z - heads.mean(pred.label))
    return ECSMap(raw, ecs_normalize(raw), pred.label, model.spatial_shape)


explain = ecs_raw


def ecs_batch(xs, model: FlowModel, heads: LatentHeads) -> tuple[np.ndarray, np.ndarray]:
    """Raw ECS rows and predicted labels for a ``[B, D]`` batch."""
    labels, z, _ = predict_batch(xs, model, heads)
    means = np.where(labels[:, None] == 1, heads.mu1, heads.mu0)
    return np.abs(z - means), labels


def _average_ranks(v: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their mean rank."""
    order = np.argsort(v, kind="stable")
    sv = v[order]
    ranks = np.empty(len(v))
    start = 0
    for end in range(1, len(v) + 1):
        if end == len(v) or sv[end] != sv[start]:
            ranks[order[start:end]] = 0.5 * (start + end + 1)
            start = end
    return ranks


def localization(scores, truth_mask) -> tuple[float, float, float]:
    """How well one score map singles out a ground-truth region.

    Returns ``(mean inside, mean outside, ROC-AUC)``, where the AUC is the
    Mann-Whitney probability that an inside pixel outscores an outside one
    (ties count half).
    """
    s = np.asarray(scores, dtype=float).ravel()
    m = np.asarray(truth_mask).ravel().astype(bool)
    if s.shape != m.shape:
        raise DimensionError(f"scores have {s.size} entries but mask has {m.size}")
    n_in, n_out = int(m.sum()), int((~m).sum())
    if n_in == 0 or n_out == 0:
        raise ContractError("mask must contain both inside and outside pixels")
    r = _average_ranks(s)
    auc = (r[m].sum() - n_in * (n_in + 1) / 2) / (n_in * n_out)
    return float(s[m].mean()), float(s[~m].mean()), float(auc)
