"""Synthetic datasets with ground truth, the on-disk dataset format and splitting.

Two generators stand in for real imaging data: two interleaved moons
(``D = 2``) and grayscale images in which class 1 carries a planted
Gaussian bump whose footprint is recorded as a ground-truth mask.

A dataset directory holds ``manifest.csv`` with either ``id,label,path``
rows pointing at P5 PGM images, or ``id,label,f0..f{D-1}`` rows of
feature values. Image datasets may carry ``masks/<id>.pgm``.
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import netpbm
from .errors import ConfigurationError, ContractError, FormatError

MANIFEST = "manifest.csv"


@dataclass
class Sample:
    features: np.ndarray
    label: int
    id: str
    truth_mask: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        if not np.all(np.isfinite(self.features)):
            raise ContractError(f"sample {self.id}: non-finite features")
        if self.label not in (0, 1):
            raise ContractError(f"sample {self.id}: label must be 0 or 1, got {self.label!r}")
        self.label = int(self.label)
        if self.truth_mask is not None:
            m = np.asarray(self.truth_mask)
            if m.shape != self.features.shape or not np.all((m == 0) | (m == 1)):
                raise ContractError(f"sample {self.id}: truth mask must be binary with length {self.features.size}")
            self.truth_mask = m.astype(np.uint8)


@dataclass
class Dataset:
    samples: list[Sample]
    dim: int
    spatial_shape: tuple[int, int] | None = None
    split: str | None = None  # "train", "test" or None
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        for s in self.samples:
            if s.features.shape != (self.dim,):
                raise ContractError(f"sample {s.id}: {s.features.size} features, dataset has D={self.dim}")
        if self.spatial_shape is not None:
            self.spatial_shape = tuple(int(v) for v in self.spatial_shape)
            if self.spatial_shape[0] * self.spatial_shape[1] != self.dim:
                raise ContractError(f"spatial shape {self.spatial_shape} does not match D={self.dim}")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def is_image(self) -> bool:
        return self.spatial_shape is not None

    @property
    def features(self) -> np.ndarray:
        if "X" not in self._cache:
            self._cache["X"] = (np.stack([s.features for s in self.samples])
                                if self.samples else np.zeros((0, self.dim)))
        return self._cache["X"]

    @property
    def labels(self) -> np.ndarray:
        if "y" not in self._cache:
            self._cache["y"] = np.array([s.label for s in self.samples], dtype=int)
        return self._cache["y"]

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.samples]

    def class_counts(self) -> tuple[int, int]:
        ones = int(self.labels.sum())
        return len(self) - ones, ones

    def get(self, sample_id: str) -> Sample:
        for s in self.samples:
            if s.id == sample_id:
                return s
        raise KeyError(sample_id)

    def subset(self, indices: Sequence[int], split: str | None = None) -> Dataset:
        return Dataset([self.samples[i] for i in indices], self.dim, self.spatial_shape, split)

    def with_features(self, features: np.ndarray) -> Dataset:
        samples = [replace(s, features=f) for s, f in zip(self.samples, features)]
        return Dataset(samples, self.dim, self.spatial_shape, self.split)


def gen_two_moons(n: int, noise: float = 0.1, seed: int = 0) -> Dataset:
    """Two interleaved half circles; the extra sample goes to class 0 when ``n`` is odd."""
    if n < 2:
        raise ContractError(f"two-moons needs n >= 2, got {n}")
    if noise < 0:
        raise ContractError(f"noise must be non-negative, got {noise}")
    rng = np.random.default_rng(seed)
    n1 = n // 2
    n0 = n - n1
    t0 = rng.uniform(0.0, math.pi, n0)
    t1 = rng.uniform(0.0, math.pi, n1)
    pts0 = np.column_stack([np.cos(t0), np.sin(t0)])
    pts1 = np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)])
    points = np.vstack([pts0, pts1])
    if noise > 0:
        points = points + noise * rng.standard_normal(points.shape)
    labels = np.r_[np.zeros(n0, int), np.ones(n1, int)]
    order = rng.permutation(n)
    samples = [Sample(points[i], int(labels[i]), f"moon-{k:05d}") for k, i in enumerate(order)]
    return Dataset(samples, 2)


def gen_blob_images(n: int, h: int = 16, w: int = 16, radius: float = 2.0,
                    amplitude: float = 0.8, noise: float = 0.1, seed: int = 0) -> Dataset:
    """Background noise in ``[0, noise]``; class 1 adds one Gaussian bump.

    The bump center is uniform over positions at least ``radius`` from every
    border and the truth mask marks pixels within ``2 * radius`` of it.
    Pixel values are clipped to [0, 1] and quantized to multiples of 1/255.
    """
    if h < 8 or w < 8:
        raise ConfigurationError(f"images must be at least 8x8, got {h}x{w}")
    if radius < 1 or radius > min(h, w) / 4:
        raise ConfigurationError(f"blob of radius {radius} cannot fit in a {h}x{w} image "
                                 f"(need 1 <= r <= {min(h, w) / 4:g})")
    if amplitude <= 0:
        raise ContractError(f"blob amplitude must be positive, got {amplitude}")
    if noise < 0:
        raise ContractError(f"noise must be non-negative, got {noise}")
    if n < 2:
        raise ContractError(f"blob images need n >= 2, got {n}")
    rng = np.random.default_rng(seed)
    n1 = n // 2
    labels = np.r_[np.zeros(n - n1, int), np.ones(n1, int)]
    labels = labels[rng.permutation(n)]
    ii, jj = np.indices((h, w), dtype=float)
    samples = []
    for k, label in enumerate(labels):
        img = rng.uniform(0.0, noise, (h, w)) if noise > 0 else np.zeros((h, w))
        mask = np.zeros((h, w), np.uint8)
        if label == 1:
            cy = rng.uniform(radius, h - 1 - radius)
            cx = rng.uniform(radius, w - 1 - radius)
            dist2 = (ii - cy) ** 2 + (jj - cx) ** 2
            img = img + amplitude * np.exp(-dist2 / (2.0 * radius ** 2))
            mask = (dist2 <= (2.0 * radius) ** 2).astype(np.uint8)
        img = np.round(np.clip(img, 0.0, 1.0) * 255.0) / 255.0
        samples.append(Sample(img.reshape(-1), int(label), f"blob-{k:05d}", mask.reshape(-1)))
    return Dataset(samples, h * w, (h, w))


def split(dataset: Dataset, fraction: float = 0.8, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Seeded shuffle, then the first ``round(fraction * n)`` samples form the training set."""
    if not 0 < fraction < 1:
        raise ContractError(f"train fraction must lie in (0, 1), got {fraction}")
    n = len(dataset)
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(math.floor(n * fraction + 0.5))
    return dataset.subset(order[:n_train], "train"), dataset.subset(order[n_train:], "test")


def preprocess(dataset: Dataset, dequantize: bool = False, seed: int = 0) -> Dataset:
    """Scale image pixels to [0, 1]; optionally dequantize with sub-step uniform noise.

    Dequantization maps ``x`` to ``(255 x + u) / 256`` with ``u ~ U[0, 1)``,
    which stays in [0, 1) and moves each pixel by less than 1/256.
    Vector datasets pass through unchanged.
    """
    if not dataset.is_image or len(dataset) == 0:
        return dataset
    x = dataset.features
    if x.max() > 1.0:
        x = x / 255.0
    if dequantize:
        u = np.random.default_rng(seed).uniform(0.0, 1.0, x.shape)
        x = (x * 255.0 + u) / 256.0
    return dataset.with_features(x)


def _to_bytes_image(values: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    return np.clip(np.round(np.asarray(values) * 255.0), 0, 255).astype(np.uint8).reshape(shape)


def save_dataset(dataset: Dataset, directory: str | os.PathLike) -> None:
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    with open(root / MANIFEST, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        if dataset.is_image:
            (root / "images").mkdir(exist_ok=True)
            if any(s.truth_mask is not None for s in dataset.samples):
                (root / "masks").mkdir(exist_ok=True)
            writer.writerow(["id", "label", "path"])
            for s in dataset.samples:
                rel = f"images/{s.id}.pgm"
                netpbm.write_pgm(root / rel, _to_bytes_image(s.features, dataset.spatial_shape))
                if s.truth_mask is not None:
                    netpbm.write_pgm(root / "masks" / f"{s.id}.pgm",
                                     s.truth_mask.reshape(dataset.spatial_shape) * 255)
                writer.writerow([s.id, s.label, rel])
        else:
            writer.writerow(["id", "label"] + [f"f{i}" for i in range(dataset.dim)])
            for s in dataset.samples:
                writer.writerow([s.id, s.label] + [repr(float(v)) for v in s.features])


def _parse_label(text: str, where: str) -> int:
    if text not in ("0", "1"):
        raise FormatError(f"{where}: label must be 0 or 1, got {text!r}")
    return int(text)


def load_dataset(directory: str | os.PathLike) -> Dataset:
    root = Path(directory)
    manifest = root / MANIFEST
    if not manifest.is_file():
        raise FormatError(f"missing manifest: {manifest}")
    with open(manifest, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise FormatError(f"{manifest}: empty file, no header")
    header, body = rows[0], rows[1:]
    if header == ["id", "label", "path"]:
        return _load_images(root, body)
    dim = len(header) - 2
    if header[:2] != ["id", "label"] or dim < 1 or header[2:] != [f"f{i}" for i in range(dim)]:
        raise FormatError(f"{manifest}: unrecognised header {','.join(header)!r}")
    samples = []
    for lineno, row in enumerate(body, start=2):
        where = f"{manifest}:{lineno}"
        if len(row) != dim + 2:
            raise FormatError(f"{where}: expected {dim + 2} fields, got {len(row)}")
        try:
            feats = np.array([float(v) for v in row[2:]])
        except ValueError:
            raise FormatError(f"{where} (id {row[0]}): malformed feature value") from None
        samples.append(Sample(feats, _parse_label(row[1], where), row[0]))
    return Dataset(samples, dim)


def _load_images(root: Path, body: list[list[str]]) -> Dataset:
    samples = []
    shape: tuple[int, int] | None = None
    mask_dir = root / "masks"
    for lineno, row in enumerate(body, start=2):
        where = f"{root / MANIFEST}:{lineno}"
        if len(row) != 3:
            raise FormatError(f"{where}: expected 3 fields, got {len(row)}")
        sid, label_text, rel = row
        label = _parse_label(label_text, where)
        path = root / rel
        if not path.is_file():
            raise FormatError(f"{where}: missing image file {rel}")
        img = netpbm.read_image(path)
        if img.ndim != 2:
            raise FormatError(f"{rel}: expected a grayscale P5 image")
        if shape is None:
            shape = img.shape
        elif img.shape != shape:
            raise FormatError(f"{rel}: image is {img.shape[0]}x{img.shape[1]}, "
                              f"expected {shape[0]}x{shape[1]}")
        mask = None
        mpath = mask_dir / f"{sid}.pgm"
        if mpath.is_file():
            m = netpbm.read_image(mpath)
            if m.shape != shape:
                raise FormatError(f"masks/{sid}.pgm: mask shape {m.shape} differs from image {shape}")
            mask = (m > 0).astype(np.uint8).reshape(-1)
        samples.append(Sample(img.reshape(-1) / 255.0, label, sid, mask))
    if shape is None:
        return Dataset([], 0, None)
    return Dataset(samples, shape[0] * shape[1], shape)
