"""Affine coupling blocks and their composition into an invertible flow.

A block leaves the masked coordinates unchanged and applies
``y = x * exp(log_s) + t`` to the rest, with ``(log_s, t)`` produced by a
conditioner network that only sees the masked coordinates. The raw
log-scale is squashed as ``alpha * tanh(raw / alpha)`` so every scale is
positive and bounded.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import numeric as nm
from .errors import ConfigurationError, DimensionError
from .numeric import Parameter, Tensor

MASK_KINDS = ("alternating", "checkerboard", "half-split")
CONDITIONER_KINDS = ("mlp", "cnn")


@dataclass(frozen=True)
class Mask:
    pattern: np.ndarray  # 1 = passed through unchanged and fed to the conditioner
    kind: str
    spatial_shape: tuple[int, int] | None = None

    def __post_init__(self):
        p = np.asarray(self.pattern)
        if p.ndim != 1 or not np.all((p == 0) | (p == 1)):
            raise ConfigurationError("mask pattern must be a binary vector")
        if p.min() == p.max():
            raise ConfigurationError("mask must contain at least one 0 and one 1")

    def complement(self) -> Mask:
        return Mask(1.0 - self.pattern, self.kind, self.spatial_shape)

    def __len__(self) -> int:
        return len(self.pattern)


def make_mask(kind: str, dim: int, spatial_shape: tuple[int, int] | None = None,
              dtype=np.float64) -> Mask:
    """Base mask of the given kind (blocks alternate it with its complement)."""
    if kind == "alternating":
        pattern = (np.arange(dim) % 2 == 0)
    elif kind == "half-split":
        pattern = np.arange(dim) < dim // 2
    elif kind == "checkerboard":
        if spatial_shape is None:
            raise ConfigurationError("checkerboard mask needs a spatial shape")
        h, w = spatial_shape
        if h * w != dim:
            raise ConfigurationError(f"spatial shape {h}x{w} does not cover dimension {dim}")
        i, j = np.indices((h, w))
        pattern = ((i + j) % 2 == 0).reshape(-1)
    else:
        raise ConfigurationError(f"unknown mask kind {kind!r}; expected one of {MASK_KINDS}")
    return Mask(pattern.astype(dtype), kind, spatial_shape)


def _lecun_normal(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    return (rng.standard_normal(shape) / np.sqrt(fan_in)).astype(dtype)


class MLPConditioner:
    """Dense tanh network mapping ``[B, D]`` to raw log-scales and shifts.

    With ``hidden=()`` the conditioner is a single affine map, which makes
    it easy to force constant outputs in tests.
    """

    kind = "mlp"

    def __init__(self, dim: int, hidden: Sequence[int], rng: np.random.Generator,
                 prefix: str = "", dtype=np.float64):
        self.dim = dim
        self.hidden = tuple(int(h) for h in hidden)
        self.layers: list[tuple[Parameter, Parameter]] = []
        width = dim
        for i, h in enumerate(self.hidden):
            w = Parameter(_lecun_normal(rng, (width, h), width, dtype), f"{prefix}hidden{i}.weight")
            b = Parameter(np.zeros(h, dtype), f"{prefix}hidden{i}.bias")
            self.layers.append((w, b))
            width = h
        # zero-initialised heads make a fresh block the identity map
        self.scale_w = Parameter(np.zeros((width, dim), dtype), f"{prefix}scale.weight")
        self.scale_b = Parameter(np.zeros(dim, dtype), f"{prefix}scale.bias")
        self.shift_w = Parameter(np.zeros((width, dim), dtype), f"{prefix}shift.weight")
        self.shift_b = Parameter(np.zeros(dim, dtype), f"{prefix}shift.bias")

    def parameters(self) -> list[Parameter]:
        params = [p for layer in self.layers for p in layer]
        return params + [self.scale_w, self.scale_b, self.shift_w, self.shift_b]

    def __call__(self, x: Tensor) -> tuple[Tensor, Tensor]:
        h = x
        for w, b in self.layers:
            h = nm.tanh(nm.add_bias(h @ w, b))
        return nm.add_bias(h @ self.scale_w, self.scale_b), nm.add_bias(h @ self.shift_w, self.shift_b)


class CNNConditioner:
    """Stack of same-padded tanh convolutions, one dense hidden layer, dense heads."""

    kind = "cnn"

    def __init__(self, dim: int, spatial_shape: tuple[int, int], channels: Sequence[int],
                 kernel_size: int, dense_width: int, rng: np.random.Generator,
                 prefix: str = "", dtype=np.float64):
        h, w = spatial_shape
        if h * w != dim:
            raise ConfigurationError(f"spatial shape {h}x{w} does not cover dimension {dim}")
        if kernel_size % 2 == 0:
            raise ConfigurationError(f"kernel size must be odd, got {kernel_size}")
        self.dim = dim
        self.spatial_shape = (h, w)
        self.channels = tuple(int(c) for c in channels)
        self.kernel_size = kernel_size
        self.dense_width = dense_width
        self.convs: list[tuple[Parameter, Parameter]] = []
        cin = 1
        for i, cout in enumerate(self.channels):
            fan_in = cin * kernel_size * kernel_size
            k = Parameter(_lecun_normal(rng, (cout, cin, kernel_size, kernel_size), fan_in, dtype),
                          f"{prefix}conv{i}.kernel")
            b = Parameter(np.zeros(cout, dtype), f"{prefix}conv{i}.bias")
            self.convs.append((k, b))
            cin = cout
        flat = cin * h * w
        self.dense_w = Parameter(_lecun_normal(rng, (flat, dense_width), flat, dtype), f"{prefix}dense.weight")
        self.dense_b = Parameter(np.zeros(dense_width, dtype), f"{prefix}dense.bias")
        self.scale_w = Parameter(np.zeros((dense_width, dim), dtype), f"{prefix}scale.weight")
        self.scale_b = Parameter(np.zeros(dim, dtype), f"{prefix}scale.bias")
        self.shift_w = Parameter(np.zeros((dense_width, dim), dtype), f"{prefix}shift.weight")
        self.shift_b = Parameter(np.zeros(dim, dtype), f"{prefix}shift.bias")

    def parameters(self) -> list[Parameter]:
        params = [p for layer in self.convs for p in layer]
        return params + [self.dense_w, self.dense_b,
                         self.scale_w, self.scale_b, self.shift_w, self.shift_b]

    def __call__(self, x: Tensor) -> tuple[Tensor, Tensor]:
        n = x.shape[0]
        h, w = self.spatial_shape
        a = nm.reshape(x, (n, 1, h, w))
        for k, b in self.convs:
            a = nm.tanh(nm.conv2d(a, k, b))
        a = nm.reshape(a, (n, -1))
        a = nm.tanh(nm.add_bias(a @ self.dense_w, self.dense_b))
        return nm.add_bias(a @ self.scale_w, self.scale_b), nm.add_bias(a @ self.shift_w, self.shift_b)


class AffineCouplingBlock:
    def __init__(self, mask: Mask, conditioner, alpha: float = 3.0):
        if alpha <= 0:
            raise ConfigurationError(f"clamp alpha must be positive, got {alpha}")
        self.mask = mask
        self.conditioner = conditioner
        self.alpha = float(alpha)
        self.dim = len(mask)

    def parameters(self) -> list[Parameter]:
        return self.conditioner.parameters()

    def _check(self, x) -> None:
        if x.shape[-1] != self.dim or len(x.shape) not in (1, 2):
            raise DimensionError(f"coupling block of dimension {self.dim} got input of shape {x.shape}")

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor]:
        """Differentiable forward pass on ``[B, D]`` (or ``[D]``) tensors.

        Returns ``(y, log_det)`` where ``log_det`` has shape ``[B]`` (or ``()``).
        """
        self._check(x)
        single = len(x.shape) == 1
        if single:
            x = nm.reshape(x, (1, self.dim))
        keep = np.broadcast_to(self.mask.pattern.astype(x.dtype), x.shape)
        free = 1.0 - keep
        raw_s, t = self.conditioner(x * Tensor(keep))
        log_s = nm.tanh(raw_s / self.alpha) * self.alpha * Tensor(free)
        y = x * nm.exp(log_s) + t * Tensor(free)
        log_det = nm.reduce_sum(log_s, axes=1)
        if single:
            return nm.reshape(y, (self.dim,)), nm.reshape(log_det, ())
        return y, log_det

    def log_scale_and_shift(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Effective (masked, clamped) log-scale and shift for ``[B, D]`` inputs."""
        keep = self.mask.pattern.astype(x.dtype)
        raw_s, t = self.conditioner(Tensor(x * keep))
        free = 1.0 - keep
        log_s = np.tanh(raw_s.data / self.alpha) * self.alpha * free
        return log_s, t.data * free

    def inverse(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y)
        self._check(y)
        single = y.ndim == 1
        yb = y[None] if single else y
        # the masked part of y equals the masked part of x
        log_s, t = self.log_scale_and_shift(yb)
        x = (yb - t) * np.exp(-log_s)
        return x[0] if single else x


@dataclass(frozen=True)
class FlowConfig:
    dim: int
    n_blocks: int = 4
    mask: str | None = None  # None: checkerboard for images, alternating otherwise
    conditioner: str = "mlp"
    hidden: tuple[int, ...] = (64, 64)
    conv_channels: tuple[int, ...] = (16,) * 8
    kernel_size: int = 3
    dense_width: int = 64
    alpha: float = 3.0
    spatial_shape: tuple[int, int] | None = None
    seed: int = 0
    dtype: str = "float64"

    def __post_init__(self):
        if self.dim < 2:
            raise ConfigurationError(f"flow dimension must be >= 2, got {self.dim}")
        if self.n_blocks < 2:
            raise ConfigurationError(f"flow needs at least 2 blocks, got {self.n_blocks}")
        if self.conditioner not in CONDITIONER_KINDS:
            raise ConfigurationError(f"unknown conditioner {self.conditioner!r}")
        if self.conditioner == "cnn" and self.spatial_shape is None:
            raise ConfigurationError("cnn conditioner needs a spatial shape")
        if self.dtype not in ("float64", "float32"):
            raise ConfigurationError(f"unsupported dtype {self.dtype!r}")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        object.__setattr__(self, "conv_channels", tuple(int(c) for c in self.conv_channels))
        if self.spatial_shape is not None:
            object.__setattr__(self, "spatial_shape", tuple(int(s) for s in self.spatial_shape))

    @property
    def mask_kind(self) -> str:
        if self.mask is not None:
            return self.mask
        return "checkerboard" if self.spatial_shape is not None else "alternating"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        d["conv_channels"] = list(self.conv_channels)
        d["spatial_shape"] = list(self.spatial_shape) if self.spatial_shape else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> FlowConfig:
        d = dict(d)
        d["hidden"] = tuple(d.get("hidden", ()))
        d["conv_channels"] = tuple(d.get("conv_channels", ()))
        if d.get("spatial_shape") is not None:
            d["spatial_shape"] = tuple(d["spatial_shape"])
        return cls(**d)


@dataclass
class FlowModel:
    blocks: list[AffineCouplingBlock]
    dim: int
    spatial_shape: tuple[int, int] | None = None
    config: FlowConfig | None = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.blocks) < 2:
            raise ConfigurationError("a flow needs at least 2 coupling blocks")
        for a, b in zip(self.blocks, self.blocks[1:]):
            if not np.array_equal(a.mask.pattern, 1.0 - b.mask.pattern):
                raise ConfigurationError("consecutive blocks must use complementary masks")

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    def parameters(self) -> list[Parameter]:
        return [p for block in self.blocks for p in block.parameters()]

    def named_parameters(self) -> dict[str, Parameter]:
        return {p.name: p for p in self.parameters()}

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor]:
        z, total = x, None
        for block in self.blocks:
            z, ld = block.forward(z)
            total = ld if total is None else total + ld
        return z, total

    def inverse(self, z: np.ndarray) -> np.ndarray:
        x = np.asarray(z)
        for block in reversed(self.blocks):
            x = block.inverse(x)
        return x

    def transform(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Non-differentiable forward pass returning numpy ``(z, log_det)``."""
        z, ld = self.forward(Tensor(np.asarray(x, dtype=self._dtype())))
        return z.numpy(), ld.numpy()

    def _dtype(self):
        return np.dtype(self.config.dtype) if self.config else np.float64


def couple_forward(x, block: AffineCouplingBlock):
    """Forward one block; Tensors in give Tensors out, arrays give numpy ``(y, log_det)``."""
    if isinstance(x, Tensor):
        return block.forward(x)
    y, ld = block.forward(Tensor(np.asarray(x, dtype=float)))
    return y.numpy(), (ld.item() if ld.data.ndim == 0 else ld.numpy())


def couple_inverse(y, block: AffineCouplingBlock) -> np.ndarray:
    return block.inverse(np.asarray(y, dtype=float))


def flow_forward(x, model: FlowModel):
    """Forward the whole flow; Tensors in give Tensors out, arrays give numpy ``(z, log_det)``."""
    if isinstance(x, Tensor):
        return model.forward(x)
    z, ld = model.transform(x)
    return z, (float(ld) if ld.ndim == 0 else ld)


def flow_inverse(z, model: FlowModel) -> np.ndarray:
    return model.inverse(np.asarray(z, dtype=model._dtype()))


def make_flow(config: FlowConfig | None = None, **kwargs) -> FlowModel:
    """Build a flow whose conditioners end in zero layers, so it starts as the identity.

    Accepts a :class:`FlowConfig` or its fields as keyword arguments.
    """
    if config is None:
        config = FlowConfig(**kwargs)
    elif kwargs:
        raise TypeError("pass either a FlowConfig or keyword fields, not both")
    dtype = np.dtype(config.dtype)
    rng = np.random.default_rng(config.seed)
    base = make_mask(config.mask_kind, config.dim, config.spatial_shape, dtype)
    blocks = []
    for k in range(config.n_blocks):
        mask = base if k % 2 == 0 else base.complement()
        prefix = f"block{k}."
        if config.conditioner == "mlp":
            cond = MLPConditioner(config.dim, config.hidden, rng, prefix, dtype)
        else:
            cond = CNNConditioner(config.dim, config.spatial_shape, config.conv_channels,
                                  config.kernel_size, config.dense_width, rng, prefix, dtype)
        blocks.append(AffineCouplingBlock(mask, cond, config.alpha))
    return FlowModel(blocks, config.dim, config.spatial_shape, config)
