"""Forward-only random-weight CNN used as a deterministic image encoder.

Tensors are float32 numpy arrays laid out (height, width, channels); batched
tensors carry a leading batch axis. Convolution is computed as five GEMMs
(one per kernel row) over a horizontally unrolled window. Every output cell
is produced by the same sequence of row-independent GEMM rows no matter how
large the evaluated region is, which is what lets the matcher recompute a
sub-region of the network and get bit-identical values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .prng import gaussian_weights

KERNEL_SIZE = 5
POOL_WINDOW = 5
LEAKY_SLOPE = 0.01
INPUT_CHANNELS = 3


@dataclass(frozen=True)
class ConvStageSpec:
    in_channels: int
    out_channels: int
    weight_mean: float
    weight_std: float
    kernel_size: int = KERNEL_SIZE
    stride: int = 1
    padding: str = "same"
    activation_slope: float = LEAKY_SLOPE

    def __post_init__(self):
        if self.kernel_size != KERNEL_SIZE:
            raise ValueError(f"kernel_size must be {KERNEL_SIZE}, got {self.kernel_size}")
        if self.weight_std <= 0:
            raise ValueError("weight_std must be positive")
        if self.stride != 1 or self.padding != "same":
            raise ValueError("conv stages use stride 1 with same padding")
        if not 0 < self.activation_slope < 1:
            raise ValueError("activation_slope must lie in (0, 1)")


@dataclass(frozen=True)
class PoolStageSpec:
    stride: int
    window: int = POOL_WINDOW
    padding: str = "same"

    def __post_init__(self):
        if self.stride not in (1, 2):
            raise ValueError(f"pool stride must be 1 or 2, got {self.stride}")
        if self.window != POOL_WINDOW or self.padding != "same":
            raise ValueError("pool stages use a 5x5 window with same padding")


def _default_stages():
    channels = (INPUT_CHANNELS, 16, 32, 64)
    strides = (2, 1, 2)
    return tuple(
        (
            ConvStageSpec(channels[i], channels[i + 1], 0.001 * (i + 1), 0.01 * (i + 1)),
            PoolStageSpec(strides[i]),
        )
        for i in range(3)
    )


@dataclass(frozen=True)
class NetworkSpec:
    """Three conv+pool stages followed by a 1x1 projection to ten channels."""

    seed: int = 0
    stages: tuple = field(default_factory=_default_stages)
    output_channels: int = 10
    output_weight_mean: float = 0.004
    output_weight_std: float = 0.04
    output_slope: float = LEAKY_SLOPE

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if len(self.stages) != 3:
            raise ValueError("exactly three conv+pool stages are required")
        if [c.out_channels for c, _ in self.stages] != [16, 32, 64]:
            raise ValueError("conv out_channels must progress 16, 32, 64")
        if self.stages[0][0].in_channels != INPUT_CHANNELS:
            raise ValueError("first stage must take RGB input")
        for (prev, _), (nxt, _) in zip(self.stages, self.stages[1:]):
            if nxt.in_channels != prev.out_channels:
                raise ValueError("stage channel counts do not chain")
        if self.output_weight_std <= 0:
            raise ValueError("output_weight_std must be positive")

    def encoding_shape(self, height: int = 128, width: int = 128) -> tuple[int, int, int]:
        for _, pool in self.stages:
            height = math.ceil(height / pool.stride)
            width = math.ceil(width / pool.stride)
        return (height, width, self.output_channels)


@dataclass(frozen=True, eq=False)
class WeightSet:
    kernels: tuple  # (5, 5, in, out) float32 per conv stage
    biases: tuple  # (out,) float32 per conv stage
    output_kernel: np.ndarray  # (1, 1, 64, 10)
    output_bias: np.ndarray  # (10,)

    def arrays(self):
        yield from self.kernels
        yield from self.biases
        yield self.output_kernel
        yield self.output_bias

    def __eq__(self, other):
        if not isinstance(other, WeightSet):
            return NotImplemented
        mine, theirs = list(self.arrays()), list(other.arrays())
        return len(mine) == len(theirs) and all(
            a.shape == b.shape and a.tobytes() == b.tobytes() for a, b in zip(mine, theirs)
        )

    __hash__ = None


def init_weights(spec: NetworkSpec) -> WeightSet:
    kernels, biases = [], []
    for layer, (conv, _) in enumerate(spec.stages):
        shape = (conv.kernel_size, conv.kernel_size, conv.in_channels, conv.out_channels)
        kernels.append(gaussian_weights(spec.seed, layer, shape, conv.weight_mean, conv.weight_std))
        biases.append(np.zeros(conv.out_channels, dtype=np.float32))
    in_ch = spec.stages[-1][0].out_channels
    out_kernel = gaussian_weights(
        spec.seed, 3, (1, 1, in_ch, spec.output_channels), spec.output_weight_mean, spec.output_weight_std
    )
    return WeightSet(
        kernels=tuple(kernels),
        biases=tuple(biases),
        output_kernel=out_kernel,
        output_bias=np.zeros(spec.output_channels, dtype=np.float32),
    )


# -- window primitives --------------------------------------------------------
#
# Each primitive takes an already padded input window (B, rows, cols, C) sized
# exactly for the requested output block and returns (B, h, w, C_out).


def _gemm(rows: np.ndarray, mat: np.ndarray) -> np.ndarray:
    # single-row products go through gemv, whose rounding differs from gemm
    if rows.shape[0] == 1:
        return (np.concatenate([rows, rows]) @ mat)[:1]
    return rows @ mat


def _leaky(x: np.ndarray, slope: np.float32) -> np.ndarray:
    # equals where(x >= 0, x, slope * x) for 0 < slope < 1
    return np.maximum(x, x * slope)


def conv_window(win: np.ndarray, kernel_rows: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Valid 5x5 convolution; ``kernel_rows`` is the kernel reshaped to (5, 5*C, O)."""
    b, hin, win_w, c = win.shape
    k = kernel_rows.shape[0]
    h, w = hin - k + 1, win_w - k + 1
    # (hin, B, w, k*C): row slices of this are contiguous GEMM operands
    t = win.transpose(1, 0, 2, 3)
    unrolled = np.empty((hin, b, w, k * c), dtype=np.float32)
    for j in range(k):
        unrolled[..., j * c : (j + 1) * c] = t[:, :, j : j + w]
    out = None
    for i in range(k):
        rows = unrolled[i : i + h].reshape(h * b * w, k * c)
        part = _gemm(rows, kernel_rows[i])
        if out is None:
            out = part
        else:
            out += part
    out += bias
    return out.reshape(h, b, w, -1).transpose(1, 0, 2, 3)


def pool_window(win: np.ndarray, stride: int, out_h: int, out_w: int, window: int = POOL_WINDOW) -> np.ndarray:
    span_h = stride * (out_h - 1) + 1
    span_w = stride * (out_w - 1) + 1
    cols = win[:, :, 0:span_w:stride]
    for j in range(1, window):
        cols = np.maximum(cols, win[:, :, j : j + span_w : stride])
    out = cols[:, 0:span_h:stride]
    for i in range(1, window):
        out = np.maximum(out, cols[:, i : i + span_h : stride])
    return out


def project_window(win: np.ndarray, matrix: np.ndarray, bias: np.ndarray) -> np.ndarray:
    b, h, w, c = win.shape
    out = _gemm(np.ascontiguousarray(win).reshape(b * h * w, c), matrix)
    out += bias
    return out.reshape(b, h, w, -1)


# -- single-tensor operations ---------------------------------------------------


def _check_tensor(x: np.ndarray, name: str = "input") -> np.ndarray:
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 3:
        raise ValueError(f"{name} must be a (height, width, channels) tensor, got shape {x.shape}")
    return x


def conv2d(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    """Same-padded, stride-1 2-D convolution (cross-correlation) of an HxWxC tensor."""
    x = _check_tensor(x)
    kernel = np.asarray(kernel, dtype=np.float32)
    kh, kw, cin, cout = kernel.shape
    if kh != KERNEL_SIZE or kw != KERNEL_SIZE:
        raise ValueError(f"kernel must be {KERNEL_SIZE}x{KERNEL_SIZE}, got {kh}x{kw}")
    if x.shape[2] != cin:
        raise ValueError(f"channel mismatch: input has {x.shape[2]}, kernel expects {cin}")
    if bias is None:
        bias = np.zeros(cout, dtype=np.float32)
    bias = np.asarray(bias, dtype=np.float32)
    if bias.shape != (cout,):
        raise ValueError(f"bias must have shape ({cout},)")
    r = KERNEL_SIZE // 2
    padded = np.pad(x, ((r, r), (r, r), (0, 0)))
    rows = np.ascontiguousarray(kernel.reshape(kh, kw * cin, cout))
    return conv_window(padded[None], rows, bias)[0]


def leaky_relu(x: np.ndarray, slope: float = LEAKY_SLOPE) -> np.ndarray:
    if not 0 < slope < 1:
        raise ValueError("slope must lie in (0, 1)")
    return _leaky(np.asarray(x, dtype=np.float32), np.float32(slope))


def maxpool(x: np.ndarray, stride: int, window: int = POOL_WINDOW) -> np.ndarray:
    """Centered window max pooling; out-of-bounds positions never take part.

    Output cell ``o`` covers input indices ``o*stride - 2 .. o*stride + 2``,
    giving ``ceil(n / stride)`` outputs per axis.
    """
    x = _check_tensor(x)
    if stride not in (1, 2):
        raise ValueError(f"stride must be 1 or 2, got {stride}")
    r = window // 2
    padded = np.pad(x, ((r, r), (r, r), (0, 0)), constant_values=-np.inf)
    out_h, out_w = math.ceil(x.shape[0] / stride), math.ceil(x.shape[1] / stride)
    return pool_window(padded[None], stride, out_h, out_w, window)[0]


# -- the network --------------------------------------------------------------


@dataclass(frozen=True)
class Layer:
    kind: str  # "conv", "pool" or "proj"
    stride: int
    radius: int
    pad_value: float
    params: tuple = ()

    def out_size(self, n: int) -> int:
        return -(-n // self.stride)

    def apply(self, win: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
        if self.kind == "conv":
            rows, bias, slope = self.params
            return _leaky(conv_window(win, rows, bias), slope)
        if self.kind == "pool":
            return pool_window(win, self.stride, out_h, out_w)
        matrix, bias, slope = self.params
        return _leaky(project_window(win, matrix, bias), slope)


class Network:
    """A NetworkSpec with its generated weights, ready to encode images.

    ``layers[l]`` consumes activation map ``l`` and produces map ``l + 1``;
    map 0 is the normalized input and the last map is the encoding.
    """

    def __init__(self, spec: NetworkSpec | None = None, weights: WeightSet | None = None):
        self.spec = spec if spec is not None else NetworkSpec()
        self.weights = weights if weights is not None else init_weights(self.spec)
        layers = []
        for (conv, pool), kernel, bias in zip(self.spec.stages, self.weights.kernels, self.weights.biases):
            k = conv.kernel_size
            rows = np.ascontiguousarray(kernel.reshape(k, k * conv.in_channels, conv.out_channels))
            layers.append(Layer("conv", 1, k // 2, 0.0, (rows, bias, np.float32(conv.activation_slope))))
            layers.append(Layer("pool", pool.stride, pool.window // 2, -np.inf))
        proj = np.ascontiguousarray(self.weights.output_kernel[0, 0])
        layers.append(Layer("proj", 1, 0, 0.0, (proj, self.weights.output_bias, np.float32(self.spec.output_slope))))
        self.layers = tuple(layers)
        self.channels = (INPUT_CHANNELS,) + tuple(
            c for conv, _ in self.spec.stages for c in (conv.out_channels, conv.out_channels)
        ) + (self.spec.output_channels,)

    @property
    def seed(self) -> int:
        return self.spec.seed

    def map_sizes(self, n: int) -> list[int]:
        sizes = [n]
        for layer in self.layers:
            sizes.append(layer.out_size(sizes[-1]))
        return sizes

    def _pad(self, x: np.ndarray, layer: Layer) -> np.ndarray:
        r = layer.radius
        if r == 0:
            return x
        return np.pad(x, ((0, 0), (r, r), (r, r), (0, 0)), constant_values=layer.pad_value)

    def trace_batch(self, images: np.ndarray) -> list[np.ndarray]:
        """All activation maps for a (B, H, W, 3) batch.

        Every map except the last is returned padded for the layer that
        consumes it; the last entry is the unpadded encoding batch.
        """
        x = np.asarray(images, dtype=np.float32)
        if x.ndim != 4 or x.shape[3] != INPUT_CHANNELS:
            raise ValueError(f"expected a (batch, height, width, {INPUT_CHANNELS}) array, got {x.shape}")
        maps = []
        for layer in self.layers:
            padded = self._pad(x, layer)
            maps.append(padded)
            x = layer.apply(padded, layer.out_size(x.shape[1]), layer.out_size(x.shape[2]))
        maps.append(x)
        return maps

    def forward_batch(self, images: np.ndarray, batch_size: int = 8) -> np.ndarray:
        images = np.asarray(images, dtype=np.float32)
        out = [self.trace_batch(images[i : i + batch_size])[-1] for i in range(0, len(images), batch_size)]
        return np.concatenate(out) if out else np.zeros((0,) + self.spec.encoding_shape(), np.float32)

    def forward(self, image: np.ndarray) -> np.ndarray:
        image = _check_tensor(image, "image")
        if image.shape[2] != INPUT_CHANNELS:
            raise ValueError(f"image must have {INPUT_CHANNELS} channels, got {image.shape[2]}")
        return self.trace_batch(image[None])[-1][0]


def forward(weights: WeightSet, spec: NetworkSpec, image: np.ndarray) -> np.ndarray:
    return Network(spec, weights).forward(image)
