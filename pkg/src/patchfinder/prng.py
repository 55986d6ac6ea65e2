"""Portable Gaussian weight generator.

The stream is SplitMix64 evaluated in counter form, so any implementation
that follows the recipe below reproduces the weights bit for bit.

Recipe (all arithmetic modulo 2**64):

    GAMMA  = 0x9E3779B97F4A7C15
    mix(z) = z ^= z >> 30; z *= 0xBF58476D1CE4E5B9
             z ^= z >> 27; z *= 0x94D049BB133111EB
             z ^= z >> 31

    stream_key(seed, layer) = mix(seed + (layer + 1) * GAMMA)
    raw(key, k)             = mix(key + (k + 1) * GAMMA)        k = 0, 1, ...
    uniform(key, k)         = (raw(key, k) >> 11) * 2**-53       in [0, 1)

Gaussian draws pair consecutive uniforms (u0, u1) = (uniform(2m), uniform(2m+1))
with Box-Muller in double precision:

    radius = sqrt(-2 * ln(1 - u0))
    z[2m]   = radius * cos(2 * pi * u1)
    z[2m+1] = radius * sin(2 * pi * u1)

A weight is float32(mean + std * z), evaluated in double before rounding.
Layer indices are 0, 1, 2 for the conv stages and 3 for the output projection.
"""

from __future__ import annotations

import numpy as np

GAMMA = 0x9E3779B97F4A7C15
MASK64 = (1 << 64) - 1

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def mix64(z: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer on a uint64 array (wrapping arithmetic)."""
    z = z.copy()
    z ^= z >> np.uint64(30)
    z *= _M1
    z ^= z >> np.uint64(27)
    z *= _M2
    z ^= z >> np.uint64(31)
    return z


def stream_key(seed: int, layer: int) -> int:
    start = (seed + (layer + 1) * GAMMA) & MASK64
    return int(mix64(np.array([start], dtype=np.uint64))[0])


def raw_stream(key: int, count: int) -> np.ndarray:
    counters = np.arange(1, count + 1, dtype=np.uint64)
    states = np.uint64(key) + counters * np.uint64(GAMMA)
    return mix64(states)


def uniform_stream(key: int, count: int) -> np.ndarray:
    bits = raw_stream(key, count) >> np.uint64(11)
    return bits.astype(np.float64) * 2.0**-53


def gaussian_stream(key: int, count: int) -> np.ndarray:
    """``count`` standard normal draws (float64) for one stream key."""
    pairs = (count + 1) // 2
    u = uniform_stream(key, 2 * pairs)
    radius = np.sqrt(-2.0 * np.log(1.0 - u[0::2]))
    theta = 2.0 * np.pi * u[1::2]
    z = np.empty(2 * pairs, dtype=np.float64)
    z[0::2] = radius * np.cos(theta)
    z[1::2] = radius * np.sin(theta)
    return z[:count]


def gaussian_weights(seed: int, layer: int, shape: tuple[int, ...], mean: float, std: float) -> np.ndarray:
    """Row-major float32 array of Gaussian(mean, std) draws for ``layer``."""
    count = int(np.prod(shape))
    z = gaussian_stream(stream_key(seed, layer), count)
    return (mean + std * z).astype(np.float32).reshape(shape)
