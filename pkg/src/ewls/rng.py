"""Reproducible random streams.

Every stream is Philox4x64-10 (numpy's ``Philox`` bit generator) keyed by the
pair ``(seed mod 2**64, stream_id)`` with the counter starting at zero.  Raw
64-bit words ``r`` become uniforms ``u = ((r >> 11) + 0.5) * 2**-53`` in (0, 1),
and consecutive uniform pairs ``(u1, u2)`` become standard normals by
Box-Muller::

    z1 = sqrt(-2 ln u1) * cos(2 pi u2)
    z2 = sqrt(-2 ln u1) * sin(2 pi u2)

The mapping avoids numpy's ziggurat sampler so another implementation of
Philox can reproduce the draws.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def raw_words(seed: int, stream: int, count: int) -> np.ndarray:
    key = np.array([int(seed) & _MASK64, int(stream) & _MASK64], dtype=np.uint64)
    bitgen = np.random.Philox(key=key)
    return bitgen.random_raw(count).astype(np.uint64, copy=False)


def uniforms(seed: int, stream: int, count: int) -> np.ndarray:
    r = raw_words(seed, stream, count)
    return ((r >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def normals(seed: int, stream: int, count: int) -> np.ndarray:
    pairs = (count + 1) // 2
    u = uniforms(seed, stream, 2 * pairs).reshape(pairs, 2)
    radius = np.sqrt(-2.0 * np.log(u[:, 0]))
    angle = 2.0 * np.pi * u[:, 1]
    z = np.column_stack([radius * np.cos(angle), radius * np.sin(angle)]).ravel()
    return z[:count]
