"""Portable deterministic random numbers (SplitMix64).

Every random quantity in this package -- parameter initialization, synthetic
data, probe perturbations -- is drawn from the SplitMix64 generator so that
results are reproducible bit-for-bit across platforms and easy to port to
other languages.  The generator is fully specified here:

    gamma = 0x9E3779B97F4A7C15
    output_i = mix(seed + (i + 1) * gamma)        (all arithmetic mod 2**64)

    mix(z):
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
        z = (z ^ (z >> 27)) * 0x94D049BB133111EB
        return z ^ (z >> 31)

The counter form above is equivalent to the classic sequential recurrence
(state += gamma; return mix(state)) but lets us produce whole blocks with
vectorized arithmetic while staying bit-identical to a one-at-a-time loop.

Derived values:
    uniform in [0, 1):  (output >> 11) * 2**-53
    standard normal:    Box-Muller, each normal consumes exactly two raw
                        outputs u1, u2 (the sine companion is discarded):
                            u1 = ((raw1 >> 11) + 1) * 2**-53   # in (0, 1]
                            u2 = (raw2 >> 11) * 2**-53         # in [0, 1)
                            n  = sqrt(-2 ln u1) * cos(2 pi u2)

Independent substreams are derived from a parent seed and a tuple of integer
tags with ``substream``; see its docstring for the exact chain.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX_A = 0xBF58476D1CE4E5B9
_MIX_B = 0x94D049BB133111EB

_TWO_NEG53 = 2.0 ** -53

# Tag namespace for substream derivation.  Keeping these in one table makes
# collisions between unrelated consumers impossible by construction.
TAG_PARAMS = 1
TAG_DATA_POSE = 2
TAG_DATA_SHAPE = 3
TAG_DATA_CAMERA = 4
TAG_DATA_NOISE = 5
TAG_EMBEDDING = 6
TAG_BODY = 7
TAG_BATCH = 8
TAG_PROBE = 9
TAG_GRADCHECK = 10
TAG_STITCH = 11


def mix64(z: int) -> int:
    """Apply the SplitMix64 finalizer to a 64-bit integer."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _MIX_A) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX_B) & _MASK64
    return z ^ (z >> 31)


def substream(seed: int, *tags: int) -> int:
    """Derive a child seed from ``seed`` and a sequence of integer tags.

    The chain is ``s -> mix64(s * gamma + tag + 1)`` applied once per tag.
    Multiplication by the (odd) gamma constant is a bijection mod 2**64, so
    distinct tag tuples yield well-separated child seeds.

    Args:
        seed: Parent seed (any Python int; reduced mod 2**64).
        *tags: One or more non-negative integers identifying the consumer.

    Returns:
        A new 64-bit seed.
    """
    s = seed & _MASK64
    for tag in tags:
        s = mix64((s * _GAMMA + tag + 1) & _MASK64)
    return s


class Stream:
    """A positioned SplitMix64 output stream.

    Args:
        seed: 64-bit seed. Equal seeds give bit-identical streams.
    """

    def __init__(self, seed: int):
        self.seed = seed & _MASK64
        self.pos = 0  # number of raw outputs consumed so far

    def u64(self, n: int) -> np.ndarray:
        """Return the next ``n`` raw 64-bit outputs as a uint64 array."""
        idx = np.arange(self.pos + 1, self.pos + n + 1, dtype=np.uint64)
        self.pos += n
        z = np.uint64(self.seed) + idx * np.uint64(_GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX_A)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX_B)
        return z ^ (z >> np.uint64(31))

    def uniform(self, n: int) -> np.ndarray:
        """Return ``n`` float64 samples uniform on [0, 1)."""
        return (self.u64(n) >> np.uint64(11)).astype(np.float64) * _TWO_NEG53

    def normal(self, n: int) -> np.ndarray:
        """Return ``n`` float64 standard normal samples.

        Each sample consumes exactly two raw outputs (Box-Muller, cosine
        branch only), so the stream position advances by ``2 * n``.
        """
        raw = self.u64(2 * n).reshape(n, 2)
        u1 = ((raw[:, 0] >> np.uint64(11)).astype(np.float64) + 1.0) * _TWO_NEG53
        u2 = (raw[:, 1] >> np.uint64(11)).astype(np.float64) * _TWO_NEG53
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)

    def normal_f32(self, n: int) -> np.ndarray:
        """Standard normals rounded through float32, returned as float64.

        Used for parameter initialization so that freshly built models are
        exactly representable in the float32 checkpoint wire format.
        """
        return self.normal(n).astype(np.float32).astype(np.float64)
