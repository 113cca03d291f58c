"""Counter-free splittable RNG with a pinned cross-language specification.

The generator is SplitMix64: a 64-bit state advanced by the golden-gamma
increment 0x9E3779B97F4A7C15, with the Stafford "variant 13" output mix

    z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9
    z ^= z >> 27;  z *= 0x94D049BB133111EB
    z ^= z >> 31

Uniform doubles take the top 53 bits: u = ((z >> 11) + 1) * 2**-53, so
u lies in (0, 1].  Gaussians come from the Box-Muller transform applied to
consecutive uniform pairs, with the sine sample cached.  Every ensemble in
this package is a pure function of the 64-bit seed, so any implementation
of this recipe in another language reproduces the same matrices bit for bit.
"""

from __future__ import annotations

import math

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class SplitMix64:
    """Deterministic 64-bit generator; see the module docstring for the spec."""

    def __init__(self, seed: int):
        self._state = int(seed) & _MASK
        self._spare_normal = None

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Uniform double in (0, 1]."""
        return ((self.next_u64() >> 11) + 1) * 2.0 ** -53

    def normal(self) -> float:
        """Standard normal via Box-Muller on consecutive uniforms."""
        if self._spare_normal is not None:
            out = self._spare_normal
            self._spare_normal = None
            return out
        u1 = self.uniform()
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare_normal = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)

    def normals(self, shape) -> np.ndarray:
        flat = np.array([self.normal() for _ in range(int(np.prod(shape)))])
        return flat.reshape(shape)

    def complex_normals(self, shape) -> np.ndarray:
        re = self.normals(shape)
        im = self.normals(shape)
        return re + 1j * im
