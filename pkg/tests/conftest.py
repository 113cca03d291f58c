import numpy as np
import pytest

from moilab.rng import SplitMix64


def random_hermitian(gen: SplitMix64, d: int) -> np.ndarray:
    X = gen.complex_normals((d, d))
    return (X + X.conj().T) / 2.0


@pytest.fixture
def herm_pair():
    """Seeded (A, B) pair factory; B normalized to unit operator norm."""

    def make(seed: int, d: int, b_scale: float = 1.0):
        gen = SplitMix64(seed)
        A = random_hermitian(gen, d)
        B = random_hermitian(gen, d)
        B *= b_scale / np.linalg.norm(B, 2)
        return A, B

    return make
