import numpy as np
import pytest


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_amplitudes(n_sites: int, rng: np.random.Generator) -> np.ndarray:
    psi = rng.standard_normal(2 ** n_sites) + 1j * rng.standard_normal(2 ** n_sites)
    return psi / np.linalg.norm(psi)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240607)
