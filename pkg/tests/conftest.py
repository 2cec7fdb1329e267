import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "numeric", deadline=None,
    suppress_health_check=[HealthCheck.filter_too_much, HealthCheck.data_too_large])
settings.load_profile("numeric")


def random_rank_matrix(rng, m, n, rank):
    """Random m x n matrix with prescribed rank (rank 0 gives the zero matrix)."""
    if rank == 0:
        return np.zeros((m, n))
    return rng.standard_normal((m, rank)) @ rng.standard_normal((rank, n))


def random_spd(rng, n, spread=3.0):
    """Random symmetric positive definite matrix with eigenvalues in [1/spread, spread]."""
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    w = np.exp(rng.uniform(-np.log(spread), np.log(spread), size=n))
    return (Q * w) @ Q.T


def random_projector(rng, n, nullity):
    """Orthogonal projector onto a random subspace of the given dimension."""
    if nullity == 0:
        return np.zeros((n, n))
    Q, _ = np.linalg.qr(rng.standard_normal((n, nullity)))
    return Q @ Q.T


@pytest.fixture
def rng():
    return np.random.default_rng(20260817)
