import numpy as np
import pytest

from logadditive.dataset import ProfileRecord, ProfileSet
from logadditive.splines import SplineBasis
from logadditive.simulate import simulate_profiles
from logadditive.tables import table3_model


@pytest.fixture(scope="session")
def basis():
    return SplineBasis.clamped()


@pytest.fixture(scope="session")
def table3(basis):
    return table3_model(basis)


@pytest.fixture(scope="session")
def sim43(table3):
    """43 profiles from the five-function reference model, 10% noise."""
    return simulate_profiles(table3, n_profiles=43, noise_rel=0.10, seed=7)


@pytest.fixture
def make_record():
    def _make(psi, temp, sigma=None, rid="r", covariates=None, augmented=None):
        psi = np.asarray(psi, dtype=float)
        temp = np.asarray(temp, dtype=float)
        sigma = np.full(psi.size, 10.0) if sigma is None else sigma
        covs = {"Ip": 2.0, "Bt": 2.5, "nbar": 2.0, "q95": 4.0} if covariates is None else covariates
        return ProfileRecord(id=rid, psi=psi, temp=temp, sigma=sigma, covariates=covs, augmented=augmented)
    return _make


@pytest.fixture
def small_set(make_record):
    rng = np.random.default_rng(0)
    recs = []
    for i in range(6):
        psi = np.linspace(-1, 1, 30)
        covs = {"Ip": 1.0 + i * 0.5, "Bt": 2.0 + 0.1 * i, "nbar": 2.0 + 0.2 * (i % 3), "q95": 3.0 + i}
        temp = 1000 * np.exp(1.0 - psi**2) * covs["Ip"] ** 0.5 * np.exp(rng.normal(0, 0.05, psi.size))
        recs.append(make_record(psi, temp, 0.05 * temp, rid=f"p{i}", covariates=covs))
    return ProfileSet(recs)
