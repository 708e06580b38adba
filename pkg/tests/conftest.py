import numpy as np
import pytest

from spatpca import SpatialDomain, build_penalty


@pytest.fixture(scope="session")
def domain_1d() -> SpatialDomain:
    return SpatialDomain(np.linspace(-5.0, 5.0, 50))


@pytest.fixture(scope="session")
def penalty_1d(domain_1d):
    return build_penalty(domain_1d)


@pytest.fixture(scope="session")
def small_domain() -> SpatialDomain:
    return SpatialDomain(np.linspace(-5.0, 5.0, 12))


@pytest.fixture(scope="session")
def small_penalty(small_domain):
    return build_penalty(small_domain)


@pytest.fixture(scope="session")
def domain_2d() -> SpatialDomain:
    axis = np.linspace(-3.0, 3.0, 6)
    xx, yy = np.meshgrid(axis, axis, indexing="ij")
    return SpatialDomain(np.column_stack([xx.ravel(), yy.ravel()]))


@pytest.fixture(scope="session")
def penalty_2d(domain_2d):
    return build_penalty(domain_2d)
