import numpy as np
import pytest

from geospot.ingest import DomainDataset
from geospot.synthetic import write_toy_dataset


def random_domain(rng, name, n, shift=0.0, dims=(5, 4), center=(0.0, 0.0), spread=(30.0, 60.0)):
    lat = np.clip(center[0] + rng.uniform(-spread[0], spread[0], n), -90, 90)
    lon = np.clip(center[1] + rng.uniform(-spread[1], spread[1], n), -180, 180)
    return DomainDataset(
        name,
        np.column_stack([lat, lon]),
        {"feat": rng.normal(size=(n, dims[0])) + shift, "loc": rng.normal(size=(n, dims[1])) + 0.5},
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def make_domain(rng):
    def factory(name, n, shift=0.0, **kw):
        return random_domain(rng, name, n, shift, **kw)

    return factory


@pytest.fixture(scope="session")
def toy_manifest(tmp_path_factory):
    return write_toy_dataset(tmp_path_factory.mktemp("toy"))
