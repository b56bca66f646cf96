import pytest

from anomlab.domain import default_catalog
from anomlab.synth import DAY_MS, generate_dataset, generate_profile


@pytest.fixture(scope="session")
def catalog():
    return default_catalog()


@pytest.fixture(scope="session")
def two_day_dataset(catalog):
    """A small but realistic dataset shared by the slower unit tests."""
    profile = generate_profile("unit", 123)
    return generate_dataset(profile, catalog, 0, 2 * DAY_MS)
