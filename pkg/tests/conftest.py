import pytest

from spcf_kit import builtin_registry
from spcf_kit.corpus import PROGRAMS, load


@pytest.fixture(scope="session")
def registry():
    return builtin_registry()


@pytest.fixture(scope="session")
def programs():
    return {name: load(name) for name in PROGRAMS}
