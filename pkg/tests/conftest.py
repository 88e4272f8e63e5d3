import pytest

from gridems.cli import fixture_path
from gridems.netmodel import read_case

FIXTURES = ["two_bus", "triangle", "case14", "ctsdemo"]


def load(name):
    return read_case(fixture_path(f"{name}.grid"))


@pytest.fixture(scope="session")
def two_bus():
    return load("two_bus")


@pytest.fixture(scope="session")
def triangle():
    return load("triangle")


@pytest.fixture(scope="session")
def case14():
    return load("case14")


@pytest.fixture(scope="session")
def ctsdemo():
    return load("ctsdemo")


@pytest.fixture(scope="session", params=FIXTURES)
def any_case(request):
    return load(request.param)
