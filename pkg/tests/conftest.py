from fractions import Fraction

import pytest
from hypothesis import settings

from propcross import ApproxDesign, DesignSpace

settings.register_profile("ci", max_examples=60, deadline=None)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def s33():
    return DesignSpace(3, 3)


@pytest.fixture(scope="session")
def d1(s33):
    return ApproxDesign(s33, {"122": Fraction(1, 6), "123": Fraction(5, 6)})


@pytest.fixture(scope="session")
def d2(s33):
    return ApproxDesign(s33, {"123": 1.0})
