import pytest

from policyevo import reference_policy_text
from policyevo.lang import parse


@pytest.fixture(scope="session")
def reference_source():
    return reference_policy_text()


@pytest.fixture(scope="session")
def reference_program(reference_source):
    return parse(reference_source)
