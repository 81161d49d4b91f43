import pytest

from nodeprim.clock import VirtualClock
from nodeprim.runner import Stack


@pytest.fixture
def stack():
    """Wall-clock infrastructure: master + event sink on ephemeral ports."""
    s = Stack()
    yield s
    s.stop()


@pytest.fixture
def vclock():
    return VirtualClock()


@pytest.fixture
def vstack(vclock):
    """Virtual-clock infrastructure for deterministic scenarios."""
    s = Stack(clock=vclock)
    yield s
    s.stop()
