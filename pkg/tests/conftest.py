import pytest

from spiketrum import build_bank
from spiketrum.itp import ChannelMap


@pytest.fixture(scope="session")
def bank():
    return build_bank()


@pytest.fixture(scope="session")
def channel_map(bank):
    return ChannelMap(kernel_count=bank.kernel_count)
