import pytest

from fastlane.protocol import Committee


@pytest.fixture
def committee():
    return Committee.of_size(1)
