import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from onnx_oracle import ModelBuilder, single_conv_model  # noqa: E402


@pytest.fixture
def conv_model_bytes() -> bytes:
    return single_conv_model()


@pytest.fixture
def oracle_builder():
    return ModelBuilder
