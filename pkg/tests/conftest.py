import numpy as np
import pytest

from vibesep.pipeline import PipelineParams
from vibesep.pss import CnnConfig


@pytest.fixture
def small_params():
    """A reduced pipeline that runs in well under a second on 6000 samples."""
    return PipelineParams(
        pss=CnnConfig(depth=2, kernel_size=16, lag=30, max_epochs=60, patience=5),
        n_filter=51,
        K=10,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
