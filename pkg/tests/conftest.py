import os

# pin BLAS to one thread before numpy loads: keeps runs bit-reproducible
# and honest about single-core budgets
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

import pytest

from tcanlab.corpus import synth_clip


@pytest.fixture(scope="session")
def speech_clip():
    return synth_clip(42)


@pytest.fixture(scope="session")
def speech_clip_pair():
    return synth_clip(42), synth_clip(43)
