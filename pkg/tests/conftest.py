import datetime as dt
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from nddicast.raster_io import BandStack  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_stack(location="loc", date=dt.date(2020, 1, 1), shape=(4, 4), seed=0, **fixed):
    r = np.random.default_rng(seed)
    bands = {name: r.uniform(0.05, 0.6, shape).astype(np.float32) for name in ("B04", "B08", "B11")}
    bands.update({k: np.asarray(v, dtype=np.float32) for k, v in fixed.items()})
    return BandStack(location, date, bands)


@pytest.fixture
def stack_factory():
    return make_stack
