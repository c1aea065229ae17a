import numpy as np
import pytest
from importlib import resources

from codemismatch import DecodingMetric, Dmc, InputDist, load_channel_spec

PAPER_SPEC = str(resources.files("codemismatch") / "data"
                 / "quantized_gaussian_4x4.json")


@pytest.fixture(scope="session")
def paper_spec_path() -> str:
    return PAPER_SPEC


@pytest.fixture(scope="session")
def paper_channel():
    """The bundled 4x4 quantized-Gaussian channel and its shaped input."""
    return load_channel_spec(PAPER_SPEC)


def random_triple(rng, max_out: int = 4):
    """One random (channel, input dist, metric) with |X| in {2,4} and
    2 <= |Y| <= max_out. Metric entries are bounded away from 0 so the
    channel support is always covered."""
    nx = int(rng.choice([2, 4]))
    ny = int(rng.integers(2, max_out + 1))
    w = rng.dirichlet(np.ones(ny) * 2.0, size=nx)
    ch = Dmc(input_size=nx, output_size=ny, w=w)
    p = InputDist(p=rng.dirichlet(np.ones(nx) * 3.0))
    u = DecodingMetric(u=rng.uniform(0.05, 1.0, size=(nx, ny)), name="rand")
    return ch, p, u
