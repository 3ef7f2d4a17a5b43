import numpy as np
import pytest

from jumplab.models import load_model
from jumplab.oracle import build_generator, evolve_many


@pytest.fixture(scope="session")
def reference_model():
    return load_model("reference")


@pytest.fixture(scope="session")
def reference_gen(reference_model):
    """Criterion-scale lattice for the reference model: box [-8, 8], h = 0.02."""
    return build_generator(reference_model, (-8.0, 8.0), 0.02)


@pytest.fixture(scope="session")
def reference_heatvectors(reference_gen):
    """Densities at t in {0.05, 0.2, 1.0} from bases {0.0, 1.26}."""
    out = []
    for base in (0.0, 1.26):
        out.extend(evolve_many(reference_gen, np.array([base]), [0.05, 0.2, 1.0]))
    return out


@pytest.fixture(scope="session")
def narrow_gen(reference_model):
    """Smaller box for Harnack/Hoelder kernel slices."""
    return build_generator(reference_model, (-4.0, 4.0), 0.02)
