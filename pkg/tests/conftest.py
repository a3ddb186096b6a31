import numpy as np
import pytest

from defosim.params import PriorBox, SimParams


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def mid_params():
    return SimParams(bend_stiffness=5.0, elastic_stiffness=150.0,
                     friction=0.5, scale=1.0)


@pytest.fixture
def unit_box_2d():
    return PriorBox(low=[0.0, 0.0], high=[1.0, 1.0], names=("a", "b"))


def finite_difference(f, params, h=1e-6, max_coords=None, rng=None):
    """Central finite differences of scalar f() w.r.t. in-place parameter
    arrays; optionally on a random subset of coordinates per array.

    Returns a list of (array_index, flat_coordinate, derivative).
    """
    out = []
    for ai, p in enumerate(params):
        flat = p.ravel()
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        for c in coords:
            old = flat[c]
            flat[c] = old + h
            fp = f()
            flat[c] = old - h
            fm = f()
            flat[c] = old
            out.append((ai, int(c), (fp - fm) / (2 * h)))
    return out


def relative_error(a, b, floor=1e-6):
    return abs(a - b) / max(floor, abs(a) + abs(b))
