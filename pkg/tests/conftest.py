import numpy as np
import pytest


def fd_grad(f, arr: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function with respect to one
    array, perturbing it in place."""
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = arr[idx]
        arr[idx] = orig + h
        fp = f()
        arr[idx] = orig - h
        fm = f()
        arr[idx] = orig
        g[idx] = (fp - fm) / (2.0 * h)
    return g


def max_rel_err(got: np.ndarray, want: np.ndarray, floor: float = 1e-6) -> float:
    return float(np.abs(got - want).max() / max(floor, np.abs(want).max()))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
