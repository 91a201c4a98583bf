import numpy as np
import pytest

from mixed_eig.geometry import DomainMask, Lattice


def line(n: int = 2, h: float = 1.0) -> Lattice:
    """1-D box of nodes -n..n."""
    return Lattice.centered(h, n, dim=1)


def mask_1d(lat: Lattice, points) -> DomainMask:
    """Mask from world coordinates on a 1-D lattice."""
    inside = np.zeros(lat.extent, dtype=bool)
    for x in points:
        inside[int(round((x - lat.origin[0]) / lat.h))] = True
    return DomainMask(lat, inside)


def brute_gagliardo(values: np.ndarray, lat: Lattice, p: float, s: float) -> float:
    """Plain ordered double sum over box pairs (no exterior)."""
    x = lat.node_coords().reshape(-1, lat.dim)
    u = values.ravel()
    d = lat.dim
    total = 0.0
    for i in range(len(u)):
        for j in range(len(u)):
            if i != j and (u[i] or u[j]):
                r = np.linalg.norm(x[i] - x[j])
                total += abs(u[i] - u[j]) ** p / r ** (d + s * p)
    return lat.h ** (2 * d) * total


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
