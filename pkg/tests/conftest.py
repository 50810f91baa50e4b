import json

import numpy as np
import pytest

import supermart as sm


def make_model(obj):
    return sm.model_from_json(obj)


@pytest.fixture(scope="session")
def symmetric2():
    """Q symmetric, beta constant: lambda=1, phi=(1,1), nu=(1/2,1/2)."""
    return make_model(
        {
            "types": 2,
            "Q": [[-1.0, 1.0], [1.0, -1.0]],
            "beta": [1.0, 1.0],
            "alpha": [0.0, 0.0],
            "kernels": [{"kind": "stable", "gamma": 1.0, "alpha": 1.5}] * 2,
        }
    )


@pytest.fixture(scope="session")
def tilted2():
    """beta=(2,0): lambda=sqrt(2), asymmetric Perron pair."""
    return make_model(
        {
            "types": 2,
            "Q": [[-1.0, 1.0], [1.0, -1.0]],
            "beta": [2.0, 0.0],
            "alpha": [0.0, 0.0],
            "kernels": [{"kind": "atoms", "atoms": [[2.0, 3.0]]}] * 2,
        }
    )


@pytest.fixture(scope="session")
def stable1():
    """Single type, unit drift, stable(gamma=1, alpha=1.5) jumps."""
    return make_model(
        {
            "types": 1,
            "Q": [[0.0]],
            "beta": [1.0],
            "alpha": [0.2],
            "kernels": [{"kind": "stable", "gamma": 1.0, "alpha": 1.5}],
        }
    )


@pytest.fixture(scope="session")
def feller1():
    """Single-type Feller diffusion: a = alpha_diff/2 = 1, b = 1."""
    return make_model(
        {
            "types": 1,
            "Q": [[0.0]],
            "beta": [1.0],
            "alpha": [2.0],
            "kernels": [{"kind": "stable", "gamma": 0.0, "alpha": 1.5}],
        }
    )


class FixedRng:
    """Stub generator returning scripted uniforms (for frozen inverse-CDF tests)."""

    def __init__(self, values):
        self.values = list(values)

    def random(self, n=None):
        if n is None:
            return self.values.pop(0)
        return np.array([self.values.pop(0) for _ in range(n)])


@pytest.fixture
def fixed_rng():
    return FixedRng
