import numpy as np
import pytest

import bsderisk as br

DESK_SEED = 20240901


@pytest.fixture(scope="session")
def desk_grid():
    return br.build_grid(1.0, 50)


@pytest.fixture(scope="session")
def brownian_model():
    return br.LevyModel(x0=0.0, mu=0.1, sigma=0.3)


@pytest.fixture(scope="session")
def jump_model():
    return br.LevyModel(x0=0.0, mu=0.1, sigma=0.3, jumps=(br.JumpMark(-0.2, 1.5),))


# mid-sized bundles for unit tests; the acceptance module builds its own
# full-scale ones
@pytest.fixture(scope="session")
def brownian_bundle(desk_grid, brownian_model):
    return br.simulate_paths(desk_grid, brownian_model, 50_000, DESK_SEED)


@pytest.fixture(scope="session")
def jump_bundle(desk_grid, jump_model):
    return br.simulate_paths(desk_grid, jump_model, 50_000, DESK_SEED)


@pytest.fixture(scope="session")
def two_mark_bundle(desk_grid):
    model = br.LevyModel(
        x0=0.0, mu=0.05, sigma=0.2,
        jumps=(br.JumpMark(-0.15, 1.0), br.JumpMark(0.1, 0.5)),
    )
    return br.simulate_paths(desk_grid, model, 30_000, 77)
