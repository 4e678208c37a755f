"""
共用 fixture 與 --runslow 選項
"""

import pytest

from src.mesh import generate_unit_cube_mesh, generate_unit_square_mesh


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="執行標記為 slow 的測試")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="需要 --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def square_mesh():
    return generate_unit_square_mesh(4)


@pytest.fixture(scope="session")
def fine_square_mesh():
    return generate_unit_square_mesh(8)


@pytest.fixture(scope="session")
def cube_mesh():
    return generate_unit_cube_mesh(2)
