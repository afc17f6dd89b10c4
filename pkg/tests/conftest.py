import logging
import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT))

from core.models import DimerParams  # noqa: E402


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="运行标记为 slow 的图表复现测试")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="需要 --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def params_135():
    return DimerParams(theta=1.35, n_particles=1000)


@pytest.fixture
def small_params():
    return DimerParams(theta=1.35, n_particles=40)


@pytest.fixture
def stable_params():
    return DimerParams(theta=0.5, n_particles=40)


@pytest.fixture
def restore_logging():
    """CLI 测试会重建根日志器的处理器，结束后关闭并移除。"""
    root = logging.getLogger()
    before = list(root.handlers)
    yield
    for handler in root.handlers[:]:
        if handler not in before:
            root.removeHandler(handler)
            handler.close()
    for handler in before:
        if handler not in root.handlers:
            root.addHandler(handler)
