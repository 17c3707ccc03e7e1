import os
from pathlib import Path

import numpy as np
import pytest

from zml.config import load_config
from zml.zetacore import EvalCache

ROOT = Path(__file__).resolve().parents[1]


def _cache_path():
    return os.environ.get("ZML_CACHE") or str(ROOT / ".zml-cache" / "cache.csv")


@pytest.fixture(scope="session")
def cache():
    path = _cache_path()
    os.makedirs(os.path.dirname(path), exist_ok=True)
    c = EvalCache(path)
    yield c
    if c.dirty:
        c.save()


@pytest.fixture(scope="session")
def cfg():
    return load_config(environ={})


@pytest.fixture(scope="session")
def poly(cfg):
    return cfg.polynomial()


@pytest.fixture
def rng(cfg, request):
    # one stream per test, derived from the configured seed and the test name
    salt = sum(map(ord, request.node.name))
    return np.random.default_rng([cfg.seed, salt])
