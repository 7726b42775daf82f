"""Shared fixtures.

Full simulation runs are the expensive ingredient, so they are cached
per config for the whole session (configs are frozen dataclasses and
hash cleanly). Tests that need to observe run-to-run determinism must
bypass the cache and call run_experiment directly.
"""

import pytest

from botlab.simulator import SimConfig, run_experiment

_RUN_CACHE = {}


def cached_run(cfg: SimConfig):
    if cfg not in _RUN_CACHE:
        _RUN_CACHE[cfg] = run_experiment(cfg)
    return _RUN_CACHE[cfg]


@pytest.fixture(scope="session")
def sim():
    """Callable returning a (cached) RunResult for a config."""
    return cached_run


@pytest.fixture(scope="session")
def default_run():
    """One reference run under pure defaults."""
    return cached_run(SimConfig())
