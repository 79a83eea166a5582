"""Shared test helpers and the acceptance-criteria summary hook."""

import numpy as np

from graphodex.model import ArchConfig, build_network

# (criterion, status, seconds) tuples recorded by tests/test_acceptance.py.
ACCEPTANCE_RESULTS: list[tuple[str, str, float]] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, seconds in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"ACCEPTANCE {name}: {status} ({seconds:.1f}s)")


def build_check_network(arch: ArchConfig, seed: int):
    """Float64 network with small random biases for finite-difference checks.

    Zero-initialized biases can leave border pre-activations exactly on the
    ReLU kink (all zero-padded taps), where central differences are
    undefined; nudging every bias off zero removes those measure-zero
    coincidences without touching the code under test.
    """
    net = build_network(arch, seed=seed, dtype=np.float64)
    rng = np.random.default_rng(seed + 1_000_003)
    for name, value in net.params.items():
        if name.endswith("_b"):
            value[:] = rng.uniform(-0.1, 0.1, size=value.shape)
    return net
