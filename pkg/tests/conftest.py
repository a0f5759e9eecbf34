"""Shared helpers: random test fixtures and the acceptance report hook."""

import sys

import numpy as np

from gmreduce import GaussianComponent, GaussianMixture


def random_component(rng, dim, weight=1.0):
    """A well-conditioned random component: random mean, random SPD covariance."""
    mean = rng.uniform(-4.0, 4.0, dim)
    a = rng.uniform(-1.0, 1.0, (dim, dim))
    cov = a @ a.T + (0.3 + rng.uniform(0.0, 0.7)) * np.eye(dim)
    return GaussianComponent(weight, mean, cov)


def random_mixture(rng, n, dim):
    raw = rng.uniform(0.2, 1.0, n)
    w = raw / raw.sum()
    return GaussianMixture(tuple(random_component(rng, dim, w[i]) for i in range(n)))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print one line per acceptance criterion after the test run."""
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num, label, status, detail in sorted(results):
        suffix = f" - {detail}" if detail else ""
        terminalreporter.write_line(f"CRITERION {num} ({label}): {status}{suffix}")
