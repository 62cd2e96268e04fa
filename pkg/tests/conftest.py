from __future__ import annotations

import numpy as np
import pytest

from homofuse.feature_io import FeatureSet

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (bool(passed), detail)
    print(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(
            f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


def random_shapes(rng, n, lo=0.5, hi=3.0):
    """Well-conditioned random 2x2 shapes (rotation * diag * rotation)."""
    out = np.empty((n, 2, 2))
    for k in range(n):
        a, b = rng.uniform(0, 2 * np.pi, 2)
        ra = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
        rb = np.array([[np.cos(b), -np.sin(b)], [np.sin(b), np.cos(b)]])
        out[k] = ra @ np.diag(rng.uniform(lo, hi, 2)) @ rb
    return out


def random_feature_set(rng, n, descriptors=(("A", 4),), id_offset=0, extent=100.0):
    return FeatureSet(
        ids=id_offset + np.arange(n),
        centers=rng.uniform(0, extent, (n, 2)),
        shapes=random_shapes(rng, n),
        descriptors={name: rng.standard_normal((n, dim)) for name, dim in descriptors},
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
