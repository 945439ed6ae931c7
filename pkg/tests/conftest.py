import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from geodemo.ingest import DistrictCode
from geodemo.preprocess import FeatureMatrix, VariableMeta


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print one line per acceptance criterion after the run."""
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance.RESULTS:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)


def feature_matrix(z, names=None) -> FeatureMatrix:
    """FeatureMatrix around a raw matrix, for tests that start in z-space."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 1:
        z = z[:, None]
    n, p = z.shape
    names = names or [f"v{j}" for j in range(p)]
    return FeatureMatrix(
        districts=[DistrictCode(f"E06{i:06d}", f"District {i}") for i in range(n)],
        variables=[VariableMeta(name=nm) for nm in names],
        z=z,
        column_means=np.zeros(p),
        column_sds=np.ones(p),
    )


@pytest.fixture
def fm_two_pairs():
    """1-D points {0, 1, 10, 11}: two obvious clusters."""
    return feature_matrix(np.array([0.0, 1.0, 10.0, 11.0]))
