import numpy as np
import pytest

from bnu.ibp import IbpParams
from bnu.model import HyperConfig, ModelState


def random_state(rng, N=4, D=3, K=2, sigma_z2=None):
    """Small valid ModelState with random entries."""
    A = rng.integers(0, 2, size=(K, D)).astype(np.int8)
    A[:, 0] = 1
    return ModelState(
        A=A,
        W=rng.uniform(0.0, 2.0, size=(K, D)),
        S=rng.dirichlet(np.ones(K), size=N),
        sigma_z2=rng.uniform(0.05, 2.0) if sigma_z2 is None else sigma_z2,
        alpha_sigma=rng.uniform(0.2, 3.0),
        beta_sigma=rng.uniform(0.2, 3.0),
        ibp=IbpParams(alpha_a=rng.uniform(0.2, 3.0), beta_a=rng.uniform(0.2, 3.0)),
    )


@pytest.fixture
def cfg():
    return HyperConfig()


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
