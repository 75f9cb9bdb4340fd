import numpy as np
import pytest


def dense_matrix(op, shape):
    """Matrix of a linear frame operator, built column by column from unit impulses."""
    n = shape[0] * shape[1]
    cols = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        cols.append(np.asarray(op(e.reshape(shape))).ravel())
    return np.stack(cols, axis=1)


def textured(shape, seed=0):
    """Smooth random texture with enough structure for registration."""
    from scipy import ndimage

    rng = np.random.default_rng(seed)
    f = ndimage.gaussian_filter(rng.standard_normal(shape), 2.0, mode="wrap")
    return 128.0 + 60.0 * f / f.std()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# PASS/FAIL/INFO lines from the acceptance suite, echoed after the run so they
# survive output capture.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
