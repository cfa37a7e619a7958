import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))
sys.path.insert(0, os.path.join(os.path.dirname(__file__), os.pardir, "scripts"))



@pytest.fixture(scope="session")
def mnist_dir(tmp_path_factory):
    """IDX-format MNIST sample (4,000 train / 1,000 test) built from mlxtend's bundled digits."""
    pytest.importorskip("mlxtend")
    import mnist_sample

    out = tmp_path_factory.mktemp("mnist")
    mnist_sample.build(str(out), n_test=1000, seed=0)
    return str(out)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import acceptance_log

    if not acceptance_log.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in acceptance_log.lines():
        terminalreporter.write_line(line)
