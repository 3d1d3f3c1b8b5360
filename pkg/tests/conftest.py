import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pwa_certify.cli import load_input, read_input  # noqa: E402
from pwa_certify.lifting import build_lifted  # noqa: E402
from pwa_certify.polyhedra import switch_sets, x0_coordinate_bounds  # noqa: E402
from pwa_certify.synthesis import load_certificate  # noqa: E402

import randsys  # noqa: E402


class Fixture:
    """A bundled system with its derived objects, built once per session."""

    def __init__(self, name):
        self.name = name
        self.sys, self.options = load_input(name)
        self.homogeneous = bool(self.options.get("homogeneous", False))
        self.sw = switch_sets(self.sys)
        self.lifted = build_lifted(self.sys, self.sw)
        self.x0b = x0_coordinate_bounds(self.sys)
        self.published = load_certificate(read_input(name + "_published"))


@pytest.fixture(scope="session")
def ex1():
    return Fixture("quadrants")


@pytest.fixture(scope="session")
def ex2():
    return Fixture("affine2")


@pytest.fixture(scope="session")
def ex1_run(ex1):
    return randsys.run(ex1.sys, homogeneous=ex1.homogeneous)


@pytest.fixture(scope="session")
def ex2_run(ex2):
    return randsys.run(ex2.sys, homogeneous=ex2.homogeneous)


@pytest.fixture(scope="session")
def ex2_published_trace(ex2):
    from pwa_certify.policy import iterate
    return iterate(ex2.published, ex2.lifted, ex2.sw, ex2.x0b)


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
