import numpy as np
import pytest

from spongedim.model import AlphabetNode, BaseTriple, SpongeSpec, left_pack, make_sierpinski

BASE = BaseTriple(1 / 6, 1 / 4, 1 / 2)


def sierpinski(counts, base=BASE):
    return make_sierpinski(counts, base)


def random_spec(rng, d=3, max_children=3):
    """A valid spec with random ratios; every sibling group sums to at most 1."""

    def group(level, parent):
        m = int(rng.integers(1, max_children + 1))
        share = rng.uniform(0.3, 1.0, size=m)
        ratios = share / share.sum() * rng.uniform(0.5, 0.98)
        ratios = np.minimum(ratios, parent * rng.uniform(0.6, 1.0, size=m))
        nodes = []
        for r in ratios:
            kids = group(level + 1, r) if level < d else ()
            nodes.append(AlphabetNode(float(r), 0.0, kids))
        return left_pack(nodes)

    return SpongeSpec(d, group(1, 1.0))


@pytest.fixture
def cube():
    return sierpinski(((2,), (2, 2), (2, 2, 2, 2)), BaseTriple(0.5, 0.5, 0.5))


@pytest.fixture
def uniform_sponge():
    return sierpinski(((2,), (3, 3), (2,) * 6))


@pytest.fixture
def asym():
    # three J-words with fiber sizes 1, 3, 2: t_low = 0 < t_high
    return sierpinski(((2,), (2, 1), (1, 3, 2)))


@pytest.fixture
def asym5():
    return sierpinski(((2,), (3, 2), (1, 2, 4, 3, 5)))


@pytest.fixture
def carpet2d():
    tree = left_pack(
        [
            AlphabetNode(0.5, 0.0, left_pack([AlphabetNode(1 / 3), AlphabetNode(1 / 3)])),
            AlphabetNode(0.5, 0.0, left_pack([AlphabetNode(1 / 3)])),
        ]
    )
    return SpongeSpec(2, tree)


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
