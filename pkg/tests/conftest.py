from __future__ import annotations

import pytest

from propriety_kit.model import GlmmModel, PriorBlock, validate

ONEWAY_X = [[1, "2.9"], [1, "1.7"], [1, "2.6"], [1, "3.1"], [1, "3.8"], [1, "4.2"]]
ONEWAY_Z = [[1, 0], [1, 0], [1, 0], [0, 1], [0, 1], [0, 1]]
POISSON_X = [[1, "9.4"], [1, "8.7"], [1, "10.2"], [1, "9.1"], [1, "8.9"], [1, "9.5"]]
TWOWAY_X = [[1, "1.8"], [1, "2.1"], [1, "3.2"], [1, "4.9"], [1, "5.3"], [1, "6.1"]]
TWOWAY_Z = [
    [1, 0, 0, 1, 0],
    [1, 0, 0, 0, 1],
    [0, 1, 0, 1, 0],
    [0, 1, 0, 0, 1],
    [0, 0, 1, 1, 0],
    [0, 0, 1, 0, 1],
]


def oneway_binomial(a="1.5", b="0.1", link="logit", X=None):
    return validate(
        GlmmModel(
            y=[0, 4, 2, 4, 3, 5],
            m=[3, 4, 5, 4, 3, 5],
            X=X or ONEWAY_X,
            Z=ONEWAY_Z,
            blocks=[PriorBlock(2, a, b)],
            family="binomial",
            link=link,
        )
    )


def oneway_poisson(a="1.5", b="0.1", y=(0, 0, 0, 2, 0, 0)):
    return validate(
        GlmmModel(y=list(y), X=POISSON_X, Z=ONEWAY_Z, blocks=[PriorBlock(2, a, b)], family="poisson", link="log")
    )


def twoway_binomial(a=("1.5", "1.5"), b=("0.1", "0.1")):
    return validate(
        GlmmModel(
            y=[0, 1, 2, 0, 2, 2],
            m=[2] * 6,
            X=TWOWAY_X,
            Z=TWOWAY_Z,
            blocks=[PriorBlock(3, a[0], b[0]), PriorBlock(2, a[1], b[1])],
            family="binomial",
            link="logit",
        )
    )


@pytest.fixture
def oneway():
    return oneway_binomial()


@pytest.fixture
def poisson_oneway():
    return oneway_poisson()


@pytest.fixture
def twoway():
    return twoway_binomial()


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
