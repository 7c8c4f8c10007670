import math

import numpy as np
import pytest
from hypothesis import strategies as st

from hjmot.model import (
    CostFamily,
    CostKind,
    DiscreteMeasure,
    ProblemInstance,
    StageSpace,
    explicit_instance,
    line_instance,
)


def tiny1():
    """Line: X0={0}, X1={0.4, 10}, X2={1}, squared distance."""
    return line_instance([[0.0], [0.4, 10.0], [1.0]])


def tiny2():
    """Line: X0={0}, X1={5}, X2={1}; skipping the far middle point is optimal."""
    return line_instance([[0.0], [5.0], [1.0]])


def mix1():
    """Two sources; one goes through the middle point, the other jumps."""
    return line_instance([[0.0, 10.0], [0.4], [1.0, 11.0]])


def tie():
    """Direct jump 0 -> 1 costs 1 and so does 0 -> 0 -> 1."""
    return line_instance([[0.0], [0.0], [1.0]])


@pytest.fixture
def tiny1_instance():
    return tiny1()


@pytest.fixture
def tiny2_instance():
    return tiny2()


@pytest.fixture
def mix1_instance():
    return mix1()


@pytest.fixture
def tie_instance():
    return tie()


def random_instance(rng, K=None, max_size=4, kind=None, allow_skips=None, forbid=0.0, uniform=False):
    """Random instance of any cost kind with random endpoint weights."""
    K = int(rng.integers(1, 5)) if K is None else K
    sizes = [int(rng.integers(1, max_size + 1)) for _ in range(K + 1)]
    kinds = list(CostKind)
    kind = kind or kinds[int(rng.integers(len(kinds)))]
    kind = CostKind(kind)
    allow = bool(rng.random() < 0.8) if allow_skips is None else allow_skips
    if uniform:
        w0 = np.full(sizes[0], 1.0 / sizes[0])
        wK = np.full(sizes[-1], 1.0 / sizes[-1])
    else:
        w0 = rng.dirichlet(np.ones(sizes[0]))
        wK = rng.dirichlet(np.ones(sizes[-1]))
    if kind is CostKind.EXPLICIT:
        mats = {}
        for i in range(K + 1):
            for j in range(i + 1, K + 1):
                C = rng.uniform(0, 10, size=(sizes[i], sizes[j]))
                if rng.random() < 0.3:
                    C = np.round(C)  # integer costs create exact ties
                if forbid > 0:
                    C[rng.random(C.shape) < forbid] = math.inf
                mats[(i, j)] = C
        return explicit_instance(sizes, mats, w0, wK, allow)
    dim = int(rng.integers(1, 3))
    spaces = []
    for k, n in enumerate(sizes):
        if kind is CostKind.SQUARED_CIRCLE:
            spaces.append(StageSpace(k, [f"s{k}p{i}" for i in range(n)], angles=rng.uniform(0, 2 * math.pi, n)))
        else:
            spaces.append(StageSpace(k, [f"s{k}p{i}" for i in range(n)], coords=rng.uniform(0, 1, (n, dim))))
    return ProblemInstance(K, spaces, CostFamily(kind), DiscreteMeasure(0, w0), DiscreteMeasure(K, wK), allow)


@st.composite
def instances(draw, max_K=3, max_size=3, kinds=None, allow_skips=None, forbid=0.0, uniform=False):
    seed = draw(st.integers(0, 2**32 - 1))
    K = draw(st.integers(1, max_K))
    kind = draw(st.sampled_from(kinds or list(CostKind)))
    rng = np.random.default_rng(seed)
    return random_instance(rng, K, max_size, kind, allow_skips, forbid, uniform)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            for name, value in getattr(rep, "user_properties", []):
                if name == "acceptance":
                    lines.append(value)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
