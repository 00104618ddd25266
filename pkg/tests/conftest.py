import numpy as np
import pytest


def interior_points(rng, n, size, floor=0.05):
    """Dirichlet points inside ``{min p_i >= floor}``."""
    return floor + (1 - n * floor) * rng.dirichlet(np.ones(n), size=size)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def tiny_instance(seed):
    """Random problem with m <= 3 grid points and at most 6 pairs."""
    from relarb import JumpSample
    from relarb.optimizer import ConstraintSet, Grid, build_problem

    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 4))
    x = np.sort(rng.choice(np.round(np.arange(0.15, 0.86, 0.05), 2), m, replace=False))
    k = int(rng.integers(1, 7))
    ip, iq = rng.integers(0, m, k), rng.integers(0, m, k)
    sample = JumpSample(np.stack([x[ip], 1 - x[ip]], 1), np.stack([x[iq], 1 - x[iq]], 1))
    cons = ConstraintSet(ratio_bounds=(0.5, 2.0), monotone=bool(seed % 2))
    return build_problem(sample, Grid(x), cons)


def random_feasible_vars(rng, grid, margin=0.1):
    """Concave positive ``phi`` with ``phi_1 = 1`` and ``z`` inside its supergradient interval."""
    from relarb.optimizer import DecisionVars

    xf = grid.full
    a, b = rng.uniform(0.2, 1.0, 2)
    knots = rng.uniform(0, 1, 3)
    d = rng.uniform(0, 2, 3)
    phi = (1 - xf) * a + xf * b + sum(dk * np.minimum(xf * (1 - t), t * (1 - xf)) for dk, t in zip(d, knots))
    phi = phi / phi[1]
    s = np.diff(phi) / np.diff(xf)
    x = grid.x
    lo = x + x * (1 - x) * s[1:] / phi[1:-1]
    hi = x + x * (1 - x) * s[:-1] / phi[1:-1]
    u = rng.uniform(margin, 1 - margin, grid.m)
    return DecisionVars(lo + u * (hi - lo), phi)


ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per acceptance criterion and assert it."""
    lines = request.config.stash.setdefault(ACCEPTANCE, {})

    def record(number, ok, detail):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines[number] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
