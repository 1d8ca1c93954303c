import functools

import numpy as np
import pytest

from syncnet.scenario import build_het_groups, build_hom, fixture_path, load_scenario, make_scenario

CASE1_EDGES = [(1, 2), (2, 3), (3, 1), (3, 4), (6, 3), (4, 5), (5, 6)]


@functools.lru_cache(maxsize=None)
def loaded(name, variant=None, check=True):
    spec = load_scenario(fixture_path(name), variant=variant)
    built = build_hom(spec, check=check) if spec.mode == "homogeneous" else build_het_groups(spec, check=check)
    return spec, built


def scenario_for(name, variant=None, **kw):
    spec, built = loaded(name, variant)
    return make_scenario(spec, built, **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def record(criterion, ok, detail):
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
