import pytest

from ovibnav.dataset import WorldConfig, make_splits


def small_world(**kw):
    base = dict(num_views=3, feature_dim=16, num_basis=96, n_train=1200, n_test=120,
                db_spacing=20.0)
    base.update(kw)
    return WorldConfig(**base)


@pytest.fixture(scope="session")
def small_cfg():
    return small_world()


@pytest.fixture(scope="session")
def small_splits(small_cfg):
    return make_splits(small_cfg, 0)


@pytest.fixture(scope="session")
def default_splits():
    return make_splits(WorldConfig(), 0)


_ACCEPTANCE = {}


@pytest.fixture
def report(request):
    """Record one pass/fail line for an acceptance criterion."""

    def _report(label, passed, detail=""):
        line = f"{'PASS' if passed else 'FAIL'}  {label}" + (f"  ({detail})" if detail else "")
        _ACCEPTANCE[request.node.nodeid] = line
        print(line)
        return passed

    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for nodeid in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[nodeid])
