import pytest

from mixreg import operators

CRITERIA = {
    1: "torsion anchor",
    2: "affine annihilation",
    3: "theta closed form vs quadrature",
    4: "nonlocal quadratic oracle",
    5: "distance-function growth rate",
    6: "exponential barrier sign",
    7: "product rule residual",
    8: "regularity suite on the mixed problem",
    9: "interior gradient scaling",
    10: "overdetermined experiment",
    11: "determinism",
}

_outcomes: dict[int, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")
    operators.FFT_WORKERS = 1


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        details = [v for k, v in item.user_properties if k == "detail"]
        _outcomes.setdefault(mark.args[0], []).append((rep.passed, item.name, details))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(CRITERIA):
        runs = _outcomes.get(num)
        if not runs:
            tr.write_line(f"criterion {num:2d} NOT RUN  {CRITERIA[num]}")
            continue
        ok = all(p for p, _, _ in runs)
        tr.write_line(f"criterion {num:2d} {'PASS' if ok else 'FAIL'}  {CRITERIA[num]}")
        for passed, name, details in runs:
            extra = "; ".join(details)
            tr.write_line(f"    {'ok  ' if passed else 'FAIL'} {name}{': ' + extra if extra else ''}")


@pytest.fixture
def detail(request):
    """Attach a short measurement string to the acceptance summary line."""
    def add(text: str):
        request.node.user_properties.append(("detail", text))
    return add
