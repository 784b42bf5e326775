import pytest

from mvu import baseline_spec, build_coefficients


@pytest.fixture(scope="session")
def p0():
    return baseline_spec()


@pytest.fixture(scope="session")
def p0_coeffs(p0):
    return build_coefficients(p0)


@pytest.fixture
def criterion(request, capsys):
    """Print and record one pass/fail line, then assert."""

    def report(number: int, ok: bool, detail: str):
        line = f"acceptance criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        request.config.stash.setdefault(ACCEPTANCE, []).append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return report


ACCEPTANCE = pytest.StashKey[list]()


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
