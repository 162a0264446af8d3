import pytest


@pytest.fixture
def report(request, capsys):
    """Print one PASS/FAIL line straight to the terminal, then assert."""

    def emit(criterion, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")
        assert ok, detail

    return emit
