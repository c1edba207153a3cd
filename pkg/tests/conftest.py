import time

import pytest

_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Run one acceptance check, print its PASS/FAIL line and assert it.

    The check is a callable returning ``(passed, detail)``; an exception is
    reported as a failure and then re-raised.
    """
    results = request.config.stash.setdefault(_ACCEPTANCE, {})

    def run(number, check, time_limit=None):
        start = time.perf_counter()
        try:
            passed, detail = check()
        except Exception as exc:
            results[number] = f"criterion {number:2d}: FAIL  raised {type(exc).__name__}: {exc}"
            print(results[number])
            raise
        elapsed = time.perf_counter() - start
        if time_limit is not None and elapsed >= time_limit:
            passed = False
            detail += f"; runtime {elapsed:.1f}s exceeds {time_limit:g}s"
        else:
            detail += f"; {elapsed:.1f}s"
        results[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(results[number])
        assert passed, detail

    return run


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_ACCEPTANCE, None)
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
