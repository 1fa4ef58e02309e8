import os

from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("thorough", max_examples=300, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# acceptance criteria report one line each at the end of the session
ACCEPTANCE_RESULTS: dict = {}


def record(criterion: str, passed: bool, detail: str = "") -> None:
    ACCEPTANCE_RESULTS[criterion] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for name in sorted(ACCEPTANCE_RESULTS, key=_order):
        ok, detail = ACCEPTANCE_RESULTS[name]
        tr.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")


def _order(name: str):
    head = name.split()[0].rstrip(".")
    return (0, int(head)) if head.isdigit() else (1, name)
