import pytest

_RESULTS: dict = {}


class Criterion:
    """Collects the checks of one acceptance criterion for the final summary."""

    def __init__(self, number: int, title: str):
        self.number, self.title = number, title
        self.lines: list[str] = []
        self.ok = True
        self.finished = False
        _RESULTS[number] = self

    def note(self, text: str) -> None:
        self.lines.append("     " + text)

    def check(self, ok: bool, text: str) -> None:
        self.lines.append(("ok   " if ok else "FAIL ") + text)
        self.ok = self.ok and bool(ok)

    def verdict(self) -> str:
        return "PASS" if self.ok and self.finished else "FAIL"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        for c in getattr(item, "_criteria", ()):
            # an exception inside the test body means the criterion did not finish
            c.finished = rep.passed


@pytest.fixture
def criterion(request):
    made = request.node._criteria = []

    def make(number: int, title: str) -> Criterion:
        c = Criterion(number, title)
        made.append(c)
        return c

    yield make
    for c in made:
        assert c.ok, f"criterion {c.number} failed: " + "; ".join(
            line for line in c.lines if line.startswith("FAIL"))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        c = _RESULTS[number]
        terminalreporter.write_line(f"criterion {number}: {c.verdict()}  {c.title}")
        for line in c.lines:
            terminalreporter.write_line("    " + line)
