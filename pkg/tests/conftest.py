import numpy as np
import pytest

from citedyn.citation_data import CitationHistory
from citedyn.synth import generate_cohort


@pytest.fixture(scope="session")
def small_cohort():
    return generate_cohort(40, noise="poisson", param_jitter=0.05, seed=11)


@pytest.fixture
def history():
    def make(counts, pid="p"):
        return CitationHistory(pid, np.asarray(counts))

    return make


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "skipped"):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance" not in getattr(rep, "nodeid", "") or rep.when not in ("call", "setup"):
                continue
            if rep.when == "setup" and outcome != "skipped":
                continue
            detail = dict(rep.user_properties).get("detail", "")
            name = rep.nodeid.split("::")[-1]
            lines.append(f"{outcome.upper():8s} {name} {detail}")
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: s.split()[1]):
            terminalreporter.write_line(line)
