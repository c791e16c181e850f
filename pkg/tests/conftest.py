import numpy as np
import pytest

from magnls import ansatz, field
from magnls.groundstate import solve_ground_state


@pytest.fixture(scope="session")
def profile2():
    return solve_ground_state(3.0, 2)


@pytest.fixture(scope="session")
def profile1():
    return solve_ground_state(3.0, 1)


@pytest.fixture(scope="session")
def gaussian():
    return field.make_potential("gaussian_bump")


@pytest.fixture(scope="session")
def saddle():
    return field.make_potential("poly_saddle")


def _bump_config(potential, profile, eps, centers, recenter=True, **kw):
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    pot = ansatz.recenter_gauge(potential, centers[0]) if recenter else potential
    return ansatz.make_config(pot, profile, eps, centers, **kw)


@pytest.fixture(scope="session")
def bump_config():
    """Factory for bump configs, gauge recentred at the first centre unless told otherwise."""
    return _bump_config


class AcceptanceLog:
    """Collects per-criterion checks; printed as one line per criterion at the end of the run."""

    def __init__(self):
        self.parts = {}

    def check(self, number, title, label, ok, detail, seconds=0.0, limit=None):
        entry = self.parts.setdefault(number, {"title": title, "items": [], "seconds": 0.0, "limit": limit})
        entry["items"].append((label, bool(ok), detail))
        entry["seconds"] += seconds
        print(f"criterion {number} [{label}] {'pass' if ok else 'FAIL'}: {detail}")
        return bool(ok)

    def lines(self):
        out = []
        for n in sorted(self.parts):
            e = self.parts[n]
            ok = all(item[1] for item in e["items"])
            timing = f"{e['seconds']:.1f}s"
            if e["limit"] is not None:
                in_time = e["seconds"] < e["limit"]
                ok = ok and in_time
                timing += f" (limit {e['limit']}s{'' if in_time else ', EXCEEDED'})"
            items = "; ".join(f"{label}: {'ok' if good else 'FAIL'} {detail}" for label, good, detail in e["items"])
            out.append(f"criterion {n} {'PASS' if ok else 'FAIL'} {e['title']} [{timing}] -- {items}")
        return out


_ACCEPTANCE = AcceptanceLog()


@pytest.fixture(scope="session")
def acceptance():
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    lines = _ACCEPTANCE.lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
