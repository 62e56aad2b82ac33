from __future__ import annotations

import pytest

from bmdp.bench import embedded_model
from bmdp.model import Action, Bmdp, Outcome, TypeSpec

# Filled by test_acceptance; reported after the run whatever the capture mode.
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def build(types: dict, init=(), name=None) -> Bmdp:
    """Model from ``{type: {action: (cost, [(p, [child, ...]), ...])}}`` using type names."""
    names = list(types)
    idx = {n: i for i, n in enumerate(names)}
    specs = []
    for tname, actions in types.items():
        acts = []
        for aname, (cost, outs) in actions.items():
            acts.append(Action(aname, cost, tuple(Outcome(p, tuple(idx[k] for k in kids)) for p, kids in outs)))
        specs.append(TypeSpec(tname, tuple(acts)))
    return Bmdp(tuple(specs), tuple(idx[n] for n in init), name)


@pytest.fixture(scope="session")
def cloud1():
    return embedded_model("cloud1")


@pytest.fixture(scope="session")
def cloud2():
    return embedded_model("cloud2")


@pytest.fixture(scope="session")
def cloud2_p50():
    return embedded_model("cloud2_p50")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k.split()[0])):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {key}: {detail}")
