import json
from pathlib import Path

import pytest

from fptbound.model import load, parse_model, parse_query

DATA = Path(__file__).resolve().parents[1] / "src" / "fptbound" / "data"
FROZEN = json.loads((Path(__file__).with_name("frozen.json")).read_text())

BIRTH = """
species A
init A=0
reaction 0 -> A @ 1.0
"""


def bundled(stem: str):
    return load(DATA / f"{stem}.pctmc")


@pytest.fixture(scope="session")
def model1():
    return bundled("model1_dimerization")


@pytest.fixture(scope="session")
def model2():
    return bundled("model2_parallel")


@pytest.fixture(scope="session")
def model3():
    return bundled("model3_gene_expression")


@pytest.fixture(scope="session")
def frozen():
    return FROZEN


def birth_model(query: str = "query { threshold A >= 2; horizon inf; timescale 2; order 3; }"):
    text = BIRTH + query
    return parse_model(text, "birth"), parse_query(text)


def exact_moments(rows, hybrid: bool = False) -> dict:
    """Frozen oracle moment rows as {MomentVar: value}; modes map Don -> (Don, Doff)."""
    from fptbound.constraints import HIT_FACE, HORIZON_FACE, OCCUPATION, Measure, MomentVar

    kinds = {"z": OCCUPATION, "y1": HIT_FACE, "y2": HORIZON_FACE}
    out = {}
    for kind, face, mode, exps, value in rows:
        tag = (mode, 1 - mode) if hybrid else None
        out[MomentVar(Measure(kinds[kind], face, tag), tuple(exps))] = value
    return out


# criterion number -> list of (passed, detail), filled by test_acceptance
ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[n]
        verdict = "PASS" if all(ok for ok, _ in parts) else "FAIL"
        terminalreporter.write_line(f"criterion {n}: {verdict}  " + "; ".join(d for _, d in parts))
