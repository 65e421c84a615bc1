import math

import numpy as np
import pytest

from conftest import FROZEN, birth_model, bundled
from fptbound.model import FptQuery, Objective
from fptbound.sdp import MAXIMIZE, MINIMIZE, NumericProblem, assemble
from fptbound.solver import (
    SdpaParseError,
    Solution,
    StandardSdp,
    Status,
    bound,
    export_sdpa,
    format_sdpa_result,
    lower_numeric,
    parse_sdpa,
    parse_sdpa_solution,
    solve,
    solve_numeric,
    solve_problem,
)

M25 = FptQuery((("M", 25),), 1.0, order=2)


def toy(A, rhs, c, sense=MINIMIZE):
    """One 2x2 moment matrix [[v0, v1], [v1, v2]] with equalities A v = rhs."""
    entries = [(0, 0, 0, 1.0), (0, 1, 1, 1.0), (1, 1, 2, 1.0)]
    A = np.asarray(A, dtype=float).reshape(-1, 3)
    return NumericProblem(
        [2], [entries], A, np.asarray(rhs, float), np.asarray(c, float), np.ones(3), np.full(3, -np.inf), np.full(3, np.inf), sense
    )


def test_min_x0_with_pinned_entries():
    sol = solve_numeric(toy([[0, 1, 0], [0, 0, 1]], [1, 1], [1, 0, 0]))
    assert sol.status == Status.OPTIMAL
    assert abs(sol.primal_objective - 1.0) < 1e-7


def test_correlation_bound():
    sol = solve_numeric(toy([[1, 0, 0], [0, 0, 1]], [1, 1], [0, 1, 0], MAXIMIZE))
    assert sol.status == Status.OPTIMAL
    assert abs(sol.dual_objective - 1.0) < 1e-7


def test_empty_equalities():
    sol = solve_numeric(toy(np.zeros((0, 3)), [], [1, 0, 0]))
    assert sol.status == Status.OPTIMAL
    assert abs(sol.primal_objective) < 1e-7


def test_contradictory_equalities():
    sol = solve_numeric(toy([[1, 0, 0], [1, 0, 0]], [1, 2], [1, 0, 0]))
    assert sol.status == Status.INFEASIBLE


def _diag_problem(c, a, b):
    return StandardSdp([-len(c)], [np.asarray(c, float)], [np.asarray(a, float)], np.asarray(b, float))


def test_unbounded_ray():
    # min -y s.t. y >= 0
    assert solve(_diag_problem([0.0], [[1.0]], [-1.0])).status == Status.UNBOUNDED


def test_infeasible_certificate():
    # y * 0 - 1 >= 0 is impossible
    assert solve(_diag_problem([1.0], [[0.0]], [1.0])).status == Status.INFEASIBLE


def test_dense_block_eigenvalue():
    # min y s.t. y I - [[0,1],[1,0]] >= 0 has optimum 1
    sdp = StandardSdp([2], [np.array([[0.0, 1.0], [1.0, 0.0]])], [np.eye(2)[None]], np.array([1.0]))
    sol = solve(sdp)
    assert sol.status == Status.OPTIMAL and abs(sol.primal_objective - 1.0) < 1e-7


def test_standard_sdp_validates_shapes():
    with pytest.raises(ValueError):
        StandardSdp([2], [np.zeros((3, 3))], [np.zeros((1, 2, 2))], np.zeros(1))
    with pytest.raises(ValueError):
        StandardSdp([2], [np.array([[0.0, 1.0], [0.0, 0.0]])], [np.zeros((1, 2, 2))], np.zeros(1))


# -- SDPA format ------------------------------------------------------------------

TOY = StandardSdp([2], [np.array([[1.0, 0.5], [0.5, 2.0]])], [np.array([[[1.0, 0.0], [0.0, 0.0]]])], np.array([3.0]))


def test_sdpa_toy_roundtrip():
    text = export_sdpa(TOY)
    lines = text.splitlines()
    assert lines[:5] == ['"fptbound', "1", "1", "2", "3.0"]
    assert lines[5:] == ["0 1 1 1 1.0", "0 1 1 2 0.5", "0 1 2 2 2.0", "1 1 1 1 1.0"]
    again = parse_sdpa(text)
    assert export_sdpa(again) == text
    assert np.array_equal(again.C[0], TOY.C[0]) and np.array_equal(again.A[0], TOY.A[0])


def test_sdpa_negative_block_is_diagonal():
    text = "1\n1\n-3\n1.0\n0 1 2 2 5.0\n1 1 3 3 1.0\n"
    sdp = parse_sdpa(text)
    assert sdp.sizes == [-3]
    assert sdp.C[0].shape == (3,) and sdp.C[0][1] == 5.0 and sdp.A[0][0, 2] == 1.0


def test_sdpa_accepts_punctuation():
    text = "* comment\n1 = mDIM\n1 = nBLOCK\n(2)\n{3.0}\n0,1,1,1,1.0\n"
    assert parse_sdpa(text).b.tolist() == [3.0]


@pytest.mark.parametrize(
    "text, line",
    [
        ("1\n1\n2\n", 3),
        ("1\n1\n2\n1.0 2.0\n", 4),
        ("1\n1\n2\n1.0\n0 1 1\n", 5),
        ("1\n1\n2\n1.0\n0 1 1 1 1.0\n5 1 1 1 1.0\n", 6),
        ("1\n1\n2\n1.0\n0 1 3 1 1.0\n", 5),
        ("1\n1\n-2\n1.0\n0 1 1 2 1.0\n", 5),
        ("x\n1\n2\n1.0\n", 1),
    ],
)
def test_sdpa_parse_errors_name_lines(text, line):
    with pytest.raises(SdpaParseError) as exc:
        parse_sdpa(text)
    assert exc.value.line == line
    assert f"line {line}" in str(exc.value)


def test_sdpa_model1_roundtrip_bitwise():
    m, q = bundled("model1_dimerization")
    sdp, _ = lower_numeric(assemble(m, q, MINIMIZE, species_scales={"M": 35.0}).numeric())
    text = export_sdpa(sdp)
    assert export_sdpa(parse_sdpa(text)) == text


def test_sdpa_solution_parse():
    text = """phase.value  = pdOPT
   Iteration = 17
objValPrimal = 2.5000000001e+00
objValDual   = 2.4999999990e+00
primalError  = 1e-12
dualError    = 2e-12
xVec =
{1.0, -2.5,
 3.0}
"""
    sol = parse_sdpa_solution(text)
    assert sol.status == Status.OPTIMAL and sol.iterations == 17
    assert sol.y.tolist() == [1.0, -2.5, 3.0]
    assert sol.primal_objective == 2.5000000001 and sol.dual_infeasibility == 2e-12
    again = parse_sdpa_solution(format_sdpa_result(sol))
    assert again.status == sol.status and again.y.tolist() == sol.y.tolist()


def test_sdpa_solution_errors():
    with pytest.raises(SdpaParseError):
        parse_sdpa_solution("objValPrimal = 1\nobjValDual = 1\n")
    with pytest.raises(SdpaParseError) as exc:
        parse_sdpa_solution("phase.value = pdOPT\nobjValPrimal = oops\n")
    assert exc.value.line == 2


def test_sdpa_infeasible_phase():
    sol = parse_sdpa_solution("phase.value = pINF_dUNBD\nobjValPrimal = 1e30\nobjValDual = 1e30\n")
    assert sol.status == Status.INFEASIBLE


# -- invariants on real problems ---------------------------------------------------


@pytest.fixture(scope="module")
def model1_sides():
    m, _ = bundled("model1_dimerization")
    out = {}
    for sense in (MINIMIZE, MAXIMIZE):
        p = assemble(m, M25, sense)
        sdp, low = lower_numeric(p.numeric())
        out[sense] = (sdp, solve(sdp))
    return out


def test_weak_duality_every_iterate(model1_sides):
    for sdp, sol in model1_sides.values():
        assert sol.history
        for rec in sol.history:
            assert rec.dual_objective <= rec.primal_objective + 1e-9 * (1 + abs(rec.primal_objective))
            assert rec.complementarity > 0


def test_optimal_solution_invariants(model1_sides):
    feas_tol = 1e-8
    for sdp, sol in model1_sides.values():
        assert sol.status == Status.OPTIMAL
        scale = 1 + float(np.abs(sdp.b).max())
        assert float(np.abs(sdp.apply(sol.X) - sdp.b).max()) <= feas_tol * scale
        for s, x in zip(sdp.sizes, sol.X):
            low = float(np.min(x)) if s < 0 else float(np.linalg.eigvalsh(x)[0])
            assert low >= -feas_tol
        for s, z in zip(sdp.sizes, sdp.slack(sol.y)):
            low = float(np.min(z)) if s < 0 else float(np.linalg.eigvalsh(z)[0])
            assert low >= -feas_tol * (1 + float(np.abs(z).max()))
        assert abs(sol.primal_objective - sol.dual_objective) <= 1e-7 * (1 + abs(sol.primal_objective))


def test_solver_is_deterministic():
    m, _ = bundled("model1_dimerization")
    a = solve_problem(assemble(m, M25))
    b = solve_problem(assemble(m, M25))
    assert a.primal_objective == b.primal_objective and np.array_equal(a.y, b.y)
    assert [r.primal_objective for r in a.history] == [r.primal_objective for r in b.history]


# -- bound() --------------------------------------------------------------------------


def test_bound_model1_order2_table_value(model1_sides):
    m, q = bundled("model1_dimerization")
    res = bound(m, q, 2)
    assert res.ok
    assert abs(res.lower - 0.2661) <= 5e-3 and abs(res.upper - 0.3068) <= 5e-3
    assert res.lower <= FROZEN["model1_mfpt_T1"] <= res.upper


def test_bound_pure_birth_infinite_horizon():
    m, q = birth_model()
    res = bound(m, q, 3)
    assert abs(res.lower - 2.0) <= 1e-3 and abs(res.upper - 2.0) <= 1e-3


def test_bound_contains_exact_value_model3():
    m, q = bundled("model3_gene_expression")
    res = bound(m, q, 3)
    assert res.lower <= FROZEN["model3_mfpt_T20"] <= res.upper


def test_bound_hitprob_clipped_to_unit_interval():
    m, _ = bundled("model1_dimerization")
    res = bound(m, M25.with_(objective=Objective.HIT_PROBABILITY, horizon=4.0), 2)
    assert 0.0 <= res.lower <= res.upper <= 1.0


def test_bound_reports_failed_side():
    m, q = bundled("model1_dimerization")
    res = bound(m, q, 2, max_iter=2)
    assert res.lower is None and res.upper is None
    assert any("lower side failed" in w for w in res.warnings)
    assert res.statuses == ("iteration_limit", "iteration_limit")


def test_bound_orders_nest():
    m, _ = bundled("model1_dimerization")
    prev = None
    for r in (1, 2, 3):
        res = bound(m, M25, r)
        if prev is not None:
            assert res.lower >= prev.lower - 1e-6 and res.upper <= prev.upper + 1e-6
        prev = res


def test_bound_as_dict_is_json_ready():
    import json

    m, _ = bundled("model1_dimerization")
    d = bound(m, M25, 1).as_dict()
    assert json.loads(json.dumps(d)) == d
    assert math.isfinite(d["lower"])


def test_solution_summary_fields():
    s = Solution(Status.OPTIMAL, 1.0, 1.0, 0.0)
    assert s.summary()["status"] == "optimal" and s.ok and s.value == 1.0
