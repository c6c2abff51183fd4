import numpy as np
import pytest

from pqlab.discretization import GridFunction, ProblemParams, interval
from pqlab.curves import build_curve
from pqlab.solver import (
    BumpConstructionError,
    SolutionEntry,
    SolutionRegistry,
    SolverBudgetError,
    TOL_SOLVE,
    check_bounded_below_on_Y,
    classify,
    find_negative,
    find_positive,
    negative_level_bounds,
    verify_solution,
)
from pqlab.spectrum import build_table, exact_1d_eigenvalue


@pytest.fixture(scope="module")
def mesh192():
    return interval(1.0).mesh(192)


@pytest.fixture(scope="module")
def pipeline192(mesh192):
    pp = ProblemParams(3.0, 1.5)
    table = build_table(mesh192, pp, kmax=3)
    curve = build_curve(pp, mesh192, n_samples=5)
    return mesh192, pp, table, curve


# --- classify ----------------------------------------------------------------


def test_classify_subcritical(pipeline192):
    mesh, pp, table, curve = pipeline192
    v = classify(pp.with_(alpha=10.0, beta=3.0), table, curve, domain=mesh)
    assert v.negative_pairs == 0 and v.positive_pairs == 0
    assert v.citations == {"negative": None, "positive": None}


def test_classify_negative_counts_follow_beta(pipeline192):
    mesh, pp, table, curve = pipeline192
    lam2q = exact_1d_eigenvalue(1.5, 2)
    lam3q = exact_1d_eigenvalue(1.5, 3)
    one = classify(pp.with_(alpha=0.0, beta=8.0), table, curve, domain=mesh)
    two = classify(pp.with_(alpha=0.0, beta=0.5 * (lam2q + lam3q)),
                   table, curve, domain=mesh)
    assert one.negative_pairs == 1
    assert two.negative_pairs == 2
    assert one.citations["negative"] == "thm1(i)"
    # hypotheses log carries the certified comparisons
    assert any(h["holds"] for h in one.hypotheses_log)


def test_classify_positive_above_lambda2p(pipeline192):
    mesh, pp, table, curve = pipeline192
    alpha = 1.05 * exact_1d_eigenvalue(3.0, 2)
    v = classify(pp.with_(alpha=alpha, beta=0.0), table, curve, domain=mesh)
    assert v.positive_pairs >= 2
    assert v.citations["positive"] == "thm3"
    assert v.resonance_status == "NO"


def test_classify_resonant_alpha_flagged(pipeline192):
    mesh, pp, table, curve = pipeline192
    alpha = exact_1d_eigenvalue(3.0, 2)  # dead on lambda_2(p)
    v = classify(pp.with_(alpha=alpha, beta=0.0), table, curve, domain=mesh)
    assert v.resonance_status == "YES"


def test_classify_json(pipeline192):
    import json
    mesh, pp, table, curve = pipeline192
    v = classify(pp.with_(alpha=0.0, beta=8.0), table, curve, domain=mesh)
    doc = json.loads(v.to_json())
    assert doc["k"] == 1 and "citations" in doc


# --- level bounds --------------------------------------------------------------


def test_negative_level_bounds_shape(mesh192):
    pp = ProblemParams(3.0, 1.5, alpha=0.0, beta=16.0)
    bounds = negative_level_bounds(2, pp, mesh192, rng=0)
    assert len(bounds) == 2
    assert all(b < 0 for b in bounds)
    assert bounds[0] <= bounds[1]  # nested sets: levels nondecreasing


def test_negative_level_bounds_refuses_low_beta(mesh192):
    # k = 2 bumps need beta above the lambda_2(q) quotient; beta = 8 is below
    pp = ProblemParams(3.0, 1.5, alpha=0.0, beta=8.0)
    with pytest.raises(BumpConstructionError):
        negative_level_bounds(2, pp, mesh192, rng=0)
    one = negative_level_bounds(1, pp, mesh192, rng=0)
    assert len(one) == 1 and one[0] < 0


# --- searches -----------------------------------------------------------------


def test_find_negative_single_pair(mesh192):
    pp = ProblemParams(3.0, 1.5, alpha=0.0, beta=8.0)
    reg = find_negative(1, pp, mesh192, rng=1, starts=8)
    assert len(reg.entries) >= 1
    e = reg.entries[0]
    assert e.energy < 0
    assert e.residual <= TOL_SOLVE
    assert e.sign_class == "positive" or e.sign_class == "negative"
    assert e.barrier_ok is True
    bound = negative_level_bounds(1, pp, mesh192, rng=0)[0]
    assert e.energy <= bound + 2 * TOL_SOLVE


def test_find_negative_respects_budget(mesh192):
    pp = ProblemParams(3.0, 1.5, alpha=10.0, beta=3.0)  # subcritical
    with pytest.raises(SolverBudgetError) as ei:
        find_negative(1, pp, mesh192, rng=1, starts=6)
    reg = ei.value.registry
    assert len(reg.entries) == 0
    # every start collapsed toward zero
    scales = reg.diagnostics["final_relative_scales"]
    assert len(scales) > 0 and max(scales) < 1e-4


def test_find_positive_single_pair(mesh192):
    alpha = 1.05 * exact_1d_eigenvalue(3.0, 2)
    pp = ProblemParams(3.0, 1.5, alpha=alpha, beta=0.0)
    reg = find_positive(1, pp, mesh192, rng=1, starts=8)
    e = reg.entries[0]
    assert e.energy > 0
    assert e.in_B_plus
    assert e.residual <= TOL_SOLVE
    assert reg.diagnostics["c1_sign_constant"]


def test_pair_distance_and_is_new(mesh192):
    pp = ProblemParams(3.0, 1.5, alpha=0.0, beta=8.0)
    reg = find_negative(1, pp, mesh192, rng=1, starts=8)
    u = reg.entries[0].u
    # u and -u are the same pair
    assert reg.pair_distance(mesh192, u.values, (-u).values) == pytest.approx(0.0)
    assert not reg.is_new(mesh192, u.values)
    assert not reg.is_new(mesh192, 1.0001 * u.values)
    assert reg.is_new(mesh192, np.sin(
        7 * np.pi * mesh192.coords[:, 0]))


def test_registry_csv(tmp_path, mesh192):
    pp = ProblemParams(3.0, 1.5, alpha=0.0, beta=8.0)
    reg = find_negative(1, pp, mesh192, rng=1, starts=8)
    path = tmp_path / "reg.csv"
    sol = tmp_path / "sols"
    sol.mkdir()
    reg.to_csv(str(path), solutions_dir=str(sol))
    lines = path.read_text().splitlines()
    assert lines[0].startswith("index,energy,residual")
    assert len(lines) == len(reg.entries) + 1
    assert (sol / "solution_0.csv").exists()


def test_verify_solution_report(mesh192):
    pp = ProblemParams(3.0, 1.5, alpha=0.0, beta=8.0)
    reg = find_negative(1, pp, mesh192, rng=1, starts=8)
    rep = verify_solution(reg.entries[0].u, pp)
    assert rep["residual"] <= TOL_SOLVE
    assert rep["E_neg"] and not rep["E_pos"]
    # E = (p-q)/(pq) * G at critical points
    assert rep["nehari_identity_dev"] < 1e-6
    assert not rep["is_trivial"]
    zero = verify_solution(GridFunction.zeros(mesh192), pp)
    assert zero["is_trivial"] and zero["sign_class"] == "zero"


def test_check_bounded_below_on_Y(mesh192):
    pp = ProblemParams(3.0, 1.5, alpha=10.0, beta=3.0)
    lam = 1.1 * pp.alpha + 5.0
    rep = check_bounded_below_on_Y(lam, pp, mesh192, n_samples=25, rng=0)
    assert rep["rays_grow"]
    env = rep["envelope"]
    assert env[-1] > 0 and env[-1] > env[-2]
    with pytest.raises(ValueError):
        check_bounded_below_on_Y(0.5 * pp.alpha, pp, mesh192)


def test_registry_tag_levels(mesh192):
    entries = [
        SolutionEntry(u=GridFunction.zeros(mesh192), energy=-0.1,
                      residual=0.0, sign_class="positive"),
        SolutionEntry(u=GridFunction.zeros(mesh192), energy=-0.9,
                      residual=0.0, sign_class="positive"),
    ]
    reg = SolutionRegistry(p=3.0, entries=entries, diagnostics={})
    reg.tag_levels("a")
    tags = {e.energy: e.level_tag for e in reg.entries}
    assert tags[-0.9] == "a_1" and tags[-0.1] == "a_2"
