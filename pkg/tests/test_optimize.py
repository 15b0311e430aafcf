import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from foerster.model import OneEigenstate, TwoEigenstate, two_pi_mhz
from foerster.optimize import (
    TO_BOUNDS,
    GateObjective,
    ObjectiveError,
    OptimizerError,
    OptProblem,
    blockade_limit_infidelity,
    build_schedule,
    cross_evaluate,
    local_refine,
    multistart,
    optimize_to_gate,
    to_problem,
)
from foerster.metrics import evaluate_gate
from foerster.pulses import ScheduleError

OMEGA = two_pi_mhz(10)


def quad1(x):
    return float((x[0] - 3.0) ** 2)


def wells(x):
    return float(np.cos(5 * x[0]) + x[0] ** 2 / 10)


def rosen(x):
    return float((1 - x[0]) ** 2 + 10 * (x[1] - x[0] ** 2) ** 2)


def test_quadratic_recovered():
    res = local_refine(OptProblem(quad1, ((-10, 10),)), [0.0])
    assert res.x[0] == pytest.approx(3.0, abs=1e-6)
    assert res.fun <= quad1([0.0])


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.5, 2.0), st.floats(-4, 4), st.floats(-4, 4))
@settings(max_examples=25, deadline=None)
def test_convex_quadratic_from_any_start(a, b, c, x0, y0):
    def f(x):
        return float(c * (x[0] - a) ** 2 + (x[1] - b) ** 2 + 0.3 * (x[0] - a) * (x[1] - b))

    res = local_refine(OptProblem(f, ((-6, 6), (-6, 6))), [x0, y0])
    assert np.allclose(res.x, [a, b], atol=1e-6)


def test_multiwell_global_basin():
    res = multistart(OptProblem(wells, ((-5, 5),)), n_random=20, n_gaussian=0, seed=0)
    grid = np.linspace(-5, 5, 2_000_001)
    assert res.fun == pytest.approx(np.min(np.cos(5 * grid) + grid**2 / 10), abs=1e-4)


def test_multistart_determinism_and_history():
    p = OptProblem(rosen, ((-2, 2), (-1, 3)), names=("x", "y"))
    a = multistart(p, n_random=5, n_gaussian=3, seed=7)
    b = multistart(p, n_random=5, n_gaussian=3, seed=7)
    assert a.to_json() == b.to_json()
    assert a.fun == min(r.value for r in a.history)
    assert len(a.history) == 8 and a.restarts_exhausted
    assert a.n_evals == sum(r.n_evals for r in a.history)
    best_stage1 = min(r.value for r in a.history if r.stage == "random")
    assert a.fun <= best_stage1
    assert json.loads(a.to_json())["names"] == ["x", "y"]


def test_parallel_matches_serial():
    p = OptProblem(rosen, ((-2, 2), (-1, 3)))
    a = multistart(p, n_random=4, n_gaussian=2, seed=1)
    b = multistart(p, n_random=4, n_gaussian=2, seed=1, workers=2)
    assert a.to_json() == b.to_json()


def test_budget_cap_returns_best_so_far():
    p = OptProblem(rosen, ((-2, 2), (-1, 3)))
    res = multistart(p, n_random=10, n_gaussian=5, seed=0, max_evals=60)
    assert res.n_evals == 60
    assert res.budget_exhausted and not res.restarts_exhausted
    assert math.isfinite(res.fun)


def test_checkpoint_resume(tmp_path):
    p = OptProblem(rosen, ((-2, 2), (-1, 3)))
    ck = tmp_path / "run.json"
    full = multistart(p, n_random=4, n_gaussian=2, seed=3)
    multistart(p, n_random=4, n_gaussian=0, seed=3, checkpoint=ck)  # different meta: not resumable
    with pytest.raises(OptimizerError):
        multistart(p, n_random=4, n_gaussian=2, seed=3, checkpoint=ck)
    ck.unlink()
    first = multistart(p, n_random=4, n_gaussian=2, seed=3, checkpoint=ck)
    payload = json.loads(ck.read_text())
    payload["history"] = payload["history"][:3]
    ck.write_text(json.dumps(payload))
    resumed = multistart(p, n_random=4, n_gaussian=2, seed=3, checkpoint=ck)
    assert resumed.to_json() == first.to_json() == full.to_json()


def test_problem_validation():
    with pytest.raises(OptimizerError):
        OptProblem(quad1, ((1.0, 0.0),))
    with pytest.raises(OptimizerError):
        OptProblem(quad1, ((0.0, math.inf),))
    with pytest.raises(OptimizerError):
        local_refine(OptProblem(quad1, ((0, 1),)), [2.0])
    with pytest.raises(OptimizerError):
        multistart(OptProblem(quad1, ((0, 1),)), n_random=0, n_gaussian=0)


def test_objective_failure_carries_parameters():
    def bad(x):
        if x[0] > 0.5:
            raise FloatingPointError("boom")
        return float(-x[0])

    with pytest.raises(ObjectiveError) as err:
        local_refine(OptProblem(bad, ((0, 1),)), [0.2])
    assert err.value.params[0] > 0.5

    with pytest.raises(ObjectiveError):
        local_refine(OptProblem(lambda x: float("nan"), ((0, 1),)), [0.2])


def test_to_objective_is_deterministic_and_matches_evaluate_gate():
    obj = GateObjective(OneEigenstate(V=two_pi_mhz(100)), OMEGA)
    x = np.array([0.0, 1.0, 1.0, 0.0])
    assert obj(x) == obj(x)
    rep = evaluate_gate(obj.model, build_schedule("to", OMEGA, x), opts=obj.opts)
    assert obj(x) == pytest.approx(1 - rep.F_coh, abs=1e-15)


def test_to_local_refine_improves_start():
    p = to_problem(OneEigenstate(V=two_pi_mhz(100)), OMEGA)
    x0 = [0.0, 1.0, 1.0, 0.0]
    res = local_refine(p, x0, max_evals=400)
    assert res.fun < p.objective(np.array(x0))
    assert p.contains(res.x)


def test_nonpositive_omega_rejected():
    with pytest.raises(ScheduleError):
        to_problem(TwoEigenstate(V=1.0), 0.0).objective(np.array([0.0, 1.0, 1.0, 0.0]))
    with pytest.raises((ScheduleError, ValueError)):
        optimize_to_gate(TwoEigenstate(V=1.0), -1.0, n_random=1, n_gaussian=0, warm_start=False)


def test_blockade_limit_reaches_cz():
    x = (-0.0849, 0.6141, 1.2358, -math.pi / 2)
    assert blockade_limit_infidelity(x) < 1e-6
    assert blockade_limit_infidelity((0.0, 0.0, 1.0, 0.0)) > 0.1


@pytest.mark.slow
def test_to_gate_blockade_regime_models_agree():
    V = 10 * OMEGA
    one = optimize_to_gate(OneEigenstate(V=V), OMEGA, n_random=0, n_gaussian=0)
    two = optimize_to_gate(TwoEigenstate(V=V), OMEGA, n_random=0, n_gaussian=0, extra_starts=[one.x])
    assert abs(one.fun - two.fun) < 1e-4
    cross = cross_evaluate(one.x, OneEigenstate(V=V), TwoEigenstate(V=V), OMEGA)
    assert 1 - two.fun >= cross.F_coh - 1e-9
    assert (cross.model, cross.eval_model) == ("one", "two")


def test_cross_evaluate_consistency_and_symmetry():
    x = [-0.08, 0.6, 1.2, -1.5]
    m1, m2 = OneEigenstate(V=5 * OMEGA), TwoEigenstate(V=5 * OMEGA)
    same = cross_evaluate(x, m1, m1, OMEGA)
    assert same.F_coh == pytest.approx(1 - GateObjective(m1, OMEGA)(np.array(x)), abs=1e-15)
    back = cross_evaluate(x, m2, m1, OMEGA)
    assert (back.model, back.eval_model) == ("two", "one")
    assert back.F_coh == pytest.approx(same.F_coh, abs=1e-15)


def test_to_bounds_shape():
    assert len(TO_BOUNDS) == 4
    assert all(lo < hi for lo, hi in TO_BOUNDS)
