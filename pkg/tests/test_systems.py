import math

import numpy as np
import pytest

from phdyn.systems import (
    BudgetExceeded,
    CircleFiberMap,
    ShiftPoint,
    TorusBase,
    TorusPoint,
    base_cocycle_rates,
    blender_covering_check,
    center_log_derivative,
    circle_dist,
    expansion_factor_check,
    load_system,
    skew_apply,
    torus_system,
)


def fiber_step(beta, a, t):
    return t + beta + a / (2 * math.pi) * math.sin(2 * math.pi * t)


def test_zero_steps_is_identity(torus, shift):
    p = TorusPoint(0.3, 0.7, 0.1)
    assert skew_apply(torus, p, 0) == p
    q = ShiftPoint.periodic((0, 1, 1), t=0.4)
    assert skew_apply(shift, q, 0) == q


def test_flat_torus_fixed_point(flat_torus):
    p = TorusPoint(0.0, 0.0, 0.25)
    q = skew_apply(flat_torus, p, 1)
    assert (q.x1, q.x2, q.t) == (0.0, 0.0, 0.25)


def test_shift_fiber_matches_direct_composition(shift):
    p = ShiftPoint.periodic((0,), t=0.1)
    t = 0.1
    f0 = shift.fibers[0]
    for _ in range(5):
        t = fiber_step(f0.beta, f0.a, t)
    assert skew_apply(shift, p, 5).t == pytest.approx(t % 1.0, abs=1e-15)


@pytest.mark.parametrize("n,m", [(3, 4), (-2, 5), (7, -7), (-3, -4)])
def test_composition_law(shift, torus, n, m):
    p = ShiftPoint((1, 0, 0, 1), (0,), (1, 1), (0, 1), 0.37)
    lhs = skew_apply(shift, skew_apply(shift, p, m), n)
    rhs = skew_apply(shift, p, n + m)
    assert lhs.symbols(-20, 20).tolist() == rhs.symbols(-20, 20).tolist()
    assert circle_dist(lhs.t, rhs.t) < 1e-12
    z = TorusPoint(0.12, 0.34, 0.56)
    a = skew_apply(torus, skew_apply(torus, z, m), n)
    b = skew_apply(torus, z, n + m)
    # base errors grow like lambda_u^|n|+|m|
    assert a.distance(b) < 1e-9


def test_budget(shift):
    with pytest.raises(BudgetExceeded):
        skew_apply(shift, ShiftPoint.periodic((0,)), 11, budget=10)


def test_center_log_derivative_examples(flat_torus, torus, shift):
    assert center_log_derivative(flat_torus, TorusPoint(0.2, 0.3, 0.4)) == 0.0
    h = 1e-6
    f = CircleFiberMap(0.0, 0.5)
    for t, expected in ((0.0, 0.4054651), (0.5, -0.6931472)):
        fd = (f.lift(t + h) - f.lift(t - h)) / (2 * h)
        assert center_log_derivative(torus, TorusPoint(0.0, 0.0, t)) == pytest.approx(math.log(fd), abs=1e-9)
        assert center_log_derivative(shift, ShiftPoint.periodic((1,), t=t)) == pytest.approx(expected, abs=1e-7)


def test_cocycle_rates():
    base = TorusBase(((2, 1), (1, 1)))
    roots = sorted(np.roots([1, -3, 1]))
    ls, lu = base_cocycle_rates(base, 1)
    assert ls == pytest.approx(roots[0], abs=1e-14)
    assert lu == pytest.approx(roots[1], abs=1e-14)
    assert ls * lu == pytest.approx(1.0, abs=1e-12)
    ls2, lu2 = base_cocycle_rates(base, 2)
    assert (ls2, lu2) == pytest.approx((ls**2, lu**2), rel=1e-14)
    with pytest.raises(ValueError):
        base_cocycle_rates(base, 0)


def test_non_hyperbolic_matrix_rejected():
    with pytest.raises(ValueError):
        TorusBase(((1, 1), (0, 1)))


def test_partial_hyperbolicity_margin(torus):
    ls, lu = base_cocycle_rates(torus.base, 1)
    lo, hi = torus.fibers[0].derivative_bounds
    assert hi < lu and lo > ls


def test_fiber_lift_monotone_and_invertible(rng):
    for a in (-0.9, -0.3, 0.0, 0.5, 0.99):
        f = CircleFiberMap(rng.random(), a)
        ts = np.sort(rng.random(500) * 3 - 1)
        ys = f.lift(ts)
        assert np.all(np.diff(ys) > 0)
        assert np.max(np.abs(f.inverse_lift(ys) - ts)) < 1e-12


def test_cocycle_multiplicativity(shift, torus):
    h = 1e-6
    p = ShiftPoint((1, 0, 1, 1, 0), (0, 1), (), (1,), 0.23)
    logs = []
    q = p
    for _ in range(5):
        logs.append(center_log_derivative(shift, q))
        q = skew_apply(shift, q, 1)

    def lift5(t):
        for i in range(5):
            f = shift.fibers[p.symbol(i)]
            t = fiber_step(f.beta, f.a, t)
        return t

    fd = (lift5(p.t + h) - lift5(p.t - h)) / (2 * h)
    assert sum(logs) == pytest.approx(math.log(fd), abs=1e-9)


def test_covering_identity_fails():
    ident = CircleFiberMap(0.0, 0.0)
    res = blender_covering_check(ident, ident, (0.2, 0.3), 0.01)
    assert not res.ok
    assert res.uncovered[1] > 0


def test_covering_translations_certify():
    for start, ell in ((0.1, 0.4), (0.7, 0.2), (0.0, 0.8)):
        f0 = CircleFiberMap(ell / 4, 0.0)
        f1 = CircleFiberMap(-ell / 4, 0.0)
        res = blender_covering_check(f0, f1, (start, ell), ell / 8)
        assert res.ok
        # endpoint arithmetic on lifts
        lo, hi = start + ell / 8, start + 7 * ell / 8
        assert min(a for a, _ in res.images) == pytest.approx(lo - ell / 4)
        assert max(b for _, b in res.images) == pytest.approx(hi + ell / 4)
        # monotone in the margin
        for m in (ell / 16, ell / 100):
            assert blender_covering_check(f0, f1, (start, ell), m).ok


def test_covering_margin_precondition():
    f = CircleFiberMap(0.1, 0.0)
    with pytest.raises(ValueError):
        blender_covering_check(f, f, (0.0, 0.4), 0.2)
    with pytest.raises(ValueError):
        blender_covering_check(f, f, (0.0, 1.0), 0.1)


def test_expansion_factor_examples():
    assert not expansion_factor_check(CircleFiberMap(0.0, 0.0), (0.0, 0.5), 1.01)
    f = CircleFiberMap(0.0, 0.5)
    # min of 1 + 0.5 cos(2 pi t) on |t| <= 0.05 is 1 + 0.5 cos(0.1 pi) ~ 1.4755
    assert expansion_factor_check(f, (-0.05, 0.1), 1.3)
    assert not expansion_factor_check(f, (-0.05, 0.1), 1.48)
    assert not expansion_factor_check(f, (0.0, 1.0), 1.1)


def test_invalid_amplitude():
    with pytest.raises(ValueError):
        CircleFiberMap(0.0, 1.0)


def test_load_system_round_trip(tmp_path, torus, shift):
    assert load_system(torus.to_config()).to_config() == torus.to_config()
    assert load_system(shift.to_config()).to_config() == shift.to_config()
    path = tmp_path / "sys.yaml"
    path.write_text("base:\n  kind: torus\nfiber:\n  a: 0.3\n  beta: 0.1\n  modulation: none\n")
    s = load_system(path)
    assert s.fibers[0].a == 0.3 and s.modulation == "none"
    with pytest.raises(ValueError):
        load_system({"base": {"kind": "cube"}})


def test_points_are_canonical():
    p = TorusPoint(1.25, -0.25, 2.5)
    assert (p.x1, p.x2, p.t) == (0.25, 0.75, 0.5)
    assert ShiftPoint.periodic((1,), t=-0.1).t == pytest.approx(0.9)


def test_torus_system_default_margin():
    s = torus_system()
    up, down = s.partial_hyperbolicity_margin()
    assert up > 0 and down > 0
