import math

import numpy as np
import pytest

from phdyn.measures import TestFunctionFamily, integrate
from phdyn.orbits import (
    canonical_rotation,
    empirical_measure,
    enumerate_base_periodic,
    find_fiber_fixed_points,
    orbit_segment,
    orbits_to_csv,
    periodic_orbits,
)
from phdyn.systems import (
    ShiftPoint,
    TorusPoint,
    center_log_derivative,
    circle_dist,
    shift_system,
    skew_apply,
)


def lattice_points(A, n):
    """Brute force: all y/D in [0,1)^2 with (A^n - I) y = 0 mod D."""
    B = np.linalg.matrix_power(np.array(A, dtype=np.int64), n) - np.eye(2, dtype=np.int64)
    D = abs(int(round(np.linalg.det(B))))
    ys = np.arange(D)
    out = []
    for y1 in range(D):
        r1 = (B[0, 0] * y1 + B[0, 1] * ys) % D
        r2 = (B[1, 0] * y1 + B[1, 1] * ys) % D
        for y2 in ys[(r1 == 0) & (r2 == 0)]:
            out.append((y1, int(y2)))
    return np.array(out) / D


def test_torus_base_points_small_n(torus):
    pts = enumerate_base_periodic(torus.base, 1)
    assert pts.tolist() == [[0.0, 0.0]]
    pts2 = enumerate_base_periodic(torus.base, 2)
    assert len(pts2) == 5
    for n in (2, 3, 4):
        got = {tuple(p) for p in enumerate_base_periodic(torus.base, n).tolist()}
        assert got == {tuple(p) for p in lattice_points(torus.base.matrix, n).tolist()}


def test_shift_words(shift):
    assert enumerate_base_periodic(shift.base, 2) == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert enumerate_base_periodic(shift.base, 2, dedup=True) == [(0, 0), (0, 1), (1, 1)]
    assert canonical_rotation((1, 0, 1, 1)) == (0, 1, 1, 1)


def test_fixed_points_identity_family():
    res = find_fiber_fixed_points([0.0, 0.0], [0.0, 0.0])
    assert res.degenerate and len(res) == 0


def test_fixed_points_single_map():
    res = find_fiber_fixed_points([0.0], [0.5])
    ts = [t for t, _, _ in res]
    stabs = [s for _, s, _ in res]
    assert ts == pytest.approx([0.0, 0.5], abs=1e-12)
    assert stabs == ["repelling", "attracting"]
    assert [ls for _, _, ls in res] == pytest.approx([math.log(1.5), math.log(0.5)], abs=1e-12)


def test_no_fixed_point_when_displacement_bounded():
    res = find_fiber_fixed_points([0.5], [0.1])
    assert len(res) == 0 and not res.degenerate
    assert "no fixed point" in res.note
    # displacement 0.5 + (0.1/2pi) sin stays within [0.484, 0.516]
    ts = np.linspace(0, 1, 1001)
    disp = 0.5 + 0.1 / (2 * np.pi) * np.sin(2 * np.pi * ts)
    assert disp.min() > 0.48 and disp.max() < 0.52


def test_grid_doubling_finds_no_more(shift, rng):
    for _ in range(10):
        w = rng.integers(0, 2, size=int(rng.integers(2, 9)))
        betas = np.array([0.0, 0.0])[w]
        amps = np.array([-0.5, 0.5])[w]
        coarse = find_fiber_fixed_points(betas, amps, grid=2**10)
        fine = find_fiber_fixed_points(betas, amps, grid=2**11)
        assert len(fine) <= len(coarse)


def test_periodic_orbits_flat_torus(flat_torus):
    orbits = periodic_orbits(flat_torus, 1)
    assert orbits
    assert all(o.exponent == 0.0 for o in orbits)
    assert all(o.base.tolist() == [[0.0, 0.0]] for o in orbits)


def test_fixed_orbit_signs(shift):
    orbits = periodic_orbits(shift, 1)
    by_word = {}
    for o in orbits:
        by_word.setdefault(o.word, []).append(o)
    q = [o for o in by_word[(0,)] if o.t_star == 0.0][0]
    p = [o for o in by_word[(1,)] if o.t_star == 0.0][0]
    assert q.exponent == pytest.approx(math.log(0.5)) and q.exponent < 0
    assert p.exponent == pytest.approx(math.log(1.5)) and p.exponent > 0


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_orbit_invariants(torus, shift, n):
    for system in (torus, shift):
        for o in periodic_orbits(system, n):
            x = o.point(0)
            back = skew_apply(system, x, o.period)
            if system.kind == "torus":
                assert x.distance(back) < 1e-10
            else:
                assert circle_dist(x.t, back.t) < 1e-10
            logs = [center_log_derivative(system, o.point(i)) for i in range(o.period)]
            assert o.exponent == pytest.approx(math.fsum(logs) / o.period, abs=1e-12)


def test_shift_orbits_dedup_rotations(shift):
    words = {o.word for o in periodic_orbits(shift, 3)}
    assert words == {(0, 0, 1), (0, 1, 1)}


def test_orbits_csv(shift):
    text = orbits_to_csv(periodic_orbits(shift, 1))
    lines = text.splitlines()
    assert lines[0] == "itinerary,period,t_star,lambda_c,stability"
    assert len(lines) == 5


def test_empirical_measure_weights(shift):
    o1 = [o for o in periodic_orbits(shift, 1)][0]
    mu = empirical_measure(o1)
    assert len(mu) == 1 and mu.weights.tolist() == [1.0]
    o2 = periodic_orbits(shift, 2)[0]
    mu2 = empirical_measure(o2)
    assert mu2.weights.tolist() == [0.5, 0.5]


def test_segment_measure_is_arithmetic_mean(torus, shift):
    fam = TestFunctionFamily("torus")
    seg = orbit_segment(torus, TorusPoint(0.1234, 0.5678, 0.91), 10)
    mu = empirical_measure(seg)
    assert len(mu) == 10
    pts = []
    p = seg.start
    for _ in range(10):
        pts.append(p.coords)
        p = skew_apply(torus, p, 1)
    pts = np.array(pts)
    for i in (1, 2, 17, 100):
        g = fam[i]
        ph = 2 * np.pi * pts @ np.array(g.freq, dtype=float)
        vals = np.cos(ph) if g.kind == "cos" else np.sin(ph)
        assert integrate(i, mu) == pytest.approx(float(np.mean(vals)), abs=1e-12)


def test_segment_logs_match(shift):
    p = ShiftPoint((1, 1, 0, 1, 0, 0, 1), (1,), (0,), (1, 0), 0.3)
    seg = orbit_segment(shift, p, 12)
    q = p
    for i in range(12):
        assert seg.center_logs[i] == center_log_derivative(shift, q)
        q = skew_apply(shift, q, 1)


def test_window_exhausted():
    s = shift_system()
    p = ShiftPoint((0, 1), (), (), (0,), 0.1)
    with pytest.raises(ValueError):
        skew_apply(s, p, 5)
