"""Acceptance criteria 1-10, each at its stated tolerance.

Every test prints one ``ACCEPTANCE n: PASS|FAIL`` line; the lines are
repeated in the terminal summary.
"""

import math
import time

import numpy as np
from phdyn.cli import main
from phdyn.experiments import ExperimentConfig, run_experiment_convex, run_experiment_gap, to_csv
from phdyn.gikn import verify_certificate
from phdyn.measures import center_exponent, convex_combine, weak_star_distance
from phdyn.orbits import EmpiricalMeasure, WINDOW_RADIUS, empirical_measure, enumerate_base_periodic, orbit_segment, periodic_orbits
from phdyn.pliss import PlissQuery, pliss_oracle, pliss_times
from phdyn.shadow import (
    CENTER_IN_E,
    CENTER_IN_F,
    check_quasi_hyperbolic,
    quasi_hyperbolic_from_logs,
    shadow_periodic,
    torus_pseudo_orbit,
)
from phdyn.systems import ShiftPoint, TorusPoint, skew_apply

from test_orbits import lattice_points


def _random_measure(rng, space):
    k = int(rng.integers(1, 7))
    w = rng.random(k)
    w /= w.sum()
    w[-1] = 1.0 - math.fsum(w[:-1])
    if space == "torus":
        return EmpiricalMeasure("torus", rng.random((k, 3)), w)
    win = rng.integers(0, 2, size=(k, 2 * WINDOW_RADIUS + 1)).astype(np.int8)
    return EmpiricalMeasure("shift", rng.random((k, 1)), w, win)


def test_criterion_01_pliss_equivalence(acceptance):
    rng = np.random.default_rng(1)
    queries = []
    while len(queries) < 1000:
        n = int(rng.integers(1, 201))
        b = float(rng.uniform(0.5, 2.0))
        a = rng.uniform(-2.0, b, size=n)
        c = float(np.mean(a))
        if c >= b:
            continue
        c_prime = c - float(rng.uniform(1e-3, 1.0))
        queries.append(PlissQuery(tuple(a), b, c, c_prime))
    t0 = time.perf_counter()
    results = [pliss_times(q) for q in queries]
    elapsed = time.perf_counter() - t0
    equal = all(list(r.indices) == pliss_oracle(q.a, q.c_prime) for q, r in zip(queries, results))
    bound = all(r.proportion >= q.guaranteed_proportion - 1e-12 for q, r in zip(queries, results))
    ok = equal and bound and elapsed < 5.0
    acceptance(1, ok, f"1000 queries, oracle-equal={equal}, proportion-bound={bound}, {elapsed:.2f}s")
    assert ok


def test_criterion_02_periodic_point_counts(torus, acceptance):
    A = np.array(torus.base.matrix, dtype=np.int64)
    t0 = time.perf_counter()
    counts = [len(enumerate_base_periodic(torus.base, n)) for n in range(1, 9)]
    elapsed = time.perf_counter() - t0
    want = [abs(int(np.trace(np.linalg.matrix_power(A, n))) - 2) for n in range(1, 9)]
    same_sets = all(
        {tuple(p) for p in enumerate_base_periodic(torus.base, n).tolist()}
        == {tuple(p) for p in lattice_points(A, n).tolist()}
        for n in range(1, 9)
    )
    ok = counts == want and counts[:3] == [1, 5, 16] and same_sets and elapsed < 10.0
    acceptance(2, ok, f"counts {counts}, lattice sets equal={same_sets}, {elapsed:.2f}s")
    assert ok


def test_criterion_03_metric_axioms(acceptance):
    rng = np.random.default_rng(3)
    depth = 20
    sym = tri = zero = trunc = True
    for i in range(200):
        space = "torus" if i % 2 == 0 else "shift"
        a, b, c = (_random_measure(rng, space) for _ in range(3))
        ab, ba = weak_star_distance(a, b, depth), weak_star_distance(b, a, depth)
        bc, ac = weak_star_distance(b, c, depth), weak_star_distance(a, c, depth)
        sym &= ab.exact == ba.exact
        tri &= ac.exact <= ab.exact + bc.exact
        zero &= weak_star_distance(a, a, depth).exact == 0
        deep = weak_star_distance(a, b, 64)
        trunc &= 0 <= deep.value - ab.value <= 2.0 ** (1 - depth)
    ok = sym and tri and zero and trunc
    acceptance(3, ok, f"200 triples: symmetry={sym}, triangle={tri}, d(mu,mu)=0 {zero}, depth gap={trunc}")
    assert ok


def test_criterion_04_exponent_affinity(torus, shift, acceptance):
    rng = np.random.default_rng(4)
    worst = 0.0
    for i in range(100):
        space, system = (("torus", torus), ("shift", shift))[i % 2]
        k = int(rng.integers(2, 6))
        w = rng.random(k)
        w /= w.sum()
        w[-1] = 1.0 - math.fsum(w[:-1])
        ms = [_random_measure(rng, space) for _ in range(k)]
        lhs = center_exponent(convex_combine(list(zip(w, ms))), system)
        rhs = math.fsum(wi * center_exponent(m, system) for wi, m in zip(w, ms))
        worst = max(worst, abs(lhs - rhs))
    ok = worst <= 1e-12
    acceptance(4, ok, f"100 combinations, max |deviation| = {worst:.3g}")
    assert ok


def test_criterion_05_shadowing(torus, acceptance):
    rng = np.random.default_rng(5)
    t0 = time.perf_counter()
    orbits = [o for n in (3, 4) for o in periodic_orbits(torus, n) if abs(o.exponent) > 1e-3][:10]
    ratios, residuals, verified = [], [], True
    for o in orbits:
        for d in (1e-3, 1e-4, 1e-5):
            plan = torus_pseudo_orbit(torus, o, d, rng)
            verified &= plan.qh.verified
            res = shadow_periodic(torus, plan)
            back = skew_apply(torus, res.orbit.point(0), res.orbit.period)
            residuals.append(max(res.residual, res.orbit.point(0).distance(back)))
            ratios.append(res.distance / d)
    elapsed = time.perf_counter() - t0
    band = max(ratios) / min(ratios)
    ok = len(ratios) == 30 and verified and max(residuals) < 1e-9 and band <= 2.0 and elapsed < 60
    acceptance(5, ok, f"30 runs, ratio in [{min(ratios):.3f}, {max(ratios):.3f}] (band {band:.2f}), "
                      f"max residual {max(residuals):.2g}, {elapsed:.1f}s")
    assert ok


def test_criterion_06_convex_segment(acceptance):
    t0 = time.perf_counter()
    table = run_experiment_convex(ExperimentConfig(experiment="convex", depth=20))
    elapsed = time.perf_counter() - t0
    alphas = [r["alpha"] for r in table.rows]
    dist = max(r["distance"] for r in table.rows)
    dexp = max(abs(r["achieved_exponent"] - r["mixture_exponent"]) for r in table.rows)
    ok = len(alphas) == 11 and dist < 0.05 and dexp < 0.02 and elapsed < 120
    acceptance(6, ok, f"11 alphas, max distance {dist:.3g} (< 0.05), max exponent gap {dexp:.3g} (< 0.02), {elapsed:.1f}s")
    assert ok


def test_criterion_07_gikn(gikn6, acceptance):
    seq = gikn6
    depth = 64
    lams = seq.exponents
    zeta = seq.params.zeta
    rho = seq.rho_fit
    certs = all(verify_certificate(seq.system, seq.orbits[n + 1], seq.orbits[n], c)
                for n, c in enumerate(seq.certificates))
    summable = seq.schedule.ratio < 1 and seq.sum_eps < seq.schedule.total
    product = seq.prod_kappa > 1 + (2 * rho / (1 - zeta)) * lams[0] and lams[0] < 0
    ratios = [b / a for a, b in zip(lams, lams[1:])]
    monotone = all(abs(b) < abs(a) for a, b in zip(lams, lams[1:])) and all(r > zeta for r in ratios)
    final = abs(lams[-1]) < 1e-2
    d = weak_star_distance(empirical_measure(seq.orbits[0]), empirical_measure(seq.orbits[-1]), depth).value
    bound = (2 + 4 * rho / (1 - zeta)) * abs(lams[0]) + 2.0 ** (1 - depth)
    ok = (len(seq.certificates) == 6 and abs(lams[0]) <= 0.1 and certs and summable and product
          and monotone and final and d <= bound and seq.build_seconds < 120)
    acceptance(7, ok, f"6 steps, periods {seq.periods}, final exponent {lams[-1]:.3g}, rho_fit {rho:.3g}, "
                      f"prod kappa {seq.prod_kappa:.3g}, d(mu0, mu6) {d:.3g} <= {bound:.3g}, {seq.build_seconds:.1f}s")
    assert ok


def test_criterion_08_gap_scaling(acceptance):
    cfg = ExperimentConfig(experiment="gap", alphas=[0.5], gap_lambdas=[0.08, 0.04, 0.02])
    table = run_experiment_gap(cfg)
    by_lam = {}
    for r in table.rows:
        lam = min(cfg.gap_lambdas, key=lambda x: abs(x - abs(r["q_exponent"])))
        by_lam[lam] = r["distance"]
    ratios = [by_lam[0.04] / by_lam[0.08], by_lam[0.02] / by_lam[0.04]]
    ok = all(0.3 <= x <= 0.8 for x in ratios) and table.passed
    acceptance(8, ok, f"distances {[round(by_lam[x], 5) for x in (0.08, 0.04, 0.02)]}, "
                      f"halving ratios {[round(x, 3) for x in ratios]}")
    assert ok


def _random_strings(rng, shift, torus, count):
    """Random orbit segments with a rate at which they are quasi-hyperbolic."""
    out = []
    while len(out) < count:
        n = int(rng.integers(1, 60))
        if len(out) % 2 == 0:
            word = tuple(int(x) for x in (rng.random(n) < 0.3))
            p = ShiftPoint(word, (0,), (), (0,), float(rng.random()))
            seg, split, system = orbit_segment(shift, p, n), CENTER_IN_E, shift
        else:
            p = TorusPoint(*rng.random(3))
            seg, split, system = orbit_segment(torus, p, n), CENTER_IN_F, torus
        ls, lu = math.log(system.stable_rate()), math.log(system.unstable_rate())
        c = seg.center_logs
        k = np.arange(1, n + 1)
        if split is CENTER_IN_E:
            worst = np.max(np.cumsum(np.maximum(c, ls)) / k)
            worst = max(worst, -lu)
        else:
            suf = np.cumsum(np.minimum(c, lu)[::-1])
            worst = max(ls, float(np.max(-suf / k)))
        lam_min = math.exp(worst)
        if lam_min >= 0.999:
            continue
        lam = float(rng.uniform(lam_min, 1.0))
        qh = check_quasi_hyperbolic(seg, lam, split)
        if qh.verified:
            out.append((seg, lam, split))
    return out


def test_criterion_09_rate_monotonicity(shift, torus, acceptance):
    rng = np.random.default_rng(9)
    strings = _random_strings(rng, shift, torus, 500)
    ok_all = all(check_quasi_hyperbolic(seg, (1 + lam) / 2, split).verified for seg, lam, split in strings)
    logs_ok = all(
        quasi_hyperbolic_from_logs(seg.center_logs, seg.system.stable_rate(), seg.system.unstable_rate(),
                                   (1 + lam) / 2, split).verified
        for seg, lam, split in strings[:50]
    )
    ok = len(strings) == 500 and ok_all and logs_ok
    acceptance(9, ok, f"{len(strings)} verified strings, all verify at (1+lambda)/2: {ok_all}")
    assert ok


def test_criterion_10_determinism(tmp_path, acceptance, capsys):
    same = {}
    for name in ("convex", "gap"):
        outs = []
        for run in ("a", "b"):
            out = tmp_path / f"{name}_{run}"
            assert main(["experiment", name, "--seed", "11", "--out", str(out)]) == 0
            outs.append((out / f"{name}.csv").read_bytes())
        same[name] = len(outs[0]) > 0 and outs[0] == outs[1]
    capsys.readouterr()
    ok = all(same.values())
    acceptance(10, ok, "identical CSV bytes on rerun: " + ", ".join(f"{k}={v}" for k, v in same.items()))
    assert ok
