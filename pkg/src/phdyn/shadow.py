"""Quasi-hyperbolic strings, spliced pseudo-orbits and their shadowing orbits."""

import json
import math
from dataclasses import dataclass

import numpy as np

from .measures import weak_star_distance
from .orbits import (
    PeriodicOrbit,
    continue_orbit,
    empirical_measure,
    OrbitSegment,
    fiber_orbit,
    orbit_segment,
    orbits_over_word,
    return_map_params,
)
from .pliss import cyclic_good_start
from .systems import (
    TWO_PI,
    ShiftPoint,
    TorusPoint,
    circle_dist,
    skew_apply,
    torus_jacobian,
)

QH_SLACK = 1e-12
DEFAULT_TOL_HYP = 1e-3
SYMBOL_CAP = 64
GRID_WORD_LIMIT = 20000


@dataclass(frozen=True)
class SplittingSpec:
    """Which side of the dominated splitting carries the center bundle.

    ``center_in="F"``: E = E^ss, F = E^c + E^uu.
    ``center_in="E"``: E = E^ss + E^c, F = E^uu.
    """

    center_in: str

    def __post_init__(self):
        if self.center_in not in ("E", "F"):
            raise ValueError("center must sit in E or in F")

    @property
    def label(self):
        return "E=ss+c, F=uu" if self.center_in == "E" else "E=ss, F=c+uu"


CENTER_IN_E = SplittingSpec("E")
CENTER_IN_F = SplittingSpec("F")


@dataclass(frozen=True)
class QuasiHyperbolicString:
    length: int
    rate: float
    split: SplittingSpec
    verified: bool
    side: str = None  # "E" or "F" on failure
    index: int = None  # first violating k

    def to_dict(self):
        return {
            "length": self.length,
            "rate": self.rate,
            "split": self.split.label,
            "verified": self.verified,
            "side": self.side,
            "index": self.index,
        }


def _bundle_logs(center_logs, stable_rate, unstable_rate, split):
    c = np.asarray(center_logs, dtype=float)
    ls, lu = math.log(stable_rate), math.log(unstable_rate)
    if split.center_in == "E":
        e = np.maximum(c, ls)
        f = np.full(len(c), lu)
    else:
        e = np.full(len(c), ls)
        f = np.minimum(c, lu)
    return e, f


def quasi_hyperbolic_from_logs(center_logs, stable_rate, unstable_rate, rate, split):
    """Check both product families in log space.

    E side: sum_{i<k} log|Df|_E| <= k log(rate) for k = 1..n.
    F side: sum_{i>=k} log m(Df|_F) >= -(n-k) log(rate) for k = 0..n-1.
    """
    if not 0.0 < rate < 1.0:
        raise ValueError("rate must lie in (0, 1)")
    n = len(center_logs)
    if n < 1:
        raise ValueError("segment length must be >= 1")
    e, f = _bundle_logs(center_logs, stable_rate, unstable_rate, split)
    lr = math.log(rate)
    k = np.arange(1, n + 1)
    pre = np.cumsum(e)
    bad_e = np.nonzero(pre > k * lr + QH_SLACK * k)[0]
    suf = np.cumsum(f[::-1])[::-1]  # suf[k] = sum_{i>=k}
    m = n - np.arange(n)
    bad_f = np.nonzero(suf < -m * lr - QH_SLACK * m)[0]
    first_e = int(bad_e[0]) + 1 if len(bad_e) else None
    first_f = int(bad_f[0]) if len(bad_f) else None
    if first_e is None and first_f is None:
        return QuasiHyperbolicString(n, rate, split, True)
    if first_f is None or (first_e is not None and first_e <= first_f):
        return QuasiHyperbolicString(n, rate, split, False, "E", first_e)
    return QuasiHyperbolicString(n, rate, split, False, "F", first_f)


def check_quasi_hyperbolic(segment, rate, split):
    """Quasi-hyperbolicity of an orbit segment at the given rate."""
    sys_ = segment.system
    return quasi_hyperbolic_from_logs(
        segment.center_logs, sys_.stable_rate(), sys_.unstable_rate(), rate, split
    )


def split_for_exponent(exponent):
    """Center joins the contracting side for negative exponents."""
    return CENTER_IN_E if exponent < 0 else CENTER_IN_F


def rate_for_exponent(exponent):
    # square root of exp(-|lambda|)
    return math.exp(-0.5 * abs(exponent))


# --------------------------------------------------------------------------- plans


@dataclass
class PseudoOrbitPlan:
    """A periodic pseudo-orbit: one pass through ``word`` starting at ``start``.

    Symbolic plans splice ``anchor`` loops with a following segment; the
    start sits on the local unstable set of the anchor (its past is the
    anchor repeated). Torus plans perturb a periodic point; ``word`` is None.
    """

    system: object
    anchor: PeriodicOrbit
    start: object
    length: int
    gap: float
    alpha: float = 1.0
    word: tuple = None
    loops: int = 0
    follow: int = 0
    align: int = 0
    bridge: int = 0
    mixture: float = None
    rate: float = None
    split: SplittingSpec = None
    qh: QuasiHyperbolicString = None
    follow_distance: float = 0.0
    winding: np.ndarray = None

    def to_dict(self):
        out = {
            "kind": self.system.kind,
            "length": self.length,
            "gap": self.gap,
            "alpha": self.alpha,
            "loops": self.loops,
            "follow": self.follow,
            "align": self.align,
            "bridge": self.bridge,
            "mixture": self.mixture,
            "rate": self.rate,
            "follow_distance": self.follow_distance,
            "anchor_exponent": self.anchor.exponent,
            "qh": self.qh.to_dict() if self.qh else None,
        }
        if self.word is not None:
            out["word"] = "".join(map(str, self.word))
        else:
            out["start"] = list(map(float, self.start.coords))
        return out

    def to_json(self):
        return json.dumps(self.to_dict())


def alignment_steps(d, rate=0.5, diam=1.0):
    """Steps needed to enter the d/2-neighborhood at the given contraction rate."""
    if d <= 0:
        raise ValueError("d must be positive")
    if d >= 2 * diam:
        return 0
    return max(0, math.ceil(math.log(d / (2.0 * diam)) / math.log(rate)))


def _follow_word(target):
    if isinstance(target, PeriodicOrbit):
        if target.kind != "shift":
            raise ValueError("symbolic plans need a symbolic target")
        return tuple(target.word), True
    if isinstance(target, OrbitSegment):
        from .orbits import WINDOW_RADIUS

        syms = target.symbols[WINDOW_RADIUS : WINDOW_RADIUS + target.length]
        return tuple(int(s) for s in syms), False
    raise TypeError("target must be a periodic orbit or a stored orbit segment")


def _target_exponent(target):
    if isinstance(target, PeriodicOrbit):
        return target.exponent
    return float(np.mean(target.center_logs))


def _choose_lengths(alpha, pa, pf, repeatable, eps, align_loops, budget):
    """Anchor loops m and following loops r with the splice ratio inside eps."""
    ratio = alpha / (1.0 - alpha)
    n_align = align_loops * pa
    r = 1
    while True:
        T = r * pf
        m = max(2 * align_loops, int(round(ratio * T / pa)))
        A = m * pa
        if abs(A / T - ratio) + 2.0 * n_align / T < eps:
            return m, r
        if not repeatable:
            raise ValueError("following segment too short for the requested accuracy")
        r += 1
        if (r * pf) * (1.0 + ratio) > budget:
            raise ValueError(f"budget {budget} exhausted before the splice ratio stabilized")


def assemble_pseudo_orbit(
    system,
    target,
    anchor,
    alpha,
    eps,
    budget=10**6,
    d=1e-3,
    tol_hyp=DEFAULT_TOL_HYP,
    bridge=(),
    depth=20,
    rate=None,
):
    """Splice anchor loops with a segment following the target.

    ``alpha`` is the weight of the anchor in the intended mixture. For a
    contracting anchor the word is anchor^(m-h) + follow + bridge + anchor^h,
    for an expanding anchor anchor^h + follow + bridge + anchor^(m-h), where
    h anchor loops give the alignment needed for a gap below d.
    """
    if system.kind != "shift":
        raise ValueError("spliced plans are built for symbolic systems; use torus_pseudo_orbit")
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    if anchor.kind != "shift":
        raise ValueError("anchor must be a symbolic periodic orbit")
    lam_a = anchor.exponent
    if abs(lam_a) <= tol_hyp:
        raise ValueError("anchor is neutral")
    aw = tuple(anchor.word)
    pa = len(aw)
    if alpha == 1.0:
        mixture = lam_a
        word, m, T, align, follow_distance = aw, 1, 0, 0, 0.0
    else:
        fw, repeatable = _follow_word(target)
        mixture = alpha * lam_a + (1.0 - alpha) * _target_exponent(target)
        if abs(mixture) <= tol_hyp:
            raise ValueError(f"non-hyperbolic mixture (exponent {mixture:.3g}); perturb alpha")
        if np.sign(mixture) != np.sign(lam_a):
            raise ValueError("anchor must share the sign of the mixture exponent")
        align = alignment_steps(d, system.stable_rate())
        h = max(1, math.ceil(align / pa))
        m, r = _choose_lengths(alpha, pa, len(fw), repeatable, eps, h, budget)
        follow = fw * r
        T = len(follow)
        if lam_a < 0:
            word = aw * (m - h) + follow + tuple(bridge) + aw * h
        else:
            word = aw * h + follow + tuple(bridge) + aw * (m - h)
        follow_distance = _follow_distance(system, target, aw, word, m, h, T, lam_a, depth)
    if len(word) > budget:
        raise ValueError(f"plan length {len(word)} exceeds budget {budget}")
    start = ShiftPoint(word, aw, (), tuple(reversed(aw)), anchor.t_star)
    betas, amps = return_map_params(system, word)
    ts, logs = fiber_orbit(betas, amps, anchor.t_star)
    rate = rate or rate_for_exponent(mixture)
    split = split_for_exponent(lam_a)
    qh = quasi_hyperbolic_from_logs(logs, system.stable_rate(), system.unstable_rate(), rate, split)
    if not qh.verified:
        raise ValueError(f"plan fails quasi-hyperbolicity on side {qh.side} at index {qh.index}")
    gap = _symbolic_gap(word, aw, ts[0], ts[-1])
    return PseudoOrbitPlan(
        system=system,
        anchor=anchor,
        start=start,
        length=len(word),
        gap=gap,
        alpha=alpha,
        word=word,
        loops=m,
        follow=T,
        align=align,
        bridge=len(bridge),
        mixture=mixture,
        rate=rate,
        split=split,
        qh=qh,
        follow_distance=follow_distance,
    )


def _follow_distance(system, target, aw, word, m, h, T, lam_a, depth):
    offset = (m - h) * len(aw) if lam_a < 0 else h * len(aw)
    p = ShiftPoint(word[offset:], aw, tuple(reversed(word[:offset])), tuple(reversed(aw)), 0.0)
    if isinstance(target, PeriodicOrbit):
        p = p.with_fiber(target.t_star)
        tmu = empirical_measure(target)
    else:
        p = p.with_fiber(target.start.t)
        tmu = empirical_measure(target)
    seg = orbit_segment(system, p, T)
    return weak_star_distance(empirical_measure(seg), tmu, depth).value


def _heteroclinic_symbols(word, aw, lo, hi):
    """Symbols lo..hi-1 of the point with past anchor^inf and future word + anchor^inf."""
    P, pa = len(word), len(aw)
    idx = np.arange(lo, hi)
    out = np.empty(len(idx), dtype=np.int8)
    w = np.asarray(word, dtype=np.int8)
    a = np.asarray(aw, dtype=np.int8)
    inside = (idx >= 0) & (idx < P)
    out[inside] = w[idx[inside]]
    after = idx >= P
    out[after] = a[(idx[after] - P) % pa]
    before = idx < 0
    out[before] = a[idx[before] % pa]
    return out


def nearest_mismatch_radius(mismatch, cap=SYMBOL_CAP):
    """For each position i, the least r >= 0 with a mismatch at i + r or (r > 0) at i - r."""
    n = len(mismatch)
    pos = np.arange(n)
    big = n + cap + 1
    nxt = np.where(mismatch, pos, big)
    nxt = np.minimum.accumulate(nxt[::-1])[::-1]
    prv = np.where(mismatch, pos, -big)
    prv = np.maximum.accumulate(prv)
    fwd = nxt - pos
    # a mismatch exactly at i is already counted forward with r = 0
    prev_strict = np.concatenate([[-big], prv[:-1]])
    bwd = pos - prev_strict
    return np.minimum(np.minimum(fwd, bwd), cap)


def _symbolic_gap(word, aw, t0, t_end):
    P = len(word)
    cap = SYMBOL_CAP
    # compare sigma^P(start) with start on coordinates -cap..cap
    here = _heteroclinic_symbols(word, aw, -cap, cap + 1)
    there = _heteroclinic_symbols(word, aw, P - cap, P + cap + 1)
    r = nearest_mismatch_radius(here != there, cap)[cap]
    sym = 0.0 if r >= cap else 2.0 ** (-int(r))
    return max(sym, float(circle_dist(t0, t_end)))


# --------------------------------------------------------------------------- torus plans


def _torus_lift_orbit(system, z, n):
    """Lifted orbit z, F(z), ..., F^n(z) in R^3 and the accumulated Jacobian."""
    A = system.base.array.astype(float)
    f = system.fibers[0]
    pts = np.empty((n + 1, 3))
    pts[0] = z
    J = np.eye(3)
    x = np.array(z, dtype=float)
    for i in range(n):
        J = torus_jacobian(system, x[:2], x[2]) @ J
        a_eff = float(system.effective_amplitude(x[0]))
        t = x[2] + f.beta + (a_eff / TWO_PI) * math.sin(TWO_PI * x[2])
        x = np.array([A[0] @ x[:2], A[1] @ x[:2], t])
        pts[i + 1] = x
    return pts, J


def _wrap(v):
    return v - np.round(v)


def torus_pseudo_orbit(system, orbit, d, rng, min_unstable=0.2, tol_hyp=DEFAULT_TOL_HYP):
    """Periodic d-pseudo-orbit near a torus periodic orbit.

    The orbit is rotated so that the segment is quasi-hyperbolic at the
    square-root rate of its exponent, and its first point is pushed along a
    random direction until the closing gap equals d.
    """
    if system.kind != "torus":
        raise ValueError("torus plans need a torus system")
    if abs(orbit.exponent) <= tol_hyp:
        raise ValueError("anchor is neutral")
    n = orbit.period
    logs = orbit.log_derivatives(system)
    split = split_for_exponent(orbit.exponent)
    rate = rate_for_exponent(orbit.exponent)
    if split.center_in == "E":
        s0 = cyclic_good_start(-logs, 0.5 * abs(orbit.exponent))
    else:
        rev = cyclic_good_start(logs[::-1], 0.5 * abs(orbit.exponent))
        s0 = (n - rev) % n
    p0 = orbit.point(s0)
    z0 = np.array(p0.coords)
    _, evu = system.base.eigenvectors()
    while True:
        v = rng.normal(size=3)
        v /= np.max(np.abs(v))
        if abs(np.dot(v[:2], evu)) / np.linalg.norm(v) >= min_unstable:
            break

    def gap(s):
        pts, _ = _torus_lift_orbit(system, z0 + s * v, n)
        return float(np.max(np.abs(_wrap(pts[-1] - pts[0]))))

    s = d
    for _ in range(30):
        g = gap(s)
        if g == 0:
            break
        if abs(g / d - 1.0) < 1e-6:
            break
        s *= d / g
    z = (z0 + s * v) % 1.0
    start = TorusPoint(*z)
    seg = orbit_segment(system, start, n)
    qh = check_quasi_hyperbolic(seg, rate, split)
    pts, _ = _torus_lift_orbit(system, z, n)
    winding = np.round(pts[-1] - pts[0])
    return PseudoOrbitPlan(
        system=system,
        anchor=orbit,
        start=start,
        length=n,
        gap=gap(s),
        mixture=orbit.exponent,
        rate=rate,
        split=split,
        qh=qh,
        winding=winding,
    )


# --------------------------------------------------------------------------- shadowing


@dataclass(frozen=True)
class ShadowingConstants:
    L: float
    d0: float

    def __post_init__(self):
        if not (self.L > 0 and self.d0 > 0):
            raise ValueError("L and d0 must be positive")


DEFAULT_CONSTANTS = ShadowingConstants(L=4.0, d0=1e-2)


@dataclass
class ShadowResult:
    orbit: PeriodicOrbit
    distance: float
    gap: float
    residual: float
    bound_ok: bool
    L: float
    iterations: int = 0

    @property
    def ratio(self):
        return self.distance / self.gap if self.gap > 0 else 0.0

    def to_dict(self):
        return {
            "period": self.orbit.period,
            "exponent": self.orbit.exponent,
            "distance": self.distance,
            "gap": self.gap,
            "ratio": self.ratio,
            "residual": self.residual,
            "bound_ok": self.bound_ok,
            "L": self.L,
            "iterations": self.iterations,
        }

    def to_json(self):
        return json.dumps(self.to_dict())


class ShadowingFailure(RuntimeError):
    pass


def shadow_periodic(system, plan, constants=DEFAULT_CONSTANTS, max_iter=60):
    """A genuine periodic orbit near the plan's pseudo-orbit.

    Symbolic plans repeat the plan word and solve for the fiber fixed point
    nearest the start. Torus plans run damped Newton on F^n(z) - z - w = 0
    over lifts. A distance above L*gap is reported through ``bound_ok``.
    """
    if plan.qh is not None and not plan.qh.verified:
        raise ValueError("plan is not quasi-hyperbolic")
    if plan.gap > constants.d0:
        raise ValueError(f"gap {plan.gap:.3g} exceeds admissible jump {constants.d0:.3g}")
    if system.kind == "shift":
        orbit, dist, res = _shadow_symbolic(system, plan)
        it = 0
    else:
        orbit, dist, res, it = _shadow_torus(system, plan, max_iter)
    ok = dist <= constants.L * plan.gap or dist == 0.0
    return ShadowResult(orbit, dist, plan.gap, res, ok, constants.L, it)


def _shadow_symbolic(system, plan):
    word = plan.word
    t0 = plan.start.t
    orbit = None
    if len(word) > GRID_WORD_LIMIT:
        # long words: continue the anchor's fiber point instead of a full grid scan
        try:
            orbit = continue_orbit(system, word, t0)
        except ValueError:
            orbit = None
    if orbit is None:
        orbits, fixed = orbits_over_word(system, word)
        if not orbits:
            raise ShadowingFailure(f"no fiber fixed point over the plan word ({fixed.note})")
        orbit = min(orbits, key=lambda o: (float(circle_dist(o.t_star, t0)), o.t_star))
    betas, amps = return_map_params(system, word)
    ts, _ = fiber_orbit(betas, amps, t0)
    fib = float(np.max(circle_dist(ts[:-1] % 1.0, orbit.fiber)))
    P = len(word)
    cap = SYMBOL_CAP
    lo, hi = -cap, P + cap
    pseudo = _heteroclinic_symbols(word, tuple(plan.anchor.word), lo, hi)
    w = np.asarray(word, dtype=np.int8)
    per = w[np.arange(lo, hi) % P]
    r = nearest_mismatch_radius(pseudo != per, cap)[cap : cap + P]
    rmin = int(r.min())
    sym = 0.0 if rmin >= cap else 2.0 ** (-rmin)
    tr, _ = fiber_orbit(betas, amps, orbit.t_star)
    res = float(circle_dist(tr[-1] % 1.0, orbit.t_star))
    return orbit, max(sym, fib), res


def _shadow_torus(system, plan, max_iter):

    n = plan.length
    w = plan.winding
    z = np.array(plan.start.coords, dtype=float)
    pseudo, _ = _torus_lift_orbit(system, z, n)
    it = 0
    for it in range(1, max_iter + 1):
        pts, J = _torus_lift_orbit(system, z, n)
        r = pts[-1] - pts[0] - w
        if np.max(np.abs(r)) < 1e-14:
            break
        step = np.linalg.solve(J - np.eye(3), -r)
        lam = 1.0
        base = np.max(np.abs(r))
        while lam > 1e-6:
            cand = z + lam * step
            pc, _ = _torus_lift_orbit(system, cand, n)
            if np.max(np.abs(pc[-1] - pc[0] - w)) < base:
                break
            lam *= 0.5
        else:
            raise ShadowingFailure("damped Newton stalled")
        z = cand
    else:
        raise ShadowingFailure(f"Newton did not converge in {max_iter} iterations")
    pts, _ = _torus_lift_orbit(system, z, n)
    dist = float(np.max(np.abs(_wrap(pts[:-1] - pseudo[:-1]))))
    # independent re-iteration on the torus
    p0 = TorusPoint(*(z % 1.0))
    back = skew_apply(system, p0, n)
    res = float(p0.distance(back))
    fib = pts[:-1, 2] % 1.0
    seg = orbit_segment(system, p0, n)
    s = float(np.sum(seg.center_logs))
    orbit = PeriodicOrbit(
        kind="torus",
        period=n,
        t_star=float(z[2] % 1.0),
        exponent=s / n,
        stability="repelling" if s > 0 else "attracting",
        fiber=fib,
        base=pts[:-1, :2] % 1.0,
    )
    return orbit, dist, res, it


def estimate_shadowing_constant(samples, floor=1.0, safety=2.0):
    """Empirical (L, d0) from shadowing runs: L = max(floor, safety * max ratio)."""
    good = [s for s in samples if s is not None and np.isfinite(s.distance)]
    if not good:
        raise ValueError("no successful shadowing samples")
    ratios = [s.distance / s.gap for s in good if s.gap > 0]
    L = max(floor, safety * max(ratios, default=0.0))
    d0 = max((s.gap for s in good), default=0.0) or floor
    return ShadowingConstants(L=L, d0=d0)
