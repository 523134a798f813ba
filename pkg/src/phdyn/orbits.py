"""Periodic orbits, orbit segments and empirical measures of the model systems."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .systems import (
    TWO_PI,
    BudgetExceeded,
    ShiftPoint,
    TorusBase,
    TorusPoint,
    _lift_scalar,
    circle_dist,
)

DEFAULT_GRID = 2**12
DEFAULT_TOL = 1e-12
NEUTRAL_TOL = 1e-8
# symbols kept on each side of a symbolic atom; bounds the cylinder depth
# available to the test-function family
WINDOW_RADIUS = 8


# --------------------------------------------------------------------------- base periodic points


def _mat_pow(A, n):
    out = np.eye(2, dtype=object)
    M = np.array(A, dtype=object)
    for _ in range(n):
        out = out.dot(M)
    return out


def torus_periodic_numerators(base: TorusBase, n, budget=10**6):
    """Integer numerators y and denominator D with (A^n - I) y/D = 0 mod 1.

    Returns ``(y, D)`` where ``y`` is a (count, 2) int array sorted
    lexicographically. The solutions form a subgroup of (Z_D)^2 of order D
    generated by the columns of adj(A^n - I); it is enumerated coset by coset.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    B = _mat_pow(base.matrix, n) - np.eye(2, dtype=object)
    det = int(B[0, 0] * B[1, 1] - B[0, 1] * B[1, 0])
    D = abs(det)
    if D > budget:
        raise BudgetExceeded(f"{D} periodic points exceeds budget {budget}")
    sign = 1 if det > 0 else -1
    adj = [[int(B[1, 1]), -int(B[0, 1])], [-int(B[1, 0]), int(B[0, 0])]]
    c1 = ((sign * adj[0][0]) % D, (sign * adj[1][0]) % D)
    c2 = ((sign * adj[0][1]) % D, (sign * adj[1][1]) % D)
    o1 = D // math.gcd(D, math.gcd(c1[0], c1[1])) if D > 1 else 1
    k = np.arange(o1, dtype=np.int64)
    h1 = np.stack([(k * c1[0]) % D, (k * c1[1]) % D], axis=1)
    members = {tuple(v) for v in h1.tolist()}
    cosets = [h1]
    b = 1
    while len(members) < D:
        shift = ((b * c2[0]) % D, (b * c2[1]) % D)
        if shift in members:
            break
        coset = (h1 + np.array(shift, dtype=np.int64)) % D
        cosets.append(coset)
        members.update(tuple(v) for v in coset.tolist())
        b += 1
    y = np.unique(np.concatenate(cosets), axis=0)
    return y, D


def enumerate_base_periodic(base, n, dedup=False, budget=10**6):
    """Periodic points of period dividing n of the base.

    Torus: float array of points in [0,1)^2 (count ``|trace(A^n) - 2|``).
    Shift: list of admissible words of length n; with ``dedup`` only the
    lexicographically minimal rotation of each word is kept.
    """
    if isinstance(base, TorusBase):
        y, D = torus_periodic_numerators(base, n, budget)
        return y / D
    if n < 1:
        raise ValueError("n must be >= 1")
    if 2**n > budget:
        raise BudgetExceeded(f"2^{n} words exceeds budget {budget}")
    words = [w for w in product((0, 1), repeat=n) if base.admissible(w)]
    if dedup:
        words = sorted({canonical_rotation(w) for w in words})
    return words


def canonical_rotation(word):
    word = tuple(word)
    return min(word[i:] + word[:i] for i in range(len(word)))


def minimal_period(word):
    n = len(word)
    for d in range(1, n + 1):
        if n % d == 0 and word[:d] * (n // d) == tuple(word):
            return d
    return n


# --------------------------------------------------------------------------- fiber fixed points


@dataclass
class FiberFixedPoints:
    points: list = field(default_factory=list)  # (t*, stability, log G'(t*))
    degenerate: bool = False
    note: str = ""

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)


def compose_lift(betas, amps, t):
    """Lift of f_{n-1} o ... o f_0 applied to t (array)."""
    t = np.array(t, dtype=float, copy=True)
    for b, a in zip(betas, amps):
        t += b + (a / TWO_PI) * np.sin(TWO_PI * t)
    return t


def fiber_orbit(betas, amps, t0):
    """Fiber coordinates along one return (lifted) and the per-step log-derivatives."""
    n = len(betas)
    ts = np.empty(n + 1)
    logs = np.empty(n)
    t = float(t0)
    tp = TWO_PI
    cos, sin, log = math.cos, math.sin, math.log
    tl = [t]
    ll = []
    for b, a in zip(np.asarray(betas, dtype=float).tolist(), np.asarray(amps, dtype=float).tolist()):
        x = tp * t
        ll.append(log(1.0 + a * cos(x)))
        t = t + b + (a / tp) * sin(x)
        tl.append(t)
    ts[:] = tl
    logs[:] = ll
    return ts, logs


def _stability(log_deriv):
    g = math.exp(min(log_deriv, 700.0))
    if abs(g - 1.0) < NEUTRAL_TOL:
        return "neutral"
    return "repelling" if g > 1.0 else "attracting"


def find_fiber_fixed_points(betas, amps, grid=DEFAULT_GRID, tol=DEFAULT_TOL):
    """All fixed points of the circle return map G = f_{n-1} o ... o f_0.

    Sign changes of the lift displacement ``G(t) - t - k`` (k integer) are
    located on a uniform grid and refined by bisection; a short Newton polish
    follows when it improves the residual.
    """
    betas = np.asarray(betas, dtype=float)
    amps = np.asarray(amps, dtype=float)
    ts = np.arange(grid) / grid
    disp = compose_lift(betas, amps, ts) - ts
    result = FiberFixedPoints()
    ks = range(int(math.floor(disp.min())) - 1, int(math.ceil(disp.max())) + 2)
    near = [k for k in ks if np.any(np.abs(disp - k) <= 0.5 + tol)]
    for k in near:
        if np.all(np.abs(disp - k) <= tol):
            result.degenerate = True
            result.note = "return map is the identity on the grid"
            return result
    roots = []
    for k in near:
        g = disp - k
        g_next = np.roll(g, -1)
        # wrap-around interval [t_{N-1}, 1) continues at t_0 + 1 with the same displacement
        for i in np.nonzero(np.abs(g) <= tol)[0]:
            roots.append(_polish(betas, amps, ts[i], k, tol))
        change = (np.sign(g) * np.sign(g_next) < 0)
        for i in np.nonzero(change)[0]:
            lo = ts[i]
            hi = ts[i + 1] if i + 1 < grid else 1.0
            roots.append(_bisect(betas, amps, lo, hi, k, tol))
    if not roots:
        result.note = "no fixed point: displacement bounded away from every integer"
        return result
    roots.sort()
    merged = []
    for r in roots:
        r = r % 1.0
        if merged and circle_dist(r, merged[-1]) < 1e-9:
            continue
        merged.append(r)
    if len(merged) > 1 and circle_dist(merged[0], merged[-1]) < 1e-9:
        merged.pop()
    for r in sorted(merged):
        _, logs = fiber_orbit(betas, amps, r)
        s = float(np.sum(logs))
        result.points.append((r, _stability(s), s))
    return result


def _residual(betas, amps, t, k):
    ts, _ = fiber_orbit(betas, amps, t)
    return float(ts[-1] - t - k)


def _bisect(betas, amps, lo, hi, k, tol):
    glo = _residual(betas, amps, lo, k)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        gm = _residual(betas, amps, mid, k)
        if abs(gm) < tol:
            return _polish(betas, amps, mid, k, tol)
        if (gm < 0) == (glo < 0):
            lo, glo = mid, gm
        else:
            hi = mid
    return _polish(betas, amps, 0.5 * (lo + hi), k, tol)


def _polish(betas, amps, t, k, tol):
    best = t
    best_r = abs(_residual(betas, amps, t, k))
    for _ in range(3):
        _, logs = fiber_orbit(betas, amps, best)
        s = float(np.sum(logs))
        if s > 700:
            break
        slope = math.exp(s) - 1.0
        if abs(slope) < 1e-14:
            break
        cand = best - _residual(betas, amps, best, k) / slope
        r = abs(_residual(betas, amps, cand, k))
        if r < best_r:
            best, best_r = cand, r
        else:
            break
        if best_r < tol * 1e-3:
            break
    return best


# --------------------------------------------------------------------------- periodic orbits


@dataclass
class PeriodicOrbit:
    """Periodic orbit of a skew product.

    ``word`` is the symbolic itinerary (shift) and ``base`` the (period, 2)
    array of base points (torus). ``fiber`` holds the fiber coordinate of
    every orbit point in [0, 1).
    """

    kind: str
    period: int
    t_star: float
    exponent: float
    stability: str
    fiber: np.ndarray
    word: tuple = None
    base: np.ndarray = None
    denominator: int = None
    numerators: np.ndarray = None

    def point(self, i=0):
        i %= self.period
        if self.kind == "shift":
            return ShiftPoint.periodic(self.word, i, self.fiber[i])
        return TorusPoint(self.base[i, 0], self.base[i, 1], self.fiber[i])

    def points(self):
        return [self.point(i) for i in range(self.period)]

    @property
    def itinerary(self):
        if self.kind == "shift":
            return "".join(str(s) for s in self.word)
        y = self.numerators[0]
        return f"({y[0]}/{self.denominator},{y[1]}/{self.denominator})"

    def fiber_maps(self, system):
        return return_map_params(system, self)

    def log_derivatives(self, system):
        betas, amps = return_map_params(system, self)
        _, logs = fiber_orbit(betas, amps, self.t_star)
        return logs


def return_map_params(system, orbit_or_word):
    """(betas, amplitudes) of the fiber maps applied along one period."""
    if system.kind == "shift":
        word = orbit_or_word.word if isinstance(orbit_or_word, PeriodicOrbit) else orbit_or_word
        w = np.asarray(word, dtype=np.int64)
        betas = np.array([f.beta for f in system.fibers])[w]
        amps = np.array([f.a for f in system.fibers])[w]
        return betas, amps
    base = orbit_or_word.base if isinstance(orbit_or_word, PeriodicOrbit) else np.asarray(orbit_or_word)
    amps = system.effective_amplitude(base[:, 0])
    betas = np.full(len(base), system.fibers[0].beta)
    return betas, np.asarray(amps, dtype=float)


def torus_base_cycle(base, y0, D):
    """Exact base orbit of the numerator vector y0 (mod D) until it closes."""
    A = np.array(base.matrix, dtype=np.int64)
    ys = [np.asarray(y0, dtype=np.int64) % D]
    while True:
        nxt = (A @ ys[-1]) % D
        if np.array_equal(nxt, ys[0]):
            break
        ys.append(nxt)
    return np.array(ys)


def _orbit_from_fixed_point(system, t, stab, logsum, word=None, ys=None, D=None):
    if system.kind == "shift":
        betas, amps = return_map_params(system, word)
        n = len(word)
    else:
        base = ys / D
        betas, amps = return_map_params(system, base)
        n = len(ys)
    fib, logs = fiber_orbit(betas, amps, t)
    orbit = PeriodicOrbit(
        kind=system.kind,
        period=n,
        t_star=t % 1.0,
        exponent=float(np.sum(logs) / n),
        stability=stab,
        fiber=fib[:-1] % 1.0,
        word=tuple(word) if word is not None else None,
        base=(ys / D) if ys is not None else None,
        denominator=D,
        numerators=ys,
    )
    return orbit


def orbits_over_word(system, word, grid=DEFAULT_GRID, tol=DEFAULT_TOL):
    """All periodic orbits of a shift system over the periodic word."""
    word = tuple(int(s) for s in word)
    if not system.base.admissible(word):
        raise ValueError("word is not admissible")
    betas, amps = return_map_params(system, word)
    fixed = find_fiber_fixed_points(betas, amps, grid, tol)
    return [_orbit_from_fixed_point(system, t, s, ls, word=word) for t, s, ls in fixed], fixed


def orbit_over_word(system, word, near=0.0, grid=DEFAULT_GRID, tol=DEFAULT_TOL, sign=None):
    """The orbit over ``word`` whose fiber point is closest to ``near``.

    With ``sign`` (+1 / -1) only orbits with that exponent sign qualify.
    """
    orbits, fixed = orbits_over_word(system, word, grid, tol)
    if sign is not None:
        orbits = [o for o in orbits if np.sign(o.exponent) == sign]
    if not orbits:
        raise ValueError(f"no qualifying fiber fixed point over word ({fixed.note})")
    return min(orbits, key=lambda o: (float(circle_dist(o.t_star, near)), o.t_star))


def continue_orbit(system, word, t0, tol=DEFAULT_TOL, max_iter=50):
    """Orbit over ``word`` from a Newton continuation of the fiber guess t0.

    Cheaper than a grid search on long words; raises ValueError when Newton
    does not settle on a fixed point of the return map.
    """
    word = tuple(int(s) for s in word)
    betas, amps = return_map_params(system, word)
    t = float(t0)
    k = round(_residual(betas, amps, t, 0))
    for _ in range(max_iter):
        ts, logs = fiber_orbit(betas, amps, t)
        r = ts[-1] - t - k
        if abs(r) < tol:
            s = float(np.sum(logs))
            return _orbit_from_fixed_point(system, t, _stability(s), s, word=word)
        s = float(np.sum(logs))
        slope = math.exp(min(s, 700.0)) - 1.0
        if abs(slope) < 1e-14:
            break
        t -= r / slope
    raise ValueError("fiber continuation did not converge")


def periodic_orbits(system, n, budget=10**6, grid=DEFAULT_GRID, tol=DEFAULT_TOL):
    """Periodic orbits of exact base period n, one per rotation class."""
    out = []
    if system.kind == "shift":
        words = enumerate_base_periodic(system.base, n, dedup=True, budget=budget)
        for w in words:
            if minimal_period(w) != n:
                continue
            orbits, _ = orbits_over_word(system, w, grid, tol)
            out.extend(orbits)
        return out
    ys, D = torus_periodic_numerators(system.base, n, budget)
    seen = set()
    for y in ys:
        key = tuple(y)
        if key in seen:
            continue
        cycle = torus_base_cycle(system.base, y, D)
        seen.update(tuple(v) for v in cycle.tolist())
        if len(cycle) != n:
            continue
        # canonical start: lexicographically minimal point of the cycle
        start = min(range(n), key=lambda i: tuple(cycle[i]))
        cycle = np.roll(cycle, -start, axis=0)
        betas, amps = return_map_params(system, cycle / D)
        fixed = find_fiber_fixed_points(betas, amps, grid, tol)
        if fixed.degenerate:
            # identity return map: represent the fiber by t = 0
            _, logs = fiber_orbit(betas, amps, 0.0)
            out.append(_orbit_from_fixed_point(system, 0.0, "neutral", 0.0, ys=cycle, D=D))
            continue
        for t, s, ls in fixed:
            out.append(_orbit_from_fixed_point(system, t, s, ls, ys=cycle, D=D))
    return out


def orbits_to_csv(orbits, fh=None):
    """Write orbits as CSV: itinerary, period, t*, lambda_c, stability."""
    own = fh is None
    fh = fh or io.StringIO()
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["itinerary", "period", "t_star", "lambda_c", "stability"])
    for o in orbits:
        w.writerow([o.itinerary, o.period, f"{o.t_star:.17g}", f"{o.exponent:.17g}", o.stability])
    if own:
        return fh.getvalue()


# --------------------------------------------------------------------------- segments and measures


@dataclass
class OrbitSegment:
    """Orbit segment {x, n}: the points x, f(x), ..., f^{n-1}(x).

    ``center_logs[i]`` is log |Df| along the center at f^i(x). For shift
    systems ``symbols`` holds coordinates -WINDOW_RADIUS .. n+WINDOW_RADIUS-1
    of x; for torus systems ``coords`` holds the n points.
    """

    system: object
    start: object
    length: int
    center_logs: np.ndarray
    fiber: np.ndarray
    symbols: np.ndarray = None
    coords: np.ndarray = None

    @property
    def end(self):
        from .systems import skew_apply

        return skew_apply(self.system, self.start, self.length)


def orbit_segment(system, start, n):
    if n < 1:
        raise ValueError("segment length must be >= 1")
    if system.kind == "shift":
        R = WINDOW_RADIUS
        syms = start.symbols(-R, n + R)
        w = syms[R : R + n].astype(np.int64)
        betas = np.array([f.beta for f in system.fibers])[w]
        amps = np.array([f.a for f in system.fibers])[w]
        fib, logs = fiber_orbit(betas, amps, start.t)
        return OrbitSegment(system, start, n, logs, fib[:-1] % 1.0, symbols=syms)
    A = system.base.array.astype(float)
    f = system.fibers[0]
    coords = np.empty((n, 3))
    logs = np.empty(n)
    x = np.array([start.x1, start.x2])
    t = start.t
    for i in range(n):
        coords[i] = (x[0], x[1], t % 1.0)
        a_eff = float(system.effective_amplitude(x[0]))
        logs[i] = math.log(1.0 + a_eff * math.cos(TWO_PI * t))
        t = _lift_scalar(f.beta, a_eff, t)
        x = (A @ x) % 1.0
    return OrbitSegment(system, start, n, logs, coords[:, 2].copy(), coords=coords)


@dataclass
class EmpiricalMeasure:
    """Finite weighted point set on the torus or on the symbolic phase space.

    Torus atoms are rows ``(x1, x2, t)`` of ``coords``. Symbolic atoms keep
    the fiber coordinate in ``coords[:, 0]`` and symbols at coordinates
    ``-WINDOW_RADIUS .. WINDOW_RADIUS`` in ``windows``.
    """

    space: str
    coords: np.ndarray
    weights: np.ndarray
    windows: np.ndarray = None

    def __post_init__(self):
        self.coords = np.atleast_2d(np.asarray(self.coords, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float)
        if np.any(self.weights < 0):
            raise ValueError("negative weight")
        if abs(float(np.sum(self.weights)) - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        if len(self.weights) != len(self.coords):
            raise ValueError("one weight per atom required")
        if self.space == "shift":
            if self.windows is None or self.windows.shape != (len(self.weights), 2 * WINDOW_RADIUS + 1):
                raise ValueError("symbolic atoms need symbol windows")

    def __len__(self):
        return len(self.weights)

    @property
    def fiber(self):
        return self.coords[:, -1] if self.space == "torus" else self.coords[:, 0]

    @property
    def symbol0(self):
        return self.windows[:, WINDOW_RADIUS]


def _periodic_windows(word):
    w = np.asarray(word, dtype=np.int8)
    n = len(w)
    idx = (np.arange(n)[:, None] + np.arange(-WINDOW_RADIUS, WINDOW_RADIUS + 1)[None, :]) % n
    return w[idx]


def point_measure(point):
    """Dirac mass at a single phase point."""
    if isinstance(point, TorusPoint):
        return EmpiricalMeasure("torus", point.coords[None, :], np.ones(1))
    win = point.symbols(-WINDOW_RADIUS, WINDOW_RADIUS + 1)[None, :]
    return EmpiricalMeasure("shift", np.array([[point.t]]), np.ones(1), win)


def empirical_measure(obj):
    """Uniform measure on the points of a periodic orbit or orbit segment."""
    if isinstance(obj, PeriodicOrbit):
        n = obj.period
        w = np.full(n, 1.0 / n)
        if obj.kind == "shift":
            return EmpiricalMeasure("shift", obj.fiber[:, None], w, _periodic_windows(obj.word))
        coords = np.column_stack([obj.base, obj.fiber])
        return EmpiricalMeasure("torus", coords, w)
    if isinstance(obj, OrbitSegment):
        n = obj.length
        w = np.full(n, 1.0 / n)
        if obj.system.kind == "shift":
            R = WINDOW_RADIUS
            idx = np.arange(n)[:, None] + np.arange(0, 2 * R + 1)[None, :]
            return EmpiricalMeasure("shift", obj.fiber[:, None], w, obj.symbols[idx])
        return EmpiricalMeasure("torus", obj.coords, w)
    raise TypeError(f"cannot build a measure from {type(obj).__name__}")
