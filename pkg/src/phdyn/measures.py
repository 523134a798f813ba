"""Weak-* distance between atomic measures, center exponent and index."""

import enum
import itertools
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .orbits import WINDOW_RADIUS, EmpiricalMeasure, empirical_measure, point_measure  # noqa: F401
from .systems import TWO_PI

DEFAULT_DEPTH = 64
MAX_FREQ = 6


class IndexClass(enum.Enum):
    INDEX_I = "index i"
    INDEX_I_PLUS_1 = "index i+1"
    NONHYPERBOLIC = "nonhyperbolic"


@dataclass(frozen=True)
class TestFunction:
    """One member of the test family.

    Torus: ``kind`` in {cos, sin}, ``freq`` a 3-vector acting on (x1, x2, t).
    Shift: ``pattern`` is the cylinder on coordinates ``-m..m``, ``freq`` the
    fiber frequency (0 means the bare indicator).
    """

    __test__ = False

    kind: str
    freq: tuple
    pattern: tuple = None

    def describe(self):
        if self.pattern is None:
            return f"{self.kind}(2pi {self.freq}.(x1,x2,t))"
        return f"[{''.join(map(str, self.pattern))}] * {self.kind}(2pi {self.freq[0]} t)"


def _torus_frequencies():
    out = []
    for r in range(1, MAX_FREQ + 1):
        rng = range(-r, r + 1)
        for k in itertools.product(rng, rng, rng):
            if max(map(abs, k)) != r:
                continue
            # k and -k give the same functions up to sign
            first = next(c for c in k if c != 0)
            if first > 0:
                out.append(k)
    return out


@lru_cache(maxsize=None)
def _torus_family():
    fam = []
    for k in _torus_frequencies():
        fam.append(TestFunction("cos", k))
        fam.append(TestFunction("sin", k))
    return tuple(fam)


def _shift_family_block(m):
    fam = []
    for pattern in itertools.product((0, 1), repeat=2 * m + 1):
        fam.append(TestFunction("ind", (0,), pattern))
        for k in range(1, MAX_FREQ + 1):
            fam.append(TestFunction("cos", (k,), pattern))
            fam.append(TestFunction("sin", (k,), pattern))
    return fam


@lru_cache(maxsize=None)
def _shift_family():
    fam = []
    for m in range(WINDOW_RADIUS + 1):
        fam.extend(_shift_family_block(m))
        if len(fam) > 4096:
            break
    return tuple(fam)


class TestFunctionFamily:
    """Deterministic enumeration g_1, g_2, ... of unit sup-norm functions.

    The torus family runs over frequency vectors k with |k|_inf <= 6, one
    representative of each pair {k, -k}, ordered by (|k|_inf, lexicographic)
    with cos before sin. The shift family runs over cylinders on coordinates
    -m..m (m = 0, 1, ...), patterns in lexicographic order, and for each
    pattern the indicator followed by cos/sin of 2 pi k t for k = 1..6.
    Indices beyond the enumeration are dropped and covered by the tail bound.
    """

    __test__ = False  # keep pytest from collecting the class

    def __init__(self, space):
        if space not in ("torus", "shift"):
            raise ValueError(f"unknown phase space {space!r}")
        self.space = space
        self.members = _torus_family() if space == "torus" else _shift_family()

    def __len__(self):
        return len(self.members)

    def __getitem__(self, index):
        if not 1 <= index <= len(self.members):
            raise IndexError(f"test function index {index} out of range 1..{len(self.members)}")
        return self.members[index - 1]

    def evaluate(self, index, mu):
        """Values of g_index at every atom of mu."""
        g = self[index]
        if self.space == "torus":
            phase = TWO_PI * (mu.coords @ np.asarray(g.freq, dtype=float))
            return np.cos(phase) if g.kind == "cos" else np.sin(phase)
        m = (len(g.pattern) - 1) // 2
        win = mu.windows[:, WINDOW_RADIUS - m: WINDOW_RADIUS + m + 1]
        ind = np.all(win == np.asarray(g.pattern, dtype=win.dtype), axis=1).astype(float)
        if g.kind == "ind":
            return ind
        phase = TWO_PI * g.freq[0] * mu.fiber
        return ind * (np.cos(phase) if g.kind == "cos" else np.sin(phase))


def integrate(index, mu, family=None):
    """Integral of the index-th test function against mu."""
    family = family or TestFunctionFamily(mu.space)
    return float(np.dot(mu.weights, family.evaluate(index, mu)))


def integrals(mu, depth=DEFAULT_DEPTH):
    family = TestFunctionFamily(mu.space)
    top = min(depth, len(family))
    return np.array([integrate(i, mu, family) for i in range(1, top + 1)])


@dataclass(frozen=True)
class MeasureDistanceReport:
    value: float
    depth: int
    tail_bound: float
    exact: Fraction = None

    def to_json(self):
        return json.dumps({"value": self.value, "depth": self.depth, "tail_bound": self.tail_bound})


def weak_star_distance(mu, nu, depth=DEFAULT_DEPTH):
    """Truncated weak-* distance sum_{i<=I} |int g_i dmu - int g_i dnu| / 2^i.

    Terms are summed in exact rational arithmetic so the truncated value is
    an exact metric on the integral vectors; ``value`` is its float rounding.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if mu.space != nu.space:
        raise ValueError(f"phase-space mismatch: {mu.space} vs {nu.space}")
    a, b = integrals(mu, depth), integrals(nu, depth)
    total = Fraction(0)
    for i, (x, y) in enumerate(zip(a, b), start=1):
        total += abs(Fraction(float(x)) - Fraction(float(y))) / 2**i
    return MeasureDistanceReport(float(total), depth, 2.0 * 2.0**-depth, total)


def _atom_log_derivatives(mu, system):
    if mu.space != system.kind:
        raise ValueError(f"measure lives on {mu.space}, system is {system.kind}")
    t = mu.fiber
    if system.kind == "torus":
        f = system.fibers[0]
        a = f.a * np.cos(TWO_PI * mu.coords[:, 0]) if system.modulation == "cos_x1" else np.full(len(t), f.a)
    else:
        amps = np.array([f.a for f in system.fibers])
        a = amps[mu.symbol0.astype(int)]
    return np.log1p(a * np.cos(TWO_PI * t))


def center_exponent(mu, system):
    """Integral of log |Df| along the center direction against mu."""
    return float(np.dot(mu.weights, _atom_log_derivatives(mu, system)))


def classify_index(mu, system, tol_hyp, exponent=None):
    if tol_hyp <= 0:
        raise ValueError("tol_hyp must be positive")
    lam = center_exponent(mu, system) if exponent is None else exponent
    if abs(lam) <= tol_hyp:
        return IndexClass.NONHYPERBOLIC
    return IndexClass.INDEX_I if lam > 0 else IndexClass.INDEX_I_PLUS_1


def convex_combine(terms):
    """Weighted union of atomic measures; weights must sum to one."""
    terms = [(float(w), m) for w, m in terms]
    if not terms:
        raise ValueError("no terms")
    if any(w < 0 for w, _ in terms):
        raise ValueError("negative weight")
    if abs(math.fsum(w for w, _ in terms) - 1.0) > 1e-12:
        raise ValueError("weights must sum to 1")
    spaces = {m.space for _, m in terms}
    if len(spaces) != 1:
        raise ValueError("phase-space mismatch")
    kept = [(w, m) for w, m in terms if w > 0]
    if len(kept) == 1:
        return kept[0][1]
    coords = np.concatenate([m.coords for _, m in kept])
    weights = np.concatenate([w * m.weights for w, m in kept])
    weights = weights / math.fsum(weights)
    windows = None
    if kept[0][1].space == "shift":
        windows = np.concatenate([m.windows for _, m in kept])
    return EmpiricalMeasure(kept[0][1].space, coords, weights, windows)
