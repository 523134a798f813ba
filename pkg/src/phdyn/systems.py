"""Model partially hyperbolic systems with a one-dimensional circle center.

Two bases are provided: a hyperbolic toral automorphism and the full
(or primitive) 2-shift. Both carry circle fibers of the form

    f(t) = t + beta + (a / 2pi) sin(2 pi t)  (mod 1)

whose derivative ``1 + a cos(2 pi t)`` is the derivative along the center
bundle. Points are immutable; every operation here is pure.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TWO_PI = 2.0 * math.pi
DEFAULT_BUDGET = 10**7


class WindowExhausted(ValueError):
    """A symbolic point was asked for a coordinate it does not represent."""


class BudgetExceeded(RuntimeError):
    pass


def circle_dist(s, t):
    """Distance on R/Z, vectorized."""
    d = np.abs(np.asarray(s, dtype=float) - np.asarray(t, dtype=float)) % 1.0
    return np.minimum(d, 1.0 - d)


@dataclass(frozen=True)
class CircleFiberMap:
    beta: float = 0.0
    a: float = 0.0

    def __post_init__(self):
        if not abs(self.a) < 1.0:
            raise ValueError(f"|a| must be < 1 for a diffeomorphism, got {self.a}")

    def lift(self, t):
        return t + self.beta + (self.a / TWO_PI) * np.sin(TWO_PI * np.asarray(t, dtype=float))

    def __call__(self, t):
        return self.lift(t) % 1.0

    def derivative(self, t):
        return 1.0 + self.a * np.cos(TWO_PI * np.asarray(t, dtype=float))

    def inverse_lift(self, s):
        return _inverse_lift(self.beta, self.a, s)

    @property
    def derivative_bounds(self):
        return 1.0 - abs(self.a), 1.0 + abs(self.a)


def _lift_scalar(beta, a, t):
    return t + beta + (a / TWO_PI) * math.sin(TWO_PI * t)


def _inverse_lift(beta, a, s):
    """Solve lift(t) = s by safeguarded Newton; the lift is strictly increasing."""
    s = np.asarray(s, dtype=float)
    half = abs(a) / TWO_PI
    lo = s - beta - half
    hi = s - beta + half
    t = s - beta
    for _ in range(100):
        g = t + beta + (a / TWO_PI) * np.sin(TWO_PI * t) - s
        lo = np.where(g < 0, t, lo)
        hi = np.where(g > 0, t, hi)
        step = g / (1.0 + a * np.cos(TWO_PI * t))
        t_new = t - step
        outside = (t_new <= lo) | (t_new >= hi)
        t_new = np.where(outside, 0.5 * (lo + hi), t_new)
        if np.all(np.abs(t_new - t) <= 1e-16 * (1.0 + np.abs(t))):
            t = t_new
            break
        t = t_new
    return t


# --------------------------------------------------------------------------- bases


@dataclass(frozen=True)
class TorusBase:
    matrix: tuple = ((2, 1), (1, 1))

    def __post_init__(self):
        m = tuple(tuple(int(v) for v in row) for row in self.matrix)
        object.__setattr__(self, "matrix", m)
        (p, q), (r, s) = m
        if p * s - q * r != 1:
            raise ValueError("torus matrix must have determinant 1")
        if abs(p + s) <= 2:
            raise ValueError("torus matrix is not hyperbolic (|trace| <= 2)")

    kind = "torus"

    @property
    def array(self):
        return np.array(self.matrix, dtype=np.int64)

    @property
    def inverse_array(self):
        (p, q), (r, s) = self.matrix
        return np.array([[s, -q], [-r, p]], dtype=np.int64)

    @property
    def trace(self):
        return self.matrix[0][0] + self.matrix[1][1]

    @property
    def eigenvalues(self):
        """(lambda_s, lambda_u) with |lambda_s| < 1 < |lambda_u|."""
        tr = self.trace
        disc = math.sqrt(tr * tr - 4)
        big = (abs(tr) + disc) / 2.0
        sign = 1.0 if tr > 0 else -1.0
        return sign / big, sign * big

    @property
    def rates(self):
        ls, lu = self.eigenvalues
        return abs(ls), abs(lu)

    def eigenvectors(self):
        """Unit vectors spanning the stable and unstable lines."""
        vals, vecs = np.linalg.eig(self.array.astype(float))
        order = np.argsort(np.abs(vals))
        vs = vecs[:, order[0]]
        vu = vecs[:, order[1]]
        return vs / np.linalg.norm(vs), vu / np.linalg.norm(vu)


@dataclass(frozen=True)
class ShiftBase:
    transitions: tuple = ((True, True), (True, True))
    # Proxy rates for the symbolic stable / unstable directions under the
    # standard metric 2^-N.
    contraction: float = 0.5
    expansion: float = 2.0

    kind = "shift"

    def __post_init__(self):
        t = tuple(tuple(bool(v) for v in row) for row in self.transitions)
        if len(t) != 2 or any(len(row) != 2 for row in t):
            raise ValueError("only the 2-symbol alphabet is supported")
        object.__setattr__(self, "transitions", t)
        m = np.array(t, dtype=np.int64)
        p = np.eye(2, dtype=np.int64)
        for _ in range(4):
            p = np.minimum(p @ m, 1)
            if np.all(p > 0):
                break
        else:
            raise ValueError("transition matrix is not primitive")

    def allowed(self, s, u):
        return self.transitions[s][u]

    def admissible(self, word, cyclic=True):
        pairs = zip(word, word[1:] + (word[:1] if cyclic else ()))
        return all(self.allowed(s, u) for s, u in pairs)


# --------------------------------------------------------------------------- points


@dataclass(frozen=True)
class TorusPoint:
    x1: float
    x2: float
    t: float

    def __post_init__(self):
        object.__setattr__(self, "x1", float(self.x1) % 1.0)
        object.__setattr__(self, "x2", float(self.x2) % 1.0)
        object.__setattr__(self, "t", float(self.t) % 1.0)

    @property
    def coords(self):
        return np.array([self.x1, self.x2, self.t])

    def distance(self, other):
        return float(np.max(circle_dist(self.coords, other.coords)))


def _normalize_side(prefix, tail):
    # prefix + tail^inf: absorb a trailing prefix symbol into the tail.
    prefix = tuple(prefix)
    tail = tuple(tail)
    n, r = len(prefix), len(tail)
    if not r:
        return prefix, tail
    k = 0
    while k < n and prefix[n - 1 - k] == tail[(r - 1 - k) % r]:
        k += 1
    # each absorbed symbol rotates the tail right by one
    s = k % r
    if s:
        tail = tail[r - s:] + tail[: r - s]
    return prefix[: n - k], tail


@dataclass(frozen=True)
class ShiftPoint:
    """A bi-infinite 2-symbol sequence plus a fiber coordinate.

    Coordinates ``i >= 0`` are ``future`` followed by ``future_tail`` repeated;
    coordinates ``i < 0`` read backwards: ``past[0]`` is coordinate ``-1``,
    then ``past_tail`` repeated. An empty tail means the sequence is only
    known on the finite window.
    """

    future: tuple
    future_tail: tuple
    past: tuple
    past_tail: tuple
    t: float

    def __post_init__(self):
        f, ft = _normalize_side(self.future, self.future_tail)
        p, pt = _normalize_side(self.past, self.past_tail)
        object.__setattr__(self, "future", f)
        object.__setattr__(self, "future_tail", ft)
        object.__setattr__(self, "past", p)
        object.__setattr__(self, "past_tail", pt)
        object.__setattr__(self, "t", float(self.t) % 1.0)

    @classmethod
    def periodic(cls, word, phase=0, t=0.0):
        word = tuple(int(s) for s in word)
        n = len(word)
        phase %= n
        rot = word[phase:] + word[:phase]
        return cls((), rot, (), tuple(reversed(rot)), t)

    def symbol(self, i):
        if i >= 0:
            if i < len(self.future):
                return self.future[i]
            if not self.future_tail:
                raise WindowExhausted(f"coordinate {i} beyond the represented window")
            return self.future_tail[(i - len(self.future)) % len(self.future_tail)]
        j = -i - 1
        if j < len(self.past):
            return self.past[j]
        if not self.past_tail:
            raise WindowExhausted(f"coordinate {i} beyond the represented window")
        return self.past_tail[(j - len(self.past)) % len(self.past_tail)]

    def symbols(self, lo, hi):
        """Coordinates lo..hi-1 as an int8 array."""
        return np.array([self.symbol(i) for i in range(lo, hi)], dtype=np.int8)

    def shifted(self, k):
        """Base part of sigma^k, fiber coordinate unchanged."""
        if k == 0:
            return self
        if k > 0:
            head = [self.symbol(i) for i in range(k)]
            if k <= len(self.future):
                fut, ftail = self.future[k:], self.future_tail
            else:
                r = len(self.future_tail)
                if r == 0:
                    raise WindowExhausted("forward window exhausted")
                off = (k - len(self.future)) % r
                fut, ftail = (), self.future_tail[off:] + self.future_tail[:off]
            past = tuple(reversed(head)) + self.past
            return ShiftPoint(fut, ftail, past, self.past_tail, self.t)
        k = -k
        head = [self.symbol(-i - 1) for i in range(k)]
        if k <= len(self.past):
            past, ptail = self.past[k:], self.past_tail
        else:
            r = len(self.past_tail)
            if r == 0:
                raise WindowExhausted("backward window exhausted")
            off = (k - len(self.past)) % r
            past, ptail = (), self.past_tail[off:] + self.past_tail[:off]
        fut = tuple(reversed(head)) + self.future
        return ShiftPoint(fut, self.future_tail, past, ptail, self.t)

    def with_fiber(self, t):
        return ShiftPoint(self.future, self.future_tail, self.past, self.past_tail, t)

    def agreement_radius(self, other, cap=64):
        """Smallest |i| where the sequences differ (cap if none up to cap)."""
        for r in range(cap):
            if self.symbol(r) != other.symbol(r):
                return r
            if r > 0 and self.symbol(-r) != other.symbol(-r):
                return r
        return cap

    def distance(self, other, cap=64):
        r = self.agreement_radius(other, cap)
        sym = 0.0 if r >= cap else 2.0 ** (-r)
        return max(sym, float(circle_dist(self.t, other.t)))


# --------------------------------------------------------------------------- system


MODULATIONS = ("none", "cos_x1")


@dataclass(frozen=True)
class SkewProductSystem:
    base: object
    fibers: tuple
    modulation: str = "none"
    name: str = field(default="", compare=False)

    def __post_init__(self):
        fibers = tuple(self.fibers)
        object.__setattr__(self, "fibers", fibers)
        if isinstance(self.base, TorusBase):
            if len(fibers) != 1:
                raise ValueError("torus systems take exactly one fiber family")
            if self.modulation not in MODULATIONS:
                raise ValueError(f"unknown modulation {self.modulation!r}")
        elif isinstance(self.base, ShiftBase):
            if len(fibers) != 2:
                raise ValueError("shift systems take one fiber map per symbol")
        else:
            raise TypeError("base must be TorusBase or ShiftBase")

    @property
    def kind(self):
        return self.base.kind

    def fiber_params(self, p):
        """(beta, effective amplitude) of the fiber map applied at p."""
        if self.kind == "torus":
            f = self.fibers[0]
            return f.beta, self.effective_amplitude(p.x1)
        f = self.fibers[p.symbol(0)]
        return f.beta, f.a

    def effective_amplitude(self, x1):
        a = self.fibers[0].a
        if self.modulation == "cos_x1":
            return a * np.cos(TWO_PI * np.asarray(x1, dtype=float))
        return a * np.ones_like(np.asarray(x1, dtype=float))

    def partial_hyperbolicity_margin(self):
        """(sup f' / lambda_u, lambda_s / inf f'); both < 1 iff the margin holds."""
        if self.kind != "torus":
            raise ValueError("margin is defined for torus systems")
        ls, lu = self.base.rates
        lo, hi = self.fibers[0].derivative_bounds
        return hi / lu, ls / lo

    def check_partial_hyperbolicity(self):
        up, down = self.partial_hyperbolicity_margin()
        return up < 1.0 and down < 1.0

    def stable_rate(self):
        return self.base.rates[0] if self.kind == "torus" else self.base.contraction

    def unstable_rate(self):
        return self.base.rates[1] if self.kind == "torus" else self.base.expansion

    def point(self, *args, **kw):
        if self.kind == "torus":
            return TorusPoint(*args, **kw)
        return ShiftPoint(*args, **kw)

    def distance(self, p, q):
        return p.distance(q)

    def to_config(self):
        if self.kind == "torus":
            f = self.fibers[0]
            return {
                "base": {"kind": "torus", "matrix": [list(r) for r in self.base.matrix]},
                "fiber": {"a": f.a, "beta": f.beta, "modulation": self.modulation},
            }
        return {
            "base": {"kind": "shift", "transitions": [[int(x) for x in r] for r in self.base.transitions]},
            "fiber": {"a": [f.a for f in self.fibers], "beta": [f.beta for f in self.fibers]},
        }


def torus_system(a=0.5, beta=0.0, modulation="cos_x1", matrix=((2, 1), (1, 1)), name=""):
    return SkewProductSystem(TorusBase(matrix), (CircleFiberMap(beta, a),), modulation, name)


def shift_system(a=(-0.5, 0.5), beta=(0.0, 0.0), transitions=((1, 1), (1, 1)), name=""):
    maps = tuple(CircleFiberMap(b, x) for b, x in zip(beta, a))
    return SkewProductSystem(ShiftBase(transitions), maps, "none", name)


DEFAULT_SYSTEMS = {
    "torus": {
        "base": {"kind": "torus", "matrix": [[2, 1], [1, 1]]},
        "fiber": {"a": 0.5, "beta": 0.0, "modulation": "cos_x1"},
    },
    "shift": {
        "base": {"kind": "shift", "transitions": [[1, 1], [1, 1]]},
        "fiber": {"a": [-0.5, 0.5], "beta": [0.0, 0.0]},
    },
}


def load_system(config):
    """Build a system from a config mapping, a default name, or a file path.

    Keys: ``base.kind`` (torus | shift), ``base.matrix`` or
    ``base.transitions``, ``fiber.a``, ``fiber.beta``, ``fiber.modulation``.
    For shift systems ``fiber.a`` / ``fiber.beta`` are per-symbol lists.
    """
    if isinstance(config, SkewProductSystem):
        return config
    if isinstance(config, (str, Path)):
        if str(config) in DEFAULT_SYSTEMS:
            name = str(config)
            config = DEFAULT_SYSTEMS[name]
            return load_system({**config, "name": name})
        config = read_config_file(config)
        if "system" in config:
            config = config["system"]
    try:
        base = config["base"]
        kind = base["kind"]
        fiber = config.get("fiber", {})
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed system config: {exc}") from None
    name = config.get("name", "")
    if kind == "torus":
        return torus_system(
            a=float(fiber.get("a", 0.5)),
            beta=float(fiber.get("beta", 0.0)),
            modulation=fiber.get("modulation", "cos_x1"),
            matrix=tuple(tuple(r) for r in base.get("matrix", ((2, 1), (1, 1)))),
            name=name,
        )
    if kind == "shift":
        a = fiber.get("a", [-0.5, 0.5])
        beta = fiber.get("beta", [0.0, 0.0])
        if np.isscalar(a):
            a = [a, a]
        if np.isscalar(beta):
            beta = [beta, beta]
        return shift_system(
            a=tuple(float(x) for x in a),
            beta=tuple(float(x) for x in beta),
            transitions=tuple(tuple(r) for r in base.get("transitions", ((1, 1), (1, 1)))),
            name=name,
        )
    raise ValueError(f"unknown base.kind {kind!r}")


def read_config_file(path):
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        return json.loads(text)
    import yaml

    data = yaml.safe_load(text)
    if not isinstance(data, dict):
        raise ValueError(f"config {path} is not a mapping")
    return data


# --------------------------------------------------------------------------- dynamics


def _torus_step(system, x, t, steps):
    base = system.base
    f = system.fibers[0]
    A = base.array.astype(float)
    Ainv = base.inverse_array.astype(float)
    x = np.array(x, dtype=float)
    if steps > 0:
        for _ in range(steps):
            a_eff = float(system.effective_amplitude(x[0]))
            t = _lift_scalar(f.beta, a_eff, t)
            x = (A @ x) % 1.0
    else:
        for _ in range(-steps):
            x = (Ainv @ x) % 1.0
            a_eff = float(system.effective_amplitude(x[0]))
            t = float(_inverse_lift(f.beta, a_eff, t))
    return x, t


def skew_apply(system, p, steps, budget=DEFAULT_BUDGET):
    """Return f^steps(p). The fiber is tracked on the lift and reduced once."""
    steps = int(steps)
    if abs(steps) > budget:
        raise BudgetExceeded(f"{abs(steps)} steps exceeds budget {budget}")
    if steps == 0:
        return p
    if system.kind == "torus":
        x, t = _torus_step(system, (p.x1, p.x2), p.t, steps)
        return TorusPoint(x[0], x[1], t)
    t = p.t
    if steps > 0:
        for i in range(steps):
            f = system.fibers[p.symbol(i)]
            t = _lift_scalar(f.beta, f.a, t)
    else:
        for i in range(-steps):
            f = system.fibers[p.symbol(-i - 1)]
            t = float(_inverse_lift(f.beta, f.a, t))
    return p.shifted(steps).with_fiber(t)


def center_log_derivative(system, p):
    """log of the derivative along the fiber (center) direction at p."""
    _, a_eff = system.fiber_params(p)
    return math.log(1.0 + float(a_eff) * math.cos(TWO_PI * p.t))


def base_cocycle_rates(base, n):
    """(contraction, expansion) rates of the base derivative over n steps."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if isinstance(base, TorusBase):
        ls, lu = base.rates
        return ls**n, lu**n
    return base.contraction**n, base.expansion**n


def torus_jacobian(system, x, t):
    """3x3 derivative of the torus skew product at (x1, x2, t)."""
    A = system.base.array.astype(float)
    f = system.fibers[0]
    a = f.a
    mod = system.modulation == "cos_x1"
    a_eff = a * math.cos(TWO_PI * x[0]) if mod else a
    J = np.zeros((3, 3))
    J[:2, :2] = A
    if mod:
        J[2, 0] = -a * math.sin(TWO_PI * x[0]) * math.sin(TWO_PI * t)
    J[2, 2] = 1.0 + a_eff * math.cos(TWO_PI * t)
    return J


# --------------------------------------------------------------------------- covering


@dataclass(frozen=True)
class CoveringCertificate:
    arc: tuple
    shrunk: tuple
    images: tuple
    slack: float

    ok = True


@dataclass(frozen=True)
class CoveringFailure:
    arc: tuple
    shrunk: tuple
    images: tuple
    uncovered: tuple

    ok = False


def blender_covering_check(f0, f1, arc, margin):
    """Check that f0(I') u f1(I') covers I, with I' = I shrunk by ``margin``.

    ``arc`` is ``(start, length)`` on the circle. Images are compared on
    lifts: each image interval is translated by the integer that best
    aligns it with I. Returns a certificate or a failure carrying the first
    uncovered sub-arc.
    """
    start, length = float(arc[0]), float(arc[1])
    if not 0.0 < length < 1.0:
        raise ValueError("arc length must lie in (0, 1)")
    if not 0.0 < margin < length / 2.0:
        raise ValueError("margin must lie in (0, length/2)")
    lo, hi = start + margin, start + length - margin
    images = []
    for f in (f0, f1):
        a, b = float(f.lift(lo)), float(f.lift(hi))
        shift = round((start + length / 2.0) - (a + b) / 2.0)
        images.append((a + shift, b + shift))
    images.sort()
    end = start + length
    cursor = start
    # slack: how far each image may move while the union still covers I
    slack = math.inf
    for a, b in images:
        if a > cursor:
            break
        if cursor == start:
            slack = min(slack, start - a)
        else:
            slack = min(slack, (cursor - a) / 2.0)
        cursor = max(cursor, b)
        if cursor >= end:
            break
    if cursor >= end:
        slack = min(slack, cursor - end)
        return CoveringCertificate((start, length), (lo, hi - lo), tuple(images), slack)
    gap_end = end
    for a, _ in images:
        if a > cursor:
            gap_end = min(gap_end, a)
    return CoveringFailure((start, length), (lo, hi - lo), tuple(images), (cursor, gap_end - cursor))


def expansion_factor_check(f, region, tau, samples=2048):
    """True iff inf of f' over the arc ``region=(start, length)`` is >= tau.

    The sampled minimum is lowered by the Lipschitz bound |f''| <= 2 pi |a|
    times half the sample spacing, so a True answer is certified.
    """
    start, length = float(region[0]), float(region[1])
    if length <= 0.0:
        raise ValueError("region must be non-degenerate")
    length = min(length, 1.0)
    ts = start + np.linspace(0.0, length, samples + 1)
    h = length / samples
    lower = float(np.min(f.derivative(ts))) - TWO_PI * abs(f.a) * h / 2.0
    return lower >= tau
