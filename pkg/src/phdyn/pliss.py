"""Pliss times: indices where every backward average clears a threshold."""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

SLACK = 1e-12


@dataclass(frozen=True)
class PlissQuery:
    a: tuple
    b: float
    c: float
    c_prime: float
    exact: bool = False

    def __post_init__(self):
        a = tuple(Fraction(x) if self.exact else float(x) for x in self.a)
        object.__setattr__(self, "a", a)
        if not a:
            raise ValueError("sequence must be non-empty")
        if not self.c_prime < self.c:
            raise ValueError(f"need c' < c, got c'={self.c_prime}, c={self.c}")
        if not self.c < self.b:
            raise ValueError(f"need c < b, got c={self.c}, b={self.b}")
        slack = 0 if self.exact else SLACK
        worst = max(a)
        if worst > self.b + slack:
            raise ValueError(f"upper bound violated: max a_i = {worst} > b = {self.b}")
        total = sum(a) if self.exact else float(np.sum(a))
        if total < len(a) * self.c - slack * len(a):
            raise ValueError(f"mean below c: sum a_i = {total} < n*c = {len(a) * self.c}")

    @property
    def guaranteed_proportion(self):
        return (self.c - self.c_prime) / (self.b - self.c_prime)


@dataclass(frozen=True)
class PlissResult:
    indices: tuple
    n: int

    @property
    def proportion(self):
        return len(self.indices) / self.n

    def to_dict(self):
        return {"indices": list(self.indices), "proportion": self.proportion}


def _scan(a, c_prime, slack):
    # index k is valid iff S_k >= max(S_0 .. S_{k-1}), S the prefix sums of a - c'
    out = []
    s = 0
    best = 0
    for k, x in enumerate(a, start=1):
        s += x - c_prime
        if s >= best - slack:
            out.append(k)
        if s > best:
            best = s
    return out


def pliss_times(q):
    """All indices i with sum_{j..i} a >= (i - j + 1) c' for every j <= i.

    Runs in one pass over the prefix sums of a - c'. Float queries allow a
    1e-12 slack on each comparison; exact queries compare rationals.
    """
    c_prime = Fraction(q.c_prime) if q.exact else q.c_prime
    idx = _scan(q.a, c_prime, 0 if q.exact else SLACK)
    return PlissResult(tuple(idx), len(q.a))


def pliss_oracle(a, c_prime, slack=SLACK):
    """Quadratic reference: checks every backward window directly."""
    out = []
    for i in range(1, len(a) + 1):
        ok = True
        run = 0
        for j in range(i, 0, -1):
            run += a[j - 1]
            if run < (i - j + 1) * c_prime - slack:
                ok = False
                break
        if ok:
            out.append(i)
    return out


def forward_times(a, c_prime, slack=SLACK):
    """Indices i (1-based) such that every forward window starting at i averages >= c'."""
    rev = _scan(list(reversed(a)), c_prime, slack)
    n = len(a)
    return sorted(n + 1 - k for k in rev)


def cyclic_good_start(a, c_prime):
    """A rotation start s (0-based) so that every prefix of a[s:] + a[:s] averages >= c'.

    Exists whenever the total average is >= c' (cycle lemma): start right
    after the position where the prefix sum of a - c' is minimal.
    """
    x = np.asarray(a, dtype=float) - c_prime
    if x.sum() < -SLACK * len(x):
        raise ValueError("total average below threshold; no good rotation")
    s = np.cumsum(x)
    return int((np.argmin(s) + 1) % len(x))
