"""Good approximations between periodic orbits and GIKN sequences.

Only symbolic systems are supported: orbits are words over the shift with a
fiber coordinate per point.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import maximum_filter1d, minimum_filter1d

from .measures import DEFAULT_DEPTH, weak_star_distance
from .orbits import continue_orbit, empirical_measure
from .shadow import SYMBOL_CAP, nearest_mismatch_radius
from .systems import circle_dist

_HASH_MODS = (2_147_483_629, 2_147_483_587)
_HASH_BASE = 131


@dataclass
class GoodApproximationCertificate:
    """gamma1 is an (eps, kappa) good approximation of gamma2.

    ``subset`` lists point indices of gamma1, ``projection`` their images in
    gamma2; every gamma2 point has exactly ``cardinality`` preimages.
    """

    eps: float
    kappa_required: float
    kappa: float
    subset: np.ndarray
    projection: np.ndarray
    cardinality: int
    period1: int
    period2: int
    max_distance: float
    ok: bool = True

    def summary(self):
        return {
            "eps": self.eps,
            "kappa_required": self.kappa_required,
            "kappa": self.kappa,
            "cardinality": self.cardinality,
            "matched": int(len(self.subset)),
            "period1": self.period1,
            "period2": self.period2,
            "max_distance": self.max_distance,
            "ok": self.ok,
        }


@dataclass
class GoodApproximationFailure:
    eps: float
    kappa_required: float
    kappa_star: float  # achieved at eps after balancing
    eps_star: float  # smallest eps reaching kappa_required before balancing
    ok: bool = False

    def summary(self):
        return {
            "eps": self.eps,
            "kappa_required": self.kappa_required,
            "kappa_star": self.kappa_star,
            "eps_star": self.eps_star,
            "ok": False,
        }


def _window_hashes(seq, L, n_out):
    """Polynomial hashes of the cyclic windows seq[i:i+L], i < n_out, under two moduli."""
    n = len(seq)
    ext = np.asarray(seq, dtype=np.int64)[np.arange(n_out + L) % n] + 1
    out = []
    for mod in _HASH_MODS:
        h = np.zeros(len(ext) + 1, dtype=np.int64)
        acc = 0
        for p, s in enumerate(ext.tolist()):
            acc = (acc * _HASH_BASE + s) % mod
            h[p + 1] = acc
        powL = pow(_HASH_BASE, L, mod)
        # (h[i+L] - h[i]*B^L) mod p, split to stay inside int64
        hi = h[np.arange(n_out) + L]
        lo = h[:n_out]
        prod = (lo % mod) * (powL >> 16) % mod
        prod = (prod * 65536 + (lo % mod) * (powL & 0xFFFF)) % mod
        out.append((hi - prod) % mod)
    return out[0] * _HASH_MODS[1] + out[1]


def _candidate_offsets(w1, w2):
    P1, P2 = len(w1), len(w2)
    h2 = _window_hashes(w2, P2, P2)
    table = {}
    for j, h in enumerate(h2.tolist()):
        table.setdefault(h, []).append(j)
    h1 = _window_hashes(w1, P2, P1)
    offsets = set()
    for i, h in enumerate(h1.tolist()):
        for j in table.get(h, ()):
            offsets.add((j - i) % P2)
    return sorted(offsets)


def _distances_for_offset(w1, f1, w2, f2, c, cap=SYMBOL_CAP):
    """max_{k<P2} distance(f^k(y_i), f^k(x_{i+c})) for every point i of gamma1."""
    P1, P2 = len(w1), len(w2)
    pos = np.arange(-cap, P1 + P2 + cap)
    s1 = w1[pos % P1]
    s2 = w2[(pos + c) % P2]
    r = nearest_mismatch_radius(s1 != s2, cap)
    # sliding minimum of the radius over k = 0..P2-1 starting at i
    rmin = minimum_filter1d(r, size=P2, origin=-(P2 // 2), mode="nearest")[cap : cap + P1]
    sym = np.where(rmin >= cap, 0.0, np.exp2(-rmin.astype(float)))
    p = np.arange(P1 + P2)
    fd = circle_dist(f1[p % P1], f2[(p + c) % P2])
    fmax = maximum_filter1d(fd, size=P2, origin=-(P2 // 2), mode="nearest")[:P1]
    return np.maximum(sym, fmax)


def _orbit_arrays(orbit):
    if orbit.kind != "shift":
        raise ValueError("good approximations are computed for symbolic orbits")
    return np.asarray(orbit.word, dtype=np.int8), np.asarray(orbit.fiber, dtype=float)


def best_projections(g1, g2):
    """For each point of g1, the best phase in g2 and the attained distance."""
    w1, f1 = _orbit_arrays(g1)
    w2, f2 = _orbit_arrays(g2)
    P1, P2 = len(w1), len(w2)
    best = np.ones(P1)
    proj = np.full(P1, -1, dtype=np.int64)
    for c in _candidate_offsets(w1, w2):
        d = _distances_for_offset(w1, f1, w2, f2, c)
        better = d < best
        best[better] = d[better]
        proj[better] = (np.nonzero(better)[0] + c) % P2
    return best, proj


def check_good_approximation(system, g1, g2, eps, kappa):
    """Certificate that g1 is an (eps, kappa) good approximation of g2, or a failure."""
    if system.kind != "shift":
        raise ValueError("good approximations are computed for symbolic systems")
    best, proj = best_projections(g1, g2)
    P1, P2 = g1.period, g2.period
    keep = (best < eps) & (proj >= 0)
    idx = np.nonzero(keep)[0]
    counts = np.bincount(proj[idx], minlength=P2)
    card = int(counts.min()) if P2 else 0
    chosen = []
    if card > 0:
        order = np.lexsort((idx, best[idx], proj[idx]))
        sorted_idx = idx[order]
        sorted_proj = proj[sorted_idx]
        starts = np.searchsorted(sorted_proj, np.arange(P2))
        take = (np.arange(len(sorted_idx)) - starts[sorted_proj]) < card
        chosen = np.sort(sorted_idx[take])
    chosen = np.asarray(chosen, dtype=np.int64)
    achieved = len(chosen) / P1
    if achieved + 1e-15 >= kappa and len(chosen) > 0:
        return GoodApproximationCertificate(
            eps=eps,
            kappa_required=kappa,
            kappa=achieved,
            subset=chosen,
            projection=proj[chosen],
            cardinality=card,
            period1=P1,
            period2=P2,
            max_distance=float(best[chosen].max()),
        )
    need = max(1, math.ceil(kappa * P1))
    eps_star = float(np.sort(best)[min(need, P1) - 1])
    return GoodApproximationFailure(eps, kappa, achieved, eps_star)


def _sparse_max(a):
    levels = [a]
    k = 1
    while 2 * k <= len(a):
        prev = levels[-1]
        levels.append(np.maximum(prev[:-k], prev[k:]))
        k *= 2
    return levels


def _range_max(levels, lo, length):
    k = int(math.floor(math.log2(length)))
    lv = levels[k]
    return np.maximum(lv[lo], lv[lo + length - (1 << k)])


def verify_certificate(system, g1, g2, cert):
    """Re-check all three defining conditions of a certificate from scratch."""
    if not cert.ok:
        return False
    w1, f1 = _orbit_arrays(g1)
    w2, f2 = _orbit_arrays(g2)
    P1, P2 = len(w1), len(w2)
    if len(cert.subset) / P1 < cert.kappa_required - 1e-15:
        return False
    counts = np.bincount(cert.projection, minlength=P2)
    if counts.min() != counts.max() or counts[0] != cert.cardinality:
        return False
    if len(np.unique(cert.subset)) != len(cert.subset):
        return False
    # symbols: 2^-N < eps for all k < P2 iff the window widened by N_eps - 1 agrees
    n_eps = min(SYMBOL_CAP, math.floor(math.log2(1.0 / cert.eps)) + 1) if cert.eps < 1 else 0
    pad = max(n_eps - 1, 0)
    offsets = (cert.projection - cert.subset) % P2
    for c in np.unique(offsets):
        members = cert.subset[offsets == c]
        pos = np.arange(-pad, P1 + P2 + pad)
        bad = (w1[pos % P1] != w2[(pos + c) % P2]).astype(np.int64)
        cs = np.concatenate([[0], np.cumsum(bad)])
        # window [i - pad, i + P2 + pad) in shifted coordinates starts at i
        if np.any(cs[members + P2 + 2 * pad] - cs[members] != 0):
            return False
        p = np.arange(P1 + P2)
        fd = circle_dist(f1[p % P1], f2[(p + c) % P2])
        levels = _sparse_max(fd)
        if np.any(_range_max(levels, members, P2) >= cert.eps):
            return False
    return True


# --------------------------------------------------------------------------- descend


@dataclass(frozen=True)
class DescendParams:
    """rho: proportion-loss constant; zeta: exponent retention.

    ``ratio_high`` caps lambda'/lambda from above so the exponent shrinks by
    a definite factor per step; ``max_loops`` bounds the search over M.
    """

    rho: float = 15.0
    zeta: float = 0.5
    ratio_high: float = 0.6
    max_loops: int = 64
    max_excursion: int = 10**5

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if not 0 < self.zeta < 1:
            raise ValueError("zeta must lie in (0, 1)")
        if not self.zeta < self.ratio_high <= 1:
            raise ValueError("need zeta < ratio_high <= 1")


class DescendError(ValueError):
    pass


def _excursion_symbol(system, gamma):
    lam = gamma.exponent
    best = None
    for s, f in enumerate(system.fibers):
        g = math.log(float(f.derivative(gamma.t_star)))
        if g * lam < 0 and (best is None or abs(g) > abs(best[1])):
            best = (s, g)
    if best is None:
        raise DescendError("no opposite region: no fiber map reverses the center behavior")
    return best[0]


def descend_step(system, gamma, eps, params):
    """Shrink |lambda^c| by looping gamma M times and adding an excursion.

    The new word is gamma^M e^j with e the symbol of opposite center
    behavior. M >= 2 is minimal such that some j puts lambda'/lambda in
    (zeta, ratio_high) and the certificate reaches kappa = 1 - rho |lambda|.
    """
    if system.kind != "shift":
        raise ValueError("descend works on symbolic systems")
    lam = gamma.exponent
    if lam == 0:
        raise DescendError("gamma is not hyperbolic")
    e = _excursion_symbol(system, gamma)
    kappa = 1.0 - params.rho * abs(lam)
    w = tuple(gamma.word)
    P = len(w)
    last = None
    for M in range(2, params.max_loops + 1):
        base_sum = M * P * lam
        # fiber continuation through the excursion
        t = gamma.t_star
        acc = 0.0
        f = system.fibers[e]
        found = None
        for j in range(1, params.max_excursion + 1):
            acc += math.log(float(f.derivative(t)))
            t = float(f(t))
            ratio = (base_sum + acc) / (M * P + j) / lam
            if ratio <= params.zeta:
                break
            if ratio < params.ratio_high:
                found = j
                break
        if found is None:
            continue
        word = w * M + (e,) * found
        try:
            g2 = continue_orbit(system, word, gamma.t_star)
        except ValueError:
            continue
        ratio = g2.exponent / lam
        if not params.zeta < ratio < 1.0 or not ratio < params.ratio_high + 1e-9:
            continue
        cert = check_good_approximation(system, g2, gamma, eps, kappa)
        last = cert
        if cert.ok:
            return g2, cert
    if last is None:
        raise DescendError("no loop count within budget lands the exponent window")
    raise DescendError(f"certificate fails: kappa*={last.kappa_star:.4g} < {kappa:.4g}")


# --------------------------------------------------------------------------- sequences


@dataclass(frozen=True)
class EpsSchedule:
    """eps_n = eps0 * ratio^n; summable iff ratio < 1."""

    eps0: float = 1e-2
    ratio: float = 0.5

    def __post_init__(self):
        if self.eps0 <= 0:
            raise ValueError("eps0 must be positive")
        if not 0 <= self.ratio < 1:
            raise ValueError(f"schedule with ratio {self.ratio} is not summable")

    def __call__(self, n):
        return self.eps0 * self.ratio**n

    @property
    def total(self):
        return self.eps0 / (1.0 - self.ratio)


@dataclass
class GiknSequence:
    system: object
    orbits: list
    params: DescendParams
    schedule: EpsSchedule
    certificates: list = field(default_factory=list)
    stopped: str = ""

    @property
    def eps(self):
        return [c.eps for c in self.certificates]

    @property
    def kappas(self):
        return [c.kappa for c in self.certificates]

    @property
    def kappas_required(self):
        return [c.kappa_required for c in self.certificates]

    @property
    def sum_eps(self):
        return math.fsum(self.eps)

    @property
    def prod_kappa(self):
        return float(np.prod(self.kappas)) if self.certificates else 1.0

    @property
    def exponents(self):
        return [o.exponent for o in self.orbits]

    @property
    def periods(self):
        return [o.period for o in self.orbits]

    @property
    def rho_fit(self):
        """Smallest rho with kappa_n >= 1 - rho |lambda(gamma_n)| on every step."""
        vals = [(1.0 - c.kappa) / abs(o.exponent) for c, o in zip(self.certificates, self.orbits)]
        return max(vals, default=0.0)


def build_gikn_sequence(system, gamma0, schedule, params, n_max):
    """Iterate descend_step up to n_max times; errors stop the sequence."""
    if not isinstance(schedule, EpsSchedule):
        raise TypeError("schedule must be an EpsSchedule")
    seq = GiknSequence(system, [gamma0], params, schedule)
    for n in range(n_max):
        try:
            g, cert = descend_step(system, seq.orbits[-1], schedule(n), params)
        except DescendError as exc:
            seq.stopped = str(exc)
            break
        seq.orbits.append(g)
        seq.certificates.append(cert)
    return seq


def certify_convergence(seq, depth=DEFAULT_DEPTH, tol_hyp=1e-2):
    """Convergence diagnostics with pass flags for every checked bound."""
    if len(seq.orbits) < 2:
        raise ValueError("need at least two orbits")
    zeta = seq.params.zeta
    lams = seq.exponents
    abs_l = [abs(x) for x in lams]
    ratios = [lams[n + 1] / lams[n] if lams[n] else float("nan") for n in range(len(lams) - 1)]
    measures = [empirical_measure(o) for o in seq.orbits]
    incs = [weak_star_distance(measures[n], measures[n + 1], depth).value for n in range(len(measures) - 1)]
    eps = seq.eps or [seq.schedule(n) for n in range(len(incs))]
    c_fit = max((i / e for i, e in zip(incs, eps)), default=0.0)
    d_total = weak_star_distance(measures[0], measures[-1], depth).value
    rho = seq.rho_fit
    lam0 = -abs(lams[0])
    product_bound = 1.0 + (2.0 * rho / (1.0 - zeta)) * lam0
    distance_bound = (2.0 + 4.0 * rho / (1.0 - zeta)) * abs(lams[0]) + 2.0 ** (1 - depth)
    constant = all(i == 0 for i in incs)
    flags = {
        "certificates": all(verify_certificate(seq.system, seq.orbits[n + 1], seq.orbits[n], c)
                            for n, c in enumerate(seq.certificates)),
        "summable": seq.schedule.ratio < 1,
        "product": seq.prod_kappa > product_bound,
        "monotone": constant or all(abs_l[n + 1] < abs_l[n] for n in range(len(abs_l) - 1)),
        "ratio": constant or all(r > zeta for r in ratios),
        "final_exponent": abs_l[-1] < tol_hyp,
        "distance": d_total <= distance_bound,
        "periods": constant or all(seq.periods[n + 1] > seq.periods[n] for n in range(len(lams) - 1)),
    }
    return {
        "sum_eps": seq.sum_eps,
        "prod_kappa": seq.prod_kappa,
        "rho_fit": rho,
        "exponents": lams,
        "ratios": ratios,
        "periods": seq.periods,
        "increments": incs,
        "cauchy_constant": c_fit,
        "distance_first_last": d_total,
        "distance_bound": distance_bound,
        "product_bound": product_bound,
        "depth": depth,
        "flags": flags,
        "ok": all(flags.values()),
    }


def _point_keys(orbit, r):
    w = np.asarray(orbit.word, dtype=np.int8)
    P = len(w)
    if r == 0:
        return [b""] * P
    idx = (np.arange(P)[:, None] + np.arange(-(r - 1), r)[None, :]) % P
    win = w[idx]
    return [row.tobytes() for row in win]


def _set_distance(src, dst, cap=16):
    """max over points of src of the distance to the point set dst."""
    worst = 0.0
    tables = []
    for r in range(cap + 1):
        table = {}
        for o in dst:
            for key, t in zip(_point_keys(o, r), o.fiber):
                table.setdefault(key, []).append(t)
        tables.append({k: np.sort(np.asarray(v)) for k, v in table.items()})
    for o in src:
        for i, t in enumerate(o.fiber):
            best = 1.0
            for r in range(cap + 1):
                key = _point_keys_single(o, i, r)
                arr = tables[r].get(key)
                if arr is None:
                    break
                fd = float(np.min(circle_dist(arr, t)))
                sym = 2.0 ** (-r) if r < cap else 0.0
                best = min(best, max(sym, fd))
            worst = max(worst, best)
    return worst


def _point_keys_single(orbit, i, r):
    if r == 0:
        return b""
    w = np.asarray(orbit.word, dtype=np.int8)
    idx = (i + np.arange(-(r - 1), r)) % len(w)
    return w[idx].tobytes()


def limit_support_estimate(seq, n, cap=16):
    """Points of the tail union gamma_n, gamma_{n+1}, ... and consecutive Hausdorff distances.

    Hausdorff distances use the symbolic metric truncated at ``cap`` symbols.
    """
    if not 0 <= n < len(seq.orbits):
        raise ValueError("n must index an orbit of the sequence")
    tail = seq.orbits[n:]
    pts = [(o.word, o.fiber) for o in tail]
    dists = []
    for k in range(n, len(seq.orbits) - 1):
        A, B = seq.orbits[k:], seq.orbits[k + 1:]
        dists.append(max(_set_distance(A, B, cap), _set_distance(B, A, cap)))
    return pts, dists


# --------------------------------------------------------------------------- persistence


def save_jsonl(seq, path):
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for n, o in enumerate(seq.orbits):
            row = {
                "step": n,
                "word": "".join(map(str, o.word)),
                "t_star": o.t_star,
                "exponent": o.exponent,
                "period": o.period,
                "certificate": seq.certificates[n - 1].summary() if n else None,
            }
            fh.write(json.dumps(row) + "\n")


def load_jsonl(system, path, params=None, schedule=None):
    """Rebuild a sequence from JSON lines; certificates are recomputed."""
    params = params or DescendParams()
    schedule = schedule or EpsSchedule()
    orbits, certs = [], []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        row = json.loads(line)
        o = continue_orbit(system, tuple(int(c) for c in row["word"]), row["t_star"])
        if orbits:
            c = row["certificate"]
            cert = check_good_approximation(system, o, orbits[-1], c["eps"], c["kappa_required"])
            if not cert.ok:
                raise ValueError(f"stored certificate at step {row['step']} no longer holds")
            certs.append(cert)
        orbits.append(o)
    return GiknSequence(system, orbits, params, schedule, certs)
