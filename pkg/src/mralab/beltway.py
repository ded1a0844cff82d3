"""Recovery of point sets on the discrete circle from pairwise difference
multisets, and of sparse signals from their power spectra.

The support solver is a backtracking search over candidate residues anchored
at 0, pruned by multiset consistency.  Exponential worst case is accepted;
desk-scale instances finish quickly.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .gensig import DiluteClassSpec, difference_multiset
from .ring import Signal, std_offset
from .spectral import power_spectrum

#: branch-and-bound guard for exact maximum collision-free size
MAX_SIZE_GUARD_L = 40

#: default node budget for the backtracking solver
DEFAULT_NODE_BUDGET = 2_000_000


class SearchBudgetError(RuntimeError):
    """The backtracking search exceeded its node budget."""


class ProfileInconsistencyError(ValueError):
    """A thresholded autocorrelation is not a valid difference profile."""


@dataclass
class DifferenceProfile:
    """Multiset of nonzero cyclic differences, mult(d) = mult(-d)."""

    L: int
    multiplicities: Counter = field(default_factory=Counter)

    def __post_init__(self):
        clean: Counter = Counter()
        for d, m in self.multiplicities.items():
            d = int(d) % self.L
            if d == 0:
                raise ValueError("difference profiles exclude 0")
            if m < 0:
                raise ValueError("negative multiplicity")
            if m > 0:
                clean[d] = int(m)
        for d, m in clean.items():
            if clean[(-d) % self.L] != m:
                raise ValueError("profile must satisfy mult(d) = mult(-d)")
        self.multiplicities = clean

    @classmethod
    def from_support(cls, support, L: int) -> "DifferenceProfile":
        if len(set(int(i) % L for i in support)) <= 1:
            return cls(L, Counter())
        return cls(L, difference_multiset(support, L))

    def total(self) -> int:
        return sum(self.multiplicities.values())

    def to_json_dict(self) -> dict:
        return {
            "L": self.L,
            "differences": sorted(self.multiplicities),
            "multiplicities": [self.multiplicities[d] for d in sorted(self.multiplicities)],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "DifferenceProfile":
        return cls(int(d["L"]), Counter(dict(zip(d["differences"], d["multiplicities"]))))


def canonical_orbit(support, L: int) -> tuple:
    """Smallest rotation/reflection representative of a support, as a sorted tuple."""
    pts = sorted(set(int(i) % L for i in support))
    best = None
    for base in (pts, [(-p) % L for p in pts]):
        for anchor in base:
            cand = tuple(sorted((p - anchor) % L for p in base))
            if best is None or cand < best:
                best = cand
    return best


def solve_beltway(profile: DifferenceProfile, s: int, node_budget: int = DEFAULT_NODE_BUDGET):
    """All supports of size s realizing the given cyclic difference multiset.

    Returns canonical orbit representatives (sorted residue tuples); an empty
    list means the profile is infeasible.
    """
    L = profile.L
    if s < 1:
        raise ValueError("target size must be >= 1")
    if profile.total() != s * (s - 1):
        raise ValueError(
            "profile has %d differences, need s(s-1) = %d" % (profile.total(), s * (s - 1))
        )
    if s == 1:
        return [(0,)]

    found = {}
    remaining = Counter(profile.multiplicities)
    nodes = [0]

    def backtrack(points):
        nodes[0] += 1
        if nodes[0] > node_budget:
            raise SearchBudgetError("node budget %d exceeded" % node_budget)
        if len(points) == s:
            if not +remaining:
                found[canonical_orbit(points, L)] = tuple(points)
            return
        # any future point x contributes the difference x - 0, so candidates
        # are restricted to residues still present in the remaining multiset
        for x in range(points[-1] + 1, L):
            if remaining[x] <= 0:
                continue
            deltas = [((x - y) % L, (y - x) % L) for y in points]
            ok = True
            used: Counter = Counter()
            for d1, d2 in deltas:
                used[d1] += 1
                used[d2] += 1
            for d, m in used.items():
                if remaining[d] < m:
                    ok = False
                    break
            if not ok:
                continue
            remaining.subtract(used)
            points.append(x)
            backtrack(points)
            points.pop()
            remaining.update(used)

    backtrack([0])
    return sorted(found)


def _values_from_products(support, A_nat, L: int):
    """Magnitudes and signs on a collision-free support from pairwise products.

    theta(i) theta(j) = A((j - i) mod L) since each lag is hit by one pair.
    """
    s = len(support)
    pts = list(support)
    if s == 1:
        return np.array([np.sqrt(max(A_nat[0], 0.0))])
    prod = {}
    for a in range(s):
        for b in range(s):
            if a != b:
                prod[(a, b)] = A_nat[(pts[b] - pts[a]) % L]
    mags = np.empty(s)
    if s == 2:
        # x^2 y^2 = A(d)^2 and x^2 + y^2 = A(0): solve the quadratic in x^2
        p, a0 = prod[(0, 1)], A_nat[0]
        disc = max(a0 * a0 - 4 * p * p, 0.0)
        u = (a0 + np.sqrt(disc)) / 2
        v = max(a0 - u, 0.0)
        mags[0], mags[1] = np.sqrt(max(u, 0.0)), np.sqrt(v)
    else:
        for a in range(s):
            b, c = (a + 1) % s, (a + 2) % s
            denom = prod[(b, c)]
            if denom == 0:
                return None
            t2 = prod[(a, b)] * prod[(a, c)] / denom
            if t2 < 0:
                t2 = abs(t2)
            mags[a] = np.sqrt(t2)
    signs = np.ones(s)
    for a in range(1, s):
        signs[a] = 1.0 if prod[(0, a)] >= 0 else -1.0
    return mags * signs


def _refine_values(support, vals, P_nat, L: int):
    """Least-squares polish of support values against the target power spectrum."""
    idx = np.array(support)

    def resid(v):
        x = np.zeros(L)
        x[idx] = v
        return np.abs(np.fft.fft(x)) ** 2 - P_nat

    sol = scipy.optimize.least_squares(resid, vals, method="lm", xtol=1e-15, ftol=1e-15)
    return sol.x


def recover_from_power_spectrum(P, class_hint: DiluteClassSpec, tol: float = 1e-5,
                                threshold: float | None = None):
    """Candidate signals whose power spectrum matches P, for a dilute class.

    P is a length-L nonnegative vector in standard frequency order.  Pipeline:
    autocorrelation by inverse DFT, support differences by thresholding,
    backtracking support solve, values from pairwise products, least-squares
    refinement.  Candidates are returned with canonical sign (first nonzero
    value positive) and only if their relative spectral residual is <= tol.
    """
    L = class_hint.L
    P = np.asarray(P, dtype=float)
    if P.size != L or np.any(P < -1e-9 * max(1.0, P.max(initial=0.0))):
        raise ValueError("P must be a nonnegative length-%d vector" % L)
    P_nat = np.roll(P, -std_offset(L))
    A_nat = np.real(np.fft.ifft(P_nat))
    if threshold is None:
        threshold = class_hint.m**2 / 2
    lags = [d for d in range(1, L) if abs(A_nat[d]) > threshold]
    s = class_hint.s
    if len(lags) != s * (s - 1) and s > 1:
        raise ProfileInconsistencyError(
            "thresholding found %d lags, expected s(s-1) = %d" % (len(lags), s * (s - 1))
        )
    profile = DifferenceProfile(L, Counter({d: 1 for d in lags}))
    supports = solve_beltway(profile, s)
    p_norm = float(np.linalg.norm(P_nat))
    out = []
    for sup in supports:
        vals = _values_from_products(sup, A_nat, L)
        if vals is None:
            continue
        vals = _refine_values(sup, vals, P_nat, L)
        x = np.zeros(L)
        x[np.array(sup)] = vals
        res = float(np.linalg.norm(np.abs(np.fft.fft(x)) ** 2 - P_nat)) / max(p_norm, 1e-300)
        if res <= tol:
            nz = vals[vals != 0]
            if nz.size and nz[0] < 0:
                x = -x
            out.append(Signal.from_natural(x))
    return out


def local_uniqueness_probe(theta0: Signal, radius: float, trials: int,
                           rng: np.random.Generator, dihedral: bool = False) -> dict:
    """Ratio ||Delta_2(theta, theta0)||_F / rho(theta, theta0) over random
    support-preserving perturbations with varrho <= radius.

    A strictly positive floor across trials evidences local uniqueness of
    recovery from the second moment (equivalently the power spectrum).
    """
    from .ring import rho as _rho
    from .spectral import delta_m

    L = theta0.L
    sup = sorted(theta0.support)
    if not sup:
        raise ValueError("theta0 must be nonzero")
    off = std_offset(L)
    idx = np.array([(i + off) % L for i in sup])
    ratios = []
    for _ in range(trials):
        h = rng.normal(size=idx.size)
        h *= radius * np.sqrt(L) * rng.random() / np.linalg.norm(h)
        v = np.array(theta0.values)
        v[idx] += h
        theta = Signal(v)
        r = _rho(theta, theta0, dihedral=dihedral)
        if r <= 0:
            continue
        ratios.append(delta_m(theta, theta0, 2).frobenius() / r)
    ratios = np.array(ratios)
    return {
        "trials": int(ratios.size),
        "radius": float(radius),
        "min_ratio": float(ratios.min()) if ratios.size else float("nan"),
        "median_ratio": float(np.median(ratios)) if ratios.size else float("nan"),
    }


def max_collision_free_size(L: int) -> int:
    """Exact maximum size of a collision-free subset of Z_L (branch and bound)."""
    if L > MAX_SIZE_GUARD_L:
        raise ValueError("exact search guarded at L <= %d; got %d" % (MAX_SIZE_GUARD_L, L))
    if L <= 1:
        return L
    best = [1]

    def extend(points, used):
        k = len(points)
        if k > best[0]:
            best[0] = k
        # the (k+1)-th point consumes 2k fresh differences; bound the number of
        # points still addable by the count of unused differences
        free = L - 1 - len(used)
        add = 0
        while (add + 1) * (2 * k + add) <= free:
            add += 1
        if k + add <= best[0]:
            return
        for x in range(points[-1] + 1, L):
            new = set()
            ok = True
            for y in points:
                d1, d2 = (x - y) % L, (y - x) % L
                # d1 == d2 == L/2 is a repeated difference all by itself
                if d1 == d2 or d1 in used or d2 in used or d1 in new or d2 in new:
                    ok = False
                    break
                new.add(d1)
                new.add(d2)
            if ok:
                points.append(x)
                extend(points, used | new)
                points.pop()

    extend([0], set())
    return best[0]
