"""Index arithmetic on the discrete circle Z_L, group actions and orbit distances.

Vectors are functions on Z_L enumerated in the standard parametrization
{-floor((L-1)/2), ..., 0, ..., ceil((L-1)/2)}; the conversion to machine
(array) indices is internal and never leaks into results.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


class LengthMismatchError(ValueError):
    """Two signals of different lengths were combined."""


def std_offset(L: int) -> int:
    return (L - 1) // 2


def std_indices(L: int) -> np.ndarray:
    """Standard-parametrization index set of Z_L, in storage order."""
    return np.arange(L) - std_offset(L)


class Signal:
    """A real-valued function on Z_L, stored in standard-parametrization order."""

    __slots__ = ("L", "values")

    def __init__(self, values):
        values = np.asarray(values, dtype=float)
        if values.ndim != 1 or values.size < 2:
            raise ValueError("signal must be a 1-D vector of length >= 2")
        values = values.copy()
        values.setflags(write=False)
        self.L = values.size
        self.values = values

    @property
    def support(self) -> frozenset:
        idx = std_indices(self.L)
        return frozenset(int(i) for i in idx[self.values != 0.0])

    def value_at(self, i: int) -> float:
        return float(self.values[(i + std_offset(self.L)) % self.L])

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def mean(self) -> float:
        return float(np.mean(self.values))

    def natural(self) -> np.ndarray:
        """Values reindexed so array position n holds the value at n mod L."""
        return np.roll(self.values, -std_offset(self.L))

    @classmethod
    def from_natural(cls, values) -> "Signal":
        values = np.asarray(values, dtype=float)
        return cls(np.roll(values, std_offset(values.size)))

    @classmethod
    def zeros(cls, L: int) -> "Signal":
        return cls(np.zeros(L))

    @classmethod
    def delta(cls, L: int, i: int = 0, amplitude: float = 1.0) -> "Signal":
        v = np.zeros(L)
        v[(i + std_offset(L)) % L] = amplitude
        return cls(v)

    @classmethod
    def from_support(cls, L: int, entries: dict) -> "Signal":
        """Build a signal from a {standard index: value} mapping."""
        v = np.zeros(L)
        for i, x in entries.items():
            v[(int(i) + std_offset(L)) % L] = x
        return cls(v)

    def to_json_dict(self) -> dict:
        idx = std_indices(self.L)
        mask = self.values != 0.0
        return {
            "L": self.L,
            "format": "standard-parametrization",
            "support": [int(i) for i in idx[mask]],
            "values": [float(x) for x in self.values[mask]],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "Signal":
        if d.get("format") != "standard-parametrization":
            raise ValueError("unknown signal format: %r" % d.get("format"))
        return cls.from_support(int(d["L"]), dict(zip(d["support"], d["values"])))

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json(cls, s: str) -> "Signal":
        return cls.from_json_dict(json.loads(s))

    def __eq__(self, other):
        return (
            isinstance(other, Signal)
            and self.L == other.L
            and bool(np.array_equal(self.values, other.values))
        )

    def __repr__(self):
        return "Signal(L=%d, support=%s)" % (self.L, sorted(self.support))


@dataclass(frozen=True)
class GroupElement:
    """An isometry of Z_L: rotation by `shift`, optionally preceded by reflection.

    Acts as (G v)(i) = v(eps*i + shift) with eps = -1 when flip else +1,
    i.e. G = R_shift o F^flip.
    """

    shift: int
    flip: bool = False

    def apply(self, v: Signal) -> Signal:
        out = reflect(v) if self.flip else v
        return shift(out, self.shift)

    def inverse(self, L: int) -> "GroupElement":
        # (R_g F)^-1 = F R_{-g} = R_g F since F R_g F = R_{-g}
        if self.flip:
            return GroupElement(self.shift % L, True)
        return GroupElement((-self.shift) % L, False)

    def compose(self, other: "GroupElement", L: int) -> "GroupElement":
        """self o other."""
        # R_a F^p o R_b F^q = R_{a + (-1)^p b} F^{p xor q}
        sgn = -1 if self.flip else 1
        return GroupElement((self.shift + sgn * other.shift) % L, self.flip ^ other.flip)


def group_elements(L: int, dihedral: bool = False):
    """All enabled isometries: L rotations, doubled with reflections if dihedral."""
    elems = [GroupElement(g, False) for g in range(L)]
    if dihedral:
        elems += [GroupElement(g, True) for g in range(L)]
    return elems


def shift(v: Signal, g: int) -> Signal:
    """Rotate: output(i) = v(i + g)."""
    return Signal(np.roll(v.values, -(g % v.L)))


def reflect(v: Signal) -> Signal:
    """Reflect about the origin: output(i) = v(-i)."""
    off = std_offset(v.L)
    return Signal(v.values[(2 * off - np.arange(v.L)) % v.L])


def _cross_correlations(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """c[g] = sum_k a(k) b(k+g) for natural-order arrays, via one FFT pair."""
    return np.real(np.fft.ifft(np.conj(np.fft.fft(a)) * np.fft.fft(b)))


def align(theta: Signal, phi: Signal, dihedral: bool = False):
    """Minimize ||theta - G phi|| over the group; returns (argmin G, distance).

    The maximizing shift is located by FFT cross-correlation, then the norm
    is evaluated exactly at that shift.
    """
    if theta.L != phi.L:
        raise LengthMismatchError("signals have lengths %d and %d" % (theta.L, phi.L))
    L = theta.L
    tn = theta.natural()
    best = None
    for flip in ((False, True) if dihedral else (False,)):
        base = reflect(phi) if flip else phi
        c = _cross_correlations(tn, base.natural())
        # largest <theta, G phi> gives the smallest distance
        g = int(np.argmax(c))
        cand = GroupElement(g, flip)
        d = float(np.linalg.norm(theta.values - cand.apply(phi).values))
        if best is None or d < best[1]:
            best = (cand, d)
    return best


def rho(theta: Signal, phi: Signal, dihedral: bool = False) -> float:
    """Orbit distance min_G ||theta - G phi||_2."""
    return align(theta, phi, dihedral=dihedral)[1]


def varrho(theta: Signal, phi: Signal, dihedral: bool = False) -> float:
    """Scaled orbit distance rho / sqrt(L)."""
    return rho(theta, phi, dihedral=dihedral) / np.sqrt(theta.L)
