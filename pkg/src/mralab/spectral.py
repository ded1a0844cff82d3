"""DFT on Z_L, convolution, circulant lifting, and group-averaged moment tensors.

Convention: unnormalized forward transform hat(v)(xi) = sum_k v(k) e^{-2 pi i xi k / L},
inverse carries the 1/L factor.  Under this convention Parseval reads
||v||^2 = ||hat(v)||^2 / L.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .ring import LengthMismatchError, Signal, std_offset, std_indices

#: delta_m with m=3 materializes an L^3 array; refuse beyond this length.
THIRD_MOMENT_MAX_L = 64


class SizeGuardError(ValueError):
    """An operation was requested beyond its cost guard."""


class Spectrum:
    """Complex Fourier coefficients indexed by frequencies in standard parametrization."""

    __slots__ = ("L", "values")

    def __init__(self, values):
        values = np.asarray(values, dtype=complex).copy()
        values.setflags(write=False)
        self.L = values.size
        self.values = values

    def value_at(self, xi: int) -> complex:
        return complex(self.values[(xi + std_offset(self.L)) % self.L])

    def natural(self) -> np.ndarray:
        return np.roll(self.values, -std_offset(self.L))

    @classmethod
    def from_natural(cls, values) -> "Spectrum":
        values = np.asarray(values, dtype=complex)
        return cls(np.roll(values, std_offset(values.size)))


@dataclass
class MomentTensor:
    """Group-averaged moment tensor E_G[(G theta)^(x m)] or a difference thereof.

    For order 2 the tensor is symmetric circulant; `generator` holds the
    length-L vector J with entry(i, j) = J(j - i), natural residue order.
    """

    order: int
    data: np.ndarray
    generator: np.ndarray | None = None

    def frobenius(self) -> float:
        if self.order == 2 and self.generator is not None:
            # ||J||_F^2 = L * sum_k J_k^2 for a circulant matrix
            return float(np.sqrt(self.data.shape[0] * np.sum(self.generator**2)))
        return float(np.linalg.norm(self.data.ravel()))


def dft(v: Signal) -> Spectrum:
    return Spectrum.from_natural(np.fft.fft(v.natural()))


def idft(s: Spectrum) -> Signal:
    vals = np.fft.ifft(s.natural())
    return Signal.from_natural(np.real(vals))


def convolve(u: Signal, v: Signal) -> Signal:
    """Cyclic convolution [u * v](k) = sum_g u(g) v(k - g)."""
    if u.L != v.L:
        raise LengthMismatchError("signals have lengths %d and %d" % (u.L, v.L))
    out = np.fft.ifft(np.fft.fft(u.natural()) * np.fft.fft(v.natural()))
    return Signal.from_natural(np.real(out))


def toeplitz(v: Signal) -> np.ndarray:
    """Circulant matrix M(v) with entries M[i, j] = v(i - j)."""
    return scipy.linalg.circulant(v.natural())


def autocorrelation(theta: Signal) -> np.ndarray:
    """Periodic autocorrelation A(l) = sum_i theta(i) theta(i+l), standard order."""
    p = np.abs(np.fft.fft(theta.natural())) ** 2
    return np.roll(np.real(np.fft.ifft(p)), std_offset(theta.L))


def power_spectrum(theta: Signal) -> np.ndarray:
    """|hat(theta)|^2 at frequencies in standard order; nonnegative."""
    return np.abs(dft(theta).values) ** 2


def second_moment_generator(theta: Signal) -> np.ndarray:
    """Circulant generator J (natural residue order) of E_G[(G theta)^(x 2)].

    J(k) = A_theta(k) / L, the scaled periodic autocorrelation.
    """
    p = np.abs(np.fft.fft(theta.natural())) ** 2
    return np.real(np.fft.ifft(p)) / theta.L


def second_moment(theta: Signal) -> MomentTensor:
    """Second moment tensor E_G[(G theta)^(x 2)] = (1/L) M(theta * reflect(theta))."""
    gen = second_moment_generator(theta)
    return MomentTensor(order=2, data=scipy.linalg.circulant(gen), generator=gen)


def _third_moment_dense(theta: Signal) -> np.ndarray:
    L = theta.L
    if L > THIRD_MOMENT_MAX_L:
        raise SizeGuardError(
            "third moment is brute force only; L=%d exceeds guard %d" % (L, THIRD_MOMENT_MAX_L)
        )
    acc = np.zeros((L, L, L))
    for g in range(L):
        w = np.roll(theta.values, -g)
        acc += np.einsum("i,j,k->ijk", w, w, w)
    return acc / L


def delta_m(theta: Signal, phi: Signal, m: int) -> MomentTensor:
    """Difference of order-m group-averaged moment tensors of theta and phi."""
    if theta.L != phi.L:
        raise LengthMismatchError("signals have lengths %d and %d" % (theta.L, phi.L))
    L = theta.L
    if m == 1:
        # E_G[G theta] = mean(theta) * ones
        return MomentTensor(order=1, data=(theta.mean() - phi.mean()) * np.ones(L))
    if m == 2:
        gen = second_moment_generator(theta) - second_moment_generator(phi)
        return MomentTensor(order=2, data=scipy.linalg.circulant(gen), generator=gen)
    if m == 3:
        return MomentTensor(order=3, data=_third_moment_dense(theta) - _third_moment_dense(phi))
    raise ValueError("moment order must be 1, 2 or 3; got %r" % (m,))


def second_moment_difference_expansion(theta: Signal, h: Signal):
    """Split Delta_2(theta + h, theta) into its linear and quadratic parts in h.

    Delta_2 = (1/L)[M(theta * reflect(h)) + M(reflect(theta) * h)] (linear)
            + (1/L) M(h * reflect(h))                              (quadratic).
    Returns (linear_part, quadratic_part) as dense L x L matrices.
    """
    if theta.L != h.L:
        raise LengthMismatchError("signals have lengths %d and %d" % (theta.L, h.L))
    L = theta.L
    th = np.fft.fft(theta.natural())
    hh = np.fft.fft(h.natural())
    lin_gen = np.real(np.fft.ifft(th * np.conj(hh) + np.conj(th) * hh)) / L
    quad_gen = np.real(np.fft.ifft(np.abs(hh) ** 2)) / L
    return scipy.linalg.circulant(lin_gen), scipy.linalg.circulant(quad_gen)


def empirical_moments(observations: np.ndarray, order: int, sigma: float) -> MomentTensor:
    """Sample moment tensors from rows of `observations` (standard-order vectors).

    Order 2 subtracts the known-noise bias sigma^2 I.
    """
    y = np.asarray(observations, dtype=float)
    if y.ndim != 2 or y.shape[0] < 1:
        raise ValueError("observations must be a nonempty n x L array")
    n, L = y.shape
    if order == 1:
        return MomentTensor(order=1, data=y.mean(axis=0))
    if order == 2:
        data = (y.T @ y) / n - sigma**2 * np.eye(L)
        return MomentTensor(order=2, data=data)
    raise ValueError("empirical moments support orders 1 and 2; got %r" % (order,))
