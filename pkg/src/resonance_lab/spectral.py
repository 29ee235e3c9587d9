r"""Grids, transforms and norms on the truncated cylinder [-L, L) x T.

Mixed-representation samples approximate the continuum transform

    F_p(xi) = (2 pi)^-2 \int e^{-i x xi} e^{-i y p} F(x, y) dx dy,

whose inverse carries no 2 pi factor: F(x, y) = sum_p \int F_p(xi) e^{i x xi + i p y} dxi.
With this convention ||F||_{L^2}^2 = (2 pi)^2 sum_p \int |F_p(xi)|^2 dxi.

Mixed arrays are stored with rows in ascending xi and columns in ascending p.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

PHYSICAL = "physical"
MIXED = "mixed"

#: Default Sobolev index of the strong norms.
DEFAULT_N = 12

EDGE_TOLERANCE = 1e-10


class EdgeMassWarning(UserWarning):
    """Field mass reaches the edge of the periodic x-box."""


@dataclass(frozen=True)
class TorusGrid:
    """Torus modes ``-P..P`` and their ``2P + 1`` collocation points."""

    P: int

    def __post_init__(self):
        if int(self.P) != self.P or self.P < 0:
            raise ValueError(f"P must be a nonnegative integer, got {self.P!r}")

    @property
    def n_y(self) -> int:
        return 2 * self.P + 1

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.P, self.P + 1)

    @property
    def y(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.n_y) / self.n_y

    def index(self, p: int) -> int:
        if abs(p) > self.P:
            raise IndexError(f"mode {p} outside |p| <= {self.P}")
        return p + self.P


@dataclass(frozen=True)
class LineGrid:
    """Periodic truncation ``[-L, L)`` of the real line with ``n_x`` points."""

    L: float
    n_x: int

    def __post_init__(self):
        n = self.n_x
        if int(n) != n or n < 2 or (n & (n - 1)) != 0:
            raise ValueError(f"n_x must be a power of two >= 2, got {n!r}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L!r}")

    @property
    def dx(self) -> float:
        return 2 * self.L / self.n_x

    @property
    def dxi(self) -> float:
        return np.pi / self.L

    @property
    def x(self) -> np.ndarray:
        return -self.L + self.dx * np.arange(self.n_x)

    @property
    def xi(self) -> np.ndarray:
        """Frequencies ``j pi / L`` for ``j = -n_x/2 .. n_x/2 - 1``, ascending."""
        return self.dxi * np.arange(-self.n_x // 2, self.n_x // 2)

    @property
    def xi_max(self) -> float:
        return np.pi / self.dx


def _phase(line: LineGrid) -> np.ndarray:
    # e^{i xi_j L} = (-1)^j accounts for the grid starting at x = -L
    j = np.arange(-line.n_x // 2, line.n_x // 2)
    return np.where(j % 2 == 0, 1.0, -1.0)


@dataclass
class ProductField:
    """Complex samples of a function on the cylinder, in one representation."""

    data: np.ndarray
    line: LineGrid
    torus: TorusGrid
    representation: str = PHYSICAL

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)
        shape = (self.line.n_x, self.torus.n_y)
        if self.data.shape != shape:
            raise ValueError(f"data shape {self.data.shape} does not match grid {shape}")
        if self.representation not in (PHYSICAL, MIXED):
            raise ValueError(f"unknown representation {self.representation!r}")

    @classmethod
    def from_function(cls, line: LineGrid, torus: TorusGrid,
                      func: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> "ProductField":
        X, Y = np.meshgrid(line.x, torus.y, indexing="ij")
        return cls(np.broadcast_to(func(X, Y), X.shape).astype(complex), line, torus, PHYSICAL)

    @classmethod
    def from_mixed(cls, line: LineGrid, torus: TorusGrid, data: np.ndarray) -> "ProductField":
        return cls(data, line, torus, MIXED)

    @classmethod
    def separable(cls, line: LineGrid, torus: TorusGrid, profile: np.ndarray,
                  coefficients: np.ndarray) -> "ProductField":
        """Mixed field ``profile(xi) * coefficients_p``."""
        return cls(np.outer(profile, coefficients), line, torus, MIXED)

    @classmethod
    def zeros(cls, line: LineGrid, torus: TorusGrid, representation: str = PHYSICAL):
        return cls(np.zeros((line.n_x, torus.n_y), complex), line, torus, representation)

    def copy(self) -> "ProductField":
        return ProductField(self.data.copy(), self.line, self.torus, self.representation)

    def same_grid(self, other: "ProductField") -> bool:
        return self.line == other.line and self.torus == other.torus

    def with_data(self, data: np.ndarray, representation: str | None = None) -> "ProductField":
        return ProductField(data, self.line, self.torus, representation or self.representation)

    def mixed(self) -> "ProductField":
        return self if self.representation == MIXED else to_mixed(self)

    def physical(self) -> "ProductField":
        return self if self.representation == PHYSICAL else to_physical(self)


def to_mixed(field: ProductField) -> ProductField:
    if field.representation != PHYSICAL:
        raise ValueError("to_mixed expects a physical field")
    line, torus = field.line, field.torus
    spec = np.fft.fftshift(np.fft.fft2(field.data), axes=(0, 1))
    spec *= _phase(line)[:, None] * (line.dx / (2 * np.pi * torus.n_y))
    return ProductField(spec, line, torus, MIXED)


def to_physical(field: ProductField) -> ProductField:
    if field.representation != MIXED:
        raise ValueError("to_physical expects a mixed field")
    line, torus = field.line, field.torus
    spec = field.data * _phase(line)[:, None]
    data = np.fft.ifft2(np.fft.ifftshift(spec, axes=(0, 1)))
    data *= line.dxi * line.n_x * torus.n_y
    return ProductField(data, line, torus, PHYSICAL)


def apply_multiplier(field: ProductField,
                     symbol: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> ProductField:
    """Fourier multiplier ``symbol(xi, p)``; returns the representation of the input."""
    m = field.mixed()
    XI, P = np.meshgrid(m.line.xi, m.torus.modes, indexing="ij")
    out = m.with_data(m.data * symbol(XI, P))
    return out if field.representation == MIXED else to_physical(out)


def multiply_x(field: ProductField, power: int = 1) -> ProductField:
    phys = field.physical()
    out = phys.with_data(phys.data * phys.line.x[:, None] ** power)
    return out if field.representation == PHYSICAL else to_mixed(out)


def check_edges(field: ProductField, tol: float = EDGE_TOLERANCE, what: str = "field") -> bool:
    """Warn and return False if ``|F|`` at the box boundary exceeds ``tol * max|F|``."""
    data = np.abs(field.physical().data)
    peak = data.max()
    if peak == 0:
        return True
    edge = max(data[0].max(), data[-1].max())
    if edge > tol * peak:
        warnings.warn(f"{what}: edge amplitude {edge:.3e} exceeds {tol:g} x peak {peak:.3e}; "
                      "x-weights are unreliable under wrap-around", EdgeMassWarning, stacklevel=3)
        return False
    return True


def norm_h(seq: np.ndarray, s: float) -> float:
    """Sobolev norm ``sqrt(sum (1 + p^2)^s |a_p|^2)`` of a sequence indexed ``-P..P``."""
    seq = np.asarray(seq)
    n = seq.shape[-1]
    if n % 2 != 1:
        raise ValueError(f"sequence length must be odd (modes -P..P), got {n}")
    p = np.arange(n) - n // 2
    return float(np.sqrt(np.sum((1.0 + p**2) ** s * np.abs(seq) ** 2)))


def norm_L2(field: ProductField) -> float:
    phys = field.physical()
    w = phys.line.dx * 2 * np.pi / phys.torus.n_y
    return float(np.sqrt(w * np.sum(np.abs(phys.data) ** 2)))


def norm_HN(field: ProductField, N: float = DEFAULT_N) -> float:
    """Spectral ``H^N`` norm; ``N = 0`` reproduces the physical ``L^2`` norm."""
    m = field.mixed()
    XI, P = np.meshgrid(m.line.xi, m.torus.modes, indexing="ij")
    weight = (1.0 + XI**2 + P**2) ** N
    return float(np.sqrt((2 * np.pi) ** 2 * m.line.dxi * np.sum(weight * np.abs(m.data) ** 2)))


def x_moment(field: ProductField) -> float:
    """``||x F||_{L^2}`` by physical multiplication."""
    return norm_L2(multiply_x(field.physical()))


_CENTERED = {
    2: [1 / 2],
    4: [2 / 3, -1 / 12],
    6: [3 / 4, -3 / 20, 1 / 60],
    8: [4 / 5, -1 / 5, 4 / 105, -1 / 280],
}


def x_moment_spectral(field: ProductField, order: int = 8) -> float:
    """``||x F||_{L^2}`` through ``i d/dxi`` of the mixed samples (centered differences)."""
    if order not in _CENTERED:
        raise ValueError(f"order must be one of {sorted(_CENTERED)}")
    m = field.mixed()
    d = np.zeros_like(m.data)
    for k, c in enumerate(_CENTERED[order], start=1):
        d += c * (np.roll(m.data, -k, axis=0) - np.roll(m.data, k, axis=0))
    d /= m.line.dxi
    return float(np.sqrt((2 * np.pi) ** 2 * m.line.dxi * np.sum(np.abs(d) ** 2)))


def norm_S(field: ProductField, N: float = DEFAULT_N) -> float:
    """``||F||_{H^N} + ||x F||_{L^2}``."""
    check_edges(field, what="norm_S")
    return norm_HN(field, N) + x_moment(field)


def norm_Splus(field: ProductField, N: float = DEFAULT_N) -> float:
    """``||F||_S + ||(1 - d_xx)^4 F||_S + ||x F||_S``."""
    check_edges(field, what="norm_Splus")
    smooth = apply_multiplier(field.mixed(), lambda xi, p: (1.0 + xi**2) ** 4)
    weighted = multiply_x(field.physical())
    parts = [field, smooth, weighted]
    return sum(norm_HN(f, N) + x_moment(f) for f in parts)
