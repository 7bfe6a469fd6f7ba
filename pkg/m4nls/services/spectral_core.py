"""
Spectral Core Service.
Periodic-box Fourier discretization of R^N (N = 1, 2, 3): transforms,
differential operators through their symbols, quadrature, and exact
inversion of gamma*Delta^2 - beta*Delta + alpha.
"""

from dataclasses import dataclass, field as dc_field
from typing import Literal, Sequence

import numpy as np
from scipy import fft as sp_fft

from m4nls.models.schemas import Params, SobolevProducts
from m4nls.utils.errors import SymbolViolationError


MIN_POINTS = 16


@dataclass(frozen=True, eq=False)
class SpectralGrid:
    """
    Uniform periodic grid on [-L/2, L/2)^N with n points per axis.
    Immutable; the coordinate and wavenumber tables are built once.
    """
    dim: int
    n: int
    L: float
    h: float = dc_field(init=False)
    axis: np.ndarray = dc_field(init=False, repr=False)
    wavenumbers: np.ndarray = dc_field(init=False, repr=False)
    coords: tuple = dc_field(init=False, repr=False)
    kvec: tuple = dc_field(init=False, repr=False)
    k2: np.ndarray = dc_field(init=False, repr=False)

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.n % 2:
            raise ValueError(f"n must be even, got {self.n}")
        if self.n < MIN_POINTS:
            raise ValueError(f"n must be at least {MIN_POINTS}, got {self.n}")
        if not self.L > 0:
            raise ValueError(f"box length must be positive, got {self.L}")

        h = self.L / self.n
        axis = -self.L / 2 + h * np.arange(self.n)
        wavenumbers = 2 * np.pi * sp_fft.fftfreq(self.n, d=h)
        coords = tuple(np.meshgrid(*([axis] * self.dim), indexing="ij"))
        kvec = tuple(np.meshgrid(*([wavenumbers] * self.dim), indexing="ij"))
        k2 = sum(k ** 2 for k in kvec)

        for name, value in (("h", h), ("axis", axis), ("wavenumbers", wavenumbers),
                            ("coords", coords), ("kvec", kvec), ("k2", k2)):
            object.__setattr__(self, name, value)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def points(self) -> int:
        return self.n ** self.dim

    @property
    def cell_volume(self) -> float:
        return self.h ** self.dim

    @property
    def volume(self) -> float:
        return self.L ** self.dim

    @property
    def parseval_weight(self) -> float:
        """Factor turning sum |fft(f)|^2 into the integral of |f|^2."""
        return self.volume / self.points ** 2

    @property
    def mode_index(self) -> np.ndarray:
        """Integer frequencies m in [-n/2, n/2) in FFT order."""
        return np.rint(sp_fft.fftfreq(self.n, d=1.0 / self.n)).astype(np.int64)

    def matches(self, other: "SpectralGrid") -> bool:
        return self.dim == other.dim and self.n == other.n and self.L == other.L

    def radius(self) -> np.ndarray:
        return np.sqrt(sum(x ** 2 for x in self.coords))


@dataclass(frozen=True, eq=False)
class Field:
    """Real or complex samples of a function on a SpectralGrid, row-major."""
    grid: SpectralGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.size != self.grid.points:
            raise ValueError(
                f"field has {values.size} samples, grid expects {self.grid.points}"
            )
        values = values.reshape(self.grid.shape)
        if not np.iscomplexobj(values):
            values = values.astype(np.float64, copy=False)
        else:
            values = values.astype(np.complex128, copy=False)
        object.__setattr__(self, "values", values)

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.values)

    def with_values(self, values: np.ndarray) -> "Field":
        return Field(self.grid, values)

    def __mul__(self, scalar: complex) -> "Field":
        return Field(self.grid, self.values * scalar)

    __rmul__ = __mul__


def make_grid(dim: int, n_per_dim: int, box_length: float) -> SpectralGrid:
    """
    Build a periodic grid.

    Args:
        dim: Space dimension, 1 to 3
        n_per_dim: Even number of points per axis, at least 16
        box_length: Side length L of the box [-L/2, L/2)^N

    Returns:
        SpectralGrid with spacing L/n

    Raises:
        ValueError: odd or too-small n, non-positive L
    """
    return SpectralGrid(dim=int(dim), n=int(n_per_dim), L=float(box_length))


# ===========================================
# Transforms
# ===========================================

def to_spectral(f: Field) -> np.ndarray:
    return sp_fft.fftn(f.values)


def from_spectral(grid: SpectralGrid, coeffs: np.ndarray, real: bool) -> Field:
    values = sp_fft.ifftn(coeffs)
    return Field(grid, values.real if real else values)


def _check_finite(f: Field):
    if not np.all(np.isfinite(f.values)):
        raise ValueError("field contains NaN or Inf")


def _apply_symbol(f: Field, symbol: np.ndarray) -> Field:
    return from_spectral(f.grid, symbol * to_spectral(f), real=not f.is_complex)


def apply_diff(f: Field, op: Literal["laplacian", "bilaplacian"]) -> Field:
    """
    Apply the Laplacian (symbol -|k|^2) or bilaplacian (symbol |k|^4).

    Raises:
        ValueError: unknown operator or non-finite input
    """
    _check_finite(f)
    if op == "laplacian":
        return _apply_symbol(f, -f.grid.k2)
    if op == "bilaplacian":
        return _apply_symbol(f, f.grid.k2 ** 2)
    raise ValueError(f"unknown operator '{op}'")


def _odd_axis_symbol(grid: SpectralGrid, axis: int) -> np.ndarray:
    """i*k along one axis with the Nyquist mode zeroed."""
    nyquist = grid.mode_index == -(grid.n // 2)
    index = [np.newaxis] * grid.dim
    index[axis] = slice(None)
    mask = np.broadcast_to(nyquist[tuple(index)], grid.shape)
    return 1j * np.where(mask, 0.0, grid.kvec[axis])


def spectral_derivative(f: Field, axis: int = 0) -> Field:
    """First derivative along one axis (odd symbol, Nyquist zeroed)."""
    _check_finite(f)
    return _apply_symbol(f, _odd_axis_symbol(f.grid, axis))


def spectral_shift(f: Field, shift: Sequence[float] | float) -> Field:
    """Translate by r: returns f(x - r) by a phase e^{-ik.r}, Nyquist zeroed."""
    shift = np.atleast_1d(np.asarray(shift, dtype=float))
    if shift.size != f.grid.dim:
        raise ValueError("shift must have one component per axis")
    phase = np.exp(-1j * sum(k * r for k, r in zip(f.grid.kvec, shift)))
    coeffs = to_spectral(f) * phase
    nyquist = np.zeros(f.grid.shape, dtype=bool)
    for axis in range(f.grid.dim):
        index = [slice(None)] * f.grid.dim
        index[axis] = f.grid.n // 2
        nyquist[tuple(index)] = True
    coeffs[nyquist] = 0.0
    return from_spectral(f.grid, coeffs, real=not f.is_complex)


def dealias_mask(grid: SpectralGrid) -> np.ndarray:
    """Two-thirds rule: keep |m| <= n/3 on every axis."""
    keep_1d = np.abs(grid.mode_index) <= grid.n // 3
    mask = keep_1d
    for _ in range(grid.dim - 1):
        mask = np.multiply.outer(mask, keep_1d)
    return mask


def dealias(f: Field) -> Field:
    return from_spectral(f.grid, to_spectral(f) * dealias_mask(f.grid), real=not f.is_complex)


# ===========================================
# Quadrature and norms
# ===========================================

def integrate(f: Field) -> float:
    """
    Trapezoid rule h^N * sum on the periodic grid.

    Raises:
        ValueError: complex input (integrate |f|^2 instead)
    """
    if f.is_complex:
        raise ValueError("integrate expects a real field; use |f|^2 for complex fields")
    return float(f.grid.cell_volume * np.sum(f.values))


def l2_norm(f: Field) -> float:
    return float(np.sqrt(f.grid.cell_volume * np.sum(np.abs(f.values) ** 2)))


def inner(f: Field, g: Field) -> float:
    """Real L^2 pairing."""
    return float(f.grid.cell_volume * np.sum(np.real(np.conj(f.values) * g.values)))


def sobolev_products(f: Field) -> SobolevProducts:
    """Squared L^2 norms of f, grad f and Delta f, plus their H^2 sum."""
    _check_finite(f)
    grid = f.grid
    power = np.abs(to_spectral(f)) ** 2
    l2 = float(grid.cell_volume * np.sum(np.abs(f.values) ** 2))
    grad = float(grid.parseval_weight * np.sum(grid.k2 * power))
    lap = float(grid.parseval_weight * np.sum(grid.k2 ** 2 * power))
    return SobolevProducts(l2=l2, grad_l2=grad, lap_l2=lap, h2=l2 + grad + lap)


def h2_norm(f: Field) -> float:
    return float(np.sqrt(sobolev_products(f).h2))


# ===========================================
# Linear operator gamma*Delta^2 - beta*Delta + alpha
# ===========================================

def linear_symbol(params: Params, grid: SpectralGrid, alpha: float | None = None) -> np.ndarray:
    alpha = params.require_alpha() if alpha is None else alpha
    return params.gamma * grid.k2 ** 2 + params.beta * grid.k2 + alpha


def check_symbol(params: Params, grid: SpectralGrid) -> np.ndarray:
    """
    Return the symbol on the grid after checking it is positive everywhere.

    Raises:
        SymbolViolationError: with the offending |k| and symbol value
    """
    symbol = linear_symbol(params, grid)
    worst = np.unravel_index(np.argmin(symbol), symbol.shape)
    if symbol[worst] <= 0:
        raise SymbolViolationError(k=float(np.sqrt(grid.k2[worst])), value=float(symbol[worst]))
    return symbol


def forward_linear(params: Params, f: Field) -> Field:
    return _apply_symbol(f, linear_symbol(params, f.grid))


def invert_linear(params: Params, rhs: Field) -> Field:
    """
    Solve (gamma*Delta^2 - beta*Delta + alpha) u = rhs by division by the symbol.

    Raises:
        SymbolViolationError: the symbol is not positive at some grid wavenumber
    """
    _check_finite(rhs)
    symbol = check_symbol(params, rhs.grid)
    return _apply_symbol(rhs, 1.0 / symbol)


def linear_decay_rate(params: Params, alpha: float | None = None) -> float:
    """
    Smallest |Im k| over the complex roots of gamma k^4 + beta k^2 + alpha = 0.
    This is the exponential rate of the linear tail.
    """
    alpha = params.require_alpha() if alpha is None else alpha
    if alpha <= 0:
        raise ValueError("alpha must be positive for a decaying tail")
    if params.gamma == 0:
        if params.beta <= 0:
            raise ValueError("beta must be positive when gamma = 0")
        return float(np.sqrt(alpha / params.beta))
    roots_k2 = np.roots([params.gamma, params.beta, alpha]).astype(complex)
    roots_k = np.sqrt(roots_k2)
    return float(np.min(np.abs(roots_k.imag)))


# ===========================================
# Alignment
# ===========================================

def peak_position(f: Field) -> np.ndarray:
    """
    Sub-grid location of max |f| by parabolic interpolation through the three
    samples around the discrete maximum on each axis. Ties go to the smallest
    coordinate.
    """
    modulus = np.abs(f.values)
    index = np.unravel_index(int(np.argmax(modulus)), modulus.shape)
    grid = f.grid
    position = np.empty(grid.dim)
    for axis in range(grid.dim):
        left = list(index)
        right = list(index)
        left[axis] = (index[axis] - 1) % grid.n
        right[axis] = (index[axis] + 1) % grid.n
        y_l, y_0, y_r = modulus[tuple(left)], modulus[index], modulus[tuple(right)]
        curvature = y_l - 2 * y_0 + y_r
        offset = 0.5 * (y_l - y_r) / curvature if curvature != 0 else 0.0
        position[axis] = grid.axis[index[axis]] + offset * grid.h
    return position


def align_peak(f: Field) -> Field:
    """Translate f so that its interpolated peak sits at the origin."""
    return spectral_shift(f, -peak_position(f))
