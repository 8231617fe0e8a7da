"""Fourier-multiplier engine on a periodic grid.

Fields are stored as arrays of shape ``(n, rows, cols)``: one small matrix per
grid point. Scalars are ``(n, 1, 1)`` and vectors ``(n, m, 1)``. Every
multiplier acts entrywise along the grid axis.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class NonFiniteFieldError(ValueError):
    """Raised when a field contains NaN or inf samples."""


class GridMismatchError(ValueError):
    """Raised when fields sampled on different grids are combined."""


class ShapeMismatchError(ValueError):
    """Raised when field shapes do not compose."""


@dataclass(frozen=True)
class Grid1D:
    """Uniform periodic grid with ``n`` points on a torus of length ``length``."""

    n: int
    length: float = 2.0 * np.pi

    def __post_init__(self):
        n = int(self.n)
        if n != self.n or n < 8 or n & (n - 1):
            raise ValueError(f"grid size must be a power of two >= 8, got {self.n}")
        if not (np.isfinite(self.length) and self.length > 0):
            raise ValueError(f"grid length must be positive, got {self.length}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "length", float(self.length))

    @property
    def spacing(self) -> float:
        return self.length / self.n

    @property
    def points(self) -> np.ndarray:
        return np.arange(self.n) * self.spacing

    @property
    def modes(self) -> np.ndarray:
        """Integer frequencies k in [-n/2, n/2) in FFT order."""
        return np.fft.fftfreq(self.n, d=1.0 / self.n).astype(int)

    @property
    def frequencies(self) -> np.ndarray:
        """Angular frequencies 2*pi*k/L in FFT order."""
        return 2.0 * np.pi * self.modes / self.length

    @property
    def half_frequencies(self) -> np.ndarray:
        """Non-negative angular frequencies matching ``np.fft.rfft`` output."""
        return 2.0 * np.pi * np.arange(self.n // 2 + 1) / self.length


@dataclass(frozen=True, eq=False)
class Field:
    """Real scalar, vector or matrix valued samples on a ``Grid1D``."""

    grid: Grid1D
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 1:
            data = data[:, None, None]
        elif data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or data.shape[0] != self.grid.n:
            raise ShapeMismatchError(
                f"field data must have shape (n, rows, cols) with n={self.grid.n}, got {data.shape}"
            )
        object.__setattr__(self, "data", data)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[1], self.data.shape[2]

    @property
    def is_scalar(self) -> bool:
        return self.shape == (1, 1)

    @property
    def T(self) -> "Field":
        """Pointwise transpose."""
        return Field(self.grid, np.swapaxes(self.data, 1, 2))

    def scalar_values(self) -> np.ndarray:
        if not self.is_scalar:
            raise ShapeMismatchError(f"expected a scalar field, got shape {self.shape}")
        return self.data[:, 0, 0]

    def magnitude(self) -> np.ndarray:
        """Pointwise Euclidean (Frobenius) magnitude."""
        return np.sqrt(np.sum(self.data**2, axis=(1, 2)))

    def mean(self) -> np.ndarray:
        return self.data.mean(axis=0)

    def check_finite(self) -> "Field":
        if not np.all(np.isfinite(self.data)):
            raise NonFiniteFieldError("field contains non-finite samples")
        return self

    def _other(self, other):
        if isinstance(other, Field):
            same_grid(self, other)
            return other.data
        return other

    def __add__(self, other):
        return Field(self.grid, self.data + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Field(self.grid, self.data - self._other(other))

    def __rsub__(self, other):
        return Field(self.grid, self._other(other) - self.data)

    def __mul__(self, c):
        if isinstance(c, Field):
            raise TypeError("use product() for field-field multiplication")
        return Field(self.grid, self.data * c)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return Field(self.grid, self.data / c)

    def __neg__(self):
        return Field(self.grid, -self.data)


def scalar_field(grid: Grid1D, values) -> Field:
    return Field(grid, np.asarray(values, dtype=float).reshape(grid.n, 1, 1))


def vector_field(grid: Grid1D, *components) -> Field:
    """Stack scalar sample arrays into an ``(m, 1)`` field."""
    return Field(grid, np.stack([np.asarray(c, dtype=float) for c in components], axis=1)[:, :, None])


def constant_field(grid: Grid1D, value) -> Field:
    value = np.atleast_2d(np.asarray(value, dtype=float))
    return Field(grid, np.broadcast_to(value, (grid.n,) + value.shape).copy())


def identity_field(grid: Grid1D, m: int) -> Field:
    return constant_field(grid, np.eye(m))


def same_grid(*fields: Field) -> Grid1D:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridMismatchError(f"fields live on different grids: {grid} vs {f.grid}")
    return grid


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Complex Fourier coefficients indexed by integer mode in FFT order."""

    grid: Grid1D
    coefficients: np.ndarray

    @property
    def modes(self) -> np.ndarray:
        return self.grid.modes


def to_spectrum(f: Field) -> Spectrum:
    return Spectrum(f.grid, np.fft.fft(f.data, axis=0))


def from_spectrum(spec: Spectrum) -> Field:
    """Inverse transform; the imaginary residue is discarded."""
    return Field(spec.grid, np.fft.ifft(spec.coefficients, axis=0).real)


# symbols on the rfft half-spectrum (xi >= 0)

def _power_symbol(grid: Grid1D, alpha: float) -> np.ndarray:
    xi = grid.half_frequencies
    sym = np.zeros_like(xi)
    sym[1:] = xi[1:] ** alpha
    return sym


def _odd_symbol(grid: Grid1D, values: np.ndarray) -> np.ndarray:
    sym = 1j * values.astype(complex)
    sym[0] = 0.0
    sym[-1] = 0.0  # Nyquist mode: keeps real input real
    return sym


def apply_symbol(f: Field, symbol: np.ndarray) -> Field:
    """Multiply the half-spectrum of ``f`` by ``symbol`` (length n//2+1)."""
    f.check_finite()
    n = f.grid.n
    spec = np.fft.rfft(f.data, axis=0)
    spec *= symbol[:, None, None]
    return Field(f.grid, np.fft.irfft(spec, n=n, axis=0))


def power_multiplier(f: Field, alpha: float) -> Field:
    """Homogeneous multiplier |xi|^alpha with the zero mode annihilated."""
    return apply_symbol(f, _power_symbol(f.grid, alpha))


def fractional_laplacian(f: Field, s: float) -> Field:
    """Apply the multiplier |xi|^(2s), s in (0, 1]."""
    if not 0 < s <= 1:
        raise ValueError(f"order s must lie in (0, 1], got {s}")
    return power_multiplier(f, 2.0 * s)


def inverse_fractional_laplacian(f: Field, s: float) -> Field:
    """Apply |xi|^(-2s) on nonzero modes; the mean is removed."""
    if not 0 < s <= 1:
        raise ValueError(f"order s must lie in (0, 1], got {s}")
    return power_multiplier(f, -2.0 * s)


def riesz_transform(f: Field) -> Field:
    """Multiplier i*sign(xi)."""
    grid = f.grid
    return apply_symbol(f, _odd_symbol(grid, np.ones(grid.n // 2 + 1)))


def spectral_derivative(f: Field) -> Field:
    """Multiplier i*xi."""
    grid = f.grid
    return apply_symbol(f, _odd_symbol(grid, grid.half_frequencies))


def quarter_laplacian(f: Field) -> Field:
    """Shorthand for the |xi|^(1/2) multiplier used throughout."""
    return power_multiplier(f, 0.5)


def half_laplacian(f: Field) -> Field:
    return power_multiplier(f, 1.0)


def inverse_quarter_laplacian(f: Field) -> Field:
    return power_multiplier(f, -0.5)


def remove_mean(f: Field) -> Field:
    return Field(f.grid, f.data - f.data.mean(axis=0))


# de-aliased products

def _upsample(data: np.ndarray, factor: int = 2) -> np.ndarray:
    """Trigonometric interpolation of real samples onto a grid ``factor`` times finer."""
    n = data.shape[0]
    spec = np.fft.rfft(data, axis=0)
    big = np.zeros((factor * n // 2 + 1,) + data.shape[1:], dtype=complex)
    big[: n // 2] = spec[: n // 2]
    big[n // 2] = 0.5 * spec[n // 2]  # split the Nyquist mode symmetrically
    return np.fft.irfft(big, n=factor * n, axis=0) * factor


def _downsample(data: np.ndarray, n: int) -> np.ndarray:
    """Truncate the spectrum of fine-grid samples to the n-point grid."""
    big_n = data.shape[0]
    spec = np.fft.rfft(data, axis=0)
    small = np.empty((n // 2 + 1,) + data.shape[1:], dtype=complex)
    small[: n // 2] = spec[: n // 2]
    small[n // 2] = 2.0 * spec[n // 2].real  # +-n/2 fold onto one cosine mode
    return np.fft.irfft(small, n=n, axis=0) * (n / big_n)


def product(a: Field, b: Field, dealias: bool = True) -> Field:
    """Pointwise matrix product ``a(x) @ b(x)``; scalar fields broadcast.

    With ``dealias`` the factors are interpolated to a 2x finer grid, multiplied
    there and the result truncated back, so no aliasing enters for inputs whose
    band limit is below n/4.
    """
    grid = same_grid(a, b)
    a.check_finite()
    b.check_finite()
    if not (a.is_scalar or b.is_scalar) and a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"cannot multiply shapes {a.shape} and {b.shape}")
    if dealias:
        x, y = _upsample(a.data), _upsample(b.data)
    else:
        x, y = a.data, b.data
    if a.is_scalar or b.is_scalar:
        z = x * y
    else:
        z = np.einsum("nik,nkj->nij", x, y)
    if dealias:
        z = _downsample(z, grid.n)
    return Field(grid, z)


def products(*fields: Field, dealias: bool = True) -> Field:
    """Left-to-right chain of ``product``."""
    out = fields[0]
    for f in fields[1:]:
        out = product(out, f, dealias=dealias)
    return out


def band_limited_field(grid: Grid1D, shape, band: int, rng: np.random.Generator,
                       amplitude: float = 1.0, mean_free: bool = True) -> Field:
    """Random real field with Gaussian modes 1..band (and mode 0 unless mean_free)."""
    rows, cols = shape
    n = grid.n
    if not 1 <= band < n // 2:
        raise ValueError(f"band must be in [1, n/2), got {band}")
    spec = np.zeros((n // 2 + 1, rows, cols), dtype=complex)
    spec[1 : band + 1] = rng.standard_normal((band, rows, cols)) + 1j * rng.standard_normal((band, rows, cols))
    if not mean_free:
        spec[0] = rng.standard_normal((rows, cols))
    data = np.fft.irfft(spec, n=n, axis=0) * n / np.sqrt(2 * band)
    return Field(grid, amplitude * data)


# field files

def write_field(path, field: Field, data_name: str | None = None) -> Path:
    """Write a JSON manifest plus raw little-endian float64 samples next to it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data_name = data_name or path.name + ".bin"
    rows, cols = field.shape
    manifest = {
        "grid": {"n": field.grid.n, "length": field.grid.length},
        "shape": [rows, cols],
        "dtype": "f64-le",
        "data": data_name,
    }
    (path.parent / data_name).write_bytes(np.ascontiguousarray(field.data, dtype="<f8").tobytes())
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def read_field(path) -> Field:
    path = Path(path)
    manifest = json.loads(path.read_text())
    if manifest.get("dtype") != "f64-le":
        raise ValueError(f"unsupported dtype {manifest.get('dtype')!r}")
    grid = Grid1D(int(manifest["grid"]["n"]), float(manifest["grid"]["length"]))
    rows, cols = (int(v) for v in manifest["shape"])
    raw = np.frombuffer((path.parent / manifest["data"]).read_bytes(), dtype="<f8")
    if raw.size != grid.n * rows * cols:
        raise ValueError(
            f"data file holds {raw.size} values, manifest expects {grid.n * rows * cols}"
        )
    return Field(grid, raw.reshape(grid.n, rows, cols).astype(float)).check_finite()

