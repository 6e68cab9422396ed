"""
Uniform symmetric grids, the discrete Fourier pair, pointwise algebra and
numerical derivatives.

Conventions: Ft(f)(s) = integral of f(x) e^{isx} dx. Grid index j along an axis
maps to (j - N/2) * spacing, so s=0 sits at index N/2 and the first row
(-N/2 * spacing) is its own mirror under the periodicity of the transform.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from utils.config import DEFAULTS

logger = logging.getLogger(__name__)

HERMITIAN_RTOL = 1e-12


@dataclass(frozen=True)
class _UniformGrid:
    dim: int
    points_per_dim: int
    spacing: float

    @property
    def shape(self):
        return (self.points_per_dim,) * self.dim

    @property
    def size(self):
        return self.points_per_dim ** self.dim

    @property
    def origin_index(self):
        return (self.points_per_dim // 2,) * self.dim

    @property
    def extent(self):
        """Largest absolute coordinate reached on the negative side."""
        return self.points_per_dim / 2 * self.spacing

    @property
    def cell(self):
        """Volume of one grid cell."""
        return self.spacing ** self.dim

    def axis(self):
        """
        Coordinates along one axis.

        Returns:
            numpy.ndarray: (j - N/2) * spacing for j = 0..N-1
        """
        n = self.points_per_dim
        return (np.arange(n) - n // 2) * self.spacing

    def coords(self):
        """
        Coordinate arrays for every axis.

        Returns:
            list: d arrays of the grid shape (ij indexing)
        """
        ax = self.axis()
        return list(np.meshgrid(*([ax] * self.dim), indexing="ij"))

    def radius(self):
        """Euclidean norm of every grid point."""
        return np.sqrt(sum(c ** 2 for c in self.coords()))

    def same_as(self, other):
        return (type(self) is type(other) and self.dim == other.dim
                and self.points_per_dim == other.points_per_dim
                and self.spacing == other.spacing)


@dataclass(frozen=True)
class FreqGrid(_UniformGrid):
    """Frequency grid with spacing ds; s_max = N/2 * ds."""

    @property
    def s_max(self):
        return self.extent


@dataclass(frozen=True)
class SpaceGrid(_UniformGrid):
    """Spatial grid paired with a FreqGrid through dx * ds * N = 2 pi."""

    @property
    def x_max(self):
        return self.extent


def make_grids(d, N, s_max, max_points=None):
    """
    Build a compatible frequency/space grid pair.

    Args:
        d (int): Dimension, 1 to 3
        N (int): Points per dimension, even and at least 8
        s_max (float): Frequency extent, N/2 * ds
        max_points (int, optional): Cap on N**d. Default from utils.config

    Returns:
        tuple: (FreqGrid, SpaceGrid)
    """
    if max_points is None:
        max_points = DEFAULTS["max_points"]
    if int(d) != d or not 1 <= d <= 3:
        raise ValueError(f"Grid dimension must be 1, 2 or 3, got {d}")
    if int(N) != N or N % 2 != 0:
        raise ValueError(f"Points per dimension must be even, got {N}")
    if N < 8:
        raise ValueError(f"Points per dimension must be at least 8, got {N}")
    if not np.isfinite(s_max) or s_max <= 0:
        raise ValueError(f"s_max must be positive, got {s_max}")
    d, N = int(d), int(N)
    if N ** d > max_points:
        raise ValueError(f"Grid of {N}^{d} points exceeds the cap of {max_points}")
    ds = 2.0 * s_max / N
    dx = 2.0 * np.pi / (N * ds)
    logger.debug("grid d=%d N=%d ds=%.6g dx=%.6g", d, N, ds, dx)
    return FreqGrid(d, N, ds), SpaceGrid(d, N, dx)


def dual_grid(grid):
    """
    The transform partner of a grid.

    Args:
        grid (FreqGrid or SpaceGrid): Either grid

    Returns:
        SpaceGrid or FreqGrid: The other grid of the pair
    """
    partner = 2.0 * np.pi / (grid.points_per_dim * grid.spacing)
    cls = SpaceGrid if isinstance(grid, FreqGrid) else FreqGrid
    return cls(grid.dim, grid.points_per_dim, partner)


def grid_points(grid):
    """
    All grid points as rows.

    Args:
        grid (FreqGrid or SpaceGrid): Grid

    Returns:
        numpy.ndarray: size x d coordinates in C order
    """
    return np.stack([c.reshape(-1) for c in grid.coords()], axis=1)


def axis_values(grid, k):
    """
    Coordinate k of every grid point.

    Args:
        grid (FreqGrid or SpaceGrid): Grid
        k (int): Axis, 0-based

    Returns:
        numpy.ndarray: Array of the grid shape
    """
    if not 0 <= k < grid.dim:
        raise ValueError(f"Axis {k} out of range for dimension {grid.dim}")
    return grid.coords()[k]


def mirror(f):
    """The function s -> f(-s) of a GridFn."""
    return f.mirror()


def mirror_values(values):
    """
    Values at the reflected grid point, a(-s), with periodic wrap of the first row.

    Args:
        values (numpy.ndarray): Array on a grid

    Returns:
        numpy.ndarray: Reflected array
    """
    out = values
    for axis in range(values.ndim):
        out = np.roll(np.flip(out, axis=axis), 1, axis=axis)
    return out


def hermitian_defect(values):
    """
    max |a(-s) - conj(a(s))| over grid points whose mirror is on the grid.

    Args:
        values (numpy.ndarray): Array on a grid

    Returns:
        float: Largest defect; 0 for an empty array
    """
    inner = tuple(slice(1, None) for _ in range(values.ndim))
    diff = mirror_values(values)[inner] - np.conj(values[inner])
    if diff.size == 0:
        return 0.0
    return float(np.max(np.abs(diff)))


def is_hermitian(values, rtol=HERMITIAN_RTOL):
    """
    Whether an array satisfies a(-s) = conj(a(s)) up to rtol * max|a|.

    Args:
        values (numpy.ndarray): Array on a grid
        rtol (float): Relative tolerance

    Returns:
        bool: True when the array is hermitian
    """
    values = np.asarray(values)
    if not np.all(np.isfinite(values)):
        return False
    scale = float(np.max(np.abs(values))) if values.size else 0.0
    return hermitian_defect(values) <= rtol * scale


@dataclass(frozen=True)
class GridFn:
    """
    Complex function sampled on a FreqGrid or SpaceGrid.

    The value array is copied and frozen at construction. ``hermitian`` is a
    claim f(-s) = conj(f(s)) that is checked against the values.
    """

    grid: _UniformGrid
    values: np.ndarray = field(repr=False)
    hermitian: bool = False

    def __post_init__(self):
        values = np.array(self.values, dtype=complex)
        if values.size != self.grid.size:
            raise ValueError(
                f"GridFn needs {self.grid.size} values, got {values.size}")
        values = values.reshape(self.grid.shape)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.hermitian and not is_hermitian(values):
            raise ValueError(
                f"Values are not hermitian (defect {hermitian_defect(values):.3g})")

    @classmethod
    def auto(cls, grid, values):
        """Build a GridFn whose hermitian flag is read off the values."""
        return cls(grid, values, is_hermitian(np.asarray(values, dtype=complex)
                                              .reshape(grid.shape)))

    @classmethod
    def constant(cls, grid, value):
        return cls(grid, np.full(grid.shape, value, dtype=complex),
                   bool(np.imag(value) == 0))

    @property
    def origin_value(self):
        return complex(self.values[self.grid.origin_index])

    def mirror(self):
        """The function s -> f(-s)."""
        return GridFn(self.grid, mirror_values(self.values), self.hermitian)

    def conj(self):
        return GridFn(self.grid, np.conj(self.values), self.hermitian)

    def real(self):
        """Real part as a non-hermitian-claimed GridFn."""
        return GridFn(self.grid, self.values.real.astype(complex))

    def with_values(self, values, hermitian=None):
        """A new GridFn on the same grid; hermitian flag read off when not given."""
        if hermitian is None:
            return GridFn.auto(self.grid, values)
        return GridFn(self.grid, values, hermitian)

    def norm_sup(self, mask=None):
        v = np.abs(self.values if mask is None else self.values[mask])
        return float(np.max(v)) if v.size else 0.0


def forward_transform(f):
    """
    Quadrature-scaled transform Ft(f)(s_j) = dx^d sum_m f(x_m) e^{i s_j x_m}.

    Args:
        f (GridFn): Function on a SpaceGrid

    Returns:
        GridFn: Transform on the paired FreqGrid
    """
    if not isinstance(f.grid, SpaceGrid):
        raise ValueError("forward_transform expects a function on a SpaceGrid")
    grid = f.grid
    raw = np.fft.fftshift(np.fft.ifftn(np.fft.ifftshift(f.values)))
    values = raw * (grid.size * grid.cell)
    hermitian = bool(np.all(np.imag(f.values) == 0))
    if hermitian:
        values = _hermitian_project(values)
    return GridFn(dual_grid(grid), values, hermitian)


def inverse_transform(phi):
    """
    Inverse of forward_transform: f(x_m) = (ds / 2 pi)^d sum_j phi(s_j) e^{-i s_j x_m}.

    Args:
        phi (GridFn): Function on a FreqGrid

    Returns:
        GridFn: Function on the paired SpaceGrid
    """
    if not isinstance(phi.grid, FreqGrid):
        raise ValueError("inverse_transform expects a function on a FreqGrid")
    grid = phi.grid
    raw = np.fft.fftshift(np.fft.fftn(np.fft.ifftshift(phi.values)))
    values = raw * (grid.spacing / (2.0 * np.pi)) ** grid.dim
    return GridFn(dual_grid(grid), values)


def _hermitian_project(values):
    # Exact hermitian symmetry after the FFT.
    return 0.5 * (values + np.conj(mirror_values(values)))


def pointwise(op, a, b=None):
    """
    Elementwise algebra on grid functions.

    Args:
        op (str): One of 'mul', 'div_unchecked', 'add', 'sub', 'scale'
        a (GridFn): Left operand
        b (GridFn or complex): Right operand; a scalar for 'scale'

    Returns:
        GridFn: Elementwise result. 'div_unchecked' leaves inf/nan where b = 0
    """
    if op == "scale":
        c = complex(b)
        return GridFn(a.grid, a.values * c, a.hermitian and c.imag == 0)
    if not isinstance(b, GridFn) or not a.grid.same_as(b.grid):
        raise ValueError(f"pointwise '{op}' needs two functions on the same grid")
    both = a.hermitian and b.hermitian
    if op == "mul":
        return GridFn(a.grid, a.values * b.values, both)
    if op == "add":
        return GridFn(a.grid, a.values + b.values, both)
    if op == "sub":
        return GridFn(a.grid, a.values - b.values, both)
    if op == "div_unchecked":
        with np.errstate(divide="ignore", invalid="ignore"):
            values = a.values / b.values
        return GridFn(a.grid, values, both and bool(np.all(np.isfinite(values))))
    raise ValueError(f"Unknown pointwise op '{op}'")


def grid_derivative(f, k):
    """
    Partial derivative along axis k by central differences, one-sided at the edges.

    Args:
        f (GridFn): Function on any grid
        k (int): Axis, 0-based

    Returns:
        GridFn: Derivative (not hermitian-claimed)
    """
    if not 0 <= k < f.grid.dim:
        raise ValueError(f"Axis {k} out of range for dimension {f.grid.dim}")
    if f.grid.points_per_dim < 4:
        raise ValueError("grid_derivative needs at least 4 points per axis")
    values = np.gradient(f.values, f.grid.spacing, axis=k, edge_order=2)
    return GridFn(f.grid, values)


def spatial_taper(grid, lo, hi, width):
    """
    Smooth window 0.5 * (erf((x - lo) / w) - erf((x - hi) / w)) per axis.

    Args:
        grid (SpaceGrid): Spatial grid
        lo (float): Lower edge
        hi (float): Upper edge
        width (float): Transition width, > 0

    Returns:
        GridFn: Real window close to 1 inside [lo, hi]^d
    """
    if width <= 0 or hi <= lo:
        raise ValueError(f"Bad taper lo={lo} hi={hi} width={width}")
    window = np.ones(grid.shape)
    for c in grid.coords():
        window = window * 0.5 * (erf((c - lo) / width) - erf((c - hi) / width))
    return GridFn(grid, window)


def parseval_sides(f):
    """
    Both sides of Parseval's identity for a spatial function.

    Args:
        f (GridFn): Function on a SpaceGrid

    Returns:
        tuple: (dx^d sum |f|^2, (ds/2pi)^d sum |Ft f|^2)
    """
    phi = forward_transform(f)
    left = f.grid.cell * float(np.sum(np.abs(f.values) ** 2))
    right = (phi.grid.spacing / (2 * np.pi)) ** phi.grid.dim * float(np.sum(np.abs(phi.values) ** 2))
    return left, right
