"""
Empirical characteristic functions and the other frequency-domain moment
functions that the convolution equations take as known inputs.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.stats import norm

from grid import GridFn, FreqGrid, SpaceGrid, pointwise, forward_transform, spatial_taper

logger = logging.getLogger(__name__)

# Bounds the (samples x grid points) phase block evaluated at once.
CHUNK_ELEMENTS = 2 ** 22


@dataclass(frozen=True)
class Sample:
    """
    Observed columns. ``z`` is always present; the others depend on the model.

    Attributes:
        z (numpy.ndarray): n x d primary observable
        x (numpy.ndarray): n x d second measurement
        y (numpy.ndarray): n responses
        y2 (numpy.ndarray): n values of the extra observation used by ar1

    For the factor model ``z`` holds the n x m indicators before reduction.
    """

    z: np.ndarray
    x: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None
    y2: Optional[np.ndarray] = None

    def __post_init__(self):
        z = _as_columns(self.z, "z")
        n = z.shape[0]
        if n < 2:
            raise ValueError(f"A sample needs at least 2 observations, got {n}")
        object.__setattr__(self, "z", z)
        if self.x is not None:
            x = _as_columns(self.x, "x")
            if x.shape != z.shape:
                raise ValueError(f"x has shape {x.shape}, z has {z.shape}")
            object.__setattr__(self, "x", x)
        for name in ("y", "y2"):
            col = getattr(self, name)
            if col is not None:
                col = np.asarray(col, dtype=float).reshape(-1)
                if col.shape[0] != n:
                    raise ValueError(f"{name} has {col.shape[0]} rows, z has {n}")
                if not np.all(np.isfinite(col)):
                    raise ValueError(f"{name} contains non-finite values")
                col.setflags(write=False)
                object.__setattr__(self, name, col)

    @property
    def n(self):
        return self.z.shape[0]

    @property
    def d(self):
        return self.z.shape[1]


def _as_columns(values, name):
    arr = np.array(values, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a vector or an n x d array")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class MomentFns:
    """
    Known functions of the convolution equations on one frequency grid.

    ``n`` is None for exact (oracle) inputs. Derivative lists hold one GridFn
    per axis.
    """

    phi_z: GridFn
    eps: Optional[GridFn] = None
    eps_k: Optional[List[GridFn]] = None
    dphi_z_k: Optional[List[GridFn]] = None
    phi_x: Optional[GridFn] = None
    phi_zx: Optional[GridFn] = None
    deps_k: Optional[List[GridFn]] = None
    dphi_diff_k: Optional[List[GridFn]] = None
    eps_diff_k: Optional[List[GridFn]] = None
    ft_wx: Optional[GridFn] = None
    ft_wy: Optional[GridFn] = None
    ft_zf: Optional[GridFn] = None
    w_grid: Optional[GridFn] = None
    w_flags: Optional[np.ndarray] = field(default=None, repr=False)
    mean_y: Optional[float] = None
    n: Optional[int] = None

    @property
    def grid(self):
        return self.phi_z.grid

    @property
    def exact(self):
        return self.n is None

    @property
    def sigma_ecf(self):
        """Uniform ECF fluctuation scale; 0 for exact inputs."""
        if self.n is None:
            return 0.0
        return sigma_ecf(self.n, self.grid)


def sigma_ecf(n, grid):
    """
    n^{-1/2} * sqrt(2 log P) with P the number of grid points.

    Args:
        n (int): Sample size
        grid (FreqGrid): Frequency grid

    Returns:
        float: Noise scale
    """
    return float(np.sqrt(2.0 * np.log(grid.size)) / np.sqrt(n))


def _phase_sum(weights, z, grid):
    z = _as_columns(z, "z")
    if z.shape[1] != grid.dim:
        raise ValueError(f"Sample dimension {z.shape[1]} does not match grid dimension {grid.dim}")
    coords = [c.reshape(-1) for c in grid.coords()]
    total = np.zeros(grid.size, dtype=complex)
    step = max(1, CHUNK_ELEMENTS // grid.size)
    for start in range(0, z.shape[0], step):
        block = z[start:start + step]
        phase = block[:, 0, None] * coords[0][None, :]
        for k in range(1, grid.dim):
            phase = phase + block[:, k, None] * coords[k][None, :]
        terms = np.exp(1j * phase)
        if weights is not None:
            terms = terms * weights[start:start + step, None]
        total += np.sum(terms, axis=0)
    return total.reshape(grid.shape)


def ecf(sample_col, grid):
    """
    Empirical characteristic function n^{-1} sum_j e^{i s.z_j}.

    Args:
        sample_col (numpy.ndarray): n x d draws (a vector when d = 1)
        grid (FreqGrid): Frequency grid

    Returns:
        GridFn: Hermitian ECF with value exactly 1 at s = 0
    """
    z = _as_columns(sample_col, "sample")
    n = z.shape[0]
    if n < 2:
        raise ValueError(f"ecf needs at least 2 observations, got {n}")
    values = _phase_sum(None, z, grid) / n
    return GridFn(grid, values, True)


def weighted_ecf(weights, z, grid):
    """
    Joint moment function n^{-1} sum_j c_j e^{i s.z_j}.

    Args:
        weights (numpy.ndarray): n real weights c_j
        z (numpy.ndarray): n x d draws
        grid (FreqGrid): Frequency grid

    Returns:
        GridFn: Hermitian weighted ECF
    """
    weights = np.asarray(weights, dtype=float).reshape(-1)
    z = _as_columns(z, "z")
    if weights.shape[0] != z.shape[0]:
        raise ValueError(f"{weights.shape[0]} weights for {z.shape[0]} observations")
    if not np.all(np.isfinite(weights)):
        raise ValueError("weights contain non-finite values")
    values = _phase_sum(weights, z, grid) / z.shape[0]
    return GridFn(grid, values, True)


def epsilon_k(sample, k, grid, sign=1):
    """
    eps_k = sign * i * Ft(w_k), w_k = E(x_k f_z(z) | z).

    With sign = +1 the identity eps_k = (phi_x*)'_k phi_u holds under Ft(f) =
    integral f e^{isx}.

    Args:
        sample (Sample): Needs the x column
        k (int): Axis, 0-based
        grid (FreqGrid): Frequency grid
        sign (int): +1 or -1

    Returns:
        GridFn: eps_k (anti-hermitian for real data)
    """
    if sample.x is None:
        raise ValueError("epsilon_k needs the second measurement x")
    if sign not in (1, -1):
        raise ValueError(f"sign must be +1 or -1, got {sign}")
    return pointwise("scale", weighted_ecf(sample.x[:, k], sample.z, grid), sign * 1j)


def ecf_derivative(sample, k, grid):
    """
    Exact derivative of the ECF of z along axis k: i n^{-1} sum_j z_jk e^{i s.z_j}.

    Args:
        sample (Sample): Sample with z
        k (int): Axis, 0-based
        grid (FreqGrid): Frequency grid

    Returns:
        GridFn: (phi_z)'_k
    """
    return pointwise("scale", weighted_ecf(sample.z[:, k], sample.z, grid), 1j)


def silverman_bandwidth(z):
    """
    Rule-of-thumb bandwidth 0.9 * min(sd, IQR / 1.34) * n^{-1/5}, per dimension
    scaled by n^{-1/(d+4)} and averaged over axes.

    Args:
        z (numpy.ndarray): n x d draws

    Returns:
        float: Bandwidth
    """
    z = _as_columns(z, "z")
    n, d = z.shape
    spreads = []
    for k in range(d):
        sd = np.std(z[:, k], ddof=1)
        q1, q3 = np.quantile(z[:, k], [0.25, 0.75])
        spread = min(sd, (q3 - q1) / 1.34) if q3 > q1 else sd
        spreads.append(spread)
    h = 0.9 * float(np.mean(spreads)) * n ** (-1.0 / (d + 4))
    if not h > 0:
        raise ValueError("Cannot choose a bandwidth for a sample without spread")
    return h


def conditional_mean_on_grid(sample, space_grid, bandwidth, response=None, density_floor=1e-3):
    """
    Nadaraya-Watson estimate of E(response | z) at the nodes of a spatial grid.

    Args:
        sample (Sample): Sample with z (d = 1 or 2) and y
        space_grid (SpaceGrid): Evaluation nodes
        bandwidth (float): Gaussian kernel bandwidth, > 0
        response (numpy.ndarray, optional): Values to regress; default sample.y
        density_floor (float): Nodes whose kernel density falls below this
            fraction of the largest one are flagged

    Returns:
        tuple: (GridFn of the estimate, boolean flag array of low-density nodes)
    """
    if not isinstance(space_grid, SpaceGrid):
        raise ValueError("conditional_mean_on_grid evaluates on a SpaceGrid")
    if bandwidth is None or not bandwidth > 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    if sample.d > 2:
        raise ValueError("kernel regression is supported for d = 1 or 2")
    if response is None:
        if sample.y is None:
            raise ValueError("conditional_mean_on_grid needs a response column")
        response = sample.y
    response = np.asarray(response, dtype=float).reshape(-1)
    if response.shape[0] != sample.n:
        raise ValueError(f"{response.shape[0]} responses for {sample.n} observations")

    nodes = np.stack([c.reshape(-1) for c in space_grid.coords()], axis=1)
    num = np.zeros(nodes.shape[0])
    den = np.zeros(nodes.shape[0])
    step = max(1, CHUNK_ELEMENTS // max(1, sample.n))
    for start in range(0, nodes.shape[0], step):
        block = nodes[start:start + step]
        kern = np.ones((block.shape[0], sample.n))
        for k in range(sample.d):
            kern = kern * norm.pdf((block[:, k, None] - sample.z[None, :, k]) / bandwidth)
        den[start:start + step] = kern.sum(axis=1)
        num[start:start + step] = kern @ response
    density = den / (sample.n * bandwidth ** sample.d)
    flags = density < density_floor * density.max()
    if not density.max() > 0 or np.all(flags):
        raise ValueError("Every grid node has negligible sample density")
    values = np.zeros_like(num)
    ok = den > 0
    values[ok] = num[ok] / den[ok]
    logger.debug("kernel regression h=%.4g, %d of %d nodes flagged",
                 bandwidth, int(flags.sum()), flags.size)
    return GridFn(space_grid, values.reshape(space_grid.shape)), flags.reshape(space_grid.shape)


def regression_transform(w_grid, flags, taper_fraction=0.5):
    """
    Ft of a conditional mean known on a spatial grid.

    The function is zeroed at flagged nodes and windowed by a smooth taper on
    [-f x_max, f x_max] so that polynomially growing regressions have a
    finite transform on the periodic grid.

    Args:
        w_grid (GridFn): Conditional mean on a SpaceGrid
        flags (numpy.ndarray): Low-density nodes, or None
        taper_fraction (float): Window half-width as a fraction of x_max

    Returns:
        GridFn: Transform on the FreqGrid
    """
    space = w_grid.grid
    half = taper_fraction * space.x_max
    window = spatial_taper(space, -half, half, 2 * half / 16)
    values = w_grid.values * window.values
    if flags is not None:
        values = np.where(flags, 0.0, values)
    return forward_transform(GridFn(space, values.real))


def sample_moments(sample, grid, model, sign=1, bandwidth=None, space_grid=None):
    """
    Build the known functions a model's equations need from a sample.

    Args:
        sample (Sample): Observations
        grid (FreqGrid): Frequency grid
        model (str): Model id ('1' .. '7', '4a', 'ar1', 'factor')
        sign (int): Sign convention of eps_k
        bandwidth (float, optional): Kernel bandwidth for models 6 and 7
        space_grid (SpaceGrid, optional): Spatial grid for models 6 and 7

    Returns:
        MomentFns: Known functions with n set
    """
    d = sample.d
    phi_z = ecf(sample.z, grid)
    kw = {"n": sample.n}

    if model in ("3", "4", "factor", "ar1"):
        kw["dphi_z_k"] = [ecf_derivative(sample, k, grid) for k in range(d)]
        kw["eps_k"] = [epsilon_k(sample, k, grid, sign) for k in range(d)]
    if model in ("4", "4a", "6"):
        if sample.x is None:
            raise ValueError(f"model {model} needs the x column")
        kw["phi_x"] = ecf(sample.x, grid)
    if model == "4a":
        diff = sample.x - sample.z
        phi_d = ecf(diff, grid)
        kw["phi_zx"] = ecf(sample.z - sample.x, grid)
        kw["dphi_diff_k"] = [pointwise("scale", weighted_ecf(diff[:, k], diff, grid), 1j)
                             for k in range(d)]
        kw["eps_diff_k"] = []
        for k in range(d):
            raw = weighted_ecf(sample.x[:, k], diff, grid)
            centred = pointwise("sub", raw, pointwise("scale", phi_d, float(np.mean(sample.x[:, k]))))
            kw["eps_diff_k"].append(pointwise("scale", centred, sign * 1j))
    if model == "ar1":
        if sample.x is None or sample.y2 is None:
            raise ValueError("model ar1 needs the x and y2 columns")
        kw["ft_wx"] = weighted_ecf(sample.x[:, 0], sample.z, grid)
        kw["ft_wy"] = weighted_ecf(sample.y2, sample.z, grid)
        kw["ft_zf"] = weighted_ecf(sample.z[:, 0], sample.z, grid)
    if model == "5":
        if sample.x is None or sample.y is None:
            raise ValueError("model 5 needs the x and y columns")
        kw["eps"] = weighted_ecf(sample.y, sample.z, grid)
        kw["eps_k"] = [pointwise("scale", weighted_ecf(sample.x[:, k] * sample.y, sample.z, grid),
                                 sign * 1j) for k in range(d)]
        kw["deps_k"] = [pointwise("scale", weighted_ecf(sample.z[:, k] * sample.y, sample.z, grid), 1j)
                        for k in range(d)]
        kw["mean_y"] = float(np.mean(sample.y))
    if model in ("6", "7"):
        if sample.y is None:
            raise ValueError(f"model {model} needs the y column")
        if space_grid is None:
            raise ValueError(f"model {model} needs a spatial grid for kernel regression")
        h = bandwidth if bandwidth is not None else silverman_bandwidth(sample.z)
        w_grid, flags = conditional_mean_on_grid(sample, space_grid, h)
        kw["w_grid"], kw["w_flags"] = w_grid, flags
        kw["eps"] = regression_transform(w_grid, flags)
        kw["mean_y"] = float(np.mean(sample.y))
        if model == "7":
            if sample.x is None:
                raise ValueError("model 7 needs the x column")
            kw["eps_k"], kw["deps_k"] = [], []
            for k in range(d):
                wk, fk = conditional_mean_on_grid(sample, space_grid, h, sample.x[:, k] * sample.y)
                kw["eps_k"].append(pointwise("scale", regression_transform(wk, fk), sign * 1j))
                zk = space_grid.coords()[k]
                zw = GridFn(space_grid, w_grid.values * zk)
                kw["deps_k"].append(pointwise("scale", regression_transform(zw, flags), 1j))
    logger.info("moments for model %s from n=%d on %d grid points", model, sample.n, grid.size)
    return MomentFns(phi_z=phi_z, **kw)
