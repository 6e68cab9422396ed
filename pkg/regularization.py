"""
Well-posedness diagnostics for error characteristic functions and the
spectral cut-off that regularizes plug-in deconvolution.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import trapezoid

from grid import GridFn
from support import mask_from_array

logger = logging.getLogger(__name__)

ORDINARY = "ordinary_smooth"
SUPERSMOOTH = "supersmooth"
BOUNDED = "bounded_support"
MASS_POINT = "mass_point_mixture"
INCONCLUSIVE = "inconclusive"

MASS_FLOOR_MIN = 0.01
MASS_POWER_MAX = 0.25
TAIL_POWER_FOR_COMPLETION = 1.5
COMPLETION_DEGREE = 6
NEGLIGIBLE_TAIL = 1e-12


@dataclass(frozen=True)
class RegularityClass:
    """
    Tail behaviour of a characteristic function.

    ``order`` is p for ordinary smooth and k for supersmooth tails; ``scale``
    is c in exp(-c |s|^k); ``floor`` the mass-point level; for bounded support
    ``scale`` holds the last radius above the noise floor.
    """

    kind: str
    order: Optional[float] = None
    scale: Optional[float] = None
    floor: Optional[float] = None
    fit_residual: float = 0.0

    @property
    def p_or_k(self):
        return self.order


@dataclass(frozen=True)
class CutoffRule:
    """Ball {||s|| < B_bar}; r_n and k are set for the logarithmic rule only."""

    B_bar: float
    r_n: Optional[float] = None
    k: Optional[int] = None
    safety: Optional[float] = None
    label: str = "lemma2"
    B_n: Optional[object] = None


def _positive_axis(phi):
    grid = phi.grid
    idx = list(grid.origin_index)
    idx[0] = slice(grid.points_per_dim // 2, None)
    values = phi.values[tuple(idx)]
    s = grid.axis()[grid.points_per_dim // 2:]
    return s, values


def _lstsq_residual(design, y):
    coef, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    return coef, float(np.sqrt(np.mean(resid ** 2)))


def classify_smoothness(phi_u, noise=0.0):
    """
    Classify the tail of |phi_u| on |s| in [s_max/2, s_max].

    log|phi| is fitted against a - p log s (ordinary smooth) and a - c s^k
    for k = 1, 2 (supersmooth); the smallest residual wins. A tail staying
    above 0.01 with a flat ordinary fit is a mass-point floor.

    Args:
        phi_u (GridFn): Error characteristic function (first axis is used)
        noise (float): Estimation noise floor; 0 for exact inputs

    Returns:
        RegularityClass: Fitted class, INCONCLUSIVE when the tail is lost in noise
    """
    s, values = _positive_axis(phi_u)
    s_max = phi_u.grid.s_max
    window = (s >= s_max / 2) & (s < s_max)
    mod = np.abs(values[window])
    sw = s[window]
    floor = max(noise, 1e-300)
    above = mod > floor
    if not above.any():
        if noise == 0.0:
            beyond = np.nonzero(np.abs(values) > 1e-14 * np.max(np.abs(values)))[0]
            radius = float(s[beyond[-1]]) if beyond.size else 0.0
            return RegularityClass(BOUNDED, scale=radius)
        return RegularityClass(INCONCLUSIVE)
    if above.sum() < 4:
        return RegularityClass(INCONCLUSIVE)
    y = np.log(mod[above])
    t = sw[above]
    ones = np.ones_like(t)
    fits = {}
    coef, res = _lstsq_residual(np.column_stack([ones, -np.log(t)]), y)
    fits[ORDINARY] = (coef[1], None, res)
    for k in (1, 2):
        coef_k, res_k = _lstsq_residual(np.column_stack([ones, -t ** k]), y)
        if coef_k[1] > 0:
            fits[(SUPERSMOOTH, k)] = (k, coef_k[1], res_k)
    p = fits[ORDINARY][0]
    if np.min(mod) > MASS_FLOOR_MIN and p < MASS_POWER_MAX:
        return RegularityClass(MASS_POINT, floor=float(np.min(mod)), fit_residual=fits[ORDINARY][2])
    best = min(fits, key=lambda key: fits[key][2])
    order, scale, res = fits[best]
    if best == ORDINARY:
        if p <= 0:
            return RegularityClass(INCONCLUSIVE, fit_residual=res)
        return RegularityClass(ORDINARY, order=float(p), fit_residual=res)
    return RegularityClass(SUPERSMOOTH, order=float(order), scale=float(scale), fit_residual=res)


def _weights(grid, m):
    m = (int(m),) * grid.dim if np.ndim(m) == 0 else tuple(int(v) for v in m)
    if len(m) != grid.dim:
        raise ValueError(f"Multi-index {m} does not match dimension {grid.dim}")
    if any(v < 0 for v in m):
        raise ValueError(f"Multi-index entries must be non-negative, got {m}")
    w = np.ones(grid.shape)
    for coord, mi in zip(grid.coords(), m):
        w = w * (1.0 + coord ** 2) ** (-mi)
    return w, m


def check_phi_class(b, m, V):
    """
    Weighted integral of |b| with weight prod (1 + t_i^2)^{-m_i}, compared to V.

    In 1-d, a tail decaying faster than |t|^{-1.5} is completed by
    extrapolating the partial integrals over [-S, S], S in [s_max/2, s_max),
    to S -> infinity with a polynomial in 1/S.

    Args:
        b (GridFn): Function on a FreqGrid
        m (int or tuple): Multi-index of weight powers
        V (float): Bound

    Returns:
        tuple: (bool integral < V, integral value)
    """
    grid = b.grid
    w, m = _weights(grid, m)
    with np.errstate(over="ignore", invalid="ignore"):
        h = w * np.abs(b.values)
    inner = tuple(slice(1, None) for _ in range(grid.dim))
    h = h[inner]
    if not np.all(np.isfinite(h)):
        return False, float("inf")
    value = h
    for _ in range(grid.dim):
        value = trapezoid(value, dx=grid.spacing, axis=0)
    value = float(value)
    if grid.dim == 1 and np.isfinite(value):
        value = _complete_tail(h, grid, value)
    ok = bool(np.isfinite(value) and value < V)
    return ok, value


def _complete_tail(h, grid, value):
    s = grid.axis()[1:]
    half = len(s) // 2
    pos = h[half:]
    neg = h[:half + 1][::-1]
    sp = s[half:]
    S1, S2 = grid.s_max / 2, sp[-1]
    i1 = int(np.argmin(np.abs(sp - S1)))
    if pos[i1] <= 0 or pos[-1] <= 0 or neg[i1] <= 0 or neg[-1] <= 0:
        return value
    if (pos[-1] + neg[-1]) * S2 <= NEGLIGIBLE_TAIL * abs(value):
        return value
    power = -np.log((pos[-1] + neg[-1]) / (pos[i1] + neg[i1])) / np.log(S2 / sp[i1])
    if not power > TAIL_POWER_FOR_COMPLETION:
        return value
    sym = pos + neg
    partial = np.concatenate([[0.0], np.cumsum(0.5 * (sym[1:] + sym[:-1]) * grid.spacing)])
    use = slice(i1, len(sp))
    u = 1.0 / sp[use]
    coef = np.polynomial.polynomial.polyfit(u, partial[use], COMPLETION_DEGREE)
    completed = float(coef[0])
    logger.debug("phi-class tail completion: grid %.10g -> %.10g (tail power %.2f)",
                 value, completed, power)
    return completed


def lemma2_cutoff(r_n, k, safety=0.9, grid=None):
    """
    Spectral cut-off radius B_bar = safety * (ln r_n)^{1/k}.

    Args:
        r_n (float): Convergence rate of the input estimator, > 1
        k (int): Supersmooth order, >= 1
        safety (float): Factor in (0, 1)
        grid (FreqGrid, optional): When given, the ball is built as a SupportMask

    Returns:
        CutoffRule: Rule with radius (and ball)
    """
    if not r_n > 1:
        raise ValueError(f"r_n must exceed 1, got {r_n}")
    if int(k) != k or k < 1:
        raise ValueError(f"k must be an integer >= 1, got {k}")
    if not 0 < safety < 1:
        raise ValueError(f"safety must lie in (0, 1), got {safety}")
    radius = safety * np.log(r_n) ** (1.0 / k)
    ball = _ball(grid, radius) if grid is not None else None
    return CutoffRule(float(radius), float(r_n), int(k), float(safety), "lemma2", ball)


def heuristic_cutoff(phi_u_hat, sigma, multiple=3.0):
    """
    Plug-in radius sup{B : min over ||s|| <= B of |phi_u_hat| > multiple * sigma}.

    Args:
        phi_u_hat (GridFn): Estimated or known error CF
        sigma (float): Noise scale (sigma_ecf)
        multiple (float): Threshold multiple

    Returns:
        CutoffRule: Rule labelled 'heuristic'
    """
    grid = phi_u_hat.grid
    radius = grid.radius()
    low = np.abs(phi_u_hat.values) <= multiple * sigma
    if low.any():
        B = float(np.min(radius[low]))
    else:
        B = float(np.max(radius) + grid.spacing)
    return CutoffRule(B, label="heuristic", B_n=_ball(grid, B))


def _ball(grid, radius):
    inside = grid.radius() < radius
    return mask_from_array(grid, inside)


def apply_cutoff(phi, rule):
    """
    phi * I(||s|| < B_bar).

    Args:
        phi (GridFn): Function on a FreqGrid
        rule (CutoffRule): Cut-off

    Returns:
        GridFn: Truncated function
    """
    inside = phi.grid.radius() < rule.B_bar
    return GridFn(phi.grid, np.where(inside, phi.values, 0.0), phi.hermitian)
