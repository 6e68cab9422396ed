"""
Numerical support sets, their connected components, division restricted to the
support, and extension of reconstructions across isolated zeros of finite order.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import ndimage

from grid import GridFn
from utils.errors import EmptySupportError, ZeroOrderError

logger = logging.getLogger(__name__)

DEFAULT_MAX_ORDER = 4
FLAT_TOLERANCE = 1e-6
ROOT_RADIUS_CELLS = 1.5
ZERO_MATCH_TOL = 1e-4


@dataclass(frozen=True)
class Component:
    """One connected piece of a support mask and its anchor point."""

    id: int
    size: int
    anchor_index: Tuple[int, ...]
    anchor_value: Optional[complex] = None


@dataclass(frozen=True)
class SupportMask:
    """
    Boolean mask over a grid with its face-connected components.

    ``labels`` holds 0 off the mask and the component id (1-based) on it.
    """

    grid: object
    mask: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)
    components: Tuple[Component, ...]
    contains_zero: Optional[int] = None

    @property
    def count(self):
        return int(self.mask.sum())

    def component(self, cid):
        for comp in self.components:
            if comp.id == cid:
                return comp
        raise KeyError(f"No component {cid}")

    def members(self, cid):
        """Boolean array of the points in component ``cid``."""
        return self.labels == cid

    def with_anchor(self, cid, index, value):
        """A copy with the anchor of component ``cid`` moved to ``index`` holding ``value``."""
        index = tuple(int(i) for i in index)
        if self.labels[index] != cid:
            raise ValueError(f"Anchor {index} is not inside component {cid}")
        comps = tuple(replace(c, anchor_index=index, anchor_value=value) if c.id == cid else c
                      for c in self.components)
        return replace(self, components=comps)


@dataclass(frozen=True)
class ZeroFit:
    """
    Local fit beta(s) = eta * (s - root)^m along one axis near a grid point.

    Attributes:
        location (tuple): Grid index the fit window was centred on
        orders (tuple): Zero order per axis (non-zero only on ``axis``)
        eta_value (complex): eta at the root
        axis (int): Axis of the fit
        root (float): Coordinate of the zero along ``axis``
    """

    location: Tuple[int, ...]
    orders: Tuple[int, ...]
    eta_value: complex
    axis: int = 0
    root: float = 0.0

    @property
    def order(self):
        return self.orders[self.axis]

    @property
    def index(self):
        return self.location


@dataclass(frozen=True)
class Anchor:
    """Anchor for a component reached by crossing a zero."""

    component: int
    index: Tuple[int, ...]
    value: complex
    pole_order: int
    root: float
    gap_values: Dict[Tuple[int, ...], complex] = field(default_factory=dict)


def _structure(dim):
    return ndimage.generate_binary_structure(dim, 1)


def mask_from_array(grid, mask, anchor_source=None):
    """
    Label a boolean mask into face-connected components.

    The component holding s = 0 is anchored at s = 0; every other component
    at its point of largest |anchor_source| (or its first point).

    Args:
        grid (FreqGrid): Grid of the mask
        mask (numpy.ndarray): Boolean array of the grid shape
        anchor_source (numpy.ndarray, optional): Values used to place anchors

    Returns:
        SupportMask: Labelled mask
    """
    mask = np.array(mask, dtype=bool).reshape(grid.shape)
    labels, count = ndimage.label(mask, structure=_structure(grid.dim))
    origin = grid.origin_index
    zero_id = int(labels[origin]) or None
    comps = []
    if count:
        ids = np.arange(1, count + 1)
        sizes = ndimage.sum_labels(mask, labels, ids)
        weight = np.abs(anchor_source) if anchor_source is not None else mask.astype(float)
        positions = ndimage.maximum_position(weight, labels, ids)
        for cid, size, pos in zip(ids, sizes, positions):
            anchor = origin if cid == zero_id else tuple(int(p) for p in pos)
            comps.append(Component(int(cid), int(size), anchor))
    mask.setflags(write=False)
    labels.setflags(write=False)
    return SupportMask(grid, mask, labels, tuple(comps), zero_id)


def crossing_points(values, mask):
    """
    Points to drop where the phase jumps by more than pi/2 between neighbours.

    For each adjacent in-mask pair with such a jump the point of smaller
    modulus is dropped (both when the moduli tie).

    Args:
        values (numpy.ndarray): Complex grid values
        mask (numpy.ndarray): Current mask

    Returns:
        numpy.ndarray: Boolean array of dropped points
    """
    drop = np.zeros(values.shape, dtype=bool)
    mod = np.abs(values)
    for axis in range(values.ndim):
        lo = [slice(None)] * values.ndim
        hi = [slice(None)] * values.ndim
        lo[axis], hi[axis] = slice(None, -1), slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        both = mask[lo] & mask[hi]
        with np.errstate(invalid="ignore", divide="ignore"):
            turn = np.abs(np.angle(values[hi] * np.conj(values[lo])))
        jump = both & (turn > np.pi / 2)
        drop[lo] |= jump & (mod[lo] <= mod[hi])
        drop[hi] |= jump & (mod[hi] <= mod[lo])
    return drop


def detect_support(beta, tau):
    """
    Numerical support {s : |beta(s)| > tau} minus sign-crossing points.

    Args:
        beta (GridFn): Function whose support is wanted
        tau (float): Threshold, > 0

    Returns:
        SupportMask: Mask with components; the one holding s=0 anchored at 0
    """
    if not tau > 0:
        raise ValueError(f"Support threshold must be positive, got {tau}")
    raw = np.abs(beta.values) > tau
    mask = raw & ~crossing_points(beta.values, raw)
    if not mask.any():
        raise EmptySupportError(f"|beta| <= {tau:.3g} everywhere on the grid")
    support = mask_from_array(beta.grid, mask, beta.values)
    logger.debug("support: %d of %d points, %d components",
                 support.count, beta.grid.size, len(support.components))
    return support


def safe_divide(gamma, beta, mask):
    """
    alpha = gamma / beta on the mask and 0 elsewhere.

    Args:
        gamma (GridFn): Numerator
        beta (GridFn): Denominator
        mask (SupportMask or numpy.ndarray): Where the division is carried out

    Returns:
        GridFn: Quotient
    """
    if not gamma.grid.same_as(beta.grid):
        raise ValueError("safe_divide needs functions on the same grid")
    on = mask.mask if isinstance(mask, SupportMask) else np.asarray(mask, dtype=bool)
    values = np.zeros(gamma.grid.shape, dtype=complex)
    values[on] = gamma.values[on] / beta.values[on]
    off = on.size - int(on.sum())
    if off:
        logger.debug("safe_divide: %d points off the support set to 0", off)
    return GridFn.auto(gamma.grid, values)


def _line(index, axis):
    sl = list(index)
    sl[axis] = slice(None)
    return tuple(sl)


def fit_zero(beta, x0, max_order=DEFAULT_MAX_ORDER, axis=0, flat_tol=FLAT_TOLERANCE):
    """
    Fit beta = eta * (s - root)^m along one axis around grid index x0.

    A polynomial of degree max_order + 2 is least-squares fitted on a window
    of 2 * (max_order + 2) + 1 points in cell units. The roots within 1.5
    cells of x0 give the order m and the refined root; eta is the m-th Taylor
    coefficient at the root.

    Args:
        beta (GridFn): Function with a zero near x0
        x0 (tuple or int): Grid index of the window centre
        max_order (int): Largest order accepted
        axis (int): Axis of the fit
        flat_tol (float): Coefficients below flat_tol * max|beta| count as zero

    Returns:
        ZeroFit: Order, eta and refined root
    """
    grid = beta.grid
    x0 = (int(x0),) if np.ndim(x0) == 0 else tuple(int(i) for i in x0)
    if len(x0) != grid.dim:
        raise ValueError(f"Index {x0} does not match grid dimension {grid.dim}")
    degree = max_order + 2
    half = degree
    N = grid.points_per_dim
    if 2 * half + 1 > N:
        raise ValueError("Grid too small for the zero-fit window")
    # Window in cell units around x0
    centre = x0[axis]
    start = min(max(centre - half, 0), N - 2 * half - 1)
    idx = np.arange(start, start + 2 * half + 1)
    t = (idx - centre).astype(float)
    line = beta.values[_line(x0, axis)][idx]
    coef = P.polyfit(t, line, degree)
    scale = float(np.max(np.abs(beta.values)))
    if np.all(np.abs(coef) <= flat_tol * scale):
        raise ZeroOrderError(f"zero of infinite numerical order at index {x0}")
    # Count the roots close to the window centre
    coef = P.polytrim(coef, flat_tol * scale * 1e-6)
    roots = P.polyroots(coef) if len(coef) > 1 else np.array([])
    near = roots[np.abs(roots) <= ROOT_RADIUS_CELLS]
    m = len(near)
    if m == 0:
        raise ZeroOrderError(f"no zero within {ROOT_RADIUS_CELLS} cells of index {x0}")
    if m > max_order:
        raise ZeroOrderError(f"zero order {m} at index {x0} exceeds {max_order}")
    # Refine the root and read eta there
    r = float(np.mean(near.real))
    shifted = _shift_polynomial(coef, r)
    eta = complex(shifted[m]) / grid.spacing ** m if m < len(shifted) else 0j
    if eta == 0:
        raise ZeroOrderError(f"vanishing leading coefficient at index {x0}")
    orders = tuple(m if k == axis else 0 for k in range(grid.dim))
    root = (centre - N // 2 + r) * grid.spacing
    return ZeroFit(x0, orders, eta, axis, root)


def _shift_polynomial(coef, r):
    # Coefficients of p(t + r) in powers of t.
    out = np.zeros(len(coef), dtype=complex)
    power = np.array([1.0 + 0j])
    base = np.array([r, 1.0], dtype=complex)
    for c in coef:
        out[:len(power)] += c * power
        power = P.polymul(power, base)
    return out


def residue_order(kappa_values, s_points, root, max_order):
    """
    Integer residue of a log-derivative at a zero: round(mean((s - root) kappa)).

    Args:
        kappa_values (numpy.ndarray): kappa at points next to the zero
        s_points (numpy.ndarray): Their coordinates
        root (float): Zero location
        max_order (int): Upper clamp

    Returns:
        int: Order in [0, max_order]
    """
    estimate = float(np.mean(((s_points - root) * kappa_values).real))
    return int(min(max(round(estimate), 0), max_order))


def extend_across_zero(beta_known, fit, kappa, component_b):
    """
    Anchor component B from a reconstruction known on the neighbouring component.

    The reconstruction is written (s - root)^m * eta(s) with eta smooth through
    the zero. m is the residue of kappa at the root and log(eta) is carried
    across the gap by integrating kappa - m / (s - root) exactly on a cubic
    through the two in-mask points on each side.

    Args:
        beta_known (GridFn): Reconstruction valid on the component across the gap
        fit (ZeroFit): Zero of the equation's known function inside the gap
        kappa (KappaField): Field being integrated; its domain labels the components
        component_b (int): Id of the component to anchor

    Returns:
        Anchor: Index and value in component B plus values at the gap points
    """
    if fit is None:
        raise ZeroOrderError("no valid zero fit to extend across")
    domain = kappa.domain
    grid = domain.grid
    axis = fit.axis
    line_sel = _line(fit.location, axis)
    # Nearest point of component B and the last identified point behind the zero
    labels = domain.labels[line_sel]
    centre = fit.location[axis]
    ahead = np.nonzero(labels == component_b)[0]
    if ahead.size == 0:
        raise EmptySupportError(f"Component {component_b} does not meet the line through {fit.location}")
    direction = 1 if ahead[0] > centre else -1
    b = int(ahead[0] if direction == 1 else ahead[-1])
    behind = np.nonzero(labels > 0)[0]
    behind = behind[behind < centre] if direction == 1 else behind[behind > centre]
    if behind.size == 0:
        raise EmptySupportError(f"No identified points behind the zero at {fit.location}")
    a = int(behind[-1] if direction == 1 else behind[0])
    comp_a = labels[a]

    # Residue at the root, then a cubic for the regular part of kappa
    s = grid.axis()
    kline = kappa.kappa[axis].values[line_sel]
    m = residue_order(kline[[a, b]], s[[a, b]], fit.root, fit.order)
    pts = [p for p in (a - direction, a, b, b + direction)
           if 0 <= p < grid.points_per_dim
           and (labels[p] == comp_a if (p - centre) * direction < 0 else labels[p] == component_b)]
    pts = sorted(pts)
    kreg = kline[pts] - m / (s[pts] - fit.root)
    # Offsets in cell units.
    t = (np.array(pts) - a).astype(float)
    poly = P.polyfit(t, kreg, len(pts) - 1)
    antider = P.polyint(poly)

    # Carry the known value from a across the gap
    beta_a = complex(beta_known.values[line_sel][a])
    if beta_a == 0:
        raise ZeroOrderError(f"reconstruction vanishes at the edge point {a}")

    def carry(p):
        integral = (P.polyval(p - a, antider) - P.polyval(0.0, antider)) * grid.spacing
        ratio = ((s[p] - fit.root) / (s[a] - fit.root)) ** m
        return beta_a * ratio * np.exp(integral)

    gap_values = {}
    for p in range(min(a, b) + 1, max(a, b)):
        idx = list(fit.location)
        idx[axis] = p
        gap_values[tuple(idx)] = complex(carry(p))
    b_index = list(fit.location)
    b_index[axis] = b
    value = complex(carry(b))
    logger.debug("crossed zero at %.6g (order %d) into component %d", fit.root, m, component_b)
    return Anchor(component_b, tuple(b_index), value, m, fit.root, gap_values)


def gap_runs(mask_line):
    """
    Runs of False between True runs of a 1-d mask.

    Args:
        mask_line (numpy.ndarray): 1-d boolean mask

    Returns:
        list: (first, last) index pairs of interior gaps
    """
    on = np.nonzero(mask_line)[0]
    runs = []
    for left, right in zip(on[:-1], on[1:]):
        if right - left > 1:
            runs.append((int(left) + 1, int(right) - 1))
    return runs


def divide_on_support(gamma, beta, tau, max_order=DEFAULT_MAX_ORDER):
    """
    gamma / beta on supp(beta) extended through finite-order zeros (1-d).

    Inside each gap between support pieces the zero of beta is fitted; when
    gamma vanishes there to at least the same order, the gap points get the
    ratio of the deflated local polynomials of gamma and beta.

    Args:
        gamma (GridFn): Numerator
        beta (GridFn): Denominator
        tau (float): Support threshold
        max_order (int): Largest zero order

    Returns:
        tuple: (quotient GridFn, SupportMask of the identified points,
                boolean array of gap points that were filled)
    """
    support = detect_support(beta, tau)
    alpha = safe_divide(gamma, beta, support)
    filled = np.zeros(beta.grid.shape, dtype=bool)
    if beta.grid.dim != 1:
        return alpha, support, filled
    values = np.array(alpha.values)
    N = beta.grid.points_per_dim
    for first, last in gap_runs(support.mask):
        # Fit the zero of beta inside the gap
        if last - first + 1 > 2 * max_order + 1:
            continue
        gap = np.arange(first, last + 1)
        centre = int(gap[np.argmin(np.abs(beta.values[gap]))])
        try:
            fb = fit_zero(beta, centre, max_order)
        except ZeroOrderError:
            continue
        # Local polynomials of gamma and beta about the root
        degree = max_order + 2
        start = min(max(centre - degree, 0), N - 2 * degree - 1)
        idx = np.arange(start, start + 2 * degree + 1)
        t = (idx - centre).astype(float)
        r = (fb.root / beta.grid.spacing) - (centre - N // 2)
        cb = _shift_polynomial(P.polyfit(t, beta.values[idx], degree), r)
        cg = _shift_polynomial(P.polyfit(t, gamma.values[idx], degree), r)
        m = fb.order
        # gamma must vanish at least to order m for the quotient to stay finite.
        tail_b, tail_g = cb[m:], cg[m:]
        if np.max(np.abs(cg[:m])) > ZERO_MATCH_TOL * max(np.max(np.abs(gamma.values[idx])), 1e-300):
            continue
        for p in gap:
            tp = (p - centre) - r
            values[p] = P.polyval(tp, tail_g) / P.polyval(tp, tail_b)
            filled[p] = True
    identified = mask_from_array(beta.grid, support.mask | filled, beta.values)
    return GridFn.auto(beta.grid, values), identified, filled


def interpolate_gaps(fn, known, targets):
    """
    Fill target points of a 1-d function by cubic interpolation of its known neighbours.

    Args:
        fn (GridFn): Function on a 1-d grid
        known (numpy.ndarray): Points whose values are trusted
        targets (numpy.ndarray): Points to fill

    Returns:
        GridFn: Copy with targets filled where two known points exist on each side
    """
    values = np.array(fn.values)
    if fn.grid.dim != 1:
        return fn
    on = np.nonzero(known)[0]
    for p in np.nonzero(targets & ~known)[0]:
        left = on[on < p][-2:]
        right = on[on > p][:2]
        pts = np.concatenate([left, right])
        if len(left) == 0 or len(right) == 0 or p - left[-1] > 4 or right[0] - p > 4:
            continue
        t = (pts - p).astype(float)
        values[p] = P.polyval(0.0, P.polyfit(t, fn.values[pts], len(pts) - 1))
    return GridFn.auto(fn.grid, values)


def mask_to_rows(support):
    """
    Rows (signed index..., in_mask, component_id) for the mask CSV dump.

    Args:
        support (SupportMask): Mask to dump

    Returns:
        list: One tuple per grid point in C order
    """
    grid = support.grid
    half = grid.points_per_dim // 2
    rows = []
    for index in np.ndindex(*grid.shape):
        rows.append(tuple(i - half for i in index)
                    + (int(support.mask[index]), int(support.labels[index])))
    return rows
