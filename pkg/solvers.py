"""
Solutions of the convolution-equation systems of models 1 to 7, the AR(1)
error extension and the common-factor reduction.

Kotlyarski-type models reconstruct one factor of a known function gamma from
the log-derivative field kappa_k = gamma_k / gamma by path integration from
s = 0, then obtain the other factor by division.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple

import numpy as np
from scipy import ndimage
from scipy.integrate import cumulative_trapezoid

from grid import GridFn, pointwise, grid_derivative, inverse_transform
from moments import Sample, regression_transform, sample_moments
from regularization import apply_cutoff, heuristic_cutoff
from support import (
    SupportMask, detect_support, safe_divide, fit_zero, extend_across_zero,
    divide_on_support, interpolate_gaps, mask_from_array, residue_order,
    DEFAULT_MAX_ORDER,
)
from utils.config import DEFAULTS
from utils.errors import CurlGateError, EmptySupportError, NumericalError, RankError, ZeroOrderError

logger = logging.getLogger(__name__)

RANK_RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class KappaField:
    """Log-derivative field kappa_k = numerator_k / gamma on the support of gamma."""

    kappa: Tuple[GridFn, ...]
    domain: SupportMask
    curl_residual: float = 0.0
    gamma: Optional[GridFn] = None


@dataclass(frozen=True)
class FactorReconstruction:
    """A factor of gamma rebuilt by path integration, with what was reached."""

    values: GridFn
    identified: np.ndarray = field(repr=False)
    anchors: tuple = ()
    roots: tuple = ()
    unreachable: int = 0
    path_discrepancy: float = 0.0


@dataclass(frozen=True)
class ModelSolution:
    """
    Recovered functions of one model.

    Frequency-domain outputs are 0 off ``identified_mask``. ``ft_g`` holds
    Ft(g f_x*) for model 5 and Ft(g) for models 6 and 7.
    """

    phi_xstar: Optional[GridFn] = None
    phi_u: Optional[GridFn] = None
    phi_ux: Optional[GridFn] = None
    g_hat: Optional[GridFn] = None
    rho_hat: Optional[float] = None
    identified_mask: Optional[SupportMask] = None
    diagnostics: Dict[str, object] = field(default_factory=dict)
    f_xstar: Optional[GridFn] = None
    ft_g: Optional[GridFn] = None
    anchors: tuple = ()

    @property
    def unidentified(self):
        """GridFn equal to 1 on grid points outside the identified mask."""
        if self.identified_mask is None:
            return None
        mask = self.identified_mask
        return GridFn(mask.grid, (~mask.mask).astype(float))


# --- kappa fields and path integration -------------------------------------

def curl_residual(kappa, domain):
    """
    max |d_j kappa_k - d_k kappa_j| over the eroded domain.

    Args:
        kappa (list): d GridFns
        domain (SupportMask): Support of the field

    Returns:
        float: Largest curl magnitude (0 in 1-d)
    """
    d = domain.grid.dim
    if d < 2:
        return 0.0
    structure = ndimage.generate_binary_structure(d, 1)
    core = ndimage.binary_erosion(domain.mask, structure=structure, border_value=0)
    if not core.any():
        return 0.0
    worst = 0.0
    for j in range(d):
        for k in range(j + 1, d):
            diff = grid_derivative(kappa[k], j).values - grid_derivative(kappa[j], k).values
            worst = max(worst, float(np.max(np.abs(diff[core]))))
    return worst


def kappa_field(numerators, gamma, mask):
    """
    kappa_k = numerator_k / gamma on the mask.

    Args:
        numerators (list): d GridFns gamma_k
        gamma (GridFn): Known function
        mask (SupportMask): Support of gamma

    Returns:
        KappaField: Field with its curl residual
    """
    if mask.count == 0:
        raise EmptySupportError("kappa field on an empty support")
    if len(numerators) != gamma.grid.dim:
        raise ValueError(f"Need {gamma.grid.dim} numerators, got {len(numerators)}")
    kappa = tuple(safe_divide(num, gamma, mask) for num in numerators)
    curl = curl_residual(kappa, mask)
    if gamma.grid.dim >= 2:
        logger.debug("kappa field curl residual %.3g", curl)
    return KappaField(kappa, mask, curl, gamma)


def _staircase(kvals, comp, anchor, order, spacing):
    logval = np.zeros(comp.shape, dtype=complex)
    reached = np.zeros(comp.shape, dtype=bool)
    reached[anchor] = True
    for axis in order:
        a = anchor[axis]
        C = cumulative_trapezoid(kvals[axis], dx=spacing, axis=axis, initial=0)
        B = np.cumsum(~comp, axis=axis)
        base = np.take(logval, [a], axis=axis)
        base_reached = np.take(reached, [a], axis=axis)
        new = comp & base_reached & (B == np.take(B, [a], axis=axis))
        logval = np.where(new, base + C - np.take(C, [a], axis=axis), logval)
        reached = reached | new
    return logval, reached


def _pole_terms(grid, poles, comp):
    s = grid.axis()
    term = np.zeros(grid.shape, dtype=complex)
    for root, m in poles:
        with np.errstate(divide="ignore", invalid="ignore"):
            term = term + np.where(comp, m / (s - root), 0.0)
    return term


def _path_values(field_, comp, anchor, anchor_value, poles, order):
    grid = field_.domain.grid
    kvals = [np.where(comp, k.values, 0.0) for k in field_.kappa]
    if poles:
        kvals[0] = kvals[0] - _pole_terms(grid, poles, comp)
    logval, reached = _staircase(kvals, comp, anchor, order, grid.spacing)
    values = np.zeros(grid.shape, dtype=complex)
    values[reached] = anchor_value * np.exp(logval[reached])
    if poles:
        s = grid.axis()
        s0 = s[anchor[0]]
        factor = np.ones(grid.shape, dtype=complex)
        for root, m in poles:
            factor = factor * ((s - root) / (s0 - root)) ** m
        values[reached] = values[reached] * factor[reached]
    return values, reached


def path_exponential(kappa, component, anchor_value, anchor_index=None, poles=(),
                     axis_order=None, curl_tolerance=None, strict=False):
    """
    anchor_value * exp(integral of kappa) over one component of the field domain.

    1-d integration is the cumulative trapezoid from the anchor. In d >= 2
    the path is an axis-parallel staircase (axes in ``axis_order``); points it
    cannot reach inside the component are retried with the reversed order.
    ``poles`` (1-d) lists (root, order) pairs of the factor: the integrand is
    kappa - sum m / (s - root) and the power factor is restored exactly.

    Args:
        kappa (KappaField): Field
        component (int): Component id in kappa.domain
        anchor_value (complex): Factor value at the anchor
        anchor_index (tuple, optional): Defaults to the component anchor
        poles (tuple): (root, order) pairs, 1-d only
        axis_order (tuple, optional): Staircase axis order, default 0..d-1
        curl_tolerance (float, optional): Gate on kappa.curl_residual in d >= 2
        strict (bool): Raise when a component point is unreachable

    Returns:
        GridFn: Factor on the component, 0 elsewhere
    """
    values, reached, missed = _integrate_component(
        kappa, component, anchor_value, anchor_index, poles, axis_order, curl_tolerance)
    if missed and strict:
        raise NumericalError(f"{missed} points of component {component} are not reachable")
    return GridFn.auto(kappa.domain.grid, values)


def _integrate_component(kappa, component, anchor_value, anchor_index=None, poles=(),
                         axis_order=None, curl_tolerance=None):
    domain = kappa.domain
    grid = domain.grid
    comp = domain.members(component)
    if anchor_index is None:
        anchor_index = domain.component(component).anchor_index
    anchor_index = tuple(int(i) for i in anchor_index)
    if not comp[anchor_index]:
        raise ValueError(f"Anchor {anchor_index} is outside component {component}")
    if poles and grid.dim != 1:
        raise ValueError("Pole subtraction is only available in one dimension")
    if grid.dim >= 2 and curl_tolerance is not None and kappa.curl_residual > curl_tolerance:
        raise CurlGateError(kappa.curl_residual, curl_tolerance)
    order = tuple(axis_order) if axis_order is not None else tuple(range(grid.dim))
    values, reached = _path_values(kappa, comp, anchor_index, anchor_value, poles, order)
    missed = comp & ~reached
    if missed.any() and grid.dim >= 2:
        back, back_reached = _path_values(kappa, comp, anchor_index, anchor_value, poles, order[::-1])
        fill = missed & back_reached
        values[fill] = back[fill]
        reached = reached | fill
        missed = comp & ~reached
    n_missed = int(missed.sum())
    if n_missed:
        logger.warning("%d points of component %d unreachable by staircase paths",
                       n_missed, component)
    return values, reached, n_missed


def path_discrepancy(kappa, component, anchor_value=1.0):
    """
    Largest relative gap between staircase and transposed-staircase integrals.

    Args:
        kappa (KappaField): Field in d >= 2
        component (int): Component id

    Returns:
        float: max |A - B| / max |A| over points both paths reach
    """
    grid = kappa.domain.grid
    if grid.dim < 2:
        return 0.0
    comp = kappa.domain.members(component)
    anchor = kappa.domain.component(component).anchor_index
    order = tuple(range(grid.dim))
    a, ra = _path_values(kappa, comp, anchor, anchor_value, (), order)
    b, rb = _path_values(kappa, comp, anchor, anchor_value, (), order[::-1])
    both = ra & rb
    scale = float(np.max(np.abs(a[both]))) if both.any() else 0.0
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(a[both] - b[both]))) / scale


def _runs(domain):
    runs = []
    for comp in domain.components:
        idx = np.nonzero(domain.labels == comp.id)[0]
        runs.append((int(idx[0]), int(idx[-1]), comp.id))
    return sorted(runs)


def _gap_fit(gamma, first, last, max_order):
    if last - first + 1 > 2 * max_order + 1:
        return None
    gap = np.arange(first, last + 1)
    centre = int(gap[np.argmin(np.abs(gamma.values[gap]))])
    try:
        fit = fit_zero(gamma, centre, max_order)
    except (ZeroOrderError, ValueError):
        return None
    s = gamma.grid.axis()
    if not s[first - 1] < fit.root < s[last + 1]:
        return None
    return fit


def pole_order(kappa, fit):
    """
    Order of the zero at fit.root carried by the factor kappa reconstructs.

    The residue of kappa is read at the nearest support points on either side
    of the root; it is 0 when the zero belongs to the complementary factor.

    Args:
        kappa (KappaField): Field being integrated
        fit (ZeroFit): Zero of the known function

    Returns:
        int: Order in [0, fit.order]
    """
    sel = list(fit.location)
    sel[fit.axis] = slice(None)
    sel = tuple(sel)
    line = kappa.domain.mask[sel]
    s = kappa.domain.grid.axis()
    below = np.nonzero(line & (s < fit.root))[0]
    above = np.nonzero(line & (s > fit.root))[0]
    if below.size == 0 or above.size == 0:
        raise ZeroOrderError(f"zero at {fit.root:.6g} is not enclosed by the support")
    pts = [int(below[-1]), int(above[0])]
    kline = kappa.kappa[fit.axis].values[sel]
    return residue_order(kline[pts], s[pts], fit.root, fit.order)


def _bridge_origin(kappa, gamma, fit, anchor_value, runs):
    """Carry a known value at s=0 lying in a gap to the two neighbouring components."""
    grid = gamma.grid
    origin = grid.origin_index[0]
    left = [r for r in runs if r[1] < origin]
    right = [r for r in runs if r[0] > origin]
    if not left or not right:
        raise EmptySupportError("s = 0 is not inside the support and cannot be bridged")
    a, b = left[-1][1], right[0][0]
    kline = kappa.kappa[0].values
    if pole_order(kappa, fit) != 0:
        raise EmptySupportError("factor vanishes at s = 0; its scale is not identified")
    pts = [p for p in (a - 1, a, b, b + 1) if kappa.domain.mask[p]]
    t = np.array(pts, dtype=float) - origin
    poly = np.polynomial.polynomial.Polynomial.fit(t, kline[pts], len(pts) - 1,
                                                   domain=[t.min(), t.max()], window=[t.min(), t.max()])
    antider = poly.integ()

    def carry(p):
        return anchor_value * np.exp((antider(p - origin) - antider(0.0)) * grid.spacing)

    gap_values = {(p,): complex(carry(p)) for p in range(a + 1, b)}
    return (a, complex(carry(a)), left[-1][2]), (b, complex(carry(b)), right[0][2]), gap_values


def integrate_components(kappa, gamma, anchor_value=1.0, max_order=DEFAULT_MAX_ORDER,
                         anchors=None, curl_tolerance=None):
    """
    Integrate kappa from s = 0 over the support of gamma.

    In 1-d the integration walks outwards from the component holding s = 0,
    crossing every gap that contains a zero of gamma of finite order (at most
    max_order, gap no wider than 2 * max_order + 1 points); components behind
    an uncrossable gap are identified only from user anchors. In d >= 2 only
    the component holding s = 0 and user-anchored components are integrated.

    Args:
        kappa (KappaField): Log-derivative field of the factor
        gamma (GridFn): Known function whose support is kappa.domain
        anchor_value (complex): Factor value at s = 0
        max_order (int): Largest zero order crossed
        anchors (dict, optional): component id -> (index, value)
        curl_tolerance (float, optional): Curl gate in d >= 2

    Returns:
        FactorReconstruction: Values, identified points and crossing details
    """
    # Initialize outputs
    domain = kappa.domain
    grid = domain.grid
    anchors = dict(anchors or {})
    values = np.zeros(grid.shape, dtype=complex)
    identified = np.zeros(grid.shape, dtype=bool)
    used, roots = [], []
    missed = 0
    discrepancy = 0.0
    zero_id = domain.contains_zero

    if grid.dim == 1:
        # Fit a zero in every gap between neighbouring runs
        runs = _runs(domain)
        fits = [_gap_fit(gamma, runs[i][1] + 1, runs[i + 1][0] - 1, max_order)
                for i in range(len(runs) - 1)]
        orders = [None if fit is None else pole_order(kappa, fit) for fit in fits]

        def poles_for(i):
            out = []
            if i > 0 and orders[i - 1]:
                out.append((fits[i - 1].root, orders[i - 1]))
            if i < len(fits) and orders[i]:
                out.append((fits[i].root, orders[i]))
            return tuple(out)

        def integrate(i, index, value):
            nonlocal missed
            vals, reached, n_missed = _integrate_component(
                kappa, runs[i][2], value, index, poles_for(i))
            values[reached] = vals[reached]
            identified[reached] = True
            missed += n_missed

        # Start from the component holding s = 0, or bridge a gap around it
        starts = []
        if zero_id is not None:
            iz = [r[2] for r in runs].index(zero_id)
            integrate(iz, grid.origin_index, anchor_value)
            starts.append(iz)
        elif not anchors:
            origin = grid.origin_index[0]
            inside = [i for i in range(len(fits))
                      if runs[i][1] < origin < runs[i + 1][0] and fits[i] is not None]
            if not inside:
                raise EmptySupportError("no support component contains s = 0")
            i = inside[0]
            (a, va, _), (b, vb, _), gap_values = _bridge_origin(kappa, gamma, fits[i], anchor_value, runs)
            integrate(i, (a,), va)
            integrate(i + 1, (b,), vb)
            for idx, val in gap_values.items():
                values[idx] = val
                identified[idx] = True
            roots.append((fits[i].root, 0))
            starts.extend([i, i + 1])
        # User anchors
        for cid, (index, value) in anchors.items():
            i = [r[2] for r in runs].index(cid)
            if not identified[runs[i][0]]:
                integrate(i, tuple(np.atleast_1d(index)), value)
                starts.append(i)

        # Walk outwards across every crossable gap
        for start in starts:
            for direction in (1, -1):
                i = start
                while 0 <= i + direction < len(runs):
                    j = i + direction
                    gap = min(i, j)
                    fit = fits[gap]
                    if fit is None or identified[runs[j][0]]:
                        break
                    known = GridFn(grid, values)
                    anchor = extend_across_zero(known, fit, kappa, runs[j][2])
                    integrate(j, anchor.index, anchor.value)
                    for idx, val in anchor.gap_values.items():
                        values[idx] = val
                        identified[idx] = True
                    used.append(anchor)
                    roots.append((fit.root, anchor.pole_order))
                    i = j
    else:
        # Integrate anchored components only
        targets = []
        if zero_id is not None:
            targets.append((zero_id, grid.origin_index, anchor_value))
        elif not anchors:
            raise EmptySupportError("no support component contains s = 0")
        for cid, (index, value) in anchors.items():
            targets.append((cid, tuple(index), value))
        for cid, index, value in targets:
            vals, reached, n_missed = _integrate_component(
                kappa, cid, value, index, (), None, curl_tolerance)
            values[reached] = vals[reached]
            identified[reached] = True
            missed += n_missed
        if zero_id is not None:
            discrepancy = path_discrepancy(kappa, zero_id, anchor_value)

    unidentified = domain.mask & ~identified
    if unidentified.any():
        logger.info("%d support points left unidentified", int(unidentified.sum()))
    return FactorReconstruction(GridFn.auto(grid, values), identified, tuple(used),
                                tuple(roots), missed, discrepancy)


# --- helpers shared by the model solvers -----------------------------------

def _threshold(moments, fn, threshold):
    if threshold is not None:
        return threshold
    if moments is None or moments.exact:
        return DEFAULTS["exact_threshold"]
    scale = max(float(np.max(np.abs(fn.values))), 1e-300)
    return DEFAULTS["noise_multiple"] * moments.sigma_ecf * scale


def _curl_tolerance(moments, curl_tolerance):
    if curl_tolerance is not None:
        return curl_tolerance
    if moments is None or moments.exact:
        return DEFAULTS["curl_tol_exact"]
    return DEFAULTS["curl_noise_multiple"] * moments.sigma_ecf


def _zero_off(fn, keep):
    return GridFn.auto(fn.grid, np.where(keep, fn.values, 0.0))


def _complement(gamma, rec, domain):
    """gamma / reconstructed factor on its identified points; gap points interpolated."""
    known = domain.mask & rec.identified
    other = safe_divide(gamma, rec.values, known)
    gaps = rec.identified & ~domain.mask
    if gaps.any():
        other = interpolate_gaps(other, known, gaps)
    return _zero_off(other, rec.identified)


def _two_factor(gamma, numerators, anchor_value, tau, max_order, curl_tol, anchors):
    domain = detect_support(gamma, tau)
    kappa = kappa_field(numerators, gamma, domain)
    rec = integrate_components(kappa, gamma, anchor_value, max_order, anchors, curl_tol)
    if not rec.identified.any():
        raise EmptySupportError("nothing identified from the kappa field")
    other = _complement(gamma, rec, domain)
    return rec, other, kappa


def _diagnostics(kappa, rec, gamma, first, second, tau):
    both = kappa.domain.mask & rec.identified
    scale = max(float(np.max(np.abs(gamma.values[both]))), 1e-300) if both.any() else 1.0
    if both.any():
        resid = float(np.max(np.abs(first.values[both] * second.values[both] - gamma.values[both]))) / scale
    else:
        resid = 0.0
    return {
        "support_threshold": tau,
        "support_points": kappa.domain.count,
        "identified_points": int(rec.identified.sum()),
        "components": len(kappa.domain.components),
        "zero_crossings": len(rec.anchors),
        "curl_residual": kappa.curl_residual,
        "path_discrepancy": rec.path_discrepancy,
        "unreachable_points": rec.unreachable,
        "reconstruction_residual": resid,
    }


def _resolve_cutoff(cutoff, phi_u, sigma):
    if cutoff is None or cutoff == "none":
        return None
    if cutoff == "heuristic":
        return heuristic_cutoff(phi_u, sigma)
    return cutoff


def _cut(fn, rule):
    return fn if (rule is None or fn is None) else apply_cutoff(fn, rule)


def _density(phi):
    return inverse_transform(phi).real()


def _identified_support(grid, identified, source):
    return mask_from_array(grid, identified, np.abs(source.values))


# --- models ----------------------------------------------------------------

def solve_model1(phi_z, phi_u, mask_policy="extend", threshold=None,
                 max_order=DEFAULT_MAX_ORDER, cutoff=None, sigma=0.0):
    """
    Classical error with known error law: phi_x* = phi_z / phi_u on supp(phi_u).

    Args:
        phi_z (GridFn): CF of z (estimated or exact)
        phi_u (GridFn): Known error CF
        mask_policy (str): 'extend' fills finite-order zeros of phi_u (1-d),
            'support' divides on |phi_u| > threshold only
        threshold (float, optional): Support threshold on phi_u; default 1e-10
        max_order (int): Largest zero order filled
        cutoff (CutoffRule or str, optional): Spectral cut-off
        sigma (float): ECF noise scale for the heuristic cut-off

    Returns:
        ModelSolution: phi_xstar and density
    """
    tau = threshold if threshold is not None else DEFAULTS["exact_threshold"]
    if mask_policy == "extend":
        phi_x, identified, filled = divide_on_support(phi_z, phi_u, tau, max_order)
    elif mask_policy == "support":
        identified = detect_support(phi_u, tau)
        phi_x = safe_divide(phi_z, phi_u, identified)
        filled = np.zeros(phi_z.grid.shape, dtype=bool)
    else:
        raise ValueError(f"Unknown mask policy '{mask_policy}'")
    direct = identified.mask & ~filled
    scale = max(float(np.max(np.abs(phi_z.values))), 1e-300)
    resid = float(np.max(np.abs(phi_x.values[direct] * phi_u.values[direct] - phi_z.values[direct]))) / scale
    rule = _resolve_cutoff(cutoff, phi_u, sigma)
    phi_x = _cut(phi_x, rule)
    diagnostics = {
        "support_threshold": tau,
        "identified_points": identified.count,
        "filled_zero_points": int(filled.sum()),
        "reconstruction_residual": resid,
    }
    if rule is not None:
        diagnostics["cutoff_radius"] = rule.B_bar
    return ModelSolution(phi_xstar=phi_x, phi_u=phi_u, identified_mask=identified,
                         diagnostics=diagnostics, f_xstar=_density(phi_x))


def solve_model2(phi_z, phi_u):
    """
    Berkson error: phi_x* = phi_z * conj(phi_u), defined on the whole grid.

    Args:
        phi_z (GridFn): CF of z
        phi_u (GridFn): Error CF

    Returns:
        ModelSolution: phi_xstar and density
    """
    phi_x = pointwise("mul", phi_z, phi_u.conj())
    full = mask_from_array(phi_z.grid, np.ones(phi_z.grid.shape, dtype=bool))
    return ModelSolution(phi_xstar=phi_x, phi_u=phi_u, identified_mask=full,
                         diagnostics={"identified_points": full.count},
                         f_xstar=_density(phi_x))


def solve_model3(moments, variant="A", swap_labels=False, max_order=DEFAULT_MAX_ORDER,
                 threshold=None, curl_tolerance=None, anchors=None, cutoff=None):
    """
    Two measurements with classical error on z.

    The numerator (phi_z)'_k - eps_k integrates to phi_u, the numerator eps_k
    to phi_x*. Variant A integrates the former, variant B the latter; the
    other factor follows from phi_z = phi_x* phi_u.

    Args:
        moments (MomentFns): phi_z, dphi_z_k and eps_k
        variant (str): 'A' or 'B'
        swap_labels (bool): Exchange the two recovered CFs
        max_order (int): Largest zero order crossed
        threshold (float, optional): Support threshold on phi_z
        curl_tolerance (float, optional): Curl gate in d >= 2
        anchors (dict, optional): Extra component anchors
        cutoff (CutoffRule or str, optional): Applied to phi_xstar

    Returns:
        ModelSolution: phi_xstar, phi_u and density
    """
    if moments.eps_k is None or moments.dphi_z_k is None:
        raise ValueError("model 3 needs eps_k and dphi_z_k")
    if variant not in ("A", "B"):
        raise ValueError(f"variant must be A or B, got {variant}")
    gamma = moments.phi_z
    tau = _threshold(moments, gamma, threshold)
    curl_tol = _curl_tolerance(moments, curl_tolerance)
    if variant == "A":
        nums = [pointwise("sub", dz, ek) for dz, ek in zip(moments.dphi_z_k, moments.eps_k)]
    else:
        nums = list(moments.eps_k)
    rec, other, kappa = _two_factor(gamma, nums, 1.0, tau, max_order, curl_tol, anchors)
    integrated = _zero_off(rec.values, rec.identified)
    if variant == "A":
        phi_u, phi_x = integrated, other
    else:
        phi_x, phi_u = integrated, other
    if swap_labels:
        phi_x, phi_u = phi_u, phi_x
    diagnostics = _diagnostics(kappa, rec, gamma, phi_x, phi_u, tau)
    diagnostics["variant"] = variant
    diagnostics["integrated"] = "phi_u" if (variant == "A") != swap_labels else "phi_xstar"
    rule = _resolve_cutoff(cutoff, phi_u, moments.sigma_ecf)
    if rule is not None:
        diagnostics["cutoff_radius"] = rule.B_bar
    phi_x_out = _cut(phi_x, rule)
    identified = _identified_support(gamma.grid, rec.identified, gamma)
    logger.info("model 3 (%s): %d identified points, residual %.3g", variant,
                diagnostics["identified_points"], diagnostics["reconstruction_residual"])
    return ModelSolution(phi_xstar=phi_x_out, phi_u=phi_u, identified_mask=identified,
                         diagnostics=diagnostics, f_xstar=_density(phi_x_out),
                         anchors=rec.anchors)


def solve_model4(moments, variant="A", max_order=DEFAULT_MAX_ORDER, threshold=None,
                 curl_tolerance=None, anchors=None, cutoff=None):
    """
    Model 3 plus an independent second error: phi_ux = phi_x / phi_x*.

    Args:
        moments (MomentFns): Model-3 inputs plus phi_x
        variant (str): Model-3 variant

    Returns:
        ModelSolution: phi_xstar, phi_u, phi_ux
    """
    if moments.phi_x is None:
        raise ValueError("model 4 needs phi_x")
    base = solve_model3(moments, variant, False, max_order, threshold, curl_tolerance, anchors)
    tau = _threshold(moments, base.phi_xstar, threshold)
    phi_ux, support_x, _ = divide_on_support(moments.phi_x, base.phi_xstar, tau, max_order)
    keep = support_x.mask & base.identified_mask.mask
    phi_ux = _zero_off(phi_ux, keep)
    diagnostics = dict(base.diagnostics)
    diagnostics["phi_ux_points"] = int(keep.sum())
    rule = _resolve_cutoff(cutoff, base.phi_u, moments.sigma_ecf)
    if rule is not None:
        diagnostics["cutoff_radius"] = rule.B_bar
    phi_x = _cut(base.phi_xstar, rule)
    return replace(base, phi_xstar=phi_x, phi_ux=_cut(phi_ux, rule), diagnostics=diagnostics,
                   f_xstar=_density(phi_x))


def solve_model4a(moments, variant="A", max_order=DEFAULT_MAX_ORDER, threshold=None,
                  curl_tolerance=None, anchors=None, cutoff=None):
    """
    Model 4 through the difference d = x - z = u_x - u.

    The Kotlyarski step on d recovers phi_ux and phi_{-u} without involving
    x*; variant B integrates phi_ux, variant A integrates phi_{-u}. Then
    phi_u = conj(phi_{-u}) and phi_x* = phi_x / phi_ux.

    Args:
        moments (MomentFns): phi_x, phi_zx, dphi_diff_k, eps_diff_k
        variant (str): 'A' or 'B'

    Returns:
        ModelSolution: phi_xstar, phi_u, phi_ux
    """
    for name in ("phi_x", "phi_zx", "dphi_diff_k", "eps_diff_k"):
        if getattr(moments, name) is None:
            raise ValueError(f"model 4a needs {name}")
    if variant not in ("A", "B"):
        raise ValueError(f"variant must be A or B, got {variant}")
    gamma = moments.phi_zx.conj()
    tau = _threshold(moments, gamma, threshold)
    curl_tol = _curl_tolerance(moments, curl_tolerance)
    if variant == "A":
        nums = [pointwise("sub", dd, ed) for dd, ed in zip(moments.dphi_diff_k, moments.eps_diff_k)]
    else:
        nums = list(moments.eps_diff_k)
    rec, other, kappa = _two_factor(gamma, nums, 1.0, tau, max_order, curl_tol, anchors)
    integrated = _zero_off(rec.values, rec.identified)
    if variant == "A":
        phi_minus_u, phi_ux = integrated, other
    else:
        phi_ux, phi_minus_u = integrated, other
    phi_u = phi_minus_u.conj()
    diagnostics = _diagnostics(kappa, rec, gamma, phi_ux, phi_minus_u, tau)
    diagnostics["variant"] = variant

    tau_x = _threshold(moments, phi_ux, threshold)
    phi_x, support_ux, _ = divide_on_support(moments.phi_x, phi_ux, tau_x, max_order)
    keep = support_ux.mask & rec.identified
    phi_x = _zero_off(phi_x, keep)
    diagnostics["phi_xstar_points"] = int(keep.sum())
    rule = _resolve_cutoff(cutoff, phi_u, moments.sigma_ecf)
    if rule is not None:
        diagnostics["cutoff_radius"] = rule.B_bar
    phi_x = _cut(phi_x, rule)
    identified = _identified_support(gamma.grid, rec.identified, gamma)
    return ModelSolution(phi_xstar=phi_x, phi_u=phi_u, phi_ux=phi_ux, identified_mask=identified,
                         diagnostics=diagnostics, f_xstar=_density(phi_x), anchors=rec.anchors)


def _spatial_ratio(numerator, density, fraction):
    f = density.values.real
    keep = f > fraction * np.max(f)
    if not keep.any():
        raise EmptySupportError("the latent density is negligible everywhere")
    g = np.zeros(f.shape)
    g[keep] = numerator.values.real[keep] / f[keep]
    return GridFn(density.grid, g), keep


def solve_model5(moments, variant="A", max_order=DEFAULT_MAX_ORDER, threshold=None,
                 curl_tolerance=None, anchors=None, cutoff=None, spatial_fraction=None):
    """
    Errors-in-variables regression with a second measurement.

    Step 1 solves eps = Ft(g f_x*) phi_u with numerators eps_k (Ft(g f_x*),
    anchored at mean y) or eps'_k - eps_k (phi_u, anchored at 1) for
    variants A and B. Step 2 is phi_x* = phi_z / phi_u. Step 3 divides the
    two inverse transforms where the latent density exceeds a fraction of
    its maximum.

    Args:
        moments (MomentFns): phi_z, eps, eps_k, deps_k, mean_y
        variant (str): 'A' or 'B'
        spatial_fraction (float, optional): Density mask level, default 1e-3

    Returns:
        ModelSolution: phi_xstar, phi_u, ft_g = Ft(g f_x*), g_hat, f_xstar
    """
    for name in ("eps", "eps_k"):
        if getattr(moments, name) is None:
            raise ValueError(f"model 5 needs {name}")
    if variant not in ("A", "B"):
        raise ValueError(f"variant must be A or B, got {variant}")
    fraction = DEFAULTS["spatial_mask_fraction"] if spatial_fraction is None else spatial_fraction
    gamma = moments.eps
    tau = _threshold(moments, gamma, threshold)
    curl_tol = _curl_tolerance(moments, curl_tolerance)
    if variant == "A":
        anchor = moments.mean_y if moments.mean_y is not None else gamma.origin_value
        nums = list(moments.eps_k)
    else:
        if moments.deps_k is None:
            raise ValueError("model 5 variant B needs deps_k")
        anchor = 1.0
        nums = [pointwise("sub", de, ek) for de, ek in zip(moments.deps_k, moments.eps_k)]
    # Step 1: split eps into Ft(g f_x*) and phi_u
    rec, other, kappa = _two_factor(gamma, nums, anchor, tau, max_order, curl_tol, anchors)
    integrated = _zero_off(rec.values, rec.identified)
    if variant == "A":
        ft_gf, phi_u = integrated, other
    else:
        phi_u, ft_gf = integrated, other
    diagnostics = _diagnostics(kappa, rec, gamma, ft_gf, phi_u, tau)
    diagnostics["variant"] = variant

    # Step 2: deconvolve z
    tau_z = _threshold(moments, moments.phi_z, threshold)
    phi_x, support_u, _ = divide_on_support(moments.phi_z, phi_u, tau_z, max_order)
    keep = support_u.mask & rec.identified
    phi_x = _zero_off(phi_x, keep)
    rule = _resolve_cutoff(cutoff, phi_u, moments.sigma_ecf)
    if rule is not None:
        diagnostics["cutoff_radius"] = rule.B_bar
    phi_x = _cut(phi_x, rule)
    ft_gf = _cut(_zero_off(ft_gf, keep), rule)
    # Step 3: divide in space
    f_x = _density(phi_x)
    g_hat, spatial = _spatial_ratio(_density(ft_gf), f_x, fraction)
    diagnostics["spatial_mask_points"] = int(spatial.sum())
    identified = _identified_support(gamma.grid, keep, gamma)
    return ModelSolution(phi_xstar=phi_x, phi_u=phi_u, g_hat=g_hat, identified_mask=identified,
                         diagnostics=diagnostics, f_xstar=f_x, ft_g=ft_gf, anchors=rec.anchors)


def solve_model6(phi_z, phi_x, w_grid, flags=None, threshold=None, cutoff=None,
                 eps=None, sigma=0.0):
    """
    Berkson-error regression: phi_{-u} = phi_x / phi_z and Ft(g) = eps / phi_u.

    Args:
        phi_z (GridFn): CF of z
        phi_x (GridFn): CF of x = z - u
        w_grid (GridFn): E(y | z) on the spatial grid
        flags (numpy.ndarray, optional): Low-density nodes of w_grid
        threshold (float, optional): Support threshold, default 1e-10
        cutoff (CutoffRule or str, optional): Applied to Ft(g)
        eps (GridFn, optional): Precomputed Ft of the windowed w
        sigma (float): ECF noise scale

    Returns:
        ModelSolution: phi_u, ft_g and g_hat
    """
    tau = threshold if threshold is not None else DEFAULTS["exact_threshold"]
    if eps is None:
        eps = regression_transform(w_grid, flags)
    support_z = detect_support(phi_z, tau)
    phi_minus_u = safe_divide(phi_x, phi_z, support_z)
    phi_u = phi_minus_u.conj()
    support_u = detect_support(phi_u, tau)
    keep = support_u.mask & support_z.mask
    ft_g = safe_divide(eps, phi_u, keep)
    rule = _resolve_cutoff(cutoff, phi_u, sigma)
    ft_g = _cut(ft_g, rule)
    g_hat = inverse_transform(ft_g).real()
    diagnostics = {"support_threshold": tau, "identified_points": int(keep.sum())}
    if rule is None:
        scale = max(float(np.max(np.abs(eps.values))), 1e-300)
        resid = np.abs(ft_g.values[keep] * phi_u.values[keep] - eps.values[keep])
        diagnostics["reconstruction_residual"] = float(np.max(resid)) / scale
    else:
        diagnostics["cutoff_radius"] = rule.B_bar
    identified = _identified_support(phi_z.grid, keep, phi_z)
    return ModelSolution(phi_u=phi_u, g_hat=g_hat, ft_g=ft_g, identified_mask=identified,
                         diagnostics=diagnostics)


def solve_model7(moments, variant="A", max_order=DEFAULT_MAX_ORDER, threshold=None,
                 curl_tolerance=None, anchors=None, cutoff=None):
    """
    Regression with classical error and a Berkson instrument: Ft(g) phi_u = eps.

    Variant A integrates Ft(g) from eps_k, anchored at eps(0) = Ft(g)(0);
    variant B integrates phi_u from eps'_k - eps_k, anchored at 1.

    Args:
        moments (MomentFns): eps, eps_k and (variant B) deps_k
        variant (str): 'A' or 'B'

    Returns:
        ModelSolution: phi_u, ft_g and g_hat
    """
    if moments.eps is None or moments.eps_k is None:
        raise ValueError("model 7 needs eps and eps_k")
    if variant not in ("A", "B"):
        raise ValueError(f"variant must be A or B, got {variant}")
    gamma = moments.eps
    tau = _threshold(moments, gamma, threshold)
    curl_tol = _curl_tolerance(moments, curl_tolerance)
    if variant == "A":
        anchor = gamma.origin_value
        nums = list(moments.eps_k)
    else:
        if moments.deps_k is None:
            raise ValueError("model 7 variant B needs deps_k")
        anchor = 1.0
        nums = [pointwise("sub", de, ek) for de, ek in zip(moments.deps_k, moments.eps_k)]
    rec, other, kappa = _two_factor(gamma, nums, anchor, tau, max_order, curl_tol, anchors)
    integrated = _zero_off(rec.values, rec.identified)
    if variant == "A":
        ft_g, phi_u = integrated, other
    else:
        phi_u, ft_g = integrated, other
    diagnostics = _diagnostics(kappa, rec, gamma, ft_g, phi_u, tau)
    diagnostics["variant"] = variant
    rule = _resolve_cutoff(cutoff, phi_u, moments.sigma_ecf)
    if rule is not None:
        diagnostics["cutoff_radius"] = rule.B_bar
    ft_g = _cut(ft_g, rule)
    identified = _identified_support(gamma.grid, rec.identified, gamma)
    return ModelSolution(phi_u=phi_u, ft_g=ft_g, g_hat=inverse_transform(ft_g).real(),
                         identified_mask=identified, diagnostics=diagnostics, anchors=rec.anchors)


# --- AR(1) errors -----------------------------------------------------------

def weighted_median(values, weights):
    """
    Smallest value whose cumulative weight reaches half the total.

    Args:
        values (numpy.ndarray): Values
        weights (numpy.ndarray): Non-negative weights

    Returns:
        float: Weighted median
    """
    order = np.argsort(values, kind="stable")
    v, w = values[order], weights[order]
    cum = np.cumsum(w)
    return float(v[np.searchsorted(cum, 0.5 * cum[-1])])


def estimate_rho(w_x, w_y, zfz, window=None, min_fraction=1e-3):
    """
    rho = (w_y - w_x) / (w_x - z f(z)) aggregated by a weighted median.

    Args:
        w_x (GridFn): E(x f_z(z) | z) on a SpaceGrid
        w_y (GridFn): E(y2 f_z(z) | z) on the same grid
        zfz (GridFn): z f_z(z)
        window (tuple, optional): (lo, hi) evaluation interval; whole grid if None
        min_fraction (float): Denominators below this fraction of the largest
            one in the window are ignored

    Returns:
        float: Estimate of rho
    """
    grid = w_x.grid
    den = (w_x.values - zfz.values).real.reshape(-1)
    num = (w_y.values - w_x.values).real.reshape(-1)
    x = grid.coords()[0].reshape(-1)
    inside = np.ones_like(den, dtype=bool)
    if window is not None:
        inside = (x >= window[0]) & (x <= window[1])
    weights = np.abs(den)
    top = float(np.max(weights[inside])) if inside.any() else 0.0
    use = inside & (weights > min_fraction * top)
    if top == 0.0 or not use.any():
        raise NumericalError("denominator w_x - z f(z) vanishes on the evaluation window")
    rho = weighted_median(num[use] / den[use], weights[use])
    if abs(rho - 1.0) < 1e-12:
        raise NumericalError("estimated rho equals 1; the AR(1) system is not identified")
    logger.info("rho estimate %.6g from %d points", rho, int(use.sum()))
    return rho


def _z_spread(ft_zf):
    mean = float(ft_zf.origin_value.real)
    second = float(grid_derivative(ft_zf, 0).origin_value.imag)
    return mean, float(np.sqrt(max(second - mean ** 2, 0.0)))


def rho_from_moments(moments, window_sd=2.0):
    """
    Estimate rho from Ft(w_x), Ft(w_y) and Ft(z f) held in the moments.

    Sampled inputs are low-passed by the plug-in cut-off of phi_z before the
    inverse transform; the ratio is read on [mean - 2 sd, mean + 2 sd] of z.

    Args:
        moments (MomentFns): With ft_wx, ft_wy, ft_zf
        window_sd (float): Window half-width in standard deviations of z

    Returns:
        float: Estimate of rho
    """
    if moments.ft_wx is None or moments.ft_wy is None or moments.ft_zf is None:
        raise ValueError("rho needs ft_wx, ft_wy and ft_zf")
    fns = [moments.ft_wx, moments.ft_wy, moments.ft_zf]
    if not moments.exact:
        rule = heuristic_cutoff(moments.phi_z, moments.sigma_ecf)
        fns = [apply_cutoff(f, rule) for f in fns]
    w_x, w_y, zf = (inverse_transform(f) for f in fns)
    mean, sd = _z_spread(moments.ft_zf)
    window = (mean - window_sd * sd, mean + window_sd * sd) if sd > 0 else None
    return estimate_rho(w_x, w_y, zf, window)


def solve_ar1(moments, rho=None, variant="B", **kwargs):
    """
    Model 3 with AR(1)-linked errors u_x = rho u + eta.

    eps_k is corrected to (eps_k - rho (phi_z)'_k) / (1 - rho) before model 3.

    Args:
        moments (MomentFns): Model-3 inputs plus the ft_w* functions
        rho (float, optional): Known rho; estimated when None
        variant (str): Model-3 variant
        **kwargs: Passed to solve_model3

    Returns:
        ModelSolution: Model-3 solution with rho_hat
    """
    if rho is None:
        rho = rho_from_moments(moments)
    if rho == 1.0:
        raise NumericalError("rho = 1 leaves the AR(1) system unidentified")
    corrected = [pointwise("scale", pointwise("sub", ek, pointwise("scale", dz, rho)), 1.0 / (1.0 - rho))
                 for ek, dz in zip(moments.eps_k, moments.dphi_z_k)]
    base = solve_model3(replace(moments, eps_k=corrected), variant, **kwargs)
    diagnostics = dict(base.diagnostics)
    diagnostics["rho_hat"] = rho
    return replace(base, rho_hat=rho, diagnostics=diagnostics)


# --- common factor ----------------------------------------------------------

def reduce_factor_model(A, ztilde, partition=None):
    """
    Reduce ztilde = A x* + u~ to two measurements z = T1 ztilde_1, x = T2 ztilde_2.

    Args:
        A (array-like): m x d loading matrix
        ztilde (numpy.ndarray): n x m indicators
        partition (sequence, optional): Row indices forming A_1; default first m // 2

    Returns:
        tuple: (Sample with z and x, T1, T2)
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError("A must be a matrix")
    m, d = A.shape
    rows1 = list(range(m // 2)) if partition is None else [int(r) for r in partition]
    rows2 = [r for r in range(m) if r not in rows1]
    if not rows1 or not rows2 or any(r < 0 or r >= m for r in rows1):
        raise ValueError(f"partition {rows1} must split the {m} rows into two non-empty blocks")
    A1, A2 = A[rows1], A[rows2]
    for name, block in (("A_1", A1), ("A_2", A2)):
        if np.linalg.matrix_rank(block) < d:
            raise RankError(f"{name} has rank {np.linalg.matrix_rank(block)} < {d}")
    T1, T2 = np.linalg.pinv(A1), np.linalg.pinv(A2)
    for name, T, block in (("T_1", T1, A1), ("T_2", T2, A2)):
        resid = float(np.linalg.norm(T @ block - np.eye(d)))
        if resid >= RANK_RESIDUAL_TOL:
            raise RankError(f"{name} A fails the identity check (residual {resid:.3g})")
    ztilde = np.asarray(ztilde, dtype=float)
    if ztilde.ndim == 1:
        ztilde = ztilde[:, None]
    if ztilde.shape[1] != m:
        raise ValueError(f"ztilde has {ztilde.shape[1]} columns, A has {m} rows")
    z = ztilde[:, rows1] @ T1.T
    x = ztilde[:, rows2] @ T2.T
    return Sample(z=z, x=x), T1, T2


# --- partial identification -------------------------------------------------

def identified_component(solution, W_u, which="phi_xstar"):
    """
    Restrict a recovered CF to the component of W_u holding s = 0.

    Args:
        solution (ModelSolution or GridFn): Recovered CF source
        W_u (SupportMask): Support of the error CF
        which (str): Attribute of the solution to restrict

    Returns:
        tuple: (phi_1 GridFn, flag GridFn equal to 1 where not identified)
    """
    phi = solution if isinstance(solution, GridFn) else getattr(solution, which)
    if phi is None:
        raise ValueError(f"solution has no {which}")
    if W_u.contains_zero is None:
        raise EmptySupportError("error support does not contain s = 0")
    keep = W_u.members(W_u.contains_zero)
    phi_1 = GridFn(phi.grid, np.where(keep, phi.values, 0.0), phi.hermitian)
    flag = GridFn(phi.grid, (~keep).astype(float))
    return phi_1, flag


def solve_factor(A, ztilde, grid, partition=None, variant="A", **kwargs):
    """
    Common-factor model: reduce the indicators to two measurements, then model 3.

    Args:
        A (array-like): m x d loading matrix
        ztilde (numpy.ndarray): n x m indicators
        grid (FreqGrid): Frequency grid of dimension d
        partition (sequence, optional): Rows of A_1
        variant (str): Model-3 variant
        **kwargs: Passed to solve_model3

    Returns:
        ModelSolution: Model-3 solution for x* and the reduced error
    """
    sample, T1, T2 = reduce_factor_model(A, ztilde, partition)
    moments = sample_moments(sample, grid, "factor")
    base = solve_model3(moments, variant, **kwargs)
    diagnostics = dict(base.diagnostics)
    diagnostics["factor_rows"] = int(np.asarray(A).shape[0])
    return replace(base, diagnostics=diagnostics)
