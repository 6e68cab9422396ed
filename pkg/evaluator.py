"""
Scoring of recovered functions against ground truth.
"""

import logging

import numpy as np

from grid import GridFn, inverse_transform
from support import SupportMask

logger = logging.getLogger(__name__)

CF_WINDOW = 3.0
G_WINDOW = 1.0


def _as_mask(grid, mask):
    if mask is None:
        return np.ones(grid.shape, dtype=bool)
    if isinstance(mask, SupportMask):
        return mask.mask
    return np.asarray(mask, dtype=bool).reshape(grid.shape)


def central_mask(grid, radius):
    """
    Points with every coordinate in [-radius, radius].

    Args:
        grid (FreqGrid or SpaceGrid): Grid
        radius (float): Half-width of the box

    Returns:
        numpy.ndarray: Boolean array
    """
    keep = np.ones(grid.shape, dtype=bool)
    for c in grid.coords():
        keep &= np.abs(c) <= radius + 1e-12
    return keep


def metric_cf(phi_hat, phi_true, mask=None):
    """
    Sup-norm and integrated squared error of a recovered CF on a mask.

    Args:
        phi_hat (GridFn): Estimate
        phi_true (GridFn): Truth on the same grid
        mask (SupportMask or numpy.ndarray, optional): Region; whole grid if None

    Returns:
        tuple: (sup |diff|, sum |diff|^2 * ds^d)
    """
    if not phi_hat.grid.same_as(phi_true.grid):
        raise ValueError("metric_cf needs functions on the same grid")
    keep = _as_mask(phi_hat.grid, mask)
    if not keep.any():
        return 0.0, 0.0
    diff = np.abs(phi_hat.values[keep] - phi_true.values[keep])
    return float(np.max(diff)), float(np.sum(diff ** 2) * phi_hat.grid.cell)


def mass_point_estimate(phi_hat, x0):
    """
    Atom size at x0 as the average of phi(s) e^{-i s x0} over the frequency grid.

    Args:
        phi_hat (GridFn): Recovered CF
        x0 (float or sequence): Atom location

    Returns:
        float: Estimated mass
    """
    grid = phi_hat.grid
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (grid.dim,))
    phase = sum(c * x for c, x in zip(grid.coords(), x0))
    return float(np.mean(phi_hat.values * np.exp(-1j * phase)).real)


def density_ise(f_hat, f_true, window=None):
    """
    dx^d * sum (f_hat - f_true)^2 on a spatial window.

    Args:
        f_hat (GridFn): Estimated density on a SpaceGrid
        f_true (GridFn): True density
        window (float, optional): Box half-width; whole grid if None

    Returns:
        float: Integrated squared error
    """
    grid = f_hat.grid
    keep = central_mask(grid, window) if window is not None else np.ones(grid.shape, dtype=bool)
    diff = f_hat.values.real[keep] - f_true.values.real[keep]
    return float(np.sum(diff ** 2) * grid.cell)


def density_ise_smoothed(phi_hat, phi_true, mask):
    """
    ISE between the low-pass densities of two CFs restricted to the same mask.

    Args:
        phi_hat (GridFn): Estimate
        phi_true (GridFn): Truth
        mask (SupportMask or numpy.ndarray): Frequencies kept in both

    Returns:
        float: Integrated squared error on the spatial grid
    """
    keep = _as_mask(phi_hat.grid, mask)
    a = inverse_transform(GridFn(phi_hat.grid, np.where(keep, phi_hat.values, 0.0)))
    b = inverse_transform(GridFn(phi_true.grid, np.where(keep, phi_true.values, 0.0)))
    return density_ise(a, b)


def sup_error_on_window(f_hat, f_true, window, extra=None):
    """
    sup |f_hat - f_true| over a spatial box, optionally intersected with a mask.

    Args:
        f_hat (GridFn): Estimate
        f_true (GridFn): Truth
        window (float): Box half-width
        extra (numpy.ndarray, optional): Further mask

    Returns:
        float: Sup error (0 for an empty region)
    """
    keep = central_mask(f_hat.grid, window)
    if extra is not None:
        keep &= extra
    if not keep.any():
        return 0.0
    return float(np.max(np.abs(f_hat.values[keep] - f_true.values[keep])))


def score_solution(solution, truth, window=CF_WINDOW, g_window=G_WINDOW, atom=None):
    """
    Compare every recovered function with its truth.

    CF errors are taken on the identified mask within the central box of
    half-width ``window``; the integrated error uses the whole identified mask.

    Args:
        solution (ModelSolution): Solver output
        truth (dict): Output of simulator.truth_functions
        window (float): Frequency box for sup errors
        g_window (float): Spatial box for regression errors
        atom (float, optional): Location whose mass is estimated from phi_xstar

    Returns:
        dict: Metric name -> float
    """
    metrics = {}
    mask = solution.identified_mask
    for name in ("phi_xstar", "phi_u", "phi_ux", "ft_g"):
        est, true = getattr(solution, name), truth.get(name)
        if est is None or true is None:
            continue
        keep = _as_mask(est.grid, mask) & central_mask(est.grid, window)
        sup, _ = metric_cf(est, true, keep)
        _, ise = metric_cf(est, true, mask)
        metrics[f"{name}_sup_error"] = sup
        metrics[f"{name}_ise"] = ise
    if solution.phi_xstar is not None and truth.get("phi_xstar") is not None:
        metrics["cf_sup_error"] = metrics["phi_xstar_sup_error"]
        metrics["cf_ise"] = metrics["phi_xstar_ise"]
        metrics["density_ise_smoothed"] = density_ise_smoothed(
            solution.phi_xstar, truth["phi_xstar"], mask)
    if solution.g_hat is not None and truth.get("g") is not None:
        metrics["g_sup_error"] = sup_error_on_window(solution.g_hat, truth["g"], g_window)
    if solution.rho_hat is not None and truth.get("rho") is not None:
        metrics["rho_error"] = abs(solution.rho_hat - truth["rho"])
    if atom is not None and solution.phi_xstar is not None:
        metrics["mass_point_estimate"] = mass_point_estimate(solution.phi_xstar, atom)
    logger.debug("scored %d metrics", len(metrics))
    return metrics
