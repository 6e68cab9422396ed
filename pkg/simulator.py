"""
Synthetic harness: parametric latent laws, regression functions, seeded data
generation for every model and the closed-form oracles used for scoring.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
from scipy import stats

from grid import GridFn, forward_transform, inverse_transform
from moments import MomentFns, Sample, regression_transform
from solvers import reduce_factor_model
from utils.config import DEFAULTS, MODELS, SPEC_KEYS, parse_matrix, split_call
from utils.errors import ConfigError

logger = logging.getLogger(__name__)

SMALL_ARGUMENT = 1e-4


# --- distributions ---------------------------------------------------------

class Distribution:
    """
    One-dimensional law. d-dimensional latents use independent coordinates.

    Subclasses implement cf, dcf, sample and, when they exist, density and cdf.
    """

    name = "distribution"
    atoms = ()

    def __init__(self, *params):
        self.params = tuple(params)

    def __repr__(self):
        return f"{self.name}({', '.join(_fmt(p) for p in self.params)})"

    def cf(self, s):
        raise NotImplementedError

    def dcf(self, s):
        raise NotImplementedError

    def sample(self, rng, size):
        raise NotImplementedError

    def density(self, x):
        raise ConfigError(f"{self!r} has no density")

    def cdf(self, x):
        raise ConfigError(f"{self!r} has no closed-form cdf")

    @property
    def mean(self):
        return None

    @property
    def var(self):
        return None


def _fmt(p):
    return repr(p) if isinstance(p, Distribution) else f"{p:g}"


class Gaussian(Distribution):
    name = "gaussian"

    def __init__(self, mu, sigma):
        if not sigma > 0:
            raise ValueError(f"gaussian sigma must be positive, got {sigma}")
        super().__init__(mu, sigma)
        self.mu, self.sigma = float(mu), float(sigma)

    def cf(self, s):
        return np.exp(1j * self.mu * s - 0.5 * (self.sigma * s) ** 2)

    def dcf(self, s):
        return (1j * self.mu - self.sigma ** 2 * s) * self.cf(s)

    def sample(self, rng, size):
        return rng.normal(self.mu, self.sigma, size)

    def density(self, x):
        return stats.norm.pdf(x, self.mu, self.sigma)

    def cdf(self, x):
        return stats.norm.cdf(x, self.mu, self.sigma)

    @property
    def mean(self):
        return self.mu

    @property
    def var(self):
        return self.sigma ** 2


class Laplace(Distribution):
    name = "laplace"

    def __init__(self, b, mu=0.0):
        if not b > 0:
            raise ValueError(f"laplace scale must be positive, got {b}")
        super().__init__(b, mu)
        self.b, self.mu = float(b), float(mu)

    def cf(self, s):
        return np.exp(1j * self.mu * s) / (1.0 + (self.b * s) ** 2)

    def dcf(self, s):
        base = 1.0 + (self.b * s) ** 2
        return np.exp(1j * self.mu * s) * (1j * self.mu / base - 2.0 * self.b ** 2 * s / base ** 2)

    def sample(self, rng, size):
        return rng.laplace(self.mu, self.b, size)

    def density(self, x):
        return stats.laplace.pdf(x, self.mu, self.b)

    def cdf(self, x):
        return stats.laplace.cdf(x, self.mu, self.b)

    @property
    def mean(self):
        return self.mu

    @property
    def var(self):
        return 2.0 * self.b ** 2


class Uniform(Distribution):
    name = "uniform"

    def __init__(self, a, b):
        if not b > a:
            raise ValueError(f"uniform needs a < b, got ({a}, {b})")
        super().__init__(a, b)
        self.a, self.b = float(a), float(b)
        self.centre, self.half = 0.5 * (a + b), 0.5 * (b - a)

    def _sinc(self, s):
        return np.sinc(self.half * s / np.pi)

    def _dsinc(self, s):
        t = self.half * np.asarray(s, dtype=float)
        small = np.abs(t) < SMALL_ARGUMENT
        safe = np.where(small, 1.0, t)
        exact = (safe * np.cos(safe) - np.sin(safe)) / safe ** 2
        return self.half * np.where(small, -t / 3.0, exact)

    def cf(self, s):
        return np.exp(1j * self.centre * s) * self._sinc(s)

    def dcf(self, s):
        return np.exp(1j * self.centre * s) * (1j * self.centre * self._sinc(s) + self._dsinc(s))

    def sample(self, rng, size):
        return rng.uniform(self.a, self.b, size)

    def density(self, x):
        return stats.uniform.pdf(x, self.a, self.b - self.a)

    def cdf(self, x):
        return stats.uniform.cdf(x, self.a, self.b - self.a)

    @property
    def mean(self):
        return self.centre

    @property
    def var(self):
        return self.half ** 2 / 3.0


class Point(Distribution):
    name = "point"

    def __init__(self, x0):
        super().__init__(x0)
        self.x0 = float(x0)
        self.atoms = ((self.x0, 1.0),)

    def cf(self, s):
        return np.exp(1j * self.x0 * np.asarray(s, dtype=float))

    def dcf(self, s):
        return 1j * self.x0 * self.cf(s)

    def sample(self, rng, size):
        return np.full(size, self.x0)

    def density(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def cdf(self, x):
        return (np.asarray(x, dtype=float) >= self.x0).astype(float)

    @property
    def mean(self):
        return self.x0

    @property
    def var(self):
        return 0.0


class Mixture(Distribution):
    """Atom of weight lam at x0 plus (1 - lam) times a continuous law."""

    name = "mixture"

    def __init__(self, lam, x0, inner):
        if not 0 <= lam <= 1:
            raise ValueError(f"mixture weight must lie in [0, 1], got {lam}")
        super().__init__(lam, x0, inner)
        self.lam, self.x0, self.inner = float(lam), float(x0), inner
        self.atoms = ((self.x0, self.lam),) + tuple(
            (a, (1.0 - self.lam) * w) for a, w in inner.atoms)

    def cf(self, s):
        return self.lam * np.exp(1j * self.x0 * s) + (1.0 - self.lam) * self.inner.cf(s)

    def dcf(self, s):
        return 1j * self.x0 * self.lam * np.exp(1j * self.x0 * s) + (1.0 - self.lam) * self.inner.dcf(s)

    def sample(self, rng, size):
        pick = rng.random(size) < self.lam
        cont = self.inner.sample(rng, size)
        return np.where(pick, self.x0, cont)

    def density(self, x):
        return (1.0 - self.lam) * self.inner.density(x)

    def cdf(self, x):
        return self.lam * (np.asarray(x, dtype=float) >= self.x0) + (1.0 - self.lam) * self.inner.cdf(x)

    @property
    def mean(self):
        if self.inner.mean is None:
            return None
        return self.lam * self.x0 + (1.0 - self.lam) * self.inner.mean

    @property
    def var(self):
        if self.inner.var is None:
            return None
        second = self.lam * self.x0 ** 2 + (1.0 - self.lam) * (self.inner.var + self.inner.mean ** 2)
        return second - self.mean ** 2


class Cantor(Distribution):
    """scale * sum_j e_j 3^{-j}, j = 1..levels, with independent fair signs e_j."""

    name = "cantor"

    def __init__(self, levels=DEFAULTS["cantor_levels"], scale=1.0):
        if int(levels) != levels or levels < 1:
            raise ValueError(f"cantor levels must be a positive integer, got {levels}")
        if not scale > 0:
            raise ValueError(f"cantor scale must be positive, got {scale}")
        super().__init__(levels, scale)
        self.levels, self.scale = int(levels), float(scale)
        self.steps = self.scale / 3.0 ** np.arange(1, self.levels + 1)

    def cf(self, s):
        s = np.asarray(s, dtype=float)
        out = np.ones(s.shape, dtype=complex)
        for step in self.steps:
            out = out * np.cos(step * s)
        return out

    def dcf(self, s):
        s = np.asarray(s, dtype=float)
        factors = [np.cos(step * s) for step in self.steps]
        prefix = [np.ones(s.shape)]
        for f in factors[:-1]:
            prefix.append(prefix[-1] * f)
        out = np.zeros(s.shape, dtype=complex)
        suffix = np.ones(s.shape)
        for j in range(self.levels - 1, -1, -1):
            out = out - self.steps[j] * np.sin(self.steps[j] * s) * prefix[j] * suffix
            suffix = suffix * factors[j]
        return out

    def sample(self, rng, size):
        size = (size,) if np.ndim(size) == 0 else tuple(size)
        signs = 2 * rng.integers(0, 2, size + (self.levels,)) - 1
        return signs @ self.steps

    @property
    def mean(self):
        return 0.0

    @property
    def var(self):
        return float(np.sum(self.steps ** 2))


class Fejer(Distribution):
    """Density (1 - cos(a x)) / (pi a x^2) with triangular CF (1 - |s|/a)_+."""

    name = "fejer"

    def __init__(self, width):
        if not width > 0:
            raise ValueError(f"fejer width must be positive, got {width}")
        super().__init__(width)
        self.width = float(width)

    def cf(self, s):
        return np.clip(1.0 - np.abs(s) / self.width, 0.0, None).astype(complex)

    def dcf(self, s):
        s = np.asarray(s, dtype=float)
        inside = np.abs(s) < self.width
        return np.where(inside, -np.sign(s) / self.width, 0.0).astype(complex)

    def density(self, x):
        x = np.asarray(x, dtype=float)
        small = np.abs(self.width * x) < SMALL_ARGUMENT
        safe = np.where(small, 1.0, x)
        value = (1.0 - np.cos(self.width * safe)) / (np.pi * self.width * safe ** 2)
        return np.where(small, self.width / (2.0 * np.pi), value)

    def sample(self, rng, size):
        size = (size,) if np.ndim(size) == 0 else tuple(size)
        total = int(np.prod(size))
        gamma = 2.0 / self.width
        out = np.empty(0)
        while out.size < total:
            need = 2 * (total - out.size) + 16
            prop = gamma * rng.standard_cauchy(need)
            accept = rng.random(need) * 2.0 * stats.cauchy.pdf(prop, 0.0, gamma) < self.density(prop)
            out = np.concatenate([out, prop[accept]])
        return out[:total].reshape(size)


_LAWS = {
    "gaussian": (Gaussian, 2, 2),
    "laplace": (Laplace, 1, 2),
    "uniform": (Uniform, 2, 2),
    "point": (Point, 1, 1),
    "cantor": (Cantor, 0, 2),
    "fejer": (Fejer, 1, 1),
}


def parse_distribution(text):
    """
    Parse a law written in call syntax, e.g. 'mixture(0.3, 0, gaussian(0, 1))'.

    Args:
        text (str): Law expression

    Returns:
        Distribution: Parsed law
    """
    name, args = split_call(text)
    if name == "mixture":
        if len(args) != 3:
            raise ValueError(f"mixture takes (lam, x0, law), got '{text}'")
        return Mixture(float(args[0]), float(args[1]), parse_distribution(args[2]))
    if name not in _LAWS:
        raise ValueError(f"unknown distribution '{name}'")
    cls, low, high = _LAWS[name]
    if not low <= len(args) <= high:
        raise ValueError(f"{name} takes {low} to {high} arguments, got {len(args)}")
    values = [float(a) for a in args]
    if name == "cantor" and values:
        values[0] = int(values[0])
    return cls(*values)


# --- regression functions --------------------------------------------------

class Regression:
    """
    Regression function g with the transforms the oracles need.

    Args:
        name (str): linear, quadratic, indicator, constant, bump or bump_sum
        param (float, optional): constant value or bump width
    """

    INTEGRABLE = ("bump", "bump_sum")
    DEFAULT_PARAM = {"constant": 1.0, "bump": 0.5, "bump_sum": 0.3}

    def __init__(self, name, param=None):
        if name not in ("linear", "quadratic", "indicator", "constant", "bump", "bump_sum"):
            raise ValueError(f"unknown regression function '{name}'")
        self.name = name
        self.param = float(param) if param is not None else self.DEFAULT_PARAM.get(name)
        if name in self.INTEGRABLE and not self.param > 0:
            raise ValueError(f"{name} width must be positive, got {self.param}")

    def __repr__(self):
        return self.name if self.param is None else f"{self.name}({self.param:g})"

    @property
    def integrable(self):
        return self.name in self.INTEGRABLE

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.name == "linear":
            return x
        if self.name == "quadratic":
            return x ** 2
        if self.name == "indicator":
            return (x > 0).astype(float)
        if self.name == "constant":
            return np.full(x.shape, self.param)
        w = self.param
        if self.name == "bump":
            return np.exp(-0.5 * (x / w) ** 2)
        return np.exp(-0.5 * ((x - 1) / w) ** 2) + np.exp(-0.5 * ((x + 1) / w) ** 2)

    def ft(self, s):
        """Ft(g)(s) for integrable g."""
        if not self.integrable:
            raise ConfigError(f"{self!r} has no Fourier transform as a function")
        w = self.param
        base = w * np.sqrt(2 * np.pi) * np.exp(-0.5 * (w * s) ** 2)
        return base.astype(complex) if self.name == "bump" else (2.0 * base * np.cos(s)).astype(complex)

    def dft(self, s):
        """Derivative of Ft(g)."""
        if not self.integrable:
            raise ConfigError(f"{self!r} has no Fourier transform as a function")
        w = self.param
        base = w * np.sqrt(2 * np.pi) * np.exp(-0.5 * (w * s) ** 2)
        if self.name == "bump":
            return (-w ** 2 * s * base).astype(complex)
        return (2.0 * base * (-w ** 2 * s * np.cos(s) - np.sin(s))).astype(complex)

    def berkson_mean(self, z, law, freq_grid=None):
        """
        E g(z - u) for u distributed as ``law``.

        Args:
            z (numpy.ndarray): Points (1-d grid coordinates)
            law (Distribution): Law of u
            freq_grid (FreqGrid, optional): Needed for integrable g

        Returns:
            numpy.ndarray: Conditional means
        """
        z = np.asarray(z, dtype=float)
        if self.name == "constant":
            return np.full(z.shape, self.param)
        if self.name == "indicator":
            return law.cdf(z)
        if self.name in ("linear", "quadratic"):
            if law.mean is None or law.var is None:
                raise ConfigError(f"{law!r} has no finite moments for a {self.name} regression")
            if self.name == "linear":
                return z - law.mean
            return (z - law.mean) ** 2 + law.var
        if freq_grid is None:
            raise ValueError("integrable g needs the frequency grid")
        s = freq_grid.axis()
        return inverse_transform(GridFn(freq_grid, self.ft(s) * law.cf(s))).values.real


def parse_regression(text):
    name, args = split_call(text)
    if len(args) > 1:
        raise ValueError(f"regression '{name}' takes at most one argument")
    return Regression(name, float(args[0]) if args else None)


# --- model specs -----------------------------------------------------------

REQUIRED_LAWS = {
    "1": ("xstar", "u"),
    "2": ("z", "u"),
    "3": ("xstar", "u", "u_x"),
    "4": ("xstar", "u", "u_x"),
    "4a": ("xstar", "u", "u_x"),
    "5": ("xstar", "u", "u_x"),
    "6": ("z", "u"),
    "7": ("z", "u", "u_x"),
    "ar1": ("xstar", "u", "eta", "eta1"),
    "factor": ("xstar", "u"),
}
LAW_KEYS = ("xstar", "z", "u", "u_x", "v", "eta", "eta1")
REGRESSION_MODELS = ("5", "6", "7")
ONE_DIMENSIONAL = ("5", "6", "7", "ar1")


@dataclass(frozen=True)
class ModelSpec:
    """
    Forward model: which equations, which latent laws, and the extra parameters.

    ``laws`` maps latent names (xstar, z, u, u_x, v, eta, eta1) to laws; ``v``
    defaults to point(0). ``source`` keeps the spec text per key for writing.
    """

    model: str
    laws: Dict[str, Distribution]
    variant: str = "A"
    d: int = 1
    g: Optional[Regression] = None
    rho: Optional[float] = None
    A: Optional[np.ndarray] = field(default=None, repr=False)
    partition: Optional[tuple] = None
    swap_labels: bool = False
    source: Dict[str, str] = field(default_factory=dict, repr=False)

    def law(self, name):
        if name == "v" and "v" not in self.laws:
            return Point(0.0)
        return self.laws[name]

    def validate(self):
        if self.model not in MODELS:
            raise ConfigError(f"unknown model '{self.model}'")
        if self.variant not in ("A", "B"):
            raise ConfigError(f"variant must be A or B, got '{self.variant}'")
        if not 1 <= self.d <= 3:
            raise ConfigError(f"d must be 1, 2 or 3, got {self.d}")
        missing = [k for k in REQUIRED_LAWS[self.model] if k not in self.laws]
        if missing:
            raise ConfigError(f"model {self.model} needs {', '.join(missing)}")
        if self.model in ONE_DIMENSIONAL and self.d != 1:
            raise ConfigError(f"model {self.model} is implemented for d = 1 only")
        if self.model in REGRESSION_MODELS and self.g is None:
            raise ConfigError(f"model {self.model} needs g")
        if self.model == "ar1":
            if self.rho is None:
                raise ConfigError("model ar1 needs rho")
            if self.rho == 1.0:
                raise ConfigError("rho = 1 is not identified")
        if self.model == "factor":
            if self.A is None:
                raise ConfigError("model factor needs A")
            if self.A.shape[1] != self.d:
                raise ConfigError(f"A has {self.A.shape[1]} columns, d = {self.d}")
        return self


def load_model_spec(config):
    """
    Build a ModelSpec from a parsed config, reporting the offending line on error.

    Args:
        config (Config): Parsed spec or sweep file

    Returns:
        ModelSpec: Validated spec
    """
    if "model" not in config:
        raise ConfigError("missing required key 'model'", config.path)
    model = config.get_str("model")
    if model not in MODELS:
        raise config.error("model", f"unknown model '{model}'")
    laws = {}
    for key in LAW_KEYS:
        if key in config:
            try:
                laws[key] = parse_distribution(config.raw(key))
            except ValueError as exc:
                raise config.error(key, str(exc)) from None
    g = None
    if "g" in config:
        try:
            g = parse_regression(config.raw("g"))
        except ValueError as exc:
            raise config.error("g", str(exc)) from None
    A = None
    if "A" in config:
        try:
            A = np.array(parse_matrix(config.raw("A")))
        except ValueError as exc:
            raise config.error("A", str(exc)) from None
    partition = None
    if "partition" in config:
        partition = tuple(config.get_int_list("partition"))
    rho = config.get_float("rho") if "rho" in config else None
    source = {k: config.raw(k) for k in config.keys() if k in SPEC_KEYS}
    spec = ModelSpec(model=model, laws=laws, variant=config.get_str("variant"),
                     d=config.get_int("d"), g=g, rho=rho, A=A, partition=partition,
                     swap_labels=config.get_bool("swap_labels", False), source=source)
    try:
        return spec.validate()
    except ConfigError as exc:
        raise ConfigError(str(exc), config.path) from None


def spec_text(spec):
    """Key = value text that load_model_spec reads back into the same spec."""
    lines = [f"{key} = {value}" for key, value in spec.source.items()]
    if "model" not in spec.source:
        lines.insert(0, f"model = {spec.model}")
    return "\n".join(lines) + "\n"


# --- generation ------------------------------------------------------------

def _draw(spec, name, rng, n):
    return spec.law(name).sample(rng, (n, spec.d))


def generate(spec, n, seed):
    """
    Draw one synthetic data set.

    Latents are drawn in a fixed order from numpy.random.default_rng(seed), so
    the output depends on (spec, n, seed) only.

    Args:
        spec (ModelSpec): Forward model
        n (int): Sample size, >= 2
        seed (int): Seed

    Returns:
        tuple: (Sample, dict of latent arrays)
    """
    if int(n) != n or n < 2:
        raise ValueError(f"n must be an integer >= 2, got {n}")
    n = int(n)
    rng = np.random.default_rng(seed)
    model = spec.model
    lat = {}
    if model in ("2", "6", "7"):
        lat["z"] = _draw(spec, "z", rng, n)
        lat["u"] = _draw(spec, "u", rng, n)
        lat["xstar"] = lat["z"] - lat["u"]
    else:
        lat["xstar"] = _draw(spec, "xstar", rng, n)
        if model == "factor":
            m = spec.A.shape[0]
            lat["u"] = spec.law("u").sample(rng, (n, m))
            lat["ztilde"] = lat["xstar"] @ spec.A.T + lat["u"]
            return Sample(z=lat["ztilde"]), lat
        lat["u"] = _draw(spec, "u", rng, n)
        lat["z"] = lat["xstar"] + lat["u"]

    if model in ("1", "2"):
        return Sample(z=lat["z"]), lat
    if model == "ar1":
        lat["eta"] = _draw(spec, "eta", rng, n)
        lat["eta1"] = _draw(spec, "eta1", rng, n)
        lat["u_x"] = spec.rho * lat["u"] + lat["eta"]
        lat["u_y"] = spec.rho * lat["u_x"] + lat["eta1"]
        x = lat["xstar"] + lat["u_x"]
        y2 = lat["xstar"] + lat["u_y"]
        return Sample(z=lat["z"], x=x, y2=y2[:, 0]), lat
    if model == "6":
        lat["v"] = _draw(spec, "v", rng, n)
        y = spec.g(lat["xstar"][:, 0]) + lat["v"][:, 0]
        return Sample(z=lat["z"], x=lat["xstar"], y=y), lat

    lat["u_x"] = _draw(spec, "u_x", rng, n)
    x = lat["xstar"] + lat["u_x"]
    if model in ("5", "7"):
        lat["v"] = _draw(spec, "v", rng, n)
        y = spec.g(lat["xstar"][:, 0]) + lat["v"][:, 0]
        return Sample(z=lat["z"], x=x, y=y), lat
    return Sample(z=lat["z"], x=x), lat


# --- oracles ---------------------------------------------------------------

def true_cf(law, grid):
    """
    CF of a law on a frequency grid, independent coordinates in d >= 2.

    Args:
        law (Distribution): Law
        grid (FreqGrid): Frequency grid

    Returns:
        GridFn: prod_k cf(s_k)
    """
    values = np.ones(grid.shape, dtype=complex)
    for c in grid.coords():
        values = values * law.cf(c)
    return GridFn.auto(grid, values)


def true_dcf(law, grid, k):
    """Partial derivative along axis k of the product CF."""
    coords = grid.coords()
    values = np.ones(grid.shape, dtype=complex)
    for j, c in enumerate(coords):
        values = values * (law.dcf(c) if j == k else law.cf(c))
    return GridFn(grid, values)


def true_density(law, grid):
    """Product density on a spatial grid (continuous part only)."""
    values = np.ones(grid.shape)
    for c in grid.coords():
        values = values * law.density(c)
    return GridFn(grid, values)


def _gaussian_reduced_error(spec, T, freq):
    law = spec.law("u")
    if not isinstance(law, Gaussian):
        raise ConfigError("exact factor moments need a gaussian indicator error")
    cov = law.sigma ** 2 * T @ T.T
    coords = freq.coords()
    quad = sum(cov[j, k] * coords[j] * coords[k] for j in range(spec.d) for k in range(spec.d))
    mean_shift = law.mu * (T @ np.ones(T.shape[1]))
    phase = sum(mean_shift[k] * coords[k] for k in range(spec.d))
    values = np.exp(1j * phase - 0.5 * quad)
    grads = []
    for k in range(spec.d):
        lin = 1j * mean_shift[k] - sum(cov[k, j] * coords[j] for j in range(spec.d))
        grads.append(GridFn(freq, lin * values))
    return GridFn.auto(freq, values), grads


def _factor_blocks(spec):
    m = spec.A.shape[0]
    _, T1, T2 = reduce_factor_model(spec.A, np.zeros((2, m)), spec.partition)
    return T1, T2


def _weighted_ft(law, weight, freq, space):
    """Ft(weight * f) for a 1-d law, atoms included analytically."""
    x = space.axis()
    cont = forward_transform(GridFn(space, weight(x) * law.density(x))).values
    s = freq.axis()
    for x0, p in law.atoms:
        cont = cont + p * weight(np.array(x0)) * np.exp(1j * s * x0)
    return GridFn.auto(freq, cont)


def truth_functions(spec, freq, space):
    """
    True values of every function the model's solver recovers.

    Args:
        spec (ModelSpec): Forward model
        freq (FreqGrid): Frequency grid
        space (SpaceGrid): Paired spatial grid

    Returns:
        dict: name -> GridFn (phi_xstar, phi_u, phi_ux, ft_g, g, f_xstar) or float (rho)
    """
    model = spec.model
    out = {}
    if model in ("2", "6", "7"):
        phi_u = true_cf(spec.law("u"), freq)
        out["phi_u"] = phi_u
        if model == "2":
            out["phi_xstar"] = GridFn.auto(freq, true_cf(spec.law("z"), freq).values * np.conj(phi_u.values))
    else:
        out["phi_xstar"] = true_cf(spec.law("xstar"), freq)
        if model == "factor":
            T1, _ = _factor_blocks(spec)
            try:
                out["phi_u"] = _gaussian_reduced_error(spec, T1, freq)[0]
            except ConfigError:
                logger.info("reduced factor error has no closed form; phi_u truth omitted")
        elif model == "ar1":
            out["phi_u"] = true_cf(spec.law("u"), freq)
            out["rho"] = spec.rho
        else:
            out["phi_u"] = true_cf(spec.law("u"), freq)
        if model in ("4", "4a"):
            out["phi_ux"] = true_cf(spec.law("u_x"), freq)
        try:
            out["f_xstar"] = true_density(spec.law("xstar"), space)
        except ConfigError:
            pass
    if spec.g is not None:
        out["g"] = GridFn(space, spec.g(space.axis()))
        if model == "5":
            try:
                out["ft_g"] = _weighted_ft(spec.law("xstar"), spec.g, freq, space)
            except ConfigError:
                pass
        elif spec.g.integrable:
            out["ft_g"] = GridFn.auto(freq, spec.g.ft(freq.axis()))
    return out


def exact_moments(spec, freq, space=None):
    """
    Known functions of the model computed from the true laws instead of data.

    Args:
        spec (ModelSpec): Forward model
        freq (FreqGrid): Frequency grid
        space (SpaceGrid, optional): Spatial grid for regression models

    Returns:
        MomentFns: Exact inputs (n is None)
    """
    model = spec.model
    d = spec.d
    if freq.dim != d:
        raise ConfigError(f"grid dimension {freq.dim} does not match d = {d}")
    if model in REGRESSION_MODELS and space is None:
        raise ValueError(f"model {model} needs the spatial grid")

    def mul(a, b):
        return GridFn.auto(freq, a.values * b.values)

    if model in ("2", "6", "7"):
        phi_z = true_cf(spec.law("z"), freq)
    else:
        phi_z = None
    kw = {}

    if model == "factor":
        T1, T2 = _factor_blocks(spec)
        phi_x = true_cf(spec.law("xstar"), freq)
        phi_u, dphi_u = _gaussian_reduced_error(spec, T1, freq)
        phi_z = mul(phi_x, phi_u)
        dx = [true_dcf(spec.law("xstar"), freq, k) for k in range(d)]
        kw["eps_k"] = [GridFn(freq, dx[k].values * phi_u.values) for k in range(d)]
        kw["dphi_z_k"] = [GridFn(freq, dx[k].values * phi_u.values + phi_x.values * dphi_u[k].values)
                          for k in range(d)]
        return MomentFns(phi_z=phi_z, **kw)

    if model in ("1", "3", "4", "4a", "5", "ar1"):
        phi_x = true_cf(spec.law("xstar"), freq)
        phi_u = true_cf(spec.law("u"), freq)
        phi_z = mul(phi_x, phi_u)
        dx = [true_dcf(spec.law("xstar"), freq, k) for k in range(d)]
        du = [true_dcf(spec.law("u"), freq, k) for k in range(d)]

    if model in ("3", "4"):
        kw["eps_k"] = [GridFn(freq, dx[k].values * phi_u.values) for k in range(d)]
        kw["dphi_z_k"] = [GridFn(freq, dx[k].values * phi_u.values + phi_x.values * du[k].values)
                          for k in range(d)]
    if model in ("4", "4a"):
        phi_ux = true_cf(spec.law("u_x"), freq)
        kw["phi_x"] = mul(phi_x, phi_ux)
    if model == "4a":
        dux = [true_dcf(spec.law("u_x"), freq, k) for k in range(d)]
        cu = np.conj(phi_u.values)
        kw["phi_zx"] = GridFn.auto(freq, phi_u.values * np.conj(phi_ux.values))
        kw["dphi_diff_k"] = [GridFn(freq, dux[k].values * cu + phi_ux.values * np.conj(du[k].values))
                             for k in range(d)]
        kw["eps_diff_k"] = [GridFn(freq, dux[k].values * cu) for k in range(d)]
    if model == "ar1":
        rho = spec.rho
        dxv, duv = dx[0].values, du[0].values
        kw["ft_wx"] = GridFn(freq, -1j * (dxv * phi_u.values + rho * phi_x.values * duv))
        kw["ft_wy"] = GridFn(freq, -1j * (dxv * phi_u.values + rho ** 2 * phi_x.values * duv))
        dz = dxv * phi_u.values + phi_x.values * duv
        kw["ft_zf"] = GridFn(freq, -1j * dz)
        kw["dphi_z_k"] = [GridFn(freq, dz)]
        kw["eps_k"] = [GridFn(freq, 1j * kw["ft_wx"].values)]
    if model == "5":
        law = spec.law("xstar")
        ft_gf = _weighted_ft(law, spec.g, freq, space)
        dft_gf = _weighted_ft(law, lambda x: 1j * x * spec.g(x), freq, space)
        kw["eps"] = mul(ft_gf, phi_u)
        kw["eps_k"] = [GridFn(freq, dft_gf.values * phi_u.values)]
        kw["deps_k"] = [GridFn(freq, dft_gf.values * phi_u.values + ft_gf.values * du[0].values)]
        kw["mean_y"] = float(ft_gf.origin_value.real)
    if model == "6":
        law_u = spec.law("u")
        phi_u = true_cf(law_u, freq)
        kw["phi_x"] = GridFn.auto(freq, phi_z.values * np.conj(phi_u.values))
        w = spec.g.berkson_mean(space.axis(), law_u, freq)
        kw["w_grid"] = GridFn(space, w)
        kw["eps"] = regression_transform(kw["w_grid"], None)
    if model == "7":
        if not spec.g.integrable:
            raise ConfigError(f"exact model-7 moments need an integrable g, got {spec.g!r}")
        s = freq.axis()
        law_u = spec.law("u")
        phi_u = true_cf(law_u, freq).values
        du = law_u.dcf(s)
        ftg, dftg = spec.g.ft(s), spec.g.dft(s)
        kw["eps"] = GridFn.auto(freq, ftg * phi_u)
        kw["eps_k"] = [GridFn(freq, dftg * phi_u)]
        kw["deps_k"] = [GridFn(freq, dftg * phi_u + ftg * du)]
        kw["w_grid"] = GridFn(space, spec.g.berkson_mean(space.axis(), law_u, freq))
        kw["mean_y"] = float(kw["eps"].origin_value.real)
    logger.debug("exact moments for model %s on %d points", model, freq.size)
    return MomentFns(phi_z=phi_z, **kw)
