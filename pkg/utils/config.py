"""
Flat key=value configuration files for model specs and sweeps.

    # comment
    model = 3
    xstar = gaussian(0, 1)
    u     = laplace(0.5)

Duplicate and unknown keys are rejected with the file and line of the offence.
"""

import logging
import os

from utils.errors import ConfigError

logger = logging.getLogger(__name__)

DEFAULTS = {
    "grid": "1024:20",
    "max_points": 2 ** 24,
    "variant": "A",
    "d": 1,
    "safety": 0.9,
    "max_order": 4,
    "exact_threshold": 1e-10,
    "noise_multiple": 3.0,
    "curl_tol_exact": 1e-4,
    "curl_noise_multiple": 10.0,
    "spatial_mask_fraction": 1e-3,
    "cantor_levels": 20,
    "phi_class_V": 1e6,
    "cutoff": "none",
    "replications": 1,
    "seed": 0,
    "n": "1000",
    "exact": False,
}

MODELS = ("1", "2", "3", "4", "4a", "5", "6", "7", "ar1", "factor")

SPEC_KEYS = frozenset({
    "model", "variant", "d", "xstar", "z", "u", "u_x", "v", "eta", "eta1",
    "g", "rho", "A", "partition", "swap_labels",
})

SWEEP_KEYS = SPEC_KEYS | frozenset({
    "n", "replications", "seed", "grid", "cutoff", "safety", "bandwidth",
    "exact", "max_order", "out",
})

_TRUE = {"true", "yes", "1", "on"}
_FALSE = {"false", "no", "0", "off"}


class Config:
    """
    Parsed key=value entries with the line each key came from.

    Args:
        entries (dict): key -> (raw value, line number)
        path (str): Source file name, used in error messages
    """

    def __init__(self, entries, path="<config>"):
        self.entries = dict(entries)
        self.path = path

    def __contains__(self, key):
        return key in self.entries

    def keys(self):
        return list(self.entries)

    def raw(self, key, default=None):
        if key not in self.entries:
            return default
        return self.entries[key][0]

    def line_of(self, key):
        return self.entries[key][1] if key in self.entries else None

    def error(self, key, message):
        """ConfigError pointing at the line that set ``key``."""
        return ConfigError(message, self.path, self.line_of(key))

    def get_str(self, key, default=None):
        if key not in self.entries:
            if default is None and key in DEFAULTS:
                return str(DEFAULTS[key])
            return default
        return self.entries[key][0]

    def get_int(self, key, default=None):
        raw = self.raw(key)
        if raw is None:
            return DEFAULTS.get(key) if default is None else default
        try:
            return int(raw)
        except ValueError:
            raise self.error(key, f"'{key}' must be an integer, got '{raw}'") from None

    def get_float(self, key, default=None):
        raw = self.raw(key)
        if raw is None:
            return DEFAULTS.get(key) if default is None else default
        try:
            return float(raw)
        except ValueError:
            raise self.error(key, f"'{key}' must be a number, got '{raw}'") from None

    def get_bool(self, key, default=None):
        raw = self.raw(key)
        if raw is None:
            return DEFAULTS.get(key) if default is None else default
        low = raw.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise self.error(key, f"'{key}' must be true or false, got '{raw}'")

    def get_int_list(self, key, default=None):
        raw = self.raw(key)
        if raw is None:
            raw = str(DEFAULTS.get(key, "")) if default is None else default
            if isinstance(raw, (list, tuple)):
                return list(raw)
        try:
            return [int(float(tok)) for tok in raw.split(",") if tok.strip()]
        except ValueError:
            raise self.error(key, f"'{key}' must be a comma list of integers, got '{raw}'") from None

    def get_grid(self, key="grid"):
        raw = self.get_str(key)
        try:
            return parse_grid(raw)
        except ValueError as exc:
            raise self.error(key, str(exc)) from None


def parse_config_text(text, allowed, path="<config>"):
    """
    Parse key=value text.

    Args:
        text (str): File contents
        allowed (set): Accepted keys
        path (str): Name used in error messages

    Returns:
        Config: Parsed entries
    """
    entries = {}
    for number, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got '{body}'", path, number)
        key, value = (part.strip() for part in body.split("=", 1))
        if not key:
            raise ConfigError("missing key before '='", path, number)
        if key not in allowed:
            raise ConfigError(f"unknown key '{key}'", path, number)
        if key in entries:
            raise ConfigError(
                f"duplicate key '{key}' (first set on line {entries[key][1]})", path, number)
        if not value:
            raise ConfigError(f"empty value for '{key}'", path, number)
        entries[key] = (value, number)
    logger.debug("parsed %d keys from %s", len(entries), path)
    return Config(entries, path)


def read_config(path, allowed):
    """
    Read and parse a config file.

    Args:
        path (str): File path
        allowed (set): Accepted keys

    Returns:
        Config: Parsed entries
    """
    with open(path, "r") as f:
        text = f.read()
    return parse_config_text(text, allowed, os.path.basename(path))


def parse_grid(text):
    """
    Parse 'N:s_max'.

    Args:
        text (str): Grid string such as '1024:20'

    Returns:
        tuple: (N, s_max)
    """
    parts = str(text).split(":")
    if len(parts) != 2:
        raise ValueError(f"grid must look like N:s_max, got '{text}'")
    try:
        N = int(parts[0])
        s_max = float(parts[1])
    except ValueError:
        raise ValueError(f"grid must look like N:s_max, got '{text}'") from None
    if N < 8 or N % 2 or s_max <= 0:
        raise ValueError(f"grid needs even N >= 8 and s_max > 0, got '{text}'")
    return N, s_max


def split_call(text):
    """
    Split 'name(a, b, inner(c, d))' into ('name', ['a', 'b', 'inner(c, d)']).

    A bare name yields an empty argument list.

    Args:
        text (str): Call expression

    Returns:
        tuple: (name, list of argument strings)
    """
    text = text.strip()
    if "(" not in text:
        if not text.replace("_", "").isalnum():
            raise ValueError(f"cannot parse '{text}'")
        return text, []
    if not text.endswith(")"):
        raise ValueError(f"unbalanced parentheses in '{text}'")
    name, body = text[:text.index("(")].strip(), text[text.index("(") + 1:-1]
    args, depth, start = [], 0, 0
    for i, ch in enumerate(body):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise ValueError(f"unbalanced parentheses in '{text}'")
        elif ch == "," and depth == 0:
            args.append(body[start:i].strip())
            start = i + 1
    if depth != 0:
        raise ValueError(f"unbalanced parentheses in '{text}'")
    tail = body[start:].strip()
    if tail or args:
        args.append(tail)
    if any(not a for a in args):
        raise ValueError(f"empty argument in '{text}'")
    return name, args


def parse_matrix(text):
    """
    Parse a matrix written as rows separated by ';' and entries by ','.

    Args:
        text (str): e.g. '1,0; 0,1; 1,1'

    Returns:
        list: Rows of floats
    """
    rows = []
    for row in text.split(";"):
        if row.strip():
            rows.append([float(tok) for tok in row.split(",")])
    if not rows or len({len(r) for r in rows}) != 1:
        raise ValueError(f"matrix rows must be non-empty and equally long, got '{text}'")
    return rows
