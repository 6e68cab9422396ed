"""
Readers and writers for the CSV and key:value files of the command line.

Floats are written with '%.17g' so that a value read back is bit-identical.
"""

import csv
import logging
import os

import numpy as np

from grid import FreqGrid, GridFn, SpaceGrid
from moments import Sample
from support import mask_to_rows

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


def fmt(value):
    """Text form of a report or CSV value."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return FLOAT_FORMAT % value
    return str(value)


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def write_gridfn(path, fn):
    """
    Write a GridFn as '# kind=.. d=.. N=.. ds=.. hermitian=..' then i1..id,re,im rows.

    Indices are signed: grid index j is written as j - N/2.

    Args:
        path (str): Output file
        fn (GridFn): Function to write
    """
    grid = fn.grid
    kind = "freq" if isinstance(grid, FreqGrid) else "space"
    half = grid.points_per_dim // 2
    with open(path, "w", newline="") as f:
        f.write(f"# kind={kind} d={grid.dim} N={grid.points_per_dim} "
                f"ds={FLOAT_FORMAT % grid.spacing} hermitian={int(fn.hermitian)}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow([f"i{k + 1}" for k in range(grid.dim)] + ["re", "im"])
        for index in np.ndindex(*grid.shape):
            v = fn.values[index]
            writer.writerow([i - half for i in index] + [fmt(float(v.real)), fmt(float(v.imag))])


def read_gridfn(path):
    """
    Read a file written by write_gridfn.

    Args:
        path (str): Input file

    Returns:
        GridFn: Function with its grid
    """
    with open(path, "r", newline="") as f:
        header = f.readline()
        if not header.startswith("#"):
            raise ValueError(f"{path}: missing '# kind=..' header")
        meta = dict(tok.split("=", 1) for tok in header[1:].split())
        reader = csv.reader(f)
        next(reader)
        rows = [row for row in reader if row]
    d, N = int(meta["d"]), int(meta["N"])
    cls = FreqGrid if meta["kind"] == "freq" else SpaceGrid
    grid = cls(d, N, float(meta["ds"]))
    if len(rows) != grid.size:
        raise ValueError(f"{path}: expected {grid.size} rows, found {len(rows)}")
    values = np.zeros(grid.shape, dtype=complex)
    half = N // 2
    for row in rows:
        index = tuple(int(i) + half for i in row[:d])
        values[index] = float(row[d]) + 1j * float(row[d + 1])
    return GridFn(grid, values, meta.get("hermitian") == "1")


def _sample_columns(sample):
    cols = {}
    for name in ("z", "x"):
        arr = getattr(sample, name)
        if arr is not None:
            for k in range(arr.shape[1]):
                cols[f"{name}{k + 1}"] = arr[:, k]
    for name in ("y", "y2"):
        arr = getattr(sample, name)
        if arr is not None:
            cols[name] = arr
    return cols


def write_columns(path, columns):
    """
    Write named equal-length columns as CSV.

    Args:
        path (str): Output file
        columns (dict): name -> 1-d array
    """
    names = list(columns)
    data = [np.asarray(columns[k], dtype=float).reshape(-1) for k in names]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(names)
        for row in zip(*data):
            writer.writerow([fmt(float(v)) for v in row])


def read_columns(path):
    """
    Read a CSV of named float columns.

    Args:
        path (str): Input file

    Returns:
        dict: name -> numpy array
    """
    with open(path, "r", newline="") as f:
        reader = csv.reader(f)
        names = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.array(rows, dtype=float).reshape(-1, len(names))
    return {name: data[:, k] for k, name in enumerate(names)}


def write_sample(path, sample):
    """Write the observed columns z1..zd, x1..xd, y, y2 that are present."""
    write_columns(path, _sample_columns(sample))


def read_sample(path):
    """
    Read a sample CSV back into a Sample.

    Args:
        path (str): Input file

    Returns:
        Sample: Observations
    """
    cols = read_columns(path)

    def block(prefix):
        keys = sorted((k for k in cols if k.startswith(prefix) and k[len(prefix):].isdigit()),
                      key=lambda k: int(k[len(prefix):]))
        return np.column_stack([cols[k] for k in keys]) if keys else None

    z = block("z")
    if z is None:
        raise ValueError(f"{path}: no z columns")
    return Sample(z=z, x=block("x"), y=cols.get("y"), y2=cols.get("y2"))


def write_latents(path, latents):
    """Write latent arrays (n x d each) as columns name1..named."""
    cols = {}
    for name, arr in latents.items():
        arr = np.asarray(arr, dtype=float)
        arr = arr[:, None] if arr.ndim == 1 else arr
        for k in range(arr.shape[1]):
            cols[f"{name}{k + 1}"] = arr[:, k]
    write_columns(path, cols)


def write_mask(path, support):
    """Write a SupportMask as i1..id,in_mask,component rows."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow([f"i{k + 1}" for k in range(support.grid.dim)] + ["in_mask", "component"])
        writer.writerows(mask_to_rows(support))


def write_report(path, entries):
    """
    Write 'key: value' lines in insertion order.

    Args:
        path (str): Output file
        entries (dict): Report entries
    """
    with open(path, "w") as f:
        for key, value in entries.items():
            f.write(f"{key}: {fmt(value)}\n")


def read_report(path):
    """
    Read a key:value report.

    Args:
        path (str): Input file

    Returns:
        dict: key -> string value
    """
    out = {}
    with open(path, "r") as f:
        for line in f:
            if ":" in line:
                key, value = line.split(":", 1)
                out[key.strip()] = value.strip()
    return out
