"""Radial grids and sampled radial profiles."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import UnsupportedDimensionError
from .quadrature import _hermite_points

KINDS = ("W", "V", "LambdaW", "Gamma", "GammaTilde", "Upsilon",
         "TInf0", "TInf1", "T00", "T01", "T00tilde", "Custom")


@dataclass(frozen=True)
class RadialGrid:
    """Nodes 0 = r_0 < r_1 < ... < r_M in dimension ``dimension``.

    ``spacing`` is "uniform" (step ``h``) or "geometric" (ratio ``q``, first
    positive node ``r_min``).
    """
    dimension: int
    nodes: np.ndarray
    spacing: str = "uniform"
    h: Optional[float] = None
    q: Optional[float] = None

    def __post_init__(self):
        if self.dimension not in (3, 6, 8):
            raise UnsupportedDimensionError(f"dimension {self.dimension} not in (3, 6, 8)")
        r = np.asarray(self.nodes, dtype=float)
        r.setflags(write=False)
        object.__setattr__(self, "nodes", r)
        if r[0] != 0.0:
            raise ValueError("first node must be exactly 0")
        if np.any(np.diff(r) <= 0):
            raise ValueError("nodes must be strictly increasing")
        if self.spacing == "uniform":
            h = self.h if self.h is not None else r[1] - r[0]
            object.__setattr__(self, "h", float(h))
            if np.max(np.abs(np.diff(r) - h)) > 1e-12 * h * max(1.0, r.size / 1e3):
                raise ValueError("uniform grid spacing is not constant")

    @classmethod
    def uniform(cls, dimension, r_max, h):
        m = int(round(r_max / h))
        return cls(dimension, h * np.arange(m + 1), "uniform", h)

    @classmethod
    def geometric(cls, dimension, r_min, r_max, per_octave=64):
        """0 followed by geometric nodes from r_min to r_max."""
        q = 2.0 ** (1.0 / per_octave)
        m = int(np.ceil(np.log(r_max / r_min) / np.log(q)))
        # exact powers of two at whole octaves
        pos = r_min * 2.0 ** (np.arange(m + 1) / per_octave)
        return cls(dimension, np.concatenate([[0.0], pos]), "geometric", None, q)

    @property
    def r(self):
        return self.nodes

    @property
    def r_max(self):
        return float(self.nodes[-1])

    def scaled(self, lam):
        """The same grid stretched by ``lam``."""
        h = None if self.h is None else self.h * lam
        return RadialGrid(self.dimension, self.nodes * lam, self.spacing, h, self.q)

    def describe(self):
        if self.spacing == "uniform":
            return f"uniform h={self.h:.6g} r_max={self.r_max:.6g} M={self.nodes.size - 1}"
        return (f"geometric q={self.q:.8g} r_min={self.nodes[1]:.6g} "
                f"r_max={self.r_max:.6g} M={self.nodes.size - 1}")


@dataclass(frozen=True)
class Asymptote:
    end: str          # "zero" or "infinity"
    exponent: float
    coefficient: float


@dataclass(frozen=True)
class RadialProfile:
    """Values and radial derivative of a radial function on a grid.

    Singular profiles store nan at r=0.
    """
    grid: RadialGrid
    values: np.ndarray
    derivative: np.ndarray
    kind: str = "Custom"
    asymptotics: tuple = field(default_factory=tuple)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        d = np.asarray(self.derivative, dtype=float)
        if v.shape != self.grid.nodes.shape or d.shape != v.shape:
            raise ValueError("values/derivative must match the grid")
        if self.kind not in KINDS:
            raise ValueError(f"unknown profile kind {self.kind!r}")
        v.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "derivative", d)

    @property
    def r(self):
        return self.grid.nodes

    @property
    def dimension(self):
        return self.grid.dimension

    def __call__(self, x):
        """Cubic Hermite interpolation from values and derivatives."""
        return hermite_eval(self.r, self.values, self.derivative, x)[0]

    def deriv_at(self, x):
        return hermite_eval(self.r, self.values, self.derivative, x)[1]

    def with_values(self, values, derivative, kind="Custom", asymptotics=()):
        return RadialProfile(self.grid, values, derivative, kind, tuple(asymptotics))

    def scale(self, c):
        return self.with_values(c * self.values, c * self.derivative, self.kind, ())

    def __add__(self, other):
        _check_same_grid(self, other)
        return self.with_values(self.values + other.values,
                                self.derivative + other.derivative)

    def __sub__(self, other):
        _check_same_grid(self, other)
        return self.with_values(self.values - other.values,
                                self.derivative - other.derivative)

    def to_csv(self, path_or_buf=None, extra_header=None):
        """CSV with a commented header (kind, dimension, grid) and r,value,derivative."""
        buf = io.StringIO()
        buf.write(f"# kind={self.kind}\n# dimension={self.dimension}\n")
        buf.write(f"# grid={self.grid.describe()}\n")
        for k, v in (extra_header or {}).items():
            buf.write(f"# {k}={v}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r", "value", "derivative"])
        for row in zip(self.r, self.values, self.derivative):
            w.writerow([repr(float(x)) for x in row])
        text = buf.getvalue()
        if path_or_buf is None:
            return text
        if hasattr(path_or_buf, "write"):
            path_or_buf.write(text)
        else:
            with open(path_or_buf, "w") as fh:
                fh.write(text)
        return text


def read_profile_csv(path) -> RadialProfile:
    meta = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                meta[k.strip()] = v.strip()
            elif line.startswith("r,"):
                continue
            elif line.strip():
                rows.append([float(x) for x in line.split(",")])
    arr = np.array(rows)
    dim = int(meta.get("dimension", 6))
    grid = RadialGrid(dim, arr[:, 0], "uniform" if "uniform" in meta.get("grid", "") else "geometric")
    return RadialProfile(grid, arr[:, 1], arr[:, 2], meta.get("kind", "Custom"))


def _check_same_grid(a, b):
    if a.grid is not b.grid and not np.array_equal(a.r, b.r):
        raise ValueError("profiles live on different grids")


def hermite_eval(r, v, d, x):
    """Piecewise cubic Hermite value and derivative at ``x`` (clipped to the grid)."""
    x = np.asarray(x, dtype=float)
    i = np.clip(np.searchsorted(r, x, side="right") - 1, 0, r.size - 2)
    return _hermite_points(r, v, d, x, i)


def profile_from_function(grid, f, df=None, kind="Custom"):
    """Sample a callable (and its derivative, by centered differences if absent)."""
    r = grid.nodes
    vals = np.asarray(f(r), dtype=float) * np.ones_like(r)
    if df is None:
        eps = 1e-5 * np.maximum(1.0, r)
        der = (np.asarray(f(r + eps)) - np.asarray(f(np.abs(r - eps)))) / (2 * eps)
        der[0] = 0.0
    else:
        der = np.asarray(df(r), dtype=float) * np.ones_like(r)
    return RadialProfile(grid, vals, der, kind)
