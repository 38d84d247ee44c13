"""Uniform lattices and grid functions.

Lattice nodes sit at integer multiples of the spacing ``h`` so that shapes
centred at the origin are sampled symmetrically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator


@dataclass(frozen=True)
class Lattice:
    """Axis-aligned uniform lattice ``x = h * (offset + index)``.

    Parameters
    ----------
    h : float
        Node spacing.
    offset : tuple of int
        Integer index of the first node along each axis.
    shape : tuple of int
        Number of nodes along each axis.
    """

    h: float
    offset: tuple
    shape: tuple

    @classmethod
    def covering(cls, lo, hi, h: float) -> "Lattice":
        """Smallest lattice aligned to ``h * Z^n`` that contains the box ``[lo, hi]``."""
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if h <= 0:
            raise ValueError("grid spacing h must be positive")
        i0 = np.floor(lo / h - 1e-9).astype(int)
        i1 = np.ceil(hi / h + 1e-9).astype(int)
        return cls(float(h), tuple(int(i) for i in i0), tuple(int(i) for i in (i1 - i0 + 1)))

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def lo(self) -> np.ndarray:
        return self.h * np.asarray(self.offset, dtype=float)

    @property
    def hi(self) -> np.ndarray:
        return self.h * (np.asarray(self.offset) + np.asarray(self.shape) - 1).astype(float)

    def axes(self) -> list[np.ndarray]:
        return [self.h * (o + np.arange(s)) for o, s in zip(self.offset, self.shape)]

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*self.axes(), indexing="ij")

    def points(self) -> np.ndarray:
        """All node coordinates, shape ``(*shape, n)``."""
        return np.stack(self.mesh(), axis=-1)

    def index_of(self, x) -> tuple:
        """Lattice index of the node nearest to ``x``; raises if outside."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        idx = np.rint(x / self.h).astype(int) - np.asarray(self.offset)
        if np.any(idx < 0) or np.any(idx >= np.asarray(self.shape)):
            raise IndexError(f"point {x} lies outside the lattice")
        return tuple(int(i) for i in idx)

    def coord(self, index) -> np.ndarray:
        return self.h * (np.asarray(self.offset) + np.asarray(index)).astype(float)

    def padded(self, pad: int) -> "Lattice":
        off = tuple(o - pad for o in self.offset)
        shp = tuple(s + 2 * pad for s in self.shape)
        return Lattice(self.h, off, shp)


@dataclass
class GridFunction:
    """Values on every node of a lattice.

    Attributes
    ----------
    lattice : Lattice
    values : ndarray
        Array of shape ``lattice.shape``.
    far_value : float or None
        Constant value the function takes beyond the lattice box. ``0.0`` for
        exterior Dirichlet data. ``None`` means the far field is unknown; the
        nonlocal quadrature then stops at the box edge without a tail term.
    """

    lattice: Lattice
    values: np.ndarray
    far_value: float | None = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != tuple(self.lattice.shape):
            raise ValueError(
                f"values shape {self.values.shape} does not match lattice {self.lattice.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid function values must be finite")

    @classmethod
    def from_function(cls, lattice: Lattice, fn, far_value: float | None = 0.0) -> "GridFunction":
        """Sample ``fn`` (taking points of shape ``(..., n)``) on every node."""
        return cls(lattice, np.asarray(fn(lattice.points()), dtype=float), far_value)

    @property
    def h(self) -> float:
        return self.lattice.h

    def at(self, x) -> float:
        return float(self.values[self.lattice.index_of(x)])

    def interpolator(self):
        """Multilinear interpolant; outside the box it returns ``far_value``."""
        fill = np.nan if self.far_value is None else self.far_value
        return RegularGridInterpolator(
            tuple(self.lattice.axes()), self.values, method="linear",
            bounds_error=False, fill_value=fill,
        )

    def interpolate(self, pts) -> np.ndarray:
        """Evaluate the multilinear interpolant at ``pts`` of shape ``(m, n)``.

        Raises
        ------
        ValueError
            If a point falls outside the data band and no far value is known.
        """
        pts = np.asarray(pts, dtype=float).reshape(-1, self.lattice.ndim)
        out = self.interpolator()(pts)
        if np.any(np.isnan(out)):
            raise ValueError("interpolation requested outside the data band")
        return out
