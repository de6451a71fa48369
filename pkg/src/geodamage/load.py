"""Affine boundary-displacement programs w(t, x) = ramp(t) G x."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import to_voigt


@dataclass(frozen=True)
class LoadProgram:
    """Affine ramp load.

    The ramp is the piecewise-linear interpolant of ``(ramp_times,
    ramp_values)``; the default table is the identity ramp on [0, T].
    """

    G: np.ndarray
    T: float = 1.0
    ramp_times: tuple = ()
    ramp_values: tuple = ()
    kind: str = "affine_ramp"
    _tt: np.ndarray = field(init=False, repr=False)
    _rv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        G = np.array(self.G, dtype=float)
        if G.ndim != 2 or G.shape[0] != G.shape[1]:
            raise ValueError("G must be a square matrix")
        object.__setattr__(self, "G", G)
        if not self.T > 0.0:
            raise ValueError("T must be > 0")
        if self.kind != "affine_ramp":
            raise ValueError(f"unknown load kind {self.kind!r}")
        if len(self.ramp_times) == 0:
            tt = np.array([0.0, self.T])
            rv = np.array([0.0, self.T])
        else:
            tt = np.asarray(self.ramp_times, dtype=float)
            rv = np.asarray(self.ramp_values, dtype=float)
            if tt.shape != rv.shape or tt.size < 2:
                raise ValueError("ramp table needs matching times/values, at least two rows")
            if np.any(np.diff(tt) <= 0.0):
                raise ValueError("ramp times must be strictly increasing")
            if tt[0] > 0.0 or tt[-1] < self.T:
                raise ValueError("ramp table must cover [0, T]")
        object.__setattr__(self, "_tt", tt)
        object.__setattr__(self, "_rv", rv)

    @property
    def dim(self) -> int:
        return self.G.shape[0]

    @property
    def sym_G(self) -> np.ndarray:
        """sym(G) in scaled Voigt storage (the constant strain E w / ramp)."""
        return to_voigt(self.G)

    def ramp(self, t) -> np.ndarray | float:
        return np.interp(t, self._tt, self._rv)

    def w(self, t: float, x: np.ndarray) -> np.ndarray:
        """Displacement at points x (npts, n)."""
        return self.ramp(t) * (np.asarray(x, dtype=float) @ self.G.T)

    def rate_squared_integral(self, t1: float, t2: float) -> float:
        """Exact integral of ramp'(t)^2 over [t1, t2] for the piecewise-linear table."""
        knots = np.concatenate(([t1], self._tt[(self._tt > t1) & (self._tt < t2)], [t2]))
        total = 0.0
        for a, b in zip(knots[:-1], knots[1:]):
            if b <= a:
                continue
            slope = (self.ramp(b) - self.ramp(a)) / (b - a)
            total += slope * slope * (b - a)
        return float(total)

    def rate_abs_integral(self, t1: float, t2: float) -> float:
        """Exact integral of |ramp'(t)| over [t1, t2]."""
        knots = np.concatenate(([t1], self._tt[(self._tt > t1) & (self._tt < t2)], [t2]))
        r = self.ramp(knots)
        return float(np.sum(np.abs(np.diff(r))))

    def scaled(self, c: float) -> "LoadProgram":
        return LoadProgram(c * self.G, self.T, tuple(self._tt), tuple(self._rv))
