"""Discrete Caputo calculus on time grids.

Trajectories are immutable node-indexed vectors.  The fractional
derivative uses the L1 scheme (piecewise-linear reconstruction, exact
kernel moments per cell); convolution against the memory kernel uses
product integration with the same exact moments.  Both support graded
grids clustering nodes at t = 0.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import gamma as _gamma

from .mlf import as_order, caputo_kernel

__all__ = [
    "TimeGrid",
    "Trajectory",
    "suggested_grading",
    "caputo_derivative",
    "kernel_convolve",
    "product_rule_remainder",
    "lp_time_norm",
    "trajectory_to_csv",
    "trajectory_from_csv",
]


def suggested_grading(alpha) -> float:
    """Grading exponent (2-alpha)/alpha capped at 4, for t**alpha layers."""
    a = as_order(alpha).alpha
    return float(min((2.0 - a) / a, 4.0))


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing nodes t_0 = 0 < ... < t_N = tau."""

    nodes: np.ndarray
    kind: str = "uniform"
    grading: float = 1.0

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("grid needs at least two nodes")
        if nodes[0] != 0.0:
            raise ValueError("grid must start at t = 0")
        if np.any(np.diff(nodes) <= 0.0):
            raise ValueError("grid nodes must be strictly increasing")
        object.__setattr__(self, "nodes", nodes)

    @property
    def tau(self) -> float:
        return float(self.nodes[-1])

    @property
    def n_steps(self) -> int:
        return self.nodes.size - 1

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.nodes)

    @classmethod
    def uniform(cls, tau: float, n: int) -> "TimeGrid":
        if tau <= 0 or n < 1:
            raise ValueError("need tau > 0 and n >= 1")
        return cls(np.linspace(0.0, tau, n + 1), kind="uniform", grading=1.0)

    @classmethod
    def graded(cls, tau: float, n: int, r: float) -> "TimeGrid":
        """Nodes tau*(j/n)**r, clustering at zero for r > 1."""
        if tau <= 0 or n < 1 or r < 1.0:
            raise ValueError("need tau > 0, n >= 1, r >= 1")
        j = np.arange(n + 1, dtype=float)
        return cls(tau * (j / n) ** r, kind="graded", grading=float(r))


@dataclass(frozen=True)
class Trajectory:
    """Grid function with one complex vector per node; fixed space tag."""

    grid: TimeGrid
    values: np.ndarray
    space: str = "H"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.ndim != 2 or vals.shape[0] != self.grid.nodes.size:
            raise ValueError("values must have one row per grid node")
        if self.space not in ("V", "H", "Vp"):
            raise ValueError("space tag must be one of 'V', 'H', 'Vp'")
        object.__setattr__(self, "values", vals)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_function(cls, grid: TimeGrid, fn: Callable, space: str = "H") -> "Trajectory":
        rows = [np.atleast_1d(np.asarray(fn(t), dtype=complex)) for t in grid.nodes]
        return cls(grid, np.vstack([r[None, :] for r in rows]), space)

    def with_values(self, values: np.ndarray, space: str | None = None) -> "Trajectory":
        return Trajectory(self.grid, values, space or self.space)


def _check_vec(u0, dim: int) -> np.ndarray:
    v = np.atleast_1d(np.asarray(u0, dtype=complex))
    if v.shape != (dim,):
        raise ValueError("vector dimension %s does not match trajectory dim %d" % (v.shape, dim))
    return v


def _pow_diff(lo: np.ndarray, width: np.ndarray, expo: float) -> np.ndarray:
    """(lo+width)**expo - lo**expo without cancellation (lo >= 0, width > 0)."""
    lo = np.asarray(lo, dtype=float)
    width = np.asarray(width, dtype=float)
    lo, width = np.broadcast_arrays(lo, width)
    out = np.empty(lo.shape)
    zero = lo <= 0.0
    out[zero] = width[zero] ** expo
    nz = ~zero
    out[nz] = lo[nz] ** expo * np.expm1(expo * np.log1p(width[nz] / lo[nz]))
    return out


def _shifted_moment(lo: np.ndarray, width: np.ndarray, p1: float, p2: float) -> np.ndarray:
    """int_lo^{lo+width} (r-lo) r**(p1-1) dr * p-form, returned as the
    stable bracket lo**p2 * [expm1(p2 L)/p2 - expm1(p1 L)/p1] with
    L = log1p(width/lo); here p2 = p1 + 1.  Series for small L."""
    lo = np.asarray(lo, dtype=float)
    width = np.asarray(width, dtype=float)
    lo, width = np.broadcast_arrays(lo, width)
    out = np.empty(lo.shape)
    zero = lo <= 0.0
    # lo = 0 cell: int_0^w r**p2-1 ... reduces to w**p2 / p2
    out[zero] = width[zero] ** p2 / p2
    nz = ~zero
    L = np.log1p(width[nz] / lo[nz])
    small = L < 1e-3
    bracket = np.empty(L.shape)
    Ls = L[small]
    # Taylor of expm1(p2 L)/p2 - expm1(p1 L)/p1 in L
    bracket[small] = (
        Ls**2 / 2.0
        + (p2 + p1) * Ls**3 / 6.0
        + (p2**2 + p2 * p1 + p1**2) * Ls**4 / 24.0
    )
    Lb = L[~small]
    bracket[~small] = np.expm1(p2 * Lb) / p2 - np.expm1(p1 * Lb) / p1
    out[nz] = lo[nz] ** p2 * bracket
    return out


def caputo_derivative(alpha, u: Trajectory, u0) -> Trajectory:
    """L1-scheme Caputo derivative of u relative to the initial value u0.

    The node-0 entry repeats the first computed node; the scheme itself is
    defined at t_1..t_N.  A jump u(0) != u0 contributes k(t)*(u(0)-u0).
    """
    a = as_order(alpha).alpha
    v0 = _check_vec(u0, u.dim)
    t = u.grid.nodes
    n_steps = u.grid.n_steps
    g2 = _gamma(2.0 - a)
    diffs = u.values[1:] - u.values[:-1]
    jump = u.values[0] - v0
    has_jump = bool(np.any(np.abs(jump) > 0))

    out = np.zeros_like(u.values)
    for n in range(1, n_steps + 1):
        lo = t[n] - t[1 : n + 1]
        h = t[1 : n + 1] - t[:n]
        w = _pow_diff(lo, h, 1.0 - a) / (g2 * h)
        out[n] = w @ diffs[:n]
        if has_jump:
            out[n] += caputo_kernel(a, t[n]) * jump
    out[0] = out[1]
    return u.with_values(out)


def kernel_convolve(alpha, g: Trajectory) -> Trajectory:
    """(k * g)(t_n) by product integration, exact kernel moments per cell."""
    a = as_order(alpha).alpha
    t = g.grid.nodes
    n_steps = g.grid.n_steps
    g1 = _gamma(1.0 - a)
    g2 = _gamma(2.0 - a)

    out = np.zeros_like(g.values)
    for n in range(1, n_steps + 1):
        lo = t[n] - t[1 : n + 1]  # r at the right end of each cell
        h = t[1 : n + 1] - t[:n]
        m0 = _pow_diff(lo, h, 1.0 - a) / g2
        # int (r - lo) k(r) dr over the cell, cancellation-free
        m1c = _shifted_moment(lo, h, 1.0 - a, 2.0 - a) / g1
        slope = (g.values[:n] - g.values[1 : n + 1]) / h[:, None]
        out[n] = m0 @ g.values[1 : n + 1] + m1c @ slope
    return g.with_values(out)


def product_rule_remainder(alpha, u: Trajectory, v: Callable, v_prime: Callable, u0) -> Trajectory:
    """Commutator F(u, v) between the Caputo derivative and multiplication
    by a smooth scalar v:

        F(t) = int_0^t -k'(t-s) (v(t)-v(s)) u(s) ds + k(t) (v(t)-v(0)) u(0).

    The last cell uses v(t)-v(s) ~ v'(t)(t-s), which tames the r**(-1-a)
    kernel singularity to an integrable r**(-a).
    """
    a = as_order(alpha).alpha
    v0_vec = _check_vec(u0, u.dim)
    t = u.grid.nodes
    n_steps = u.grid.n_steps
    g1 = _gamma(1.0 - a)

    v_nodes = np.array([v(tt) for tt in t], dtype=complex)
    if not np.all(np.isfinite(v_nodes)):
        raise ValueError("v must be finite at every grid node")
    out = np.zeros_like(u.values)
    for n in range(1, n_steps + 1):
        big_g = (v_nodes[n] - v_nodes[: n + 1])[:, None] * u.values[: n + 1]
        if n > 1:
            lo = t[n] - t[1:n]
            h = t[1:n] - t[: n - 1]
            m0 = -_pow_diff(lo, h, -a) / g1  # integral of -k' over the cell
            m1c = a * _shifted_moment(lo, h, -a, 1.0 - a) / g1
            slope = (big_g[: n - 1] - big_g[1:n]) / h[:, None]
            out[n] = m0 @ big_g[1:n] + m1c @ slope
        # last cell: -k'(r) (v(t_n)-v(s)) u(s) ~ a r^{-a} v'(t_n) u(t_n - r)
        h_n = t[n] - t[n - 1]
        du = u.values[n - 1] - u.values[n]
        cell = a / g1 * h_n ** (1.0 - a) * (u.values[n] / (1.0 - a) + du / (2.0 - a))
        out[n] += v_prime(t[n]) * cell
        out[n] += caputo_kernel(a, t[n]) * (v_nodes[n] - v_nodes[0]) * v0_vec
    return u.with_values(out)


def lp_time_norm(p: float, traj: Trajectory, space_norm: Callable | None = None, from_node: int = 0) -> float:
    """Composite-trapezoid L_p(0, tau) norm of t -> ||traj(t)||.

    space_norm maps a node vector to a scalar norm (default: euclidean).
    from_node > 0 drops the initial cells; use for trajectories that are
    singular at t = 0 and report the truncation alongside.
    """
    if not (1.0 < p < np.inf):
        raise ValueError("p must lie in (1, inf)")
    if traj.values.shape[0] == 0:
        raise ValueError("empty trajectory")
    if space_norm is None:
        vals = np.linalg.norm(traj.values, axis=1)
    else:
        vals = np.array([space_norm(row) for row in traj.values], dtype=float)
    t = traj.grid.nodes
    sl = slice(from_node, None)
    return float(np.trapz(vals[sl] ** p, t[sl]) ** (1.0 / p))


def trajectory_to_csv(traj: Trajectory) -> str:
    """CSV with columns t, re_0, im_0, re_1, im_1, ..."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["t"]
    for j in range(traj.dim):
        header += ["re_%d" % j, "im_%d" % j]
    w.writerow(header)
    for t, row in zip(traj.grid.nodes, traj.values):
        line = [repr(float(t))]
        for z in row:
            line += [repr(float(z.real)), repr(float(z.imag))]
        w.writerow(line)
    return buf.getvalue()


def trajectory_from_csv(text: str, space: str = "H") -> Trajectory:
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], rows[1:]
    dim = (len(header) - 1) // 2
    t = np.array([float(r[0]) for r in body])
    vals = np.empty((len(body), dim), dtype=complex)
    for i, r in enumerate(body):
        for j in range(dim):
            vals[i, j] = float(r[1 + 2 * j]) + 1j * float(r[2 + 2 * j])
    kind = "uniform" if np.allclose(np.diff(t), t[1] - t[0]) else "graded"
    return Trajectory(TimeGrid(t, kind=kind), vals, space)
