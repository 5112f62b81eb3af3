"""Weighted discrete realization of the triple V in H in V' and
time-dependent sesquilinear forms.

The three inner products share midpoint quadrature nodes on (0, 1]; the
V-weight w >= 1 makes the embedding constants exactly one.  Operators are
plain matrices acting on coordinate vectors; norms between spaces are
spectral norms of diagonally sandwiched matrices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "DiscreteTriple",
    "NonAutonomousForm",
    "OperatorPair",
    "FormConstants",
    "ResolventReport",
    "build_weighted_triple",
    "form_to_operators",
    "estimate_form_constants",
    "sector_samples",
    "resolvent_bound_check",
    "resolvent_stability_study",
    "triple_to_json",
]

_SPACES = ("V", "H", "Vp")


@dataclass(frozen=True)
class DiscreteTriple:
    """Midpoint-quadrature triple on (0, 1] with V-weight w >= 1."""

    nodes: np.ndarray
    quad_weights: np.ndarray
    weight: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.nodes, dtype=float)
        q = np.asarray(self.quad_weights, dtype=float)
        w = np.asarray(self.weight, dtype=float)
        if x.ndim != 1 or x.size < 2:
            raise ValueError("need at least two spatial nodes")
        if np.any(q <= 0):
            raise ValueError("quadrature weights must be positive")
        if np.any(w < 1.0):
            raise ValueError("V-weight must satisfy w >= 1 (embedding normalization)")
        object.__setattr__(self, "nodes", x)
        object.__setattr__(self, "quad_weights", q)
        object.__setattr__(self, "weight", w)

    @property
    def dim(self) -> int:
        return self.nodes.size

    def gram(self, space: str) -> np.ndarray:
        """Diagonal of the Gram matrix of the chosen inner product."""
        if space == "H":
            return self.quad_weights
        if space == "V":
            return self.quad_weights * self.weight
        if space == "Vp":
            return self.quad_weights / self.weight
        raise ValueError("space must be one of %s" % (_SPACES,))

    def inner(self, x, y, space: str = "H") -> complex:
        g = self.gram(space)
        return complex(np.sum(g * np.asarray(x) * np.conj(np.asarray(y))))

    def norm(self, x, space: str = "H") -> float:
        g = self.gram(space)
        return float(np.sqrt(np.sum(g * np.abs(np.asarray(x)) ** 2).real))

    def norm_fn(self, space: str) -> Callable:
        g = self.gram(space)
        return lambda x: float(np.sqrt(np.sum(g * np.abs(np.asarray(x)) ** 2)))

    def dual_pairing(self, f, v) -> complex:
        """<f, v> extending the H product (f in V', v in V)."""
        return self.inner(f, v, "H")

    def op_norm(self, mat: np.ndarray, domain: str = "H", codomain: str = "H") -> float:
        """Operator norm of a coordinate matrix between weighted spaces."""
        gd = self.gram(domain)
        gc = self.gram(codomain)
        sand = np.sqrt(gc)[:, None] * mat * (1.0 / np.sqrt(gd))[None, :]
        return float(np.linalg.norm(sand, ord=2))


def build_weighted_triple(n_x: int, weight: Callable) -> DiscreteTriple:
    """Midpoint nodes x_j = (j - 1/2)/n_x with uniform quadrature weights."""
    if n_x < 2:
        raise ValueError("n_x must be >= 2")
    x = (np.arange(n_x) + 0.5) / n_x
    w = np.asarray([float(weight(xx)) for xx in x])
    return DiscreteTriple(nodes=x, quad_weights=np.full(n_x, 1.0 / n_x), weight=w)


def triple_to_json(triple: DiscreteTriple) -> str:
    return json.dumps(
        {
            "dim": triple.dim,
            "nodes": triple.nodes.tolist(),
            "quad_weights": triple.quad_weights.tolist(),
            "weight": triple.weight.tolist(),
        },
        sort_keys=True,
    )


@dataclass
class NonAutonomousForm:
    """Time-indexed sesquilinear form a(t, u, v) = v* B(t) u in triple
    coordinates, with declared bounds and continuity modulus.

    ``modulus`` is any callable r -> omega(r); ``diagonal`` marks families
    whose B(t) is diagonal (enables fast resolvent paths downstream).
    """

    evaluator: Callable[[float], np.ndarray]
    bound_M: float
    coercivity_gamma: float
    modulus: Callable[[float], float] | None = None
    diagonal: bool = False
    label: str = ""

    def matrix(self, t: float) -> np.ndarray:
        return np.asarray(self.evaluator(t), dtype=complex)


@dataclass
class OperatorPair:
    """Coordinate matrices of the form operator at a fixed time.

    ``op`` realizes both the V -> V' operator and its part in H (they agree
    on the discrete space); norms differ only through the Gram sandwiches.
    """

    triple: DiscreteTriple
    t: float
    B: np.ndarray
    op: np.ndarray
    diagonal: bool = False
    _diag: np.ndarray | None = field(default=None, repr=False)
    _inv: np.ndarray | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.triple.dim

    @property
    def diag(self) -> np.ndarray:
        if self._diag is None:
            raise ValueError("operator is not diagonal")
        return self._diag

    def apply(self, x: np.ndarray) -> np.ndarray:
        if self.diagonal:
            return self.diag * x
        return self.op @ x

    def inverse(self) -> np.ndarray:
        if self._inv is None:
            object.__setattr__(self, "_inv", np.linalg.inv(self.op))
        return self._inv

    def solve(self, b: np.ndarray) -> np.ndarray:
        if self.diagonal:
            return b / self.diag
        return np.linalg.solve(self.op, b)

    def resolvent_apply(self, z: complex, rhs: np.ndarray) -> np.ndarray:
        """(z I + op)^{-1} rhs."""
        if self.diagonal:
            return rhs / (z + self.diag)
        return np.linalg.solve(z * np.eye(self.dim) + self.op, rhs)

    def resolvent_matrix(self, z: complex) -> np.ndarray:
        if self.diagonal:
            return np.diag(1.0 / (z + self.diag))
        return np.linalg.inv(z * np.eye(self.dim) + self.op)


def form_to_operators(form: NonAutonomousForm, triple: DiscreteTriple, t: float) -> OperatorPair:
    """Assemble the operator matrix solving <A u, v>_H = a(t, u, v)."""
    B = form.matrix(t)
    if B.shape != (triple.dim, triple.dim):
        raise ValueError("form matrix dimension mismatch")
    op = B / triple.quad_weights[:, None]
    d = None
    isdiag = form.diagonal
    if isdiag:
        off = op - np.diag(np.diag(op))
        if np.max(np.abs(off)) > 1e-13 * max(np.max(np.abs(op)), 1e-300):
            isdiag = False
        else:
            d = np.diag(op).copy()
    return OperatorPair(triple=triple, t=t, B=B, op=op, diagonal=isdiag, _diag=d)


@dataclass
class FormConstants:
    bound_M: float
    coercivity_gamma: float
    t_at_M: float
    t_at_gamma: float


def estimate_form_constants(form: NonAutonomousForm, triple: DiscreteTriple, t_samples) -> FormConstants:
    """Measured boundedness and coercivity constants over sampled times.

    Rejects the form when the smallest eigenvalue of the V-symmetrized real
    part is not positive.
    """
    ts = np.atleast_1d(np.asarray(t_samples, dtype=float))
    if ts.size == 0:
        raise ValueError("need at least one sample time")
    gv = triple.gram("V")
    sq = np.sqrt(gv)
    best_m, best_g = -np.inf, np.inf
    t_m = t_g = ts[0]
    for t in ts:
        B = form.matrix(t)
        sand = B / sq[:, None] / sq[None, :]
        m = float(np.linalg.norm(sand, ord=2))
        herm = 0.5 * (sand + sand.conj().T)
        g = float(np.linalg.eigvalsh(herm)[0])
        if m > best_m:
            best_m, t_m = m, t
        if g < best_g:
            best_g, t_g = g, t
    if best_g <= 0.0:
        raise ValueError(
            "form is not coercive: min real-part eigenvalue %g at t = %g" % (best_g, t_g)
        )
    return FormConstants(bound_M=best_m, coercivity_gamma=best_g, t_at_M=float(t_m), t_at_gamma=float(t_g))


def sector_samples(theta: float, r_min: float, r_max: float, per_decade: int, interior_rays: int = 3) -> np.ndarray:
    """lambda samples on the sector boundary rays and interior rays."""
    if not (np.pi / 2 < theta < np.pi):
        raise ValueError("theta must lie in (pi/2, pi)")
    decades = np.log10(r_max / r_min)
    n = max(2, int(np.ceil(decades * per_decade)))
    r = np.logspace(np.log10(r_min), np.log10(r_max), n)
    angles = [theta, -theta]
    for k in range(1, interior_rays + 1):
        a = theta * k / (interior_rays + 1)
        angles += [a, -a]
    angles.append(0.0)
    out = np.concatenate([r * np.exp(1j * a) for a in angles])
    return out


@dataclass
class ResolventReport:
    theta: float
    sup_h: float
    sup_vp: float
    sup_h_to_v: float
    argmax_h: complex
    argmax_vp: complex
    argmax_h_to_v: complex
    n_samples: int


def resolvent_bound_check(pair: OperatorPair, theta: float, lambda_samples) -> ResolventReport:
    """Suprema of |l| ||(l+A)^-1||_H, |l| ||(l+A)^-1||_V', and
    sqrt(|l|) ||(l+A)^-1||_{H->V} over the sampled sector points."""
    lam = np.atleast_1d(np.asarray(lambda_samples, dtype=complex))
    if np.any(np.abs(np.angle(lam)) > theta + 1e-12):
        raise ValueError("a lambda sample lies outside the sector")
    sup = {"H": (0.0, 0j), "Vp": (0.0, 0j), "HV": (0.0, 0j)}
    for z in lam:
        res = pair.resolvent_matrix(z)
        az = abs(z)
        qh = az * pair.triple.op_norm(res, "H", "H")
        qv = az * pair.triple.op_norm(res, "Vp", "Vp")
        qhv = np.sqrt(az) * pair.triple.op_norm(res, "H", "V")
        if qh > sup["H"][0]:
            sup["H"] = (qh, z)
        if qv > sup["Vp"][0]:
            sup["Vp"] = (qv, z)
        if qhv > sup["HV"][0]:
            sup["HV"] = (qhv, z)
    return ResolventReport(
        theta=float(theta),
        sup_h=sup["H"][0],
        sup_vp=sup["Vp"][0],
        sup_h_to_v=sup["HV"][0],
        argmax_h=sup["H"][1],
        argmax_vp=sup["Vp"][1],
        argmax_h_to_v=sup["HV"][1],
        n_samples=lam.size,
    )


def resolvent_stability_study(pair: OperatorPair, theta: float, r_min: float, r_max: float, per_decade: int = 8):
    """Sup quantities at base and doubled sample density, with drifts."""
    base = resolvent_bound_check(pair, theta, sector_samples(theta, r_min, r_max, per_decade))
    fine = resolvent_bound_check(pair, theta, sector_samples(theta, r_min, r_max, 2 * per_decade))
    drifts = {
        "H": abs(fine.sup_h - base.sup_h) / base.sup_h,
        "Vp": abs(fine.sup_vp - base.sup_vp) / base.sup_vp,
        "HV": abs(fine.sup_h_to_v - base.sup_h_to_v) / base.sup_h_to_v,
    }
    return base, fine, drifts
