"""B-spline basis with edge-thinned knots and the third-derivative penalty."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError, SpecError

# Knot density transform: spacing grows smoothly across |u| in
# [_THIN_START, 1], centred on |psi| ~ 0.8.
_THIN_START = 0.6
_THIN_WIDTH = 1.0 - _THIN_START

DEFAULT_THINNING = 2.5


def _thinning_map(u: np.ndarray, thinning: float) -> np.ndarray:
    """Odd, increasing map of [-1, 1] onto itself with slope ratio ``thinning``
    between the edge and the centre.

    The slope is ``1 + (thinning - 1) * smoothstep((|u| - 0.6) / 0.4)``; its
    integral is closed form.
    """
    a = np.abs(u)
    t = np.clip((a - _THIN_START) / _THIN_WIDTH, 0.0, 1.0)
    g = a + (thinning - 1.0) * _THIN_WIDTH * (t**3 - 0.5 * t**4)
    total = 1.0 + (thinning - 1.0) * _THIN_WIDTH * 0.5
    return np.sign(u) * g / total


def make_knots(n_interior: int = 20, edge_thinning: float = DEFAULT_THINNING,
               order: int = 4, lo: float = -1.0, hi: float = 1.0) -> np.ndarray:
    """Clamped knot vector on [lo, hi] with ``n_interior`` symmetric interior knots.

    Interior knots are equispaced in an auxiliary coordinate and mapped
    through a density transform that widens the spacing near both edges.
    ``edge_thinning=1`` gives uniform knots.
    """
    if n_interior < 1:
        raise SpecError(f"n_interior must be >= 1, got {n_interior}")
    if edge_thinning < 1:
        raise SpecError(f"edge_thinning must be >= 1, got {edge_thinning}")
    u = -1.0 + 2.0 * np.arange(1, n_interior + 1) / (n_interior + 1)
    x = _thinning_map(u, edge_thinning)
    # exact antisymmetry and an exact zero for odd counts
    x = 0.5 * (x - x[::-1])
    interior = lo + (x + 1.0) * 0.5 * (hi - lo)
    return np.concatenate([np.full(order, lo), interior, np.full(order, hi)])


def _find_span(t: np.ndarray, degree: int, n_basis: int, x: np.ndarray) -> np.ndarray:
    lo, hi = t[degree], t[n_basis]
    span = np.searchsorted(t, x, side="right") - 1
    last = np.searchsorted(t, hi, side="left") - 1
    span = np.where(x >= hi, last, span)
    return np.clip(span, degree, n_basis - 1)


def _basis_matrix(t: np.ndarray, degree: int, x: np.ndarray) -> np.ndarray:
    """Cox-de Boor evaluation of all ``len(t) - degree - 1`` basis functions at ``x``."""
    n_basis = len(t) - degree - 1
    x = np.asarray(x, dtype=float)
    span = _find_span(t, degree, n_basis, x)
    nx = x.size
    vals = np.zeros((nx, degree + 1))
    vals[:, 0] = 1.0
    left = np.zeros((nx, degree + 1))
    right = np.zeros((nx, degree + 1))
    for j in range(1, degree + 1):
        left[:, j] = x - t[span + 1 - j]
        right[:, j] = t[span + j] - x
        saved = np.zeros(nx)
        for r in range(j):
            denom = right[:, r + 1] + left[:, j - r]
            with np.errstate(divide="ignore", invalid="ignore"):
                temp = np.where(denom != 0, vals[:, r] / denom, 0.0)
            vals[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        vals[:, j] = saved
    out = np.zeros((nx, n_basis))
    cols = span[:, None] - degree + np.arange(degree + 1)[None, :]
    np.put_along_axis(out, cols, vals, axis=1)
    return out


def _derivative_operator(t: np.ndarray, degree: int) -> np.ndarray:
    """Map spline coefficients of degree ``p`` on ``t`` to coefficients of the
    derivative (degree ``p-1`` on ``t[1:-1]``)."""
    n = len(t) - degree - 1
    D = np.zeros((n - 1, n))
    for i in range(n - 1):
        h = t[i + degree + 1] - t[i + 1]
        if h > 0:
            D[i, i] = -degree / h
            D[i, i + 1] = degree / h
    return D


@dataclass(frozen=True, eq=False)
class SplineBasis:
    """B-spline basis of a given order (4 = cubic) on a full knot vector.

    The evaluation domain is ``[knots[order-1], knots[K]]``; for the clamped
    vectors produced by :func:`make_knots` that is the whole interval.
    """

    knots: np.ndarray
    order: int = 4

    def __post_init__(self):
        t = np.asarray(self.knots, dtype=float)
        if self.order < 1:
            raise SpecError("order must be >= 1")
        if t.ndim != 1 or t.size < 2 * self.order:
            raise SpecError("knot vector too short for the requested order")
        if np.any(np.diff(t) < 0):
            raise SpecError("knot vector must be nondecreasing")
        t.setflags(write=False)
        object.__setattr__(self, "knots", t)

    @classmethod
    def clamped(cls, n_interior: int = 20, edge_thinning: float = DEFAULT_THINNING,
                order: int = 4, lo: float = -1.0, hi: float = 1.0) -> "SplineBasis":
        return cls(make_knots(n_interior, edge_thinning, order, lo, hi), order)

    @property
    def degree(self) -> int:
        return self.order - 1

    @property
    def K(self) -> int:
        return self.knots.size - self.order

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.knots[self.degree]), float(self.knots[self.K])

    @property
    def interior_knots(self) -> np.ndarray:
        lo, hi = self.domain
        t = self.knots
        return t[(t > lo) & (t < hi)]

    @property
    def is_symmetric(self) -> bool:
        lo, hi = self.domain
        return bool(np.allclose(self.knots - lo, (hi - self.knots)[::-1], atol=1e-12))

    def metadata(self) -> dict:
        """Both readings of "number of knots": interior knots and basis size."""
        return {"n_interior_knots": int(self.interior_knots.size), "n_basis": self.K,
                "order": self.order}

    def _check(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        lo, hi = self.domain
        tol = 1e-12 * max(1.0, hi - lo)
        if np.any(~np.isfinite(x)) or np.any(x < lo - tol) or np.any(x > hi + tol):
            raise DomainError(f"evaluation point outside the basis domain [{lo}, {hi}]")
        return np.clip(x, lo, hi)

    def __call__(self, x, deriv: int = 0) -> np.ndarray:
        return self.design(x, deriv)

    def design(self, x, deriv: int = 0) -> np.ndarray:
        """Basis (or its ``deriv``-th derivative) at each point; shape (len(x), K)."""
        x = self._check(x)
        if deriv >= self.order:
            return np.zeros((x.size, self.K))
        t = self.knots
        ops = np.eye(self.K)
        for m in range(deriv):
            ops = _derivative_operator(t[m:t.size - m], self.degree - m) @ ops
        low = _basis_matrix(t[deriv:t.size - deriv], self.degree - deriv, x)
        return low @ ops

    @cached_property
    def penalty(self) -> np.ndarray:
        return penalty_matrix(self)

    def fold(self, constraint: str) -> np.ndarray:
        """Coefficient map ``alpha = F @ beta`` implementing a term constraint."""
        K = self.K
        if constraint == "free":
            return np.eye(K)
        if constraint == "constant":
            return np.ones((K, 1))
        if constraint == "symmetric":
            if not self.is_symmetric:
                raise SpecError("symmetric constraint requires a symmetric knot vector")
            m = (K + 1) // 2
            F = np.zeros((K, m))
            for k in range(K):
                F[k, min(k, K - 1 - k)] = 1.0
            return F
        raise SpecError(f"unknown constraint {constraint!r}")

    def to_json(self) -> dict:
        return {"knots": self.knots.tolist(), "order": self.order}

    @classmethod
    def from_json(cls, obj) -> "SplineBasis":
        return cls(np.asarray(obj["knots"], dtype=float), int(obj.get("order", 4)))


def eval_basis(basis: SplineBasis, psi) -> np.ndarray:
    """Basis values at a scalar ``psi`` (length K) or at an array (len x K)."""
    out = basis.design(psi)
    return out[0] if np.ndim(psi) == 0 else out


def penalty_matrix(basis: SplineBasis, deriv: int = 3) -> np.ndarray:
    """Gram matrix of the ``deriv``-th derivatives, ``S_jk = int B_j^(m) B_k^(m)``.

    The integrand is a polynomial of degree ``2 (order - 1 - deriv)`` on each
    knot interval, so Gauss-Legendre with ``order - deriv`` nodes per interval
    is exact. For cubic splines and ``deriv=3`` that is one midpoint node.
    """
    K = basis.K
    if deriv >= basis.order:
        return np.zeros((K, K))
    n_nodes = max(1, basis.order - deriv)
    nodes, weights = np.polynomial.legendre.leggauss(n_nodes)
    t = basis.knots
    lo, hi = basis.domain
    breaks = np.unique(t[(t >= lo) & (t <= hi)])
    S = np.zeros((K, K))
    for a, b in zip(breaks[:-1], breaks[1:]):
        half = 0.5 * (b - a)
        x = 0.5 * (a + b) + half * nodes
        Bm = basis.design(x, deriv)
        S += (Bm * (half * weights)[:, None]).T @ Bm
    return 0.5 * (S + S.T)
