"""Uniform B-splines of maximal smoothness and their tensor products.

The 1D basis function ``phi_{i,p}`` lives on the uniform knots ``x_i = i*h``
and is supported on ``[x_i, x_{i+p+1}]``.  Its order-zero member is the
indicator of the half-open cell ``[x_i, x_{i+1})`` so that every point
belongs to exactly one cell.

Evaluation does not recurse at call time.  The Cox-de Boor recursion is run
once per order on polynomial pieces (one per knot cell), and values or
derivatives are then read off the monomial coefficients of the piece that
contains the point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import polynomial as npoly

from .exceptions import InvalidArgumentError, UnknownBasisError

__all__ = [
    "bspline_pieces",
    "local_basis_1d",
    "eval_bspline_1d",
    "eval_bspline_1d_deriv",
    "UniformKnotGrid1D",
    "TensorBSplineBasis",
    "eval_tensor",
    "support_box",
]


@lru_cache(maxsize=None)
def _pieces(p: int, k: int) -> np.ndarray:
    if k == 0:
        pieces = [np.array([1.0])]
        for q in range(1, p + 1):
            new = []
            for r in range(q + 1):
                acc = np.zeros(1)
                if r <= q - 1:
                    # x/q * phi_{0,q-1}(x) with x = r + t
                    acc = npoly.polyadd(acc, npoly.polymul([r / q, 1.0 / q], pieces[r]))
                if r >= 1:
                    # (q+1-x)/q * phi_{1,q-1}(x), phi_{1,q-1}(x) = phi_{0,q-1}(x-1)
                    acc = npoly.polyadd(
                        acc, npoly.polymul([(q + 1 - r) / q, -1.0 / q], pieces[r - 1])
                    )
                new.append(acc)
            pieces = new
        out = np.zeros((p + 1, p + 1))
        for r, c in enumerate(pieces):
            out[r, : len(c)] = c
    else:
        base = _pieces(p, 0)
        out = np.zeros((p + 1, p + 1))
        for r in range(p + 1):
            d = npoly.polyder(base[r], k)
            out[r, : len(d)] = d
    out.setflags(write=False)
    return out


def bspline_pieces(p: int, k: int = 0) -> np.ndarray:
    """Monomial coefficients of the cell pieces of the unit-knot B-spline.

    Parameters
    ----------
    p : int
        Polynomial order (degree).
    k : int, optional
        Derivative order, taken with respect to the local cell coordinate.

    Returns
    -------
    numpy.ndarray
        Array of shape ``(p+1, p+1)``.  Row ``r`` holds the ascending
        coefficients of ``d^k/dt^k phi_{0,p}(r + t)`` for ``t`` in ``[0, 1)``.
    """
    if p < 0:
        raise InvalidArgumentError(f"order must be nonnegative, got {p}")
    if k < 0:
        raise InvalidArgumentError(f"derivative order must be nonnegative, got {k}")
    if k > p:
        return np.zeros((p + 1, p + 1))
    return _pieces(int(p), int(k))


def local_basis_1d(p: int, t: np.ndarray, k: int = 0) -> np.ndarray:
    """Evaluate the ``p+1`` B-splines that are nonzero on one cell.

    For cell ``j`` the local index ``a`` refers to ``phi_{j-p+a}``.  ``t`` is
    the local coordinate in ``[0, 1]`` and derivatives are with respect to
    ``t`` (divide by ``h**k`` for physical derivatives).

    Returns an array of shape ``(len(t), p+1)``.
    """
    t = np.asarray(t, dtype=float)
    coeffs = bspline_pieces(p, k)[::-1]  # local a <-> piece p - a
    powers = t[:, None] ** np.arange(p + 1)
    return powers @ coeffs.T


@dataclass(frozen=True)
class UniformKnotGrid1D:
    """Uniform knots ``x_i = i*h`` for ``i`` in ``[first, last]``."""

    h: float
    first: int
    last: int

    def __post_init__(self):
        if not (self.h > 0 and math.isfinite(self.h)):
            raise InvalidArgumentError(f"mesh parameter must be positive, got {self.h}")
        if self.last < self.first:
            raise InvalidArgumentError("knot index range is empty")

    def node(self, i: int) -> float:
        return i * self.h

    def __contains__(self, i: int) -> bool:
        return self.first <= i <= self.last

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.first, self.last + 1) * self.h


def _eval_1d(i: int, p: int, x, h: float, k: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    s = x / h
    cell = np.floor(s)
    r = (cell - i).astype(int)
    t = s - cell
    inside = (r >= 0) & (r <= p)
    coeffs = bspline_pieces(p, k)
    out = np.zeros_like(s)
    if np.any(inside):
        rr = r[inside]
        tt = t[inside]
        powers = tt[..., None] ** np.arange(p + 1)
        out[inside] = np.sum(powers * coeffs[rr], axis=-1)
    return out / h**k


def eval_bspline_1d(i: int, p: int, x, h: float = 1.0):
    """Value of ``phi_{i,p}`` at ``x`` (scalar or array)."""
    if p < 0:
        raise InvalidArgumentError(f"order must be nonnegative, got {p}")
    out = _eval_1d(i, p, x, h, 0)
    return float(out) if out.ndim == 0 else out


def eval_bspline_1d_deriv(i: int, p: int, x, k: int, h: float = 1.0):
    """``k``-th derivative of ``phi_{i,p}`` at ``x``.

    Only the ``p``-th derivative jumps at knots; there the limit from the
    right is returned.
    """
    if p < 0:
        raise InvalidArgumentError(f"order must be nonnegative, got {p}")
    if not 0 <= k <= p:
        raise InvalidArgumentError(f"derivative order {k} outside 0..{p}")
    out = _eval_1d(i, p, x, h, k)
    return float(out) if out.ndim == 0 else out


class TensorBSplineBasis:
    """Tensor-product B-splines on a uniform grid in one or two dimensions.

    Parameters
    ----------
    p : int
        Order per axis.
    h : float
        Grid spacing (identical on all axes).
    dim : int
        Spatial dimension, 1 or 2.
    index_set : iterable of tuple, optional
        Admissible multi-indices.  ``None`` admits every integer tuple.
    """

    def __init__(self, p: int, h: float, dim: int = 2,
                 index_set: Optional[Iterable[Sequence[int]]] = None):
        if p < 0:
            raise InvalidArgumentError(f"order must be nonnegative, got {p}")
        if dim not in (1, 2):
            raise InvalidArgumentError(f"dimension must be 1 or 2, got {dim}")
        if not (h > 0 and math.isfinite(h)):
            raise InvalidArgumentError(f"mesh parameter must be positive, got {h}")
        self.p = int(p)
        self.h = float(h)
        self.dim = int(dim)
        self.index_set = None if index_set is None else {tuple(int(v) for v in m) for m in index_set}

    def _check(self, multi_index) -> Tuple[int, ...]:
        mi = tuple(int(v) for v in np.atleast_1d(multi_index))
        if len(mi) != self.dim or (self.index_set is not None and mi not in self.index_set):
            raise UnknownBasisError(f"multi-index {mi} is not in the basis")
        return mi

    def support_box(self, multi_index) -> np.ndarray:
        """Per-axis support intervals, shape ``(dim, 2)``."""
        mi = np.array(self._check(multi_index), dtype=float)
        return np.stack([mi * self.h, (mi + self.p + 1) * self.h], axis=1)

    def evaluate(self, multi_index, points) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Value, gradient and Hessian at ``points`` of shape ``(n, dim)``."""
        mi = self._check(multi_index)
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n = pts.shape[0]
        vals = [[_eval_1d(mi[a], self.p, pts[:, a], self.h, k) for k in range(3)]
                for a in range(self.dim)]
        if self.dim == 1:
            v, d1, d2 = vals[0]
            return v, d1[:, None], d2[:, None, None]
        (v0, g0, s0), (v1, g1, s1) = vals
        value = v0 * v1
        grad = np.stack([g0 * v1, v0 * g1], axis=-1)
        hess = np.empty((n, 2, 2))
        hess[:, 0, 0] = s0 * v1
        hess[:, 1, 1] = v0 * s1
        hess[:, 0, 1] = hess[:, 1, 0] = g0 * g1
        return value, grad, hess


def eval_tensor(basis: TensorBSplineBasis, multi_index, point):
    """Value, gradient and Hessian of one basis function at a single point."""
    v, g, hss = basis.evaluate(multi_index, np.reshape(point, (1, -1)))
    return float(v[0]), g[0], hss[0]


def support_box(basis: TensorBSplineBasis, multi_index) -> np.ndarray:
    return basis.support_box(multi_index)
