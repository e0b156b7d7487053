"""Direct solution, rigid-mode augmentation and condition estimates.

All systems are solved with a sparse LU factorisation after symmetric Jacobi
equilibration.  Cut-cell stiffness matrices without basis removal can be
extremely ill-conditioned, so the factorisation is followed by a residual
check and, if needed, a few steps of iterative refinement.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cut_geometry import CutQuadrature
from .discrete_space import SpacePartition
from .exceptions import ConfigurationError, InvalidArgumentError, SingularSystemError
from .forms import AssembledSystem

__all__ = ["SolveResult", "solve", "augment_rigid_modes", "condition_estimate",
           "rigid_mode_values"]


@dataclass(frozen=True)
class SolveResult:
    """Solution over the system dofs, multipliers and factorisation statistics."""

    x: np.ndarray
    multipliers: np.ndarray
    residual: float
    relative_residual: float
    stats: Mapping = field(default_factory=dict)

    def __post_init__(self):
        self.x.setflags(write=False)
        self.multipliers.setflags(write=False)
        object.__setattr__(self, "stats", MappingProxyType(dict(self.stats)))


def _equilibrate(A: sp.csr_matrix):
    d = np.abs(np.asarray(A.diagonal(), dtype=float))
    scale = np.ones_like(d)
    pos = d > 0
    scale[pos] = 1.0 / np.sqrt(d[pos])
    D = sp.diags(scale)
    return (D @ A @ D).tocsc(), scale


def _factor(A: sp.csc_matrix, symmetric: bool, pivot_tol: float):
    n = A.shape[0]
    opts = {"permc_spec": "MMD_AT_PLUS_A" if symmetric else "COLAMD"}
    try:
        lu = spla.splu(A, **opts)
    except RuntimeError as exc:  # "Factor is exactly singular"
        raise SingularSystemError(f"factorisation failed: {exc}", pivot=0.0) from exc
    u = np.abs(lu.U.diagonal())
    umax = float(u.max()) if n else 1.0
    umin = float(u.min()) if n else 1.0
    if not np.isfinite(umin) or umin <= pivot_tol * umax:
        raise SingularSystemError(
            f"pivot {umin:.3e} is below {pivot_tol:.1e} times the largest pivot", pivot=umin)
    return lu, umin / umax


def solve(system: AssembledSystem, rtol: float = 1e-10, max_refine: int = 3,
          pivot_tol: float = 1e-15) -> SolveResult:
    """Solve ``system`` by equilibrated sparse LU.

    Parameters
    ----------
    system : AssembledSystem
        Square system; trailing rows flagged by ``meta["multipliers"]`` are
        Lagrange multipliers.
    rtol : float
        Accepted residual ``|Ax - b| <= rtol (|A| |x| + |b|)`` (Frobenius
        norm for ``|A|``).
    max_refine : int
        Maximum iterative-refinement steps if the first solve misses ``rtol``.
    pivot_tol : float
        Smallest admissible pivot relative to the largest one.

    Raises
    ------
    SingularSystemError
        On a (numerically) singular factorisation or when refinement cannot
        reach ``rtol``.
    """
    A = sp.csr_matrix(system.matrix)
    b = np.asarray(system.load, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n):
        raise InvalidArgumentError(f"matrix must be square, got {A.shape}")
    if b.shape != (n,):
        raise InvalidArgumentError(f"load has shape {b.shape}, expected ({n},)")
    t0 = time.perf_counter()
    As, s = _equilibrate(A)
    lu, ratio = _factor(As, system.symmetric, pivot_tol)
    x = s * lu.solve(s * b)
    anorm = float(spla.norm(A))
    bnorm = float(np.linalg.norm(b))
    steps = 0
    r = b - A @ x
    while np.linalg.norm(r) > rtol * (anorm * np.linalg.norm(x) + bnorm) and steps < max_refine:
        x = x + s * lu.solve(s * r)
        r = b - A @ x
        steps += 1
    res = float(np.linalg.norm(r))
    scale = anorm * float(np.linalg.norm(x)) + bnorm
    if res > rtol * scale and res > 0:
        raise SingularSystemError(
            f"residual {res:.3e} exceeds {rtol:.1e} x {scale:.3e} after {steps} refinements",
            pivot=ratio)
    nmult = int(system.meta.get("multipliers", 0))
    stats = {"n": n, "nnz": int(A.nnz), "nnz_factor": int(lu.L.nnz + lu.U.nnz),
             "pivot_ratio": ratio, "refinements": steps,
             "seconds": time.perf_counter() - t0}
    return SolveResult(x[: n - nmult].copy(), x[n - nmult:].copy(), res,
                       res / bnorm if bnorm > 0 else res, stats)


def rigid_mode_values(points: np.ndarray) -> np.ndarray:
    """Rigid modes at ``points``: shape ``(3, n, 2)`` for x/y translation and rotation."""
    x, y = points[:, 0], points[:, 1]
    one, zero = np.ones_like(x), np.zeros_like(x)
    return np.stack([np.stack([one, zero], 1), np.stack([zero, one], 1), np.stack([-y, x], 1)])


def augment_rigid_modes(system: AssembledSystem, space: SpacePartition,
                        quadrature: CutQuadrature) -> AssembledSystem:
    """Append the three rigid-mode constraints ``int r . u = 0`` as multipliers.

    Returns the saddle-point system ``[[A, C^T], [C, 0]]`` with load
    ``[b, 0]``; ``meta["multipliers"] = 3``.
    """
    if system.ncomp != 2:
        raise ConfigurationError("rigid-mode augmentation needs an elasticity system")
    if system.meta.get("multipliers"):
        raise ConfigurationError("system is already augmented")
    nb = system.nbasis
    pos = np.arange(space.size) if system.positions is None else system.positions
    local = -np.ones(space.size, dtype=np.int64)
    local[pos] = np.arange(nb)
    C = np.zeros((3, 2 * nb))
    for e in space.active_elements:
        rule = quadrature.rules[e]
        ev = space.element_basis(e, rule.points, nderiv=0)
        ok = ev.dofs >= 0
        sys_dofs = local[ev.dofs[ok]]
        keep = sys_dofs >= 0
        sys_dofs = sys_dofs[keep]
        V = ev.values[:, ok][:, keep]
        R = rigid_mode_values(rule.points)
        for c in range(2):
            np.add.at(C, (slice(None), sys_dofs + c * nb),
                      np.einsum("q,mq,qa->ma", rule.weights, R[:, :, c], V))
    Cs = sp.csr_matrix(C)
    A = sp.bmat([[system.matrix, Cs.T], [Cs, None]], format="csr")
    meta = dict(system.meta)
    meta["multipliers"] = 3
    return AssembledSystem(A, np.concatenate([system.load, np.zeros(3)]), system.indices,
                           system.ncomp, system.symmetric, meta, system.positions)


def condition_estimate(system, maxiter: int = 200, tol: float = 1e-4, seed: int = 0,
                       raise_on_singular: bool = False) -> float:
    """Spectral condition number ``sigma_max / sigma_min`` of the stiffness matrix.

    ``sigma_max^2`` comes from power iteration on ``A^T A`` and
    ``sigma_min^2`` from inverse iteration through one LU factorisation of
    ``A``.  Multiplier rows and columns are excluded.  Iteration stops when
    the Rayleigh quotient changes by less than ``tol`` (relative) or after
    ``maxiter`` steps.

    Returns ``inf`` when ``A`` cannot be factorised (unless
    ``raise_on_singular``).
    """
    if isinstance(system, AssembledSystem):
        A = sp.csr_matrix(system.matrix)
        m = int(system.meta.get("multipliers", 0))
        if m:
            A = A[:-m, :-m]
    else:
        A = sp.csr_matrix(system)
    n = A.shape[0]
    if A.shape != (n, n) or n == 0:
        raise InvalidArgumentError(f"matrix must be square and nonempty, got {A.shape}")
    rng = np.random.default_rng(seed)
    start = rng.standard_normal(n)

    def power(apply):
        v = start / np.linalg.norm(start)
        lam = 0.0
        for _ in range(maxiter):
            w = apply(v)
            new = float(v @ w)
            nw = np.linalg.norm(w)
            if nw == 0:
                return 0.0
            v = w / nw
            if lam and abs(new - lam) <= tol * abs(new):
                return new
            lam = new
        return lam

    AT = A.T.tocsr()
    smax2 = power(lambda v: AT @ (A @ v))
    try:
        lu, _ = _factor(A.tocsc(), False, 0.0)
    except SingularSystemError:
        if raise_on_singular:
            raise
        return float("inf")
    with np.errstate(all="ignore"):
        inv = power(lambda v: lu.solve(lu.solve(v, trans="T")))
    if not (np.isfinite(inv) and inv > 0):
        if raise_on_singular:
            raise SingularSystemError("inverse iteration diverged", pivot=0.0)
        return float("inf")
    return float(np.sqrt(smax2 * inv))
