"""Nitsche forms for Poisson and linear elasticity on the cut spline space.

Every system is built from a handful of term matrices over the full index set
``I`` (stiffness ``K``, Dirichlet boundary mass ``M``, flux coupling ``N``,
flux mass ``Q``, least-squares ``L`` and ghost jumps ``G``) and then
restricted to the active functions.  Restricting is exact: the Galerkin
matrix on ``V_{h,a}`` is the principal submatrix of the one on ``V_h``.

Sign convention: ``A[i, j] = A_h(phi_j, phi_i)`` and ``N[i, j] =
(n . grad phi_j, phi_i)`` on the Dirichlet boundary, so the nonsymmetric
method reads ``K - N + N^T + beta/h M + tau h^2 L``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np
import scipy.io
import scipy.sparse as sp

from .cut_geometry import CutQuadrature
from .discrete_space import SpacePartition
from .exceptions import AssemblyError, ConfigurationError, InvalidArgumentError
from .spline_basis import local_basis_1d

__all__ = [
    "NitscheParams",
    "ModelProblem",
    "AssembledSystem",
    "FormTerms",
    "assemble_terms",
    "assemble_poisson_nonsym",
    "assemble_poisson_sym",
    "assemble_elasticity_nonsym",
    "energy_norm",
    "NormBreakdown",
    "lame_parameters",
]


@dataclass(frozen=True)
class NitscheParams:
    """Penalty ``beta`` (default ``10 p^2``), least-squares ``tau``, ghost ``gamma``.

    ``ls_operator`` picks the elasticity least-squares operator: ``"strain"``
    for the divergence of the strain, ``"stress"`` for the divergence of the
    stress (the only choice that is consistent with the load).
    """

    beta: Optional[float] = None
    tau: float = 0.1
    gamma: float = 0.1
    ls_operator: str = "strain"

    def __post_init__(self):
        if self.beta is not None and not self.beta > 0:
            raise ConfigurationError(f"beta must be positive, got {self.beta}")
        if not self.tau >= 0:
            raise ConfigurationError(f"tau must be nonnegative, got {self.tau}")
        if not self.gamma > 0:
            raise ConfigurationError(f"gamma must be positive, got {self.gamma}")
        if self.ls_operator not in ("strain", "stress"):
            raise ConfigurationError(f"unknown least-squares operator {self.ls_operator!r}")

    def penalty(self, p: int) -> float:
        return 10.0 * p * p if self.beta is None else float(self.beta)


def lame_parameters(E: float, nu: float):
    """Plane-strain ``(lambda, mu)``."""
    return E * nu / ((1 + nu) * (1 - 2 * nu)), E / (2 * (1 + nu))


@dataclass
class ModelProblem:
    """Data of a Poisson or elasticity boundary value problem.

    ``g_N`` takes ``(points, normals)``; the other callables take points of
    shape ``(n, 2)``.  For elasticity, vector data has shape ``(n, 2)``,
    ``exact_grad`` returns ``(n, 2, 2)`` with ``[component, derivative]`` and
    ``exact_hess`` ``(n, 2, 2, 2)``.
    """

    kind: str
    f: Callable
    g_N: Optional[Callable] = None
    g_D: Optional[Callable] = None
    exact: Optional[Callable] = None
    exact_grad: Optional[Callable] = None
    exact_hess: Optional[Callable] = None
    E: float = 1.0
    nu: float = 0.3
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("poisson", "elasticity"):
            raise ConfigurationError(f"unknown problem kind {self.kind!r}")
        if self.kind == "elasticity" and not (self.E > 0 and -1 < self.nu < 0.5):
            raise ConfigurationError(f"invalid material E={self.E}, nu={self.nu}")

    @property
    def ncomp(self) -> int:
        return 2 if self.kind == "elasticity" else 1

    @property
    def lame(self):
        return lame_parameters(self.E, self.nu)

    @property
    def material_scale(self) -> float:
        """``2 mu + lambda`` for elasticity, 1 for Poisson."""
        if self.kind != "elasticity":
            return 1.0
        lam, mu = self.lame
        return 2 * mu + lam


@dataclass
class FormTerms:
    """Term matrices over ``I`` (component-major for vector problems)."""

    ncomp: int
    K: sp.csr_matrix
    M: sp.csr_matrix
    N: sp.csr_matrix
    Q: sp.csr_matrix
    L: sp.csr_matrix
    G: Optional[sp.csr_matrix] = None
    loads: Dict[str, np.ndarray] = field(default_factory=dict)
    boundary_scale: float = 1.0   # multiplies beta/h M and h^-1 boundary norms
    ls_scale: float = 1.0         # multiplies tau h^2 L


@dataclass
class AssembledSystem:
    """Linear system over the active dofs plus the dof <-> basis map.

    ``indices[i]`` is the multi-index of scalar basis ``i``; for vector
    problems dof ``c * n + i`` is component ``c`` of basis ``i``.
    """

    matrix: sp.csr_matrix
    load: np.ndarray
    indices: np.ndarray
    ncomp: int = 1
    symmetric: bool = False
    meta: dict = field(default_factory=dict)
    positions: Optional[np.ndarray] = None   # positions in I of the kept bases

    @property
    def nbasis(self) -> int:
        return len(self.indices)

    @property
    def dof_map(self) -> Dict[tuple, int]:
        return {tuple(int(v) for v in m): i for i, m in enumerate(self.indices)}

    def basis_diagonal(self) -> np.ndarray:
        d = np.asarray(self.matrix.diagonal())[: self.ncomp * self.nbasis]
        return d.reshape(self.ncomp, self.nbasis).sum(axis=0)

    def restrict(self, keep: np.ndarray) -> "AssembledSystem":
        """Principal subsystem on the bases flagged in ``keep``."""
        keep = np.asarray(keep, dtype=bool)
        n = self.nbasis
        sel = np.concatenate([np.nonzero(keep)[0] + c * n for c in range(self.ncomp)])
        A = self.matrix[sel][:, sel].tocsr()
        pos = np.nonzero(keep)[0] if self.positions is None else self.positions[keep]
        meta = dict(self.meta)
        meta["removed"] = int(meta.get("removed", 0) + (~keep).sum())
        return AssembledSystem(A, self.load[sel], self.indices[keep], self.ncomp,
                               self.symmetric, meta, pos)

    def expand(self, x: np.ndarray, size: int) -> np.ndarray:
        """Coefficients over the full index set (zeros on removed bases)."""
        n = self.nbasis
        pos = np.arange(n) if self.positions is None else self.positions
        out = np.zeros(self.ncomp * size)
        for c in range(self.ncomp):
            out[c * size + pos] = x[c * n:(c + 1) * n]
        return out

    def to_matrix_market(self, path) -> None:
        """Coordinate text dump: header, size line, then 1-based ``row col value``."""
        scipy.io.mmwrite(str(path), self.matrix.tocoo(),
                         comment=f"cutiga stiffness, ncomp={self.ncomp}, symmetric={self.symmetric}")


class _Triplets:
    def __init__(self, n: int):
        self.n = n
        self.rows: List[np.ndarray] = []
        self.cols: List[np.ndarray] = []
        self.vals: List[np.ndarray] = []

    def add(self, dofs: np.ndarray, block: np.ndarray):
        m = len(dofs)
        self.rows.append(np.repeat(dofs, m))
        self.cols.append(np.tile(dofs, m))
        self.vals.append(block.ravel())

    def matrix(self) -> sp.csr_matrix:
        if not self.rows:
            return sp.csr_matrix((self.n, self.n))
        A = sp.coo_matrix((np.concatenate(self.vals),
                           (np.concatenate(self.rows), np.concatenate(self.cols))),
                          shape=(self.n, self.n)).tocsr()
        A.sum_duplicates()
        return A


def _vector_dofs(dofs: np.ndarray, n: int, ncomp: int) -> np.ndarray:
    return np.concatenate([dofs + c * n for c in range(ncomp)])


def _face_jump_blocks(space: SpacePartition, face, nq: int):
    """Dofs and jump matrix ``(nq, nloc)`` of the p-th normal derivative on a face."""
    axis, j, k = face
    p, h = space.p, space.mesh.h
    x = (np.polynomial.legendre.leggauss(nq)[0] + 1) / 2
    w = np.polynomial.legendre.leggauss(nq)[1] / 2 * h
    right = local_basis_1d(p, np.array([0.0]), p)[0] / h**p
    left = local_basis_1d(p, np.array([1.0]), p)[0] / h**p
    jump = np.zeros(p + 2)          # over normal-direction indices line-1-p .. line
    jump[1:] += right
    jump[:-1] -= left
    tangential = local_basis_1d(p, x, 0)  # (nq, p+1)
    line, other = (j, k) if axis == 0 else (k, j)
    nidx = line - 1 - p + np.arange(p + 2)
    tidx = other - p + np.arange(p + 1)
    A, B = np.meshgrid(nidx, tidx, indexing="ij")
    multi = np.stack([A.ravel(), B.ravel()], axis=1) if axis == 0 else \
        np.stack([B.ravel(), A.ravel()], axis=1)
    vals = (jump[None, :, None] * tangential[:, None, :]).reshape(nq, -1)
    return space.position(multi), vals, w


def assemble_terms(space: SpacePartition, quadrature: CutQuadrature,
                   problem: Optional[ModelProblem] = None, params: Optional[NitscheParams] = None,
                   need_loads: bool = True, ghost: bool = False) -> FormTerms:
    """All term matrices and load vectors over the full index set."""
    params = params or NitscheParams()
    kind = problem.kind if problem is not None else "poisson"
    if kind == "elasticity":
        return _elasticity_terms(space, quadrature, problem, params, need_loads)
    return _poisson_terms(space, quadrature, problem, params, need_loads, ghost)


def _poisson_terms(space, quadrature, problem, params, need_loads, ghost) -> FormTerms:
    n = space.size
    tK, tM, tN, tQ, tL = (_Triplets(n) for _ in range(5))
    loads = {key: np.zeros(n) for key in ("f", "f_ls", "g_N", "g_D_mass", "g_D_flux")}
    need_loads = need_loads and problem is not None
    has_d = quadrature.domain.has_dirichlet
    if has_d and not space.dirichlet_cut_elements and quadrature.total_surface(True) == 0:
        raise AssemblyError("Dirichlet boundary declared but no Dirichlet quadrature points found")
    for e in space.active_elements:
        rule = quadrature.rules[e]
        ls = e in space.dirichlet_elements
        ev = space.element_basis(e, rule.points, nderiv=2 if ls else 1)
        dofs, w = ev.dofs, rule.weights
        G = ev.grads
        tK.add(dofs, np.einsum("q,qai,qbi->ab", w, G, G))
        if ls:
            lap = ev.laplacian
            tL.add(dofs, np.einsum("q,qa,qb->ab", w, lap, lap))
        if need_loads:
            fv = problem.f(rule.points)
            np.add.at(loads["f"], dofs, np.einsum("q,q,qa->a", w, fv, ev.values))
            if ls:
                np.add.at(loads["f_ls"], dofs, np.einsum("q,q,qa->a", w, fv, ev.laplacian))
        if rule.surface_weights.size == 0:
            continue
        sev = space.element_basis(e, rule.surface_points, nderiv=1)
        V = sev.values
        dn = np.einsum("qai,qi->qa", sev.grads, rule.normals)
        d = rule.dirichlet
        if d.any():
            wd = rule.surface_weights * d
            tM.add(dofs, np.einsum("q,qa,qb->ab", wd, V, V))
            tN.add(dofs, np.einsum("q,qa,qb->ab", wd, V, dn))
            tQ.add(dofs, np.einsum("q,qa,qb->ab", wd, dn, dn))
            if need_loads:
                gd = problem.g_D(rule.surface_points[d])
                np.add.at(loads["g_D_mass"], dofs, np.einsum("q,q,qa->a", wd[d], gd, V[d]))
                np.add.at(loads["g_D_flux"], dofs, np.einsum("q,q,qa->a", wd[d], gd, dn[d]))
        if need_loads and (~d).any() and problem.g_N is not None:
            nm = ~d
            gn = problem.g_N(rule.surface_points[nm], rule.normals[nm])
            np.add.at(loads["g_N"], dofs,
                      np.einsum("q,q,qa->a", rule.surface_weights[nm], gn, V[nm]))
    Gm = None
    if ghost:
        tG = _Triplets(n)
        for face in space.dirichlet_faces:
            fd, J, fw = _face_jump_blocks(space, face, space.p + 1)
            ok = fd >= 0
            tG.add(fd[ok], np.einsum("q,qa,qb->ab", fw, J[:, ok], J[:, ok]))
        Gm = tG.matrix()
    return FormTerms(1, tK.matrix(), tM.matrix(), tN.matrix(), tQ.matrix(), tL.matrix(), Gm, loads)


def _ls_operator(ev, lam, mu, which):
    """Vector least-squares operator ``D[q, b, d, i]`` of the basis ``phi_b e_d``."""
    H = ev.hess
    lap = ev.laplacian
    eye = np.eye(2)
    if which == "strain":
        return 0.5 * (lap[:, :, None, None] * eye[None, None] + H)
    return mu * lap[:, :, None, None] * eye[None, None] + (lam + mu) * H


def _traction(G, normals, lam, mu):
    """``T[q, b, d, c]``: component ``c`` of ``sigma(phi_b e_d) n``."""
    dn = np.einsum("qbi,qi->qb", G, normals)
    eye = np.eye(2)
    return (mu * (eye[None, None] * dn[:, :, None, None]
                  + G[:, :, None, :] * normals[:, None, :, None])
            + lam * G[:, :, :, None] * normals[:, None, None, :])


def _elasticity_terms(space, quadrature, problem, params, need_loads) -> FormTerms:
    nb = space.size
    n = 2 * nb
    lam, mu = problem.lame
    scale = problem.material_scale
    ls_scale = scale if params.ls_operator == "strain" else 1.0 / scale
    tK, tM, tN, tQ, tL = (_Triplets(n) for _ in range(5))
    loads = {key: np.zeros(n) for key in ("f", "f_ls", "g_N", "g_D_mass", "g_D_flux")}
    eye = np.eye(2)

    def scatter(key, dofs, arr):  # arr indexed [c, a]
        np.add.at(loads[key], _vector_dofs(dofs, nb, 2), arr.ravel())

    def add_block(trip, dofs, blk):  # blk indexed [c, a, d, b]
        m = blk.shape[1]
        trip.add(_vector_dofs(dofs, nb, 2), blk.reshape(2 * m, 2 * m))

    for e in space.active_elements:
        rule = quadrature.rules[e]
        ls = e in space.dirichlet_elements
        ev = space.element_basis(e, rule.points, nderiv=2 if ls else 1)
        dofs, w, G = ev.dofs, rule.weights, ev.grads
        GG = np.einsum("q,qai,qbj->aibj", w, G, G)
        S = GG[:, 0, :, 0] + GG[:, 1, :, 1]
        K = (mu * eye[:, None, :, None] * S[None, :, None, :]
             + mu * GG.transpose(3, 0, 1, 2)
             + lam * GG.transpose(1, 0, 3, 2))
        add_block(tK, dofs, K)
        if ls:
            D = _ls_operator(ev, lam, mu, params.ls_operator)
            add_block(tL, dofs, np.einsum("q,qaci,qbdi->cadb", w, D, D))
        if need_loads:
            fv = problem.f(rule.points)
            scatter("f", dofs, np.einsum("q,qc,qa->ca", w, fv, ev.values))
            if ls:
                scatter("f_ls", dofs, np.einsum("q,qi,qaci->ca", w, fv, D))
        if rule.surface_weights.size == 0:
            continue
        sev = space.element_basis(e, rule.surface_points, nderiv=1)
        V = sev.values
        T = _traction(sev.grads, rule.normals, lam, mu)
        d = rule.dirichlet
        if d.any():
            wd = rule.surface_weights * d
            mass = np.einsum("q,qa,qb->ab", wd, V, V)
            add_block(tM, dofs, eye[:, None, :, None] * mass[None, :, None, :])
            add_block(tN, dofs, np.einsum("q,qa,qbdc->cadb", wd, V, T))
            add_block(tQ, dofs, np.einsum("q,qaci,qbdi->cadb", wd, T, T))
            if need_loads:
                gd = problem.g_D(rule.surface_points[d])
                scatter("g_D_mass", dofs, np.einsum("q,qc,qa->ca", wd[d], gd, V[d]))
                scatter("g_D_flux", dofs, np.einsum("q,qi,qaci->ca", wd[d], gd, T[d]))
        if need_loads and (~d).any() and problem.g_N is not None:
            nm = ~d
            gn = problem.g_N(rule.surface_points[nm], rule.normals[nm])
            scatter("g_N", dofs, np.einsum("q,qc,qa->ca", rule.surface_weights[nm], gn, V[nm]))
    return FormTerms(2, tK.matrix(), tM.matrix(), tN.matrix(), tQ.matrix(), tL.matrix(), None,
                     loads, boundary_scale=scale, ls_scale=ls_scale)


def _finish(space, terms, A, b, symmetric, meta) -> AssembledSystem:
    full = AssembledSystem(A.tocsr(), b, space.indices.copy(), terms.ncomp, symmetric, meta)
    full.meta["terms"] = terms
    if space.active.all():
        return full
    sub = full.restrict(space.active)
    return sub


def _meta(space, params, method, kind):
    return {"h": space.mesh.h, "p": space.p, "beta": params.penalty(space.p), "tau": params.tau,
            "gamma": params.gamma, "method": method, "kind": kind, "removed": 0}


def assemble_poisson_nonsym(space: SpacePartition, quadrature: CutQuadrature,
                            problem: ModelProblem, params: Optional[NitscheParams] = None
                            ) -> AssembledSystem:
    """Nonsymmetric Nitsche system with least-squares term on the Dirichlet zone."""
    params = params or NitscheParams()
    h, p = space.mesh.h, space.p
    beta = params.penalty(p)
    t = assemble_terms(space, quadrature, problem, params)
    A = t.K - t.N + t.N.T + (beta / h) * t.M + (params.tau * h * h) * t.L
    ld = t.loads
    b = (ld["f"] + ld["g_N"] + ld["g_D_flux"] + (beta / h) * ld["g_D_mass"]
         - (params.tau * h * h) * ld["f_ls"])
    return _finish(space, t, A, b, False, _meta(space, params, "nonsym", "poisson"))


def assemble_poisson_sym(space: SpacePartition, quadrature: CutQuadrature,
                         problem: ModelProblem, params: Optional[NitscheParams] = None
                         ) -> AssembledSystem:
    """Symmetric Nitsche system with the p-th normal-derivative jump penalty."""
    params = params or NitscheParams()
    h, p = space.mesh.h, space.p
    cut_d = set(space.dirichlet_cut_elements)
    for pos in np.nonzero(~space.active)[0]:
        if any(e in cut_d for e in space.support_elements(pos)):
            raise ConfigurationError(
                "basis removal on the Dirichlet boundary is not allowed with the symmetric method")
    beta = params.penalty(p)
    t = assemble_terms(space, quadrature, problem, params, ghost=True)
    A = t.K - t.N - t.N.T + (beta / h) * t.M + (params.gamma * h ** (2 * p - 1)) * t.G
    ld = t.loads
    b = ld["f"] + ld["g_N"] - ld["g_D_flux"] + (beta / h) * ld["g_D_mass"]
    return _finish(space, t, A, b, True, _meta(space, params, "sym", "poisson"))


def assemble_elasticity_nonsym(space: SpacePartition, quadrature: CutQuadrature,
                               problem: ModelProblem, params: Optional[NitscheParams] = None
                               ) -> AssembledSystem:
    """Nonsymmetric Nitsche system for plane-strain linear elasticity.

    The penalty and least-squares terms are scaled by ``2 mu + lambda`` (or its
    inverse for the stress operator) so that they are commensurate with the
    elastic energy.
    """
    if problem.kind != "elasticity":
        raise ConfigurationError("elasticity assembly needs an elasticity problem")
    params = params or NitscheParams()
    h, p = space.mesh.h, space.p
    beta = params.penalty(p)
    t = assemble_terms(space, quadrature, problem, params)
    pen = beta * t.boundary_scale / h
    lsc = params.tau * h * h * t.ls_scale
    A = t.K - t.N + t.N.T + pen * t.M + lsc * t.L
    ld = t.loads
    b = ld["f"] + ld["g_N"] + ld["g_D_flux"] + pen * ld["g_D_mass"] - lsc * ld["f_ls"]
    meta = _meta(space, params, "nonsym", "elasticity")
    meta["material_scale"] = t.boundary_scale
    return _finish(space, t, A, b, False, meta)


@dataclass
class NormBreakdown:
    """Energy norm and its squared components."""

    total: float
    gradient: float
    boundary: float
    least_squares: float
    l2: float = float("nan")
    reference: float = float("nan")      # same norm of the exact solution
    reference_l2: float = float("nan")

    @property
    def relative(self) -> float:
        return self.total / self.reference if self.reference > 0 else float("nan")

    @property
    def relative_l2(self) -> float:
        return self.l2 / self.reference_l2 if self.reference_l2 > 0 else float("nan")


def energy_norm(space: SpacePartition, quadrature: CutQuadrature, coeffs: Optional[np.ndarray] = None,
                problem: Optional[ModelProblem] = None, tau: float = 0.0,
                ls_operator: str = "strain", use_exact: bool = True) -> NormBreakdown:
    """Energy norm of ``u - u_h`` (or of ``u_h`` when no exact solution is used).

    ``coeffs`` is indexed over the full ``I`` (see :meth:`AssembledSystem.expand`).
    The norm is ``|grad e|^2 + h^-1 |e|^2_D + tau h^2 |Lap e|^2`` on the
    Dirichlet zone; for elasticity the first term is ``(sigma(e), eps(e))`` and
    the boundary and least-squares terms carry the material scaling used by the
    assembly.
    """
    kind = problem.kind if problem is not None else "poisson"
    ncomp = 2 if kind == "elasticity" else 1
    h = space.mesh.h
    nb = space.size
    c = np.zeros(ncomp * nb) if coeffs is None else np.asarray(coeffs, dtype=float)
    if c.shape != (ncomp * nb,):
        raise InvalidArgumentError("coefficients must be given over the full index set")
    c = c.reshape(ncomp, nb)
    exact = use_exact and problem is not None and problem.exact is not None
    if kind == "elasticity":
        lam, mu = problem.lame
        bscale = problem.material_scale
        lscale = bscale if ls_operator == "strain" else 1.0 / bscale
    else:
        lam = mu = 0.0
        bscale = lscale = 1.0
    acc = {"grad": 0.0, "bd": 0.0, "ls": 0.0, "l2": 0.0, "ref_grad": 0.0, "ref_bd": 0.0,
           "ref_ls": 0.0, "ref_l2": 0.0}
    for e in space.active_elements:
        rule = quadrature.rules[e]
        ls = tau > 0 and e in space.dirichlet_elements
        ev = space.element_basis(e, rule.points, nderiv=2 if ls else 1)
        ok = ev.dofs >= 0
        cl = np.zeros((ncomp, len(ev.dofs)))
        cl[:, ok] = c[:, ev.dofs[ok]]
        uh = ev.values @ cl.T                              # (q, ncomp)
        guh = np.einsum("qai,ca->qci", ev.grads, cl)       # (q, ncomp, 2)
        if exact:
            ue = np.asarray(problem.exact(rule.points)).reshape(len(rule.points), ncomp)
            gue = np.asarray(problem.exact_grad(rule.points)).reshape(len(rule.points), ncomp, 2)
        else:
            ue = np.zeros_like(uh)
            gue = np.zeros_like(guh)
        err, gerr = ue - uh, gue - guh
        w = rule.weights
        acc["l2"] += float(np.einsum("q,qc,qc->", w, err, err))
        acc["ref_l2"] += float(np.einsum("q,qc,qc->", w, ue, ue))
        acc["grad"] += _grad_energy(w, gerr, kind, lam, mu)
        acc["ref_grad"] += _grad_energy(w, gue, kind, lam, mu)
        if ls:
            Huh = np.einsum("qaij,ca->qcij", ev.hess, cl)
            He = -Huh
            Hx = np.zeros_like(Huh)
            if exact:
                Hx = np.asarray(problem.exact_hess(rule.points)).reshape(Huh.shape)
                He = Hx - Huh
            acc["ls"] += _ls_energy(w, He, kind, lam, mu, ls_operator)
            acc["ref_ls"] += _ls_energy(w, Hx, kind, lam, mu, ls_operator)
        if rule.dirichlet.any():
            d = rule.dirichlet
            sp_ = rule.surface_points[d]
            sev = space.element_basis(e, sp_, nderiv=0)
            uhs = sev.values @ cl.T
            ues = np.asarray(problem.exact(sp_)).reshape(uhs.shape) if exact else np.zeros_like(uhs)
            ws = rule.surface_weights[d]
            acc["bd"] += float(np.einsum("q,qc,qc->", ws, ues - uhs, ues - uhs))
            acc["ref_bd"] += float(np.einsum("q,qc,qc->", ws, ues, ues))
    grad = acc["grad"]
    bd = bscale * acc["bd"] / h
    lsq = tau * h * h * lscale * acc["ls"]
    ref = acc["ref_grad"] + bscale * acc["ref_bd"] / h + tau * h * h * lscale * acc["ref_ls"]
    return NormBreakdown(float(np.sqrt(grad + bd + lsq)), grad, bd, lsq,
                         float(np.sqrt(acc["l2"])),
                         float(np.sqrt(ref)) if exact else float("nan"),
                         float(np.sqrt(acc["ref_l2"])) if exact else float("nan"))


def _grad_energy(w, g, kind, lam, mu) -> float:
    if kind != "elasticity":
        return float(np.einsum("q,qci,qci->", w, g, g))
    eps = 0.5 * (g + g.transpose(0, 2, 1))
    tr = eps[:, 0, 0] + eps[:, 1, 1]
    return float(np.einsum("q,qij,qij->", w, 2 * mu * eps, eps) + np.einsum("q,q,q->", w, lam * tr, tr))


def _ls_energy(w, H, kind, lam, mu, which) -> float:
    """``H[q, c, i, j] = d_i d_j u_c``."""
    if kind != "elasticity":
        lap = H[:, 0, 0, 0] + H[:, 0, 1, 1]
        return float(np.einsum("q,q,q->", w, lap, lap))
    lap = H[:, :, 0, 0] + H[:, :, 1, 1]                  # (q, c)
    graddiv = H[:, 0, :, 0] + H[:, 1, :, 1]              # (q, i): d_i div u
    if which == "strain":
        v = 0.5 * (lap + graddiv)
    else:
        v = mu * lap + (lam + mu) * graddiv
    return float(np.einsum("q,qi,qi->", w, v, v))
