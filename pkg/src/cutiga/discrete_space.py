"""Active/removed partition of the B-spline basis on a cut background grid.

Besides the index bookkeeping this module holds the greedy removal selection
and the closed-form intersection criteria that bound how small a cut support
must be before its basis function may be dropped.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

import numpy as np

from .cut_geometry import (
    BackgroundMesh,
    CutQuadrature,
    ElementKind,
    covered_elements,
    dirichlet_neighborhood,
)
from .exceptions import (
    AssemblyError,
    ConfigurationError,
    EmptyDomainError,
    InvalidArgumentError,
    OverRemovalError,
)
from .spline_basis import local_basis_1d

__all__ = [
    "SpacePartition",
    "ElementEval",
    "RemovalReport",
    "build_index_set",
    "build_space",
    "select_removal",
    "select_removal_from_diagonal",
    "apply_removal",
    "energy_criterion_2d",
    "max_criterion_2d",
    "energy_criterion_1d",
    "max_criterion_1d",
    "model_gradient_energy_1d",
]

Element = Tuple[int, int]
Face = Tuple[int, int, int]  # (normal axis, j, k): grid line j (axis 0) or k (axis 1)


@dataclass
class ElementEval:
    """Local basis data of one element at a set of points.

    ``dofs[a]`` is the position in ``I`` of local function ``a`` (or -1 when
    it is not a member).  Derivatives are with respect to physical
    coordinates.
    """

    dofs: np.ndarray
    values: np.ndarray
    grads: Optional[np.ndarray] = None
    hess: Optional[np.ndarray] = None

    @property
    def laplacian(self) -> np.ndarray:
        return self.hess[..., 0, 0] + self.hess[..., 1, 1]


@dataclass
class SpacePartition:
    """Index sets ``I = I_a + I_r`` together with the element sets they induce."""

    mesh: BackgroundMesh
    p: int
    indices: np.ndarray                       # I, lexicographically sorted, shape (n, 2)
    active: np.ndarray                        # bool mask over I; I_a = indices[active]
    elements: Set[Element]                    # T_h
    active_elements: List[Element]            # elements meeting the domain
    inside_elements: Set[Element]
    dirichlet_elements: Set[Element]          # T_{h,D}
    dirichlet_cut_elements: List[Element]     # T_h(boundary_D)
    dirichlet_faces: List[Face]               # F_{h,D}
    _offset: np.ndarray = field(repr=False, default=None)
    _lookup: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self._lookup is None:
            lo = self.indices.min(axis=0)
            hi = self.indices.max(axis=0)
            lut = -np.ones(tuple(hi - lo + 1), dtype=np.int64)
            lut[tuple((self.indices - lo).T)] = np.arange(len(self.indices))
            self._offset, self._lookup = lo, lut

    # -- index maps ------------------------------------------------------

    @property
    def size(self) -> int:
        return len(self.indices)

    @property
    def I(self) -> List[Tuple[int, int]]:
        return [tuple(int(v) for v in m) for m in self.indices]

    @property
    def I_a(self) -> List[Tuple[int, int]]:
        return [tuple(int(v) for v in m) for m in self.indices[self.active]]

    @property
    def I_r(self) -> List[Tuple[int, int]]:
        return [tuple(int(v) for v in m) for m in self.indices[~self.active]]

    @property
    def dof_map(self) -> Dict[Tuple[int, int], int]:
        """Active multi-index -> contiguous dof number."""
        return {mi: d for d, mi in enumerate(self.I_a)}

    @property
    def removed_count(self) -> int:
        return int((~self.active).sum())

    def position(self, multi) -> np.ndarray:
        """Position in ``I`` of multi-indices (``-1`` when absent)."""
        m = np.atleast_2d(np.asarray(multi, dtype=np.int64)) - self._offset
        ok = np.all((m >= 0) & (m < np.array(self._lookup.shape)), axis=1)
        out = -np.ones(len(m), dtype=np.int64)
        out[ok] = self._lookup[tuple(m[ok].T)]
        return out

    def local_indices(self, element: Element) -> np.ndarray:
        """Multi-indices of the ``(p+1)^2`` functions nonzero on ``element``."""
        j, k = element
        r = np.arange(self.p + 1)
        a, b = np.meshgrid(j - self.p + r, k - self.p + r, indexing="ij")
        return np.stack([a.ravel(), b.ravel()], axis=1)

    def local_dofs(self, element: Element) -> np.ndarray:
        return self.position(self.local_indices(element))

    def support_elements(self, pos: int) -> List[Element]:
        i0, i1 = self.indices[pos]
        return [(i0 + a, i1 + b) for a in range(self.p + 1) for b in range(self.p + 1)]

    def support_box(self, pos: int) -> np.ndarray:
        """Grid-frame support box of basis ``pos``."""
        lo = self.indices[pos] * self.mesh.h
        return np.stack([lo, lo + (self.p + 1) * self.mesh.h])

    # -- evaluation ------------------------------------------------------

    def element_basis(self, element: Element, points: np.ndarray, nderiv: int = 1) -> ElementEval:
        """Evaluate the local tensor B-splines of ``element`` at physical points."""
        h, p = self.mesh.h, self.p
        y = self.mesh.to_grid(points)
        t0 = np.clip(y[:, 0] / h - element[0], 0.0, 1.0)
        t1 = np.clip(y[:, 1] / h - element[1], 0.0, 1.0)
        b0 = [local_basis_1d(p, t0, d) / h**d for d in range(nderiv + 1)]
        b1 = [local_basis_1d(p, t1, d) / h**d for d in range(nderiv + 1)]
        n = len(points)
        nl = (p + 1) ** 2

        def outer(u, v):
            return (u[:, :, None] * v[:, None, :]).reshape(n, nl)

        values = outer(b0[0], b1[0])
        R = self.mesh.rotation
        grads = hess = None
        if nderiv >= 1:
            g = np.stack([outer(b0[1], b1[0]), outer(b0[0], b1[1])], axis=-1)
            grads = g @ R.T
        if nderiv >= 2:
            hg = np.empty((n, nl, 2, 2))
            hg[..., 0, 0] = outer(b0[2], b1[0])
            hg[..., 1, 1] = outer(b0[0], b1[2])
            hg[..., 0, 1] = hg[..., 1, 0] = outer(b0[1], b1[1])
            hess = R @ hg @ R.T
        return ElementEval(self.local_dofs(element), values, grads, hess)

    def evaluate(self, coeffs: np.ndarray, points: np.ndarray, ncomp: int = 1) -> np.ndarray:
        """Evaluate ``sum_i c_i phi_i`` at arbitrary physical points.

        ``coeffs`` is indexed by position in ``I`` (component-major when
        ``ncomp > 1``).  Returns ``(n,)`` or ``(n, ncomp)``.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        y = self.mesh.to_grid(pts)
        cells = np.floor(y / self.mesh.h).astype(int)
        c = np.asarray(coeffs, dtype=float).reshape(ncomp, self.size)
        out = np.zeros((len(pts), ncomp))
        keys = [tuple(v) for v in cells]
        groups: Dict[Element, List[int]] = {}
        for i, kk in enumerate(keys):
            groups.setdefault(kk, []).append(i)
        for e, idx in groups.items():
            ev = self.element_basis(e, pts[idx], nderiv=0)
            ok = ev.dofs >= 0
            out[idx] = ev.values[:, ok] @ c[:, ev.dofs[ok]].T
        return out[:, 0] if ncomp == 1 else out

    # -- removal ---------------------------------------------------------

    def with_active(self, active: np.ndarray) -> "SpacePartition":
        active = np.asarray(active, dtype=bool)
        if active.shape != self.active.shape:
            raise InvalidArgumentError("active mask does not match the index set")
        return replace(self, active=active.copy())


def build_index_set(quadrature: CutQuadrature, p: int):
    """``I`` (sorted multi-indices) and ``T_h`` for order ``p``.

    ``I`` holds every basis function whose support contains an element with a
    nonempty intersection with the domain; ``T_h`` is the union of their
    supports.
    """
    active = quadrature.active_elements
    if not active:
        raise EmptyDomainError("no background element intersects the domain")
    r = range(p + 1)
    idx = {(j - p + a, k - p + b) for j, k in active for a in r for b in r}
    indices = np.array(sorted(idx), dtype=np.int64)
    return indices, covered_elements(active, p)


def _dirichlet_faces(cut: Iterable[Element], active: Set[Element]) -> List[Face]:
    faces = set()
    for j, k in cut:
        for axis, other, face in (
            (0, (j - 1, k), (0, j, k)), (0, (j + 1, k), (0, j + 1, k)),
            (1, (j, k - 1), (1, j, k)), (1, (j, k + 1), (1, j, k + 1)),
        ):
            if other in active:
                faces.add(face)
    return sorted(faces)


def build_space(quadrature: CutQuadrature, p: int) -> SpacePartition:
    """Full space (``I_a = I``) for the given cut quadrature."""
    if p < 1:
        raise InvalidArgumentError(f"order must be at least 1, got {p}")
    indices, elements = build_index_set(quadrature, p)
    active_elems = quadrature.active_elements
    inside = {e for e, kd in quadrature.kinds.items() if kd is ElementKind.INSIDE}
    cut_d = quadrature.dirichlet_cut_elements()
    return SpacePartition(
        mesh=quadrature.mesh,
        p=p,
        indices=indices,
        active=np.ones(len(indices), dtype=bool),
        elements=elements,
        active_elements=active_elems,
        inside_elements=inside,
        dirichlet_elements=dirichlet_neighborhood(quadrature, p),
        dirichlet_cut_elements=cut_d,
        dirichlet_faces=_dirichlet_faces(cut_d, set(active_elems)),
    )


# --- selection --------------------------------------------------------------

@dataclass
class RemovalReport:
    """Outcome of the greedy selection."""

    keys: List[Tuple[int, ...]]
    measures: np.ndarray
    order: np.ndarray          # positions sorted by (measure, key)
    cumulative: np.ndarray     # cumulative sums along ``order``
    tol: float
    removed: np.ndarray        # bool mask over ``keys``
    measure_kind: str = "diagonal"
    support_boxes: Optional[np.ndarray] = None

    @property
    def removed_count(self) -> int:
        return int(self.removed.sum())

    @property
    def removed_keys(self) -> List[Tuple[int, ...]]:
        return [k for k, r in zip(self.keys, self.removed) if r]

    @property
    def kept_keys(self) -> List[Tuple[int, ...]]:
        return [k for k, r in zip(self.keys, self.removed) if not r]

    def to_dict(self) -> dict:
        rank = np.empty(len(self.order), dtype=int)
        rank[self.order] = np.arange(len(self.order))
        rows = []
        for i, key in enumerate(self.keys):
            row = {
                "index": list(key),
                "measure": float(self.measures[i]),
                "rank": int(rank[i]),
                "removed": bool(self.removed[i]),
            }
            if self.support_boxes is not None:
                row["support_box"] = self.support_boxes[i].tolist()
            rows.append(row)
        return {
            "tol": self.tol,
            "tol_squared": self.tol**2,
            "measure_kind": self.measure_kind,
            "removed_count": self.removed_count,
            "basis": rows,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def select_removal(measures: Union[Mapping, Sequence[float], np.ndarray], tol: float,
                   keys: Optional[Sequence] = None, measure_kind: str = "diagonal") -> RemovalReport:
    """Greedy selection: remove the longest ascending prefix with sum <= tol^2.

    Parameters
    ----------
    measures : mapping or array
        Per-basis measure ``m_i >= 0``.  A mapping supplies its own keys.
    tol : float
        Removal tolerance; ``tol = 0`` removes nothing.
    keys : sequence, optional
        Keys for an array of measures, used for tie-breaking (lexicographic).

    Raises
    ------
    OverRemovalError
        If every basis function would be removed.
    """
    if isinstance(measures, Mapping):
        keys = list(measures.keys())
        m = np.array([measures[k] for k in keys], dtype=float)
    else:
        m = np.asarray(measures, dtype=float).ravel()
        keys = list(range(len(m))) if keys is None else list(keys)
    keys = [tuple(k) if isinstance(k, (tuple, list, np.ndarray)) else (k,) for k in keys]
    if len(keys) != len(m):
        raise InvalidArgumentError("measures and keys differ in length")
    if np.any(m < 0) or np.any(~np.isfinite(m)):
        raise InvalidArgumentError("measures must be finite and nonnegative")
    if not tol >= 0:
        raise InvalidArgumentError(f"tolerance must be nonnegative, got {tol}")
    key_rank = np.empty(len(keys), dtype=int)
    key_rank[sorted(range(len(keys)), key=lambda i: keys[i])] = np.arange(len(keys))
    order = np.lexsort((key_rank, m))
    cum = np.cumsum(m[order])
    removed = np.zeros(len(m), dtype=bool)
    if tol > 0:
        n_rm = int(np.searchsorted(cum, tol * tol, side="right"))
        removed[order[:n_rm]] = True
    report = RemovalReport(keys, m, order, cum, float(tol), removed, measure_kind)
    if len(m) and removed.all():
        raise OverRemovalError(
            f"tolerance {tol:g} would remove all {len(m)} basis functions")
    return report


def select_removal_from_diagonal(system, tol: float) -> RemovalReport:
    """Greedy selection with the stiffness diagonal as measure.

    ``system`` must be assembled on the full space ``I``.  For vector
    problems the diagonal entries of all components of a basis function are
    summed.
    """
    m = system.basis_diagonal()
    if np.any(m < 0):
        bad = int(np.argmin(m))
        raise AssemblyError(
            f"negative stiffness diagonal {m[bad]:.3e} at basis {tuple(system.indices[bad])}")
    return select_removal(m, tol, keys=[tuple(int(v) for v in k) for k in system.indices],
                          measure_kind="diagonal")


def apply_removal(space: SpacePartition, report: RemovalReport,
                  forbid_dirichlet: bool = False) -> SpacePartition:
    """Space with ``I_r`` taken from ``report``.

    Refuses removals that touch a fully interior element (a misconfigured
    tolerance) and, with ``forbid_dirichlet``, removals of functions whose
    support meets a Dirichlet boundary element.
    """
    if len(report.keys) != space.size:
        raise InvalidArgumentError("report does not match the space")
    removed = report.removed
    for pos in np.nonzero(removed)[0]:
        sup = space.support_elements(pos)
        hit = [e for e in sup if e in space.inside_elements]
        if hit:
            raise OverRemovalError(
                f"basis {tuple(space.indices[pos])} would be removed although its support "
                f"contains the interior element {hit[0]}")
        if forbid_dirichlet:
            cut_d = set(space.dirichlet_cut_elements)
            if any(e in cut_d for e in sup):
                raise ConfigurationError(
                    f"basis {tuple(space.indices[pos])} touches the Dirichlet boundary; the "
                    "symmetric method does not allow removal there")
    return space.with_active(~removed)


def star_norms(terms, h: float, tau: float) -> np.ndarray:
    """Squared star-norm of every basis function from assembled form terms.

    Sum of ``|grad phi|^2``, ``h^-1 |phi|^2_D``, ``tau h^2 |Lap phi|^2`` on the
    Dirichlet zone and ``h |n . grad phi|^2_D``.
    """
    parts = star_norm_terms(terms, h, tau)
    return parts["gradient"] + parts["boundary"] + parts["least_squares"] + parts["normal_flux"]


def star_norm_terms(terms, h: float, tau: float) -> Dict[str, np.ndarray]:
    ncomp = terms.ncomp
    n = terms.K.shape[0] // ncomp

    def per_basis(mat):
        return np.asarray(mat.diagonal()).reshape(ncomp, n).sum(axis=0)

    return {
        "gradient": per_basis(terms.K),
        "boundary": per_basis(terms.M) * terms.boundary_scale / h,
        "least_squares": per_basis(terms.L) * tau * h**2 * terms.ls_scale,
        "normal_flux": per_basis(terms.Q) * h / terms.boundary_scale,
    }


def basis_star_norm(space: SpacePartition, quadrature: CutQuadrature, pos: int, tau: float = 0.1,
                    problem=None) -> float:
    """Squared star-norm of one basis function (see :func:`star_norms`)."""
    from .forms import assemble_terms  # forms depends on this module

    terms = assemble_terms(space, quadrature, problem, need_loads=False)
    return float(star_norms(terms, space.mesh.h, tau)[pos])


# --- closed-form intersection criteria ---------------------------------------

def _check_deltas(h, p, *deltas):
    if not h > 0:
        raise InvalidArgumentError(f"mesh parameter must be positive, got {h}")
    if p < 1:
        raise InvalidArgumentError(f"order must be at least 1, got {p}")
    for d in deltas:
        if not 0 <= d <= h * (1 + 1e-12):
            raise InvalidArgumentError(f"intersection length {d} outside [0, h]")


def energy_criterion_2d(d1: float, d2: float, h: float, p: int, C: float = 1.0) -> bool:
    """Model gradient energy of a corner-cut tensor spline below ``C h^(2p+1)``.

    Uses ``(d1/h)^(2p-1) (d2/h)^(2p+1) + (d1/h)^(2p+1) (d2/h)^(2p-1)``; the
    model assumes the cut support lies in ``[0, d1] x [0, d2]`` near an
    interior support corner.
    """
    _check_deltas(h, p, d1, d2)
    a, b = d1 / h, d2 / h
    lhs = a ** (2 * p - 1) * b ** (2 * p + 1) + a ** (2 * p + 1) * b ** (2 * p - 1)
    return bool(lhs <= C * h ** (2 * p + 1))


def max_criterion_2d(d1: float, d2: float, h: float, p: int, C: float = 1.0) -> bool:
    """Gradient max-norm criterion; both components must stay below ``C h^p``."""
    _check_deltas(h, p, d1, d2)
    a, b = d1 / h, d2 / h
    g1 = p / h * a ** (p - 1) * b**p
    g2 = p / h * a**p * b ** (p - 1)
    bound = C * h**p
    return bool(g1 <= bound and g2 <= bound)


def energy_criterion_1d(delta: float, h: float, p: int, family: str = "bspline",
                        C: float = 1.0) -> bool:
    """Threshold on ``delta/h`` for B-spline or Lagrange bases in 1D."""
    _check_deltas(h, p, delta)
    fam = family.lower()
    if fam == "bspline":
        thr = h ** ((2 * p + 1) / (2 * p - 1))
    elif fam == "lagrange":
        thr = h ** (2 * p + 1)
    else:
        raise InvalidArgumentError(f"unknown basis family {family!r}")
    return bool(delta / h <= C * thr)


def max_criterion_1d(delta: float, h: float, p: int, C: float = 1.0) -> bool:
    """Max-norm threshold ``delta/h <= C h^((p+1)/(p-1))``; never met for p = 1."""
    _check_deltas(h, p, delta)
    if delta == 0:
        return True
    if p == 1:
        return False
    return bool(delta / h <= C * h ** ((p + 1) / (p - 1)))


def model_gradient_energy_1d(delta: float, h: float, p: int) -> float:
    """``int_0^delta (p/h)^2 (x/h)^(2p-2) dx = (p/h) (p/(2p-1)) (delta/h)^(2p-1)``."""
    if not (delta > 0 and h > 0):
        raise InvalidArgumentError("delta and h must be positive")
    return (p / h) * (p / (2 * p - 1)) * (delta / h) ** (2 * p - 1)
