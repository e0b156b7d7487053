"""Implicit domains, the background grid, and cut-cell quadrature.

A domain is the intersection of level-set primitives, ``Omega = {x : psi_k(x)
< 0 for all k}``.  Cut cells are integrated by clipping the cell polygon
against each primitive in turn (Sutherland-Hodgman).  Affine primitives are
clipped exactly; curved ones are first resolved by recursive quadtree
bisection of the cell, and the leaf polygons are clipped along edge roots of
``psi`` located by bisection, which amounts to a linear (marching squares)
interface reconstruction per leaf.

Points handed out by the quadrature live in the physical frame.  The grid can
be translated and rotated with respect to that frame; ``BackgroundMesh`` maps
between the two.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import DegenerateGeometryError, InvalidArgumentError

__all__ = [
    "ElementKind",
    "LevelSetPrimitive",
    "ImplicitDomain",
    "BackgroundMesh",
    "ElementRule",
    "CutQuadrature",
    "classify_element",
    "volume_quadrature",
    "surface_quadrature",
    "build_quadrature",
    "dirichlet_neighborhood",
    "make_domain",
    "GEOMETRIES",
]

Element = Tuple[int, int]
ArrayFn = Callable[[np.ndarray], np.ndarray]

_SAMPLES = 4          # s x s sample lattice per classification box
_ROOT_TOL = 1e-12     # absolute tolerance of edge root bisection


class ElementKind(enum.Enum):
    INSIDE = "inside"
    OUTSIDE = "outside"
    CUT = "cut"


@dataclass(frozen=True)
class LevelSetPrimitive:
    """One smooth level set; negative inside."""

    value: ArrayFn
    gradient: ArrayFn
    affine: bool = False
    name: str = ""
    lipschitz: Optional[float] = None

    @classmethod
    def halfplane(cls, point, normal, name="halfplane") -> "LevelSetPrimitive":
        """``psi(x) = n . (x - point)`` with ``n`` the unit outward normal."""
        n = np.asarray(normal, dtype=float)
        n = n / np.linalg.norm(n)
        x0 = np.asarray(point, dtype=float)
        c = float(n @ x0)
        return cls(lambda x: x @ n - c,
                   lambda x: np.broadcast_to(n, np.shape(x)).copy(),
                   affine=True, name=name, lipschitz=1.0)

    @classmethod
    def disk(cls, center, radius, name="disk") -> "LevelSetPrimitive":
        c = np.asarray(center, dtype=float)
        r = float(radius)

        def value(x):
            return np.linalg.norm(x - c, axis=-1) - r

        def gradient(x):
            d = x - c
            return d / np.maximum(np.linalg.norm(d, axis=-1, keepdims=True), 1e-300)

        return cls(value, gradient, name=name, lipschitz=1.0)

    @classmethod
    def hole(cls, center, radius, name="hole") -> "LevelSetPrimitive":
        """Complement of a disk: negative outside the circle."""
        d = cls.disk(center, radius)
        return cls(lambda x: -d.value(x), lambda x: -d.gradient(x), name=name, lipschitz=1.0)


class ImplicitDomain:
    """Domain given as an intersection of level-set primitives.

    Parameters
    ----------
    primitives : sequence of LevelSetPrimitive
    bbox : array_like, shape (2, 2)
        ``[[xmin, ymin], [xmax, ymax]]`` in the physical frame; the background
        grid is sized to cover it.
    dirichlet : callable, optional
        Boolean predicate on boundary points, true where the Dirichlet
        condition holds.  ``None`` means a pure Neumann boundary.
    """

    def __init__(self, primitives: Sequence[LevelSetPrimitive], bbox,
                 dirichlet: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                 name: str = "custom"):
        if not primitives:
            raise InvalidArgumentError("a domain needs at least one primitive")
        self.primitives = list(primitives)
        self.bbox = np.asarray(bbox, dtype=float).reshape(2, 2)
        self.dirichlet = dirichlet
        self.name = name

    @classmethod
    def from_level_set(cls, value: ArrayFn, gradient: ArrayFn, bbox, dirichlet=None,
                       name="custom") -> "ImplicitDomain":
        return cls([LevelSetPrimitive(value, gradient)], bbox, dirichlet, name)

    @property
    def is_affine(self) -> bool:
        return all(pr.affine for pr in self.primitives)

    @property
    def has_dirichlet(self) -> bool:
        return self.dirichlet is not None

    def level_set(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.max([pr.value(x) for pr in self.primitives], axis=0)

    def gradient(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        vals = np.array([pr.value(x) for pr in self.primitives])
        which = np.argmax(vals, axis=0)
        grads = np.array([pr.gradient(x) for pr in self.primitives])
        return grads[which, np.arange(x.shape[0])]

    def boundary_tag(self, x) -> np.ndarray:
        """``True`` for Dirichlet, ``False`` for Neumann boundary points."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.dirichlet is None:
            return np.zeros(x.shape[0], dtype=bool)
        return np.asarray(self.dirichlet(x), dtype=bool).reshape(x.shape[0])

    # builtin geometries -------------------------------------------------

    @classmethod
    def disk(cls, center=(0.5, 0.5), radius=0.4, dirichlet: str = "all") -> "ImplicitDomain":
        pr = LevelSetPrimitive.disk(center, radius)
        c = np.asarray(center, dtype=float)
        bbox = [c - radius, c + radius]
        return cls([pr], bbox, _tag_rule(dirichlet), name="disk")

    @classmethod
    def halfplane(cls, point=(0.5, 0.0), normal=(1.0, 0.0), bbox=((0, 0), (1, 1)),
                  dirichlet: str = "all") -> "ImplicitDomain":
        pr = LevelSetPrimitive.halfplane(point, normal)
        return cls([pr], bbox, _tag_rule(dirichlet), name="halfplane")

    @classmethod
    def box(cls, lo=(0.0, 0.0), hi=(1.0, 1.0), dirichlet="bottom") -> "ImplicitDomain":
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        prims = [
            LevelSetPrimitive.halfplane(lo, (0, -1), "bottom"),
            LevelSetPrimitive.halfplane(hi, (1, 0), "right"),
            LevelSetPrimitive.halfplane(hi, (0, 1), "top"),
            LevelSetPrimitive.halfplane(lo, (-1, 0), "left"),
        ]
        if dirichlet == "bottom":
            y0 = lo[1]
            rule = lambda x: np.abs(x[:, 1] - y0) < 1e-10 * max(1.0, abs(y0))
        else:
            rule = _tag_rule(dirichlet)
        return cls(prims, [lo, hi], rule, name="box")

    @classmethod
    def unit_square(cls, dirichlet="bottom") -> "ImplicitDomain":
        dom = cls.box((0, 0), (1, 1), dirichlet)
        dom.name = "rotated-unit-square"
        return dom

    @classmethod
    def plate_with_holes(cls, width=2.0, height=1.0, holes=None) -> "ImplicitDomain":
        """Rectangle ``[-w/2, w/2] x [-h/2, h/2]`` with circular holes, pure Neumann."""
        if holes is None:
            holes = [((-0.45, 0.0), 0.2), ((0.45, 0.0), 0.2), ((0.0, 0.0), 0.12)]
        dom = cls.box((-width / 2, -height / 2), (width / 2, height / 2), dirichlet="none")
        dom.primitives += [LevelSetPrimitive.hole(c, r, f"hole{i}") for i, (c, r) in enumerate(holes)]
        dom.name = "plate-with-holes"
        return dom


def _tag_rule(rule):
    if rule is None or rule == "none":
        return None
    if rule == "all":
        return lambda x: np.ones(len(x), dtype=bool)
    if callable(rule):
        return rule
    raise InvalidArgumentError(f"unknown boundary tag rule {rule!r}")


GEOMETRIES = ("disk", "halfplane", "rotated-unit-square", "plate-with-holes")


def make_domain(name: str, **params) -> ImplicitDomain:
    """Builtin geometry by name."""
    if name == "disk":
        return ImplicitDomain.disk(**params)
    if name == "halfplane":
        return ImplicitDomain.halfplane(**params)
    if name in ("rotated-unit-square", "unit-square"):
        return ImplicitDomain.unit_square(**params)
    if name == "plate-with-holes":
        return ImplicitDomain.plate_with_holes(**params)
    raise InvalidArgumentError(f"unknown geometry {name!r}; choose from {GEOMETRIES}")


@dataclass(frozen=True)
class BackgroundMesh:
    """Uniform grid ``T_jk = [jh, (j+1)h) x [kh, (k+1)h)`` in grid coordinates.

    Physical coordinates are ``x = origin + R(theta) y``.
    """

    h: float
    lo: Tuple[int, int]
    shape: Tuple[int, int]
    theta: float = 0.0
    origin: Tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not self.h > 0:
            raise InvalidArgumentError(f"mesh parameter must be positive, got {self.h}")
        if min(self.shape) <= 0:
            raise InvalidArgumentError("mesh needs at least one element per axis")

    @classmethod
    def covering(cls, domain: ImplicitDomain, h: float, theta: float = 0.0,
                 origin=(0.0, 0.0), margin: int = 1) -> "BackgroundMesh":
        """Smallest grid (plus ``margin`` elements) covering ``domain.bbox``."""
        lo, hi = domain.bbox
        corners = np.array([[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]])
        proto = cls(h, (0, 0), (1, 1), theta, tuple(float(v) for v in origin))
        y = proto.to_grid(corners)
        first = np.floor(y.min(axis=0) / h + 1e-9).astype(int) - margin
        last = np.ceil(y.max(axis=0) / h - 1e-9).astype(int) + margin
        return cls(float(h), (int(first[0]), int(first[1])),
                   (int(last[0] - first[0]), int(last[1] - first[1])), theta, proto.origin)

    @property
    def rotation(self) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, -s], [s, c]])

    def to_physical(self, y) -> np.ndarray:
        return np.asarray(y, dtype=float) @ self.rotation.T + np.asarray(self.origin)

    def to_grid(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - np.asarray(self.origin)) @ self.rotation

    def elements(self) -> Iterator[Element]:
        for j in range(self.lo[0], self.lo[0] + self.shape[0]):
            for k in range(self.lo[1], self.lo[1] + self.shape[1]):
                yield (j, k)

    def __contains__(self, e) -> bool:
        return (self.lo[0] <= e[0] < self.lo[0] + self.shape[0]
                and self.lo[1] <= e[1] < self.lo[1] + self.shape[1])

    def element_box(self, e: Element) -> np.ndarray:
        """Grid-frame box ``[[y0min, y1min], [y0max, y1max]]``."""
        j, k = e
        return np.array([[j * self.h, k * self.h], [(j + 1) * self.h, (k + 1) * self.h]])


# --- reference rules -------------------------------------------------------

@lru_cache(maxsize=None)
def _gauss01(n: int) -> Tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def _triangle_rule(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Collapsed Gauss rule on the unit triangle, exact for total degree 2n-2."""
    x, w = _gauss01(n)
    u, v = np.meshgrid(x, x, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    pts = np.stack([(u * (1 - v)).ravel(), v.ravel()], axis=1)
    return pts, (wu * wv * (1 - v)).ravel()


def _box_rule(mesh: BackgroundMesh, box: np.ndarray, q: int):
    x, w = _gauss01(q)
    size = box[1] - box[0]
    g0, g1 = np.meshgrid(box[0, 0] + size[0] * x, box[0, 1] + size[1] * x, indexing="ij")
    w2 = np.outer(w, w).ravel() * size[0] * size[1]
    return mesh.to_physical(np.stack([g0.ravel(), g1.ravel()], axis=1)), w2


# --- classification -------------------------------------------------------

def _box_corners(box: np.ndarray) -> np.ndarray:
    return np.array([[box[0, 0], box[0, 1]], [box[1, 0], box[0, 1]],
                     [box[1, 0], box[1, 1]], [box[0, 0], box[1, 1]]])


def _classify_box(mesh: BackgroundMesh, domain: ImplicitDomain, box: np.ndarray,
                  samples: int) -> ElementKind:
    if domain.is_affine:
        # convex: inside iff all corners are; outside iff the clip is empty
        poly = mesh.to_physical(_box_corners(box))
        if np.all(domain.level_set(poly) < 0):
            return ElementKind.INSIDE
        lab = np.full(4, -1, dtype=int)
        for pi, prim in enumerate(domain.primitives):
            poly, lab = _clip(poly, lab, prim, pi)
            if len(poly) == 0:
                return ElementKind.OUTSIDE
        return ElementKind.CUT
    lips = [pr.lipschitz for pr in domain.primitives]
    if all(L is not None for L in lips):
        center = mesh.to_physical(0.5 * (box[0] + box[1]))[None, :]
        radius = 0.5 * float(np.linalg.norm(box[1] - box[0])) * max(lips)
        psi_c = float(domain.level_set(center)[0])
        if psi_c >= radius:
            return ElementKind.OUTSIDE
        if psi_c < -radius:
            return ElementKind.INSIDE
        return ElementKind.CUT
    s = np.linspace(0.0, 1.0, samples + 1)
    g0, g1 = np.meshgrid(box[0, 0] + (box[1, 0] - box[0, 0]) * s,
                         box[0, 1] + (box[1, 1] - box[0, 1]) * s, indexing="ij")
    psi = domain.level_set(mesh.to_physical(np.stack([g0.ravel(), g1.ravel()], axis=1)))
    if np.all(psi < 0):
        return ElementKind.INSIDE
    if np.all(psi >= 0):
        return ElementKind.OUTSIDE
    return ElementKind.CUT


def classify_element(mesh: BackgroundMesh, domain: ImplicitDomain, element: Element) -> ElementKind:
    """Inside, Outside or Cut.

    Affine domains are classified exactly.  When every primitive carries a
    Lipschitz bound, the element is decided by the centre value against the
    half-diagonal and is Cut whenever that test is inconclusive.  Otherwise
    the sign of ``psi`` is sampled on the corners and an ``s x s`` lattice of
    each of the four half-size children (a ``(2s+1)^2`` lattice, ``s = 4``).
    A point with ``psi = 0`` counts as outside; any sign change gives Cut.
    """
    return _classify_box(mesh, domain, mesh.element_box(element), 2 * _SAMPLES)


# --- polygon clipping ------------------------------------------------------

def _edge_roots(prim: LevelSetPrimitive, a: np.ndarray, b: np.ndarray,
                fa: np.ndarray, fb: np.ndarray) -> np.ndarray:
    """Points on segments ``a -> b`` where ``prim`` changes sign."""
    if prim.affine:
        t = fa / (fa - fb)
        return a + t[:, None] * (b - a)
    # vectorized bisection on the parameter, keeping fa < 0 <= fb orientation
    neg_a = fa < 0
    lo = np.where(neg_a[:, None], a, b)
    hi = np.where(neg_a[:, None], b, a)
    length = np.linalg.norm(b - a, axis=1).max(initial=0.0)
    iters = max(1, int(math.ceil(math.log2(max(length, _ROOT_TOL) / _ROOT_TOL))) + 1)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = prim.value(mid)
        below = fm < 0
        lo = np.where(below[:, None], mid, lo)
        hi = np.where(below[:, None], hi, mid)
    return hi  # first point on the nonnegative side, so psi(root) >= 0 within tolerance


def _clip(poly: np.ndarray, labels: np.ndarray, prim: LevelSetPrimitive, label: int):
    """Clip a polygon against ``{prim < 0}``; ``labels[i]`` tags edge i -> i+1."""
    f = prim.value(poly)
    inside = f < 0
    if inside.all():
        return poly, labels
    if not inside.any():
        return poly[:0], labels[:0]
    m = len(poly)
    nxt = np.roll(np.arange(m), -1)
    cross = inside != inside[nxt]
    idx = np.nonzero(cross)[0]
    if len(idx) and not np.all(np.isfinite(f[idx])):
        raise DegenerateGeometryError("level set not finite at polygon vertices")
    roots = _edge_roots(prim, poly[idx], poly[nxt[idx]], f[idx], f[nxt[idx]])
    root_of = dict(zip(idx.tolist(), roots))
    out_pts: List[np.ndarray] = []
    out_lab: List[int] = []
    for i in range(m):
        if inside[i]:
            out_pts.append(poly[i])
            out_lab.append(int(labels[i]))
            if not inside[nxt[i]]:
                out_pts.append(root_of[i])
                out_lab.append(label)
        elif inside[nxt[i]]:
            out_pts.append(root_of[i])
            out_lab.append(int(labels[i]))
    pts = np.array(out_pts)
    lab = np.array(out_lab, dtype=int)
    return _dedupe(pts, lab)


def _dedupe(pts: np.ndarray, lab: np.ndarray, tol: float = 1e-14):
    if len(pts) < 2:
        return pts[:0], lab[:0]
    scale = max(1.0, float(np.abs(pts).max()))
    keep = np.ones(len(pts), dtype=bool)
    for i in range(len(pts)):
        j = (i + 1) % len(pts)
        if i != j and np.linalg.norm(pts[j] - pts[i]) <= tol * scale:
            keep[i] = False  # zero-length edge i -> j; the later vertex carries on
    pts, lab = pts[keep], lab[keep]
    if len(pts) < 3:
        return pts[:0], lab[:0]
    return pts, lab


def _polygon_rules(pts: np.ndarray, lab: np.ndarray, domain: ImplicitDomain, n_tri: int):
    """Volume rule by fan triangulation; surface rule on labelled edges."""
    vol_p, vol_w = [], []
    ref_p, ref_w = _triangle_rule(n_tri)
    a = pts[0]
    for i in range(1, len(pts) - 1):
        b, c = pts[i], pts[i + 1]
        jac = np.column_stack([b - a, c - a])
        det = abs(np.linalg.det(jac))
        if det <= 0.0:
            continue
        vol_p.append(a + ref_p @ jac.T)
        vol_w.append(ref_w * det)
    srf_p, srf_w, srf_prim = [], [], []
    x, w = _gauss01(n_tri)
    for i, l in enumerate(lab):
        if l < 0:
            continue
        p0, p1 = pts[i], pts[(i + 1) % len(pts)]
        length = np.linalg.norm(p1 - p0)
        if length <= 0.0:
            continue
        srf_p.append(p0 + np.outer(x, p1 - p0))
        srf_w.append(w * length)
        srf_prim.append(np.full(len(x), l))
    return vol_p, vol_w, srf_p, srf_w, srf_prim


@dataclass
class ElementRule:
    """Quadrature for one background element; all points are physical."""

    element: Element
    kind: ElementKind
    points: np.ndarray
    weights: np.ndarray
    surface_points: np.ndarray
    surface_weights: np.ndarray
    normals: np.ndarray
    dirichlet: np.ndarray

    @property
    def volume(self) -> float:
        return float(self.weights.sum())

    @property
    def has_dirichlet(self) -> bool:
        return bool(self.dirichlet.any())


def _cut_rules(mesh: BackgroundMesh, domain: ImplicitDomain, element: Element,
               kind: ElementKind, q: int, depth: int) -> ElementRule:
    n_tri = max(2 * q - 1, 1)
    vol_p: List[np.ndarray] = []
    vol_w: List[np.ndarray] = []
    srf_p: List[np.ndarray] = []
    srf_w: List[np.ndarray] = []
    srf_prim: List[np.ndarray] = []

    def leaf(box):
        poly = mesh.to_physical(_box_corners(box))
        lab = np.full(4, -1, dtype=int)
        for pi, prim in enumerate(domain.primitives):
            poly, lab = _clip(poly, lab, prim, pi)
            if len(poly) == 0:
                return
        vp, vw, sp, sw, spr = _polygon_rules(poly, lab, domain, n_tri)
        vol_p.extend(vp)
        vol_w.extend(vw)
        srf_p.extend(sp)
        srf_w.extend(sw)
        srf_prim.extend(spr)

    def recurse(box, level):
        if level > 0:
            sub = _classify_box(mesh, domain, box, _SAMPLES)
            if sub is ElementKind.OUTSIDE:
                return
            if sub is ElementKind.INSIDE:
                p, w = _box_rule(mesh, box, q)
                vol_p.append(p)
                vol_w.append(w)
                return
        if level >= depth or domain.is_affine:
            leaf(box)
            return
        mid = 0.5 * (box[0] + box[1])
        for lo0, hi0 in ((box[0, 0], mid[0]), (mid[0], box[1, 0])):
            for lo1, hi1 in ((box[0, 1], mid[1]), (mid[1], box[1, 1])):
                recurse(np.array([[lo0, lo1], [hi0, hi1]]), level + 1)

    recurse(mesh.element_box(element), 0)
    pts = np.concatenate(vol_p) if vol_p else np.zeros((0, 2))
    wts = np.concatenate(vol_w) if vol_w else np.zeros(0)
    if srf_p:
        sp = np.concatenate(srf_p)
        sw = np.concatenate(srf_w)
        prim_idx = np.concatenate(srf_prim)
        normals = np.empty_like(sp)
        for pi, prim in enumerate(domain.primitives):
            sel = prim_idx == pi
            if sel.any():
                normals[sel] = prim.gradient(sp[sel])
        norm = np.linalg.norm(normals, axis=1)
        if np.any(norm <= 1e-8):
            raise DegenerateGeometryError(
                f"vanishing level-set gradient on the interface in element {element}", element)
        normals /= norm[:, None]
        tags = domain.boundary_tag(sp)
    else:
        sp = np.zeros((0, 2))
        sw = np.zeros(0)
        normals = np.zeros((0, 2))
        tags = np.zeros(0, dtype=bool)
    return ElementRule(element, kind, pts, wts, sp, sw, normals, tags)


def _element_rule(mesh, domain, element, q, depth, kind=None) -> Optional[ElementRule]:
    if kind is None:
        kind = classify_element(mesh, domain, element)
    if kind is ElementKind.OUTSIDE:
        return None
    if kind is ElementKind.INSIDE:
        p, w = _box_rule(mesh, mesh.element_box(element), q)
        empty = np.zeros((0, 2))
        return ElementRule(element, kind, p, w, empty, np.zeros(0), empty.copy(),
                           np.zeros(0, dtype=bool))
    return _cut_rules(mesh, domain, element, kind, q, depth)


def volume_quadrature(mesh: BackgroundMesh, element: Element, domain: ImplicitDomain,
                      q: int = 3, depth: int = 4) -> Tuple[np.ndarray, np.ndarray]:
    """Points and weights integrating over ``element`` intersected with the domain.

    Inside elements get a ``q x q`` tensor Gauss rule.  Cut elements are
    bisected ``depth`` times (curved primitives only); inside leaves get the
    tensor rule and cut leaves a triangle rule on the clipped polygon.
    """
    rule = _element_rule(mesh, domain, element, q, depth)
    if rule is None:
        return np.zeros((0, 2)), np.zeros(0)
    return rule.points, rule.weights


def surface_quadrature(mesh: BackgroundMesh, element: Element, domain: ImplicitDomain,
                       q: int = 3, depth: int = 4):
    """Boundary rule ``(points, weights, normals, dirichlet)`` of a cut element."""
    rule = _element_rule(mesh, domain, element, q, depth)
    if rule is None:
        empty = np.zeros((0, 2))
        return empty, np.zeros(0), empty.copy(), np.zeros(0, dtype=bool)
    return rule.surface_points, rule.surface_weights, rule.normals, rule.dirichlet


@dataclass
class CutQuadrature:
    """Quadrature over all elements that meet the domain, in lexicographic order."""

    mesh: BackgroundMesh
    domain: ImplicitDomain
    order: int
    depth: int
    kinds: Dict[Element, ElementKind]
    rules: Dict[Element, ElementRule] = field(default_factory=dict)

    @property
    def active_elements(self) -> List[Element]:
        """Elements with a nonempty intersection with the domain."""
        return [e for e, r in self.rules.items() if r.weights.size and r.volume > 0.0]

    def total_volume(self) -> float:
        return float(sum(r.weights.sum() for r in self.rules.values()))

    def total_surface(self, dirichlet: Optional[bool] = None) -> float:
        tot = 0.0
        for r in self.rules.values():
            w = r.surface_weights
            if dirichlet is not None:
                w = w[r.dirichlet == dirichlet]
            tot += float(w.sum())
        return tot

    def dirichlet_cut_elements(self) -> List[Element]:
        return [e for e, r in self.rules.items() if r.has_dirichlet]


def build_quadrature(mesh: BackgroundMesh, domain: ImplicitDomain, q: int = 3,
                     depth: int = 4) -> CutQuadrature:
    """Classify every element and build its rule."""
    if q < 1:
        raise InvalidArgumentError(f"quadrature order must be positive, got {q}")
    if depth < 0:
        raise InvalidArgumentError(f"subdivision depth must be nonnegative, got {depth}")
    kinds: Dict[Element, ElementKind] = {}
    rules: Dict[Element, ElementRule] = {}
    for e in mesh.elements():
        kind = classify_element(mesh, domain, e)
        kinds[e] = kind
        rule = _element_rule(mesh, domain, e, q, depth, kind)
        if rule is not None and (rule.weights.size or rule.surface_weights.size):
            rules[e] = rule
    return CutQuadrature(mesh, domain, q, depth, kinds, rules)


def covered_elements(active: Sequence[Element], p: int) -> set:
    """Elements inside the support of some basis function touching ``active``.

    A basis function meeting element ``(j, k)`` covers ``j-p..j+p`` per axis.
    """
    out = set()
    rng = range(-p, p + 1)
    for j, k in active:
        for a in rng:
            for b in rng:
                out.add((j + a, k + b))
    return out


def dirichlet_neighborhood(quadrature: CutQuadrature, p: int) -> set:
    """Elements with Dirichlet boundary points plus their face/vertex neighbours.

    The result is intersected with the elements covered by the supports of the
    basis functions that meet the domain.
    """
    seeds = quadrature.dirichlet_cut_elements()
    if not seeds:
        return set()
    covered = covered_elements(quadrature.active_elements, p)
    out = set()
    for j, k in seeds:
        for a in (-1, 0, 1):
            for b in (-1, 0, 1):
                e = (j + a, k + b)
                if e in covered:
                    out.add(e)
    return out
