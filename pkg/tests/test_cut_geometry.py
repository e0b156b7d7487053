import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cutiga.cut_geometry import (
    BackgroundMesh,
    ElementKind,
    ImplicitDomain,
    LevelSetPrimitive,
    build_quadrature,
    classify_element,
    covered_elements,
    dirichlet_neighborhood,
    make_domain,
    surface_quadrature,
    volume_quadrature,
)
from cutiga.exceptions import DegenerateGeometryError, InvalidArgumentError


def quadrature(domain, h, theta=0.0, origin=(0.0, 0.0), q=3, depth=4):
    mesh = BackgroundMesh.covering(domain, h, theta, origin)
    return build_quadrature(mesh, domain, q=q, depth=depth)


class TestMesh:
    def test_round_trip(self):
        mesh = BackgroundMesh(0.1, (0, 0), (3, 3), theta=0.3, origin=(0.2, -0.1))
        y = np.random.default_rng(0).uniform(-1, 1, (10, 2))
        np.testing.assert_allclose(mesh.to_grid(mesh.to_physical(y)), y, atol=1e-15)

    def test_covering_contains_bbox(self):
        dom = ImplicitDomain.unit_square()
        mesh = BackgroundMesh.covering(dom, 0.1, math.pi / 7)
        corners = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
        y = mesh.to_grid(corners) / mesh.h
        lo = np.array(mesh.lo)
        hi = lo + np.array(mesh.shape)
        assert np.all(y >= lo) and np.all(y <= hi)

    def test_element_box(self):
        mesh = BackgroundMesh(0.5, (0, 0), (2, 2))
        np.testing.assert_allclose(mesh.element_box((1, 0)), [[0.5, 0.0], [1.0, 0.5]])
        assert (1, 1) in mesh and (2, 0) not in mesh

    @pytest.mark.parametrize("kw", [dict(h=0.0), dict(shape=(0, 2))])
    def test_invalid(self, kw):
        args = dict(h=0.1, lo=(0, 0), shape=(2, 2))
        args.update(kw)
        with pytest.raises(InvalidArgumentError):
            BackgroundMesh(**args)


class TestClassification:
    def test_disk(self):
        dom = ImplicitDomain.disk()
        mesh = BackgroundMesh.covering(dom, 0.1)
        assert classify_element(mesh, dom, (5, 5)) is ElementKind.INSIDE
        assert classify_element(mesh, dom, (-1, -1)) is ElementKind.OUTSIDE
        assert classify_element(mesh, dom, (0, 4)) is ElementKind.CUT

    def test_zero_level_counts_as_outside(self):
        dom = ImplicitDomain.halfplane(point=(0.5, 0.0), normal=(1.0, 0.0))
        mesh = BackgroundMesh(0.5, (0, 0), (2, 1))
        assert classify_element(mesh, dom, (1, 0)) is ElementKind.OUTSIDE

    def test_kinds_partition_volume(self):
        quad = quadrature(ImplicitDomain.disk(), 0.1)
        for e, kind in quad.kinds.items():
            vol = quad.rules[e].volume if e in quad.rules else 0.0
            if kind is ElementKind.INSIDE:
                assert vol == pytest.approx(0.01)
            elif kind is ElementKind.OUTSIDE:
                assert vol == 0.0
            else:
                assert 0.0 <= vol <= 0.01 + 1e-15


class TestOracles:
    def test_disk_area_and_perimeter(self):
        quad = quadrature(ImplicitDomain.disk(), 0.05, q=3, depth=4)
        r = 0.4
        assert abs(quad.total_volume() - math.pi * r * r) / (math.pi * r * r) < 1e-4
        assert abs(quad.total_surface() - 2 * math.pi * r) / (2 * math.pi * r) < 1e-3

    @pytest.mark.parametrize("theta", [0.0, math.pi / 7, 1.0])
    def test_rotated_square_exact(self, theta):
        quad = quadrature(ImplicitDomain.unit_square(), 0.1, theta)
        assert quad.total_volume() == pytest.approx(1.0, abs=1e-12)
        assert quad.total_surface() == pytest.approx(4.0, abs=1e-12)
        assert quad.total_surface(dirichlet=True) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("x0", [0.5, 0.31, 0.5 + 1e-9])
    def test_halfplane_volume_exact(self, x0):
        dom = ImplicitDomain.halfplane(point=(x0, 0.0), normal=(1.0, 0.0))
        mesh = BackgroundMesh(0.1, (0, 0), (10, 10))
        quad = build_quadrature(mesh, dom, q=3)
        assert quad.total_volume() == pytest.approx(x0, abs=1e-10)

    def test_halfplane_half_cell(self):
        dom = ImplicitDomain.halfplane(point=(0.0, 0.0), normal=(1.0, 1.0))
        mesh = BackgroundMesh(0.2, (0, -1), (1, 1))
        pts, w = volume_quadrature(mesh, (0, -1), dom)
        assert w.sum() == pytest.approx(0.02, abs=1e-15)

    def test_plate_with_holes(self):
        dom = ImplicitDomain.plate_with_holes()
        quad = quadrature(dom, 0.05)
        area = 2.0 - math.pi * (0.2**2 * 2 + 0.12**2)
        perim = 6.0 + 2 * math.pi * (0.2 * 2 + 0.12)
        assert quad.total_volume() == pytest.approx(area, rel=1e-4)
        assert quad.total_surface() == pytest.approx(perim, rel=1e-3)
        assert quad.total_surface(dirichlet=True) == 0.0

    @pytest.mark.parametrize("dom, rtol", [
        (ImplicitDomain.disk(center=(0.47, 0.52), radius=0.31), 1e-4),  # polygonal interface
        (ImplicitDomain.unit_square(), 1e-12),
    ])
    def test_divergence_theorem(self, dom, rtol):
        # int_Omega div F = int_boundary F.n for F = (x^2 y, x y^3)
        quad = quadrature(dom, 0.07, theta=0.4)
        vol = sum(r.weights @ (2 * r.points[:, 0] * r.points[:, 1] + 3 * r.points[:, 0]
                               * r.points[:, 1] ** 2) for r in quad.rules.values())
        srf = 0.0
        for r in quad.rules.values():
            if r.surface_weights.size:
                x, y = r.surface_points.T
                F = np.stack([x * x * y, x * y**3], axis=1)
                srf += r.surface_weights @ np.einsum("qi,qi->q", F, r.normals)
        assert vol == pytest.approx(srf, rel=rtol, abs=1e-14)

    def test_normals_are_unit_and_outward(self):
        dom = ImplicitDomain.disk()
        quad = quadrature(dom, 0.1)
        for r in quad.rules.values():
            if r.surface_weights.size:
                np.testing.assert_allclose(np.linalg.norm(r.normals, axis=1), 1.0)
                outward = r.surface_points - 0.5
                assert np.all(np.einsum("qi,qi->q", outward, r.normals) > 0)


@settings(max_examples=25, deadline=None)
@given(angle=st.floats(0.0, 2 * math.pi), offset=st.floats(-0.5, 0.5))
def test_halfplane_cell_volume_property(angle, offset):
    n = np.array([math.cos(angle), math.sin(angle)])
    dom = ImplicitDomain.halfplane(point=0.5 + offset * n * 0.5, normal=n)
    mesh = BackgroundMesh(1.0, (0, 0), (1, 1))
    pts, w = volume_quadrature(mesh, (0, 0), dom)
    # Monte-Carlo-free oracle: integrate the indicator of n.(x - p) < 0 on a fine grid
    g = (np.arange(400) + 0.5) / 400
    X, Y = np.meshgrid(g, g)
    frac = np.mean((np.stack([X, Y], -1) - (0.5 + offset * n * 0.5)) @ n < 0)
    assert w.sum() == pytest.approx(frac, abs=5e-3)


class TestSurface:
    def test_dirichlet_tags(self):
        dom = ImplicitDomain.unit_square()
        quad = quadrature(dom, 0.25, theta=0.3)
        for r in quad.rules.values():
            if r.surface_weights.size:
                on_bottom = np.abs(r.surface_points[:, 1]) < 1e-10
                np.testing.assert_array_equal(r.dirichlet, on_bottom)

    def test_surface_quadrature_outside_element(self):
        dom = ImplicitDomain.disk()
        mesh = BackgroundMesh.covering(dom, 0.1)
        pts, w, n, d = surface_quadrature(mesh, (-1, -1), dom)
        assert len(w) == 0

    def test_degenerate_gradient(self):
        dom = ImplicitDomain.from_level_set(
            lambda x: np.linalg.norm(x - 0.5, axis=-1) - 0.3,
            lambda x: np.zeros_like(x), bbox=[[0.2, 0.2], [0.8, 0.8]])
        mesh = BackgroundMesh.covering(dom, 0.1)
        with pytest.raises(DegenerateGeometryError):
            build_quadrature(mesh, dom)

    def test_unknown_geometry(self):
        with pytest.raises(InvalidArgumentError):
            make_domain("torus")

    def test_make_domain_params(self):
        dom = make_domain("disk", center=(0.0, 0.0), radius=1.0)
        assert dom.level_set(np.array([[0.0, 0.0]]))[0] == pytest.approx(-1.0)


class TestNeighbourhoods:
    def test_covered_elements(self):
        cov = covered_elements([(0, 0)], 2)
        assert len(cov) == 25 and (2, -2) in cov

    def test_dirichlet_neighborhood(self):
        quad = quadrature(ImplicitDomain.unit_square(), 0.25)
        nb = dirichlet_neighborhood(quad, 2)
        seeds = quad.dirichlet_cut_elements()
        assert set(seeds) <= nb
        assert all(any(max(abs(e[0] - s[0]), abs(e[1] - s[1])) <= 1 for s in seeds) for e in nb)
        pure = quadrature(ImplicitDomain.plate_with_holes(), 0.2)
        assert dirichlet_neighborhood(pure, 2) == set()

    def test_primitive_lipschitz(self):
        assert LevelSetPrimitive.disk((0, 0), 1).lipschitz == 1.0
        assert LevelSetPrimitive.halfplane((0, 0), (0, 2)).affine
