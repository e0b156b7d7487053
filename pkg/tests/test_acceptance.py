"""Acceptance suite: one test per criterion, summarised as PASS/FAIL lines.

Run with ``pytest tests/test_acceptance.py -v``; the terminal summary lists
every criterion with the measured quantities.
"""
import math
import time

import numpy as np
import pytest

from cutiga.cut_geometry import BackgroundMesh, ImplicitDomain, build_quadrature
from cutiga.discrete_space import select_removal
from cutiga.forms import energy_norm
from cutiga.problems import polynomial_elasticity, polynomial_poisson
from cutiga.spline_basis import TensorBSplineBasis, eval_bspline_1d, local_basis_1d
from cutiga.studies import (
    StudyConfig,
    convergence_rate,
    prepare_case,
    run_case,
    run_condition_sweep,
    run_criteria_map,
    run_tol_sweep,
)

LADDER = (0.2, 0.1, 0.05, 0.025)
C_VALUES = (0.0, 0.01, 0.1)
THETA = math.pi / 7


def detail(record_property, text):
    record_property("detail", text)
    print(text)


@pytest.fixture(scope="module")
def ladders():
    """Records for every (problem, p) ladder and c value, plus the c = 0 wall time."""
    out, elapsed = {}, 0.0
    for problem in ("poisson", "elasticity"):
        for p in (2, 3):
            cfg = StudyConfig(problem=problem, p=p, theta=THETA, h_ladder=LADDER)
            recs = {c: [] for c in C_VALUES}
            for h in LADDER:
                t0 = time.perf_counter()
                case = prepare_case(cfg, h)
                recs[0.0].append(run_case(case, 0.0).record)
                elapsed += time.perf_counter() - t0
                for c in C_VALUES[1:]:
                    recs[c].append(run_case(case, c).record)
            out[(problem, p)] = recs
    return out, elapsed


@pytest.mark.criterion(1, "energy-norm convergence rate, c = 0")
def test_criterion_1_convergence_rate(ladders, record_property):
    recs, elapsed = ladders
    for (problem, p), by_c in recs.items():
        rate = convergence_rate(by_c[0.0])
        need = p - 0.15 if p == 2 else p - 0.2
        detail(record_property, f"{problem} p={p}: slope {rate:.3f} (>= {need})")
        assert rate >= need, f"{problem} p={p}: slope {rate:.3f} < {need}"
    detail(record_property, f"c=0 runtime {elapsed:.1f}s")
    assert elapsed < 120.0


@pytest.mark.criterion(2, "removal neutrality for c = 1e-2 and 1e-1")
def test_criterion_2_removal_neutrality(ladders, record_property):
    recs, _ = ladders
    limits = {0.01: 0.05, 0.1: 0.25}
    for (problem, p), by_c in recs.items():
        base = np.array([r.energy_error for r in by_c[0.0]])
        for c, lim in limits.items():
            err = np.array([r.energy_error for r in by_c[c]])
            dev = np.max(np.abs(err - base) / base)
            rate = convergence_rate(by_c[c])
            removed = [r.removed for r in by_c[c]]
            detail(record_property, f"{problem} p={p} c={c:g}: max rel. change {dev:.2e}, "
                                    f"slope {rate:.3f}, removed {removed}")
            assert dev <= lim, f"{problem} p={p} c={c}: error change {dev:.3f} > {lim}"
            assert rate >= p - 0.2


@pytest.mark.criterion(3, "conditioning at the worst cut of a 20-offset disk sweep")
def test_criterion_3_conditioning(record_property):
    cfg = StudyConfig(problem="poisson", geometry="disk", theta=0.0, p=2, tau=0.1,
                      h_ladder=(0.05,))
    rows = run_condition_sweep(cfg, 0.05, 0.01, 20)
    worst = max(rows, key=lambda r: r.kappa_full)
    detail(record_property, f"worst kappa {worst.kappa_full:.3e} -> {worst.kappa_removed:.3e} "
                            f"({worst.removed} removed)")
    assert all(math.isfinite(r.kappa_removed) for r in rows)
    assert worst.kappa_removed * 1e2 <= worst.kappa_full
    detail(record_property, f"max kappa with removal {max(r.kappa_removed for r in rows):.3e}")


@pytest.mark.criterion(4, "coercivity identity on random cut configurations")
def test_criterion_4_coercivity_identity(record_property):
    rng = np.random.default_rng(2024)
    worst = {"poisson": 0.0, "elasticity": 0.0}
    for _ in range(5):
        theta = rng.uniform(0, math.pi / 2)
        h = 0.15
        offset = tuple(rng.uniform(0, h, 2))
        geom = (("center", tuple(rng.uniform(0.45, 0.55, 2))), ("radius", rng.uniform(0.3, 0.4)))
        for problem in worst:
            cfg = StudyConfig(problem=problem, geometry="disk", geometry_params=geom, theta=theta,
                              p=2, tau=0.1, offset=offset)
            case = prepare_case(cfg, h)
            A = case.system.matrix
            beta = case.system.meta["beta"]
            for _ in range(50):
                v = rng.standard_normal(A.shape[0])
                nb = energy_norm(case.space, case.quadrature, v, case.problem, tau=cfg.tau,
                                 ls_operator=cfg.ls_operator, use_exact=False)
                expect = nb.gradient + beta * nb.boundary + nb.least_squares
                worst[problem] = max(worst[problem], abs(v @ (A @ v) - expect) / expect)
    detail(record_property, f"max rel. mismatch poisson {worst['poisson']:.1e}, "
                            f"elasticity {worst['elasticity']:.1e}")
    assert worst["poisson"] <= 1e-9 and worst["elasticity"] <= 1e-9


@pytest.mark.criterion(5, "patch test on the fitted unit square")
def test_criterion_5_patch_test(record_property):
    worst = 0.0
    for p in (1, 2, 3):
        runs = [("poisson", "nonsym", polynomial_poisson(p), {}),
                ("poisson", "sym", polynomial_poisson(p), {}),
                ("elasticity", "nonsym", polynomial_elasticity(p), {}),
                ("elasticity", "nonsym", polynomial_elasticity(p),
                 dict(tau=0.1, ls_operator="stress"))]
        for problem, method, exact, kw in runs:
            cfg = StudyConfig(problem=problem, method=method, p=p, theta=0.0, **kw)
            err = run_case(prepare_case(cfg, 0.25, problem=exact), 0.0).record.energy_error
            worst = max(worst, err)
            assert err < 1e-8, f"{problem}/{method} p={p} {kw}: {err:.2e}"
    detail(record_property, f"max relative energy error {worst:.1e}")


@pytest.mark.criterion(6, "geometry oracles")
def test_criterion_6_geometry(record_property):
    dom = ImplicitDomain.disk()
    quad = build_quadrature(BackgroundMesh.covering(dom, 0.05), dom, q=3, depth=4)
    r = 0.4
    area = abs(quad.total_volume() - math.pi * r * r) / (math.pi * r * r)
    perim = abs(quad.total_surface() - 2 * math.pi * r) / (2 * math.pi * r)
    half = 0.0
    for x0 in (0.5, 0.3137, 0.77):
        hp = ImplicitDomain.halfplane(point=(x0, 0.0), normal=(math.cos(0.3), math.sin(0.3)))
        qh = build_quadrature(BackgroundMesh(0.1, (0, 0), (10, 10)), hp, q=3)  # spans [0, 1]^2
        # exact area of {n.(x - x0) < 0} within the unit square by polygon clipping
        half = max(half, abs(qh.total_volume() - _clipped_area(x0, 0.3)))
    detail(record_property, f"disk area {area:.1e}, perimeter {perim:.1e}, half-plane {half:.1e}")
    assert area < 1e-4 and perim < 1e-3 and half < 1e-10


def _clipped_area(x0, angle):
    """Area of the unit square below the line n.(x - (x0, 0)) = 0 (shoelace formula)."""
    n = np.array([math.cos(angle), math.sin(angle)])
    poly = [np.array(v, float) for v in ((0, 0), (1, 0), (1, 1), (0, 1))]
    f = [float(n @ (v - (x0, 0.0))) for v in poly]
    out = []
    for i in range(4):
        a, b, fa, fb = poly[i], poly[(i + 1) % 4], f[i], f[(i + 1) % 4]
        if fa < 0:
            out.append(a)
        if (fa < 0) != (fb < 0):
            out.append(a + fa / (fa - fb) * (b - a))
    x, y = np.array(out).T
    return 0.5 * abs(np.dot(x, np.roll(y, 1)) - np.dot(y, np.roll(x, 1)))


@pytest.mark.criterion(7, "basis properties: partition of unity, continuity, gradients")
def test_criterion_7_basis(record_property):
    rng = np.random.default_rng(7)
    pu = cont = grad = 0.0
    for p in (1, 2, 3):
        h = 0.3
        x = rng.uniform(0, 3, 500)
        total = sum(eval_bspline_1d(i, p, x, h) for i in range(-p - 1, 12))
        pu = max(pu, np.max(np.abs(total - 1.0)))
        # C^(p-1): the pieces meeting at a knot agree in derivatives 0..p-1
        for k in range(p):
            left = local_basis_1d(p, np.array([1.0]), k)[0]   # cell j, t = 1
            right = local_basis_1d(p, np.array([0.0]), k)[0]  # cell j+1, t = 0
            cont = max(cont, np.max(np.abs(left[1:] - right[:-1])), abs(left[0]), abs(right[-1]))
        # tensor gradient vs central differences
        basis = TensorBSplineBasis(p, h)
        pts = rng.uniform(0, (p + 1) * h, (50, 2))
        pts = pts[np.all(np.abs(pts / h - np.round(pts / h)) > 1e-3, axis=1)]
        _, g, _ = basis.evaluate((0, 0), pts)
        d = 1e-6
        fd = np.stack([(basis.evaluate((0, 0), pts + d * e)[0] - basis.evaluate((0, 0), pts - d * e)[0])
                       / (2 * d) for e in np.eye(2)], axis=1)
        grad = max(grad, np.max(np.abs(fd - g)) / np.max(np.abs(g)))
    detail(record_property, f"partition {pu:.1e}, continuity {cont:.1e}, gradient {grad:.1e}")
    assert pu <= 1e-12 and cont <= 1e-10 and grad <= 1e-6


@pytest.mark.criterion(8, "selection: greedy prefix, monotone in c, non-increasing as h halves")
def test_criterion_8_selection(ladders, record_property):
    rng = np.random.default_rng(8)
    for _ in range(100):
        n = int(rng.integers(1, 40))
        m = rng.uniform(0, 1, n) ** rng.uniform(1, 6)
        tol = float(rng.uniform(0, np.sqrt(m.sum())))
        order = np.lexsort((np.arange(n), m))
        prefix = np.cumsum(m[order])
        best = int(np.searchsorted(prefix, tol * tol, side="right")) if tol > 0 else 0
        if best == n:
            continue
        assert select_removal(m, tol).removed_count == best
    rows = run_tol_sweep(StudyConfig(problem="elasticity", p=2), [0, 1e-3, 1e-2, 1e-1, 1], h=0.1)
    counts = [r.removed for r in rows if r.status == "ok"]
    detail(record_property, f"h=0.1 counts over c: {counts}")
    assert counts == sorted(counts)
    recs, _ = ladders
    failures = []
    for c in (0.01, 0.1):
        removed = [r.removed for r in recs[("elasticity", 2)][c]]
        detail(record_property, f"elasticity p=2 c={c:g} removed over h={LADDER}: {removed}")
        if any(b > a for a, b in zip(removed, removed[1:])):
            failures.append((c, removed))
    assert not failures, f"removed count grows as h halves: {failures}"


@pytest.mark.criterion(9, "criteria maps: max within energy, regions shrink with h")
def test_criterion_9_criteria_maps(record_property):
    sizes = []
    for p in range(1, 6):
        coarse, fine = run_criteria_map(p, 0.1, 51), run_criteria_map(p, 0.05, 51)
        for m in (coarse, fine):
            if p >= 2:
                assert not np.any(m["max"] & ~m["energy"])
        for key in ("energy", "max"):
            assert not np.any(fine[key] & ~coarse[key])
        assert fine["energy"].sum() < coarse["energy"].sum()
        sizes.append(f"p={p}:{coarse['energy'].sum()}->{fine['energy'].sum()}")
    detail(record_property, "energy region cells " + ", ".join(sizes))


def _polynomial_coefficients(space, fn):
    """Least-squares spline coefficients of ``fn`` from samples on the active cells."""
    s = (np.arange(5) + 0.5) / 5
    rows, vals = [], []
    for e in space.active_elements:
        g = np.stack(np.meshgrid(s, s, indexing="ij"), -1).reshape(-1, 2)
        pts = space.mesh.to_physical((np.array(e) + g) * space.mesh.h)
        ev = space.element_basis(e, pts, nderiv=0)
        block = np.zeros((len(pts), space.size))
        block[:, ev.dofs] = ev.values
        rows.append(block)
        vals.append(fn(pts))
    B, y = np.vstack(rows), np.concatenate(vals)
    coef, *_ = np.linalg.lstsq(B, y, rcond=None)
    assert np.max(np.abs(B @ coef - y)) < 1e-10
    return coef


@pytest.mark.criterion(10, "symmetric method: symmetry, ghost consistency, patch test")
def test_criterion_10_symmetric(record_property):
    sym = ghost = patch = 0.0
    for p in (1, 2, 3):
        cfg = StudyConfig(problem="poisson", method="sym", p=p, gamma=0.1, theta=THETA)
        case = prepare_case(cfg, 0.1, problem=polynomial_poisson(p))
        A = case.system.matrix
        sym = max(sym, abs(A - A.T).max() / abs(A).max())
        G = case.system.meta["terms"].G
        K = case.system.meta["terms"].K
        for i in range(p + 1):
            for j in range(p + 1 - i):
                q = _polynomial_coefficients(case.space, lambda x: x[:, 0] ** i * x[:, 1] ** j)
                scale = cfg.gamma * 0.1 ** (2 * p - 1)
                ghost = max(ghost, abs(scale * q @ (G @ q)) / max(abs(q @ (K @ q)), q @ q))
        patch = max(patch, run_case(case, 0.0).record.energy_error)
    detail(record_property, f"asymmetry {sym:.1e}, ghost {ghost:.1e}, patch {patch:.1e}")
    assert sym <= 1e-12 and ghost <= 1e-10 and patch < 1e-8
