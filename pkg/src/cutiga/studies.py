"""Convergence ladders, tolerance sweeps, conditioning and criteria studies.

One run of the pipeline ("case") is: build the cut quadrature on a
translated/rotated background grid, assemble the Nitsche system on the full
index set, select the removed basis functions for ``tol = c h^p scale``,
restrict, solve and measure the error.
"""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .cut_geometry import BackgroundMesh, CutQuadrature, ImplicitDomain, build_quadrature, make_domain
from .discrete_space import (
    RemovalReport,
    SpacePartition,
    apply_removal,
    build_space,
    energy_criterion_2d,
    max_criterion_2d,
    select_removal,
    select_removal_from_diagonal,
    star_norms,
)
from .exceptions import ConfigurationError, CutIGAError, InvalidArgumentError
from .forms import (
    AssembledSystem,
    ModelProblem,
    NitscheParams,
    assemble_elasticity_nonsym,
    assemble_poisson_nonsym,
    assemble_poisson_sym,
    energy_norm,
)
from .linalg_solve import augment_rigid_modes, condition_estimate, solve
from .problems import manufactured_elasticity, manufactured_poisson, neumann_plate, von_mises

__all__ = [
    "StudyConfig",
    "StudyRecord",
    "Case",
    "prepare_case",
    "run_case",
    "run_manufactured_elasticity",
    "run_manufactured_poisson",
    "run_convergence",
    "run_tol_sweep",
    "run_criteria_map",
    "run_condition_sweep",
    "run_neumann_demo",
    "convergence_rate",
    "records_to_csv",
    "DEFAULT_LADDER",
]

DEFAULT_LADDER = (0.4, 0.2, 0.1, 0.05, 0.025)


@dataclass(frozen=True)
class StudyConfig:
    """Everything needed to reproduce a study.

    ``tol = c * h**p * scale`` with ``scale = sqrt(E)`` for elasticity and 1
    for Poisson.
    """

    problem: str = "poisson"
    geometry: str = "rotated-unit-square"
    geometry_params: Tuple[Tuple[str, object], ...] = ()
    theta: float = math.pi / 7
    p: int = 2
    h_ladder: Tuple[float, ...] = (0.2, 0.1, 0.05, 0.025)
    c: float = 0.0
    beta: Optional[float] = None
    tau: float = 0.0
    gamma: float = 0.1
    ls_operator: str = "strain"
    method: str = "nonsym"
    measure_kind: str = "diagonal"
    quad_order: Optional[int] = None
    subdiv_depth: int = 4
    offset: Tuple[float, float] = (0.0, 0.0)
    seed: int = 0
    condest: bool = False
    out: Optional[str] = None

    def __post_init__(self):
        if self.problem not in ("poisson", "elasticity"):
            raise ConfigurationError(f"unknown problem {self.problem!r}")
        if self.method not in ("nonsym", "sym"):
            raise ConfigurationError(f"unknown method {self.method!r}")
        if self.method == "sym" and self.problem != "poisson":
            raise ConfigurationError("the symmetric method is implemented for Poisson only")
        if self.measure_kind not in ("diagonal", "star"):
            raise ConfigurationError(f"unknown measure {self.measure_kind!r}")
        if self.p < 1:
            raise ConfigurationError(f"order must be at least 1, got {self.p}")
        if not self.c >= 0:
            raise ConfigurationError(f"tolerance constant must be nonnegative, got {self.c}")
        ladder = tuple(float(h) for h in self.h_ladder)
        if not ladder or any(h <= 0 for h in ladder) or any(
                b >= a for a, b in zip(ladder, ladder[1:])):
            raise ConfigurationError(f"h ladder must be positive and strictly decreasing: {ladder}")
        object.__setattr__(self, "h_ladder", ladder)
        NitscheParams(self.beta, self.tau, self.gamma, self.ls_operator)  # validates

    @property
    def params(self) -> NitscheParams:
        return NitscheParams(self.beta, self.tau, self.gamma, self.ls_operator)

    @property
    def q(self) -> int:
        return self.p + 1 if self.quad_order is None else int(self.quad_order)

    def make_problem(self) -> ModelProblem:
        if self.geometry == "plate-with-holes":
            return neumann_plate()
        return manufactured_elasticity() if self.problem == "elasticity" else manufactured_poisson()

    def make_domain(self) -> ImplicitDomain:
        return make_domain(self.geometry, **dict(self.geometry_params))

    def scale(self, problem: ModelProblem) -> float:
        return math.sqrt(problem.E) if problem.kind == "elasticity" else 1.0

    def tol(self, h: float, c: Optional[float] = None, problem: Optional[ModelProblem] = None) -> float:
        c = self.c if c is None else c
        problem = problem or self.make_problem()
        return c * h**self.p * self.scale(problem)


@dataclass
class StudyRecord:
    """One row of a study table (column order is the CSV schema)."""

    h: float
    p: int
    c: float
    dofs: int
    removed: int
    energy_error: float
    l2_error: float
    condest: float
    wall_time: float

    @classmethod
    def columns(cls) -> List[str]:
        return [f.name for f in fields(cls)]


@dataclass
class Case:
    """Full-space discretisation of one configuration at one ``h``."""

    config: StudyConfig
    h: float
    problem: ModelProblem
    domain: ImplicitDomain
    mesh: BackgroundMesh
    quadrature: CutQuadrature
    space: SpacePartition
    system: AssembledSystem

    def measures(self) -> np.ndarray:
        if self.config.measure_kind == "diagonal":
            m = self.system.basis_diagonal()
        else:
            m = star_norms(self.system.meta["terms"], self.h, self.config.tau)
        return m

    def select(self, c: float) -> RemovalReport:
        tol = self.config.tol(self.h, c, self.problem)
        keys = [tuple(int(v) for v in k) for k in self.space.indices]
        if self.config.measure_kind == "diagonal":
            report = select_removal_from_diagonal(self.system, tol)
        else:
            report = select_removal(self.measures(), tol, keys=keys, measure_kind="star")
        report.support_boxes = np.array([self.space.support_box(i) for i in range(self.space.size)])
        return report


_ASSEMBLERS = {
    ("poisson", "nonsym"): assemble_poisson_nonsym,
    ("poisson", "sym"): assemble_poisson_sym,
    ("elasticity", "nonsym"): assemble_elasticity_nonsym,
}


def prepare_case(config: StudyConfig, h: float, offset=None,
                 problem: Optional[ModelProblem] = None) -> Case:
    """Geometry, quadrature, space and full-space system for one ``h``."""
    problem = problem or config.make_problem()
    domain = config.make_domain()
    origin = config.offset if offset is None else offset
    mesh = BackgroundMesh.covering(domain, h, config.theta, origin=tuple(origin))
    quad = build_quadrature(mesh, domain, q=config.q, depth=config.subdiv_depth)
    space = build_space(quad, config.p)
    system = _ASSEMBLERS[(problem.kind, config.method)](space, quad, problem, config.params)
    return Case(config, h, problem, domain, mesh, quad, space, system)


@dataclass
class CaseResult:
    record: StudyRecord
    report: RemovalReport
    space: SpacePartition
    system: AssembledSystem
    coeffs: np.ndarray          # over the full index set
    multipliers: np.ndarray
    status: str = "ok"


def run_case(case: Case, c: float, condest: Optional[bool] = None, t0: Optional[float] = None
             ) -> CaseResult:
    """Remove, solve and measure one ``(h, c)`` point of a prepared case."""
    t0 = time.perf_counter() if t0 is None else t0
    cfg = case.config
    report = case.select(c)
    space = apply_removal(case.space, report, forbid_dirichlet=cfg.method == "sym")
    system = case.system.restrict(space.active)
    pure_neumann = case.problem.kind == "elasticity" and not case.domain.has_dirichlet
    solved = augment_rigid_modes(system, space, case.quadrature) if pure_neumann else system
    result = solve(solved)
    coeffs = system.expand(result.x, space.size)
    if case.problem.exact is not None:
        nb = energy_norm(space, case.quadrature, coeffs, case.problem, tau=cfg.tau,
                         ls_operator=cfg.ls_operator)
        eerr, lerr = nb.relative, nb.relative_l2
    else:
        eerr = lerr = float("nan")
    do_cond = cfg.condest if condest is None else condest
    kappa = condition_estimate(system, seed=cfg.seed) if do_cond else float("nan")
    rec = StudyRecord(case.h, cfg.p, float(c), int(system.matrix.shape[0]), report.removed_count,
                      float(eerr), float(lerr), float(kappa), time.perf_counter() - t0)
    return CaseResult(rec, report, space, system, coeffs, np.asarray(result.multipliers))


def _with_context(exc: CutIGAError, h: float, c: float) -> CutIGAError:
    exc.args = (f"{exc.args[0] if exc.args else exc} (h={h:g}, c={c:g})",) + tuple(exc.args[1:])
    return exc


def run_convergence(config: StudyConfig) -> List[StudyRecord]:
    """Ladder over ``config.h_ladder`` at fixed ``config.c``."""
    out = []
    for h in config.h_ladder:
        t0 = time.perf_counter()
        try:
            case = prepare_case(config, h)
            out.append(run_case(case, config.c, t0=t0).record)
        except CutIGAError as exc:
            raise _with_context(exc, h, config.c)
    return sorted(out, key=lambda r: (r.h, r.c))


def run_manufactured_elasticity(config: StudyConfig) -> List[StudyRecord]:
    """Plane-strain manufactured problem on the unit square (Dirichlet on ``y = 0``)."""
    return run_convergence(replace(config, problem="elasticity"))


def run_manufactured_poisson(config: StudyConfig) -> List[StudyRecord]:
    """``u = sin(pi x) sin(pi y)`` on the unit square (Dirichlet on ``y = 0``)."""
    return run_convergence(replace(config, problem="poisson"))


def convergence_rate(records: Sequence[StudyRecord], attr: str = "energy_error") -> float:
    """Least-squares slope of ``log(error)`` against ``log(h)``."""
    h = np.array([r.h for r in records])
    e = np.array([getattr(r, attr) for r in records])
    if len(h) < 2:
        raise InvalidArgumentError("need at least two records for a rate")
    return float(np.polyfit(np.log(h), np.log(e), 1)[0])


@dataclass
class SweepRow:
    c: float
    removed: int
    energy_error: float
    condest: float
    status: str = "ok"
    message: str = ""


def run_tol_sweep(config: StudyConfig, c_list: Sequence[float], h: Optional[float] = None
                  ) -> List[SweepRow]:
    """Removed count, error and condition estimate for each ``c`` at fixed ``h``.

    The full-space system is assembled once.  Selections rejected by the
    over-removal guard are recorded with ``status="over-removal"``.
    """
    if not len(c_list):
        raise InvalidArgumentError("c_list must be nonempty")
    h = config.h_ladder[0] if h is None else h
    case = prepare_case(config, h)
    rows = []
    for c in sorted(float(v) for v in c_list):
        try:
            res = run_case(case, c)
            rows.append(SweepRow(c, res.record.removed, res.record.energy_error, res.record.condest))
        except CutIGAError as exc:
            rows.append(SweepRow(c, -1, float("nan"), float("nan"), exc.kind, str(exc)))
    return rows


def run_criteria_map(p: int, h: float, resolution: int = 51, C: float = 1.0) -> Dict[str, np.ndarray]:
    """Admissibility of ``(d1/h, d2/h)`` on a uniform grid of ``[0, 1]^2``.

    Returns the grid ``ratios`` and boolean tables ``energy[i, j]`` and
    ``max[i, j]`` for ``d1 = ratios[i] h``, ``d2 = ratios[j] h``.
    """
    if resolution < 2:
        raise InvalidArgumentError(f"resolution must be at least 2, got {resolution}")
    r = np.linspace(0.0, 1.0, resolution)
    energy = np.array([[energy_criterion_2d(a * h, b * h, h, p, C) for b in r] for a in r])
    maxc = np.array([[max_criterion_2d(a * h, b * h, h, p, C) for b in r] for a in r])
    return {"ratios": r, "energy": energy, "max": maxc, "p": p, "h": h}


def criteria_map_csv(maps: Sequence[Dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["p", "h", "d1_over_h", "d2_over_h", "energy", "max"])
    for m in maps:
        r = m["ratios"]
        for i, a in enumerate(r):
            for j, b in enumerate(r):
                w.writerow([m["p"], repr(m["h"]), repr(float(a)), repr(float(b)),
                            int(m["energy"][i, j]), int(m["max"][i, j])])
    return buf.getvalue()


@dataclass
class ConditionRow:
    offset: Tuple[float, float]
    kappa_full: float
    kappa_removed: float
    removed: int
    dofs: int


def sweep_offsets(h: float, n: int = 20) -> List[Tuple[float, float]]:
    """``n`` grid translations spread over one cell (diagonal with golden-ratio step)."""
    g = (math.sqrt(5) - 1) / 2
    return [(h * k / n, h * ((k * g) % 1.0)) for k in range(n)]


def run_condition_sweep(config: StudyConfig, h: float, c: float, n_offsets: int = 20
                        ) -> List[ConditionRow]:
    """Condition estimates with and without removal over grid translations."""
    rows = []
    for off in sweep_offsets(h, n_offsets):
        case = prepare_case(config, h, offset=off)
        k0 = condition_estimate(case.system, seed=config.seed)
        report = case.select(c)
        space = apply_removal(case.space, report, forbid_dirichlet=config.method == "sym")
        sub = case.system.restrict(space.active)
        k1 = condition_estimate(sub, seed=config.seed)
        rows.append(ConditionRow(off, k0, k1, report.removed_count, sub.matrix.shape[0]))
    return rows


@dataclass
class NeumannDemo:
    records: List[StudyRecord]
    samples: Dict[float, np.ndarray]      # c -> columns x, y, ux, uy, vm
    constraint_residual: Dict[float, np.ndarray]
    net_force: np.ndarray
    near_removed: Dict[float, np.ndarray] = field(default_factory=dict)  # c -> mask over samples


def run_neumann_demo(config: StudyConfig, c_values: Sequence[float] = (0.0, 0.01),
                     h: Optional[float] = None, resolution: int = 81) -> NeumannDemo:
    """Pure-traction plate with holes, with and without removal.

    ``energy_error`` in the records is the energy norm of the difference to
    the ``c = 0`` solution, relative to the ``c = 0`` solution.
    """
    cfg = replace(config, problem="elasticity", geometry="plate-with-holes")
    h = cfg.h_ladder[0] if h is None else h
    problem = neumann_plate()
    case = prepare_case(cfg, h, problem=problem)
    lo, hi = case.domain.bbox
    xs = np.linspace(lo[0], hi[0], 2 * resolution - 1)
    ys = np.linspace(lo[1], hi[1], resolution)
    X, Y = np.meshgrid(xs, ys)
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    pts = pts[case.domain.level_set(pts) < 0]
    results = {}
    for c in sorted({0.0, *map(float, c_values)}):
        t0 = time.perf_counter()
        results[c] = run_case(case, c, t0=t0)
    base = results[0.0].coeffs
    ref = energy_norm(case.space, case.quadrature, base, problem, use_exact=False)
    records, samples, constraint, near = [], {}, {}, {}
    grid_pts = case.mesh.to_grid(pts)
    pad = case.mesh.h  # one element layer around each removed support
    for c, res in results.items():
        diff = energy_norm(case.space, case.quadrature, res.coeffs - base, problem, use_exact=False)
        rec = res.record
        rec.energy_error = diff.total / ref.total
        rec.l2_error = diff.l2 / ref.l2
        records.append(rec)
        u = res.space.evaluate(res.coeffs, pts, ncomp=2)
        grads = _displacement_gradient(res.space, res.coeffs, pts)
        vm = von_mises(grads, problem.E, problem.nu)
        samples[c] = np.column_stack([pts, u, vm])
        constraint[c] = _rigid_residuals(case, res.coeffs)
        mask = np.zeros(len(pts), dtype=bool)
        for pos in np.nonzero(res.report.removed)[0]:
            lo_, hi_ = case.space.support_box(pos)
            mask |= np.all((grid_pts >= lo_ - pad) & (grid_pts <= hi_ + pad), axis=1)
        near[c] = mask
    return NeumannDemo(records, samples, constraint, _net_traction(case), near)


def _displacement_gradient(space: SpacePartition, coeffs: np.ndarray, pts: np.ndarray) -> np.ndarray:
    y = space.mesh.to_grid(pts)
    cells = np.floor(y / space.mesh.h).astype(int)
    c = coeffs.reshape(2, space.size)
    out = np.zeros((len(pts), 2, 2))
    groups: Dict[tuple, List[int]] = {}
    for i, e in enumerate(map(tuple, cells)):
        groups.setdefault(e, []).append(i)
    for e, idx in groups.items():
        ev = space.element_basis(e, pts[idx], nderiv=1)
        ok = ev.dofs >= 0
        out[idx] = np.einsum("qai,ca->qci", ev.grads[:, ok], c[:, ev.dofs[ok]])
    return out


def _rigid_residuals(case: Case, coeffs: np.ndarray) -> np.ndarray:
    from .linalg_solve import rigid_mode_values

    acc = np.zeros(3)
    for e in case.space.active_elements:
        rule = case.quadrature.rules[e]
        u = case.space.evaluate(coeffs, rule.points, ncomp=2)
        acc += np.einsum("q,mqc,qc->m", rule.weights, rigid_mode_values(rule.points), u)
    return acc


def _net_traction(case: Case) -> np.ndarray:
    total = np.zeros(2)
    for rule in case.quadrature.rules.values():
        if rule.surface_weights.size:
            t = case.problem.g_N(rule.surface_points, rule.normals)
            total += rule.surface_weights @ t
    return total


def records_to_csv(records: Sequence[StudyRecord], timing: bool = False) -> str:
    """CSV text in the fixed ``StudyRecord`` column order, sorted by ``(h, c)``.

    Wall time is machine dependent; it is written only with ``timing=True``
    (otherwise the column is left empty) so that repeated runs are
    byte-identical.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = StudyRecord.columns()
    w.writerow(cols)
    for r in sorted(records, key=lambda r: (r.h, r.c)):
        d = asdict(r)
        row = []
        for k in cols:
            v = d[k]
            if k == "wall_time" and not timing:
                row.append("")
            else:
                row.append(repr(float(v)) if isinstance(v, float) else str(v))
        w.writerow(row)
    return buf.getvalue()
