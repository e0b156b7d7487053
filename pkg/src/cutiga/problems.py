"""Benchmark problems with closed-form data.

Loads are derived by hand from the exact solutions; the test-suite checks the
derivatives against finite differences.
"""
from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from .forms import ModelProblem, lame_parameters

__all__ = [
    "poisson_from_exact",
    "elasticity_from_exact",
    "manufactured_poisson",
    "manufactured_elasticity",
    "polynomial_poisson",
    "polynomial_elasticity",
    "neumann_plate",
    "von_mises",
    "PROBLEMS",
]

STEEL_E = 210e9
STEEL_NU = 0.3


def poisson_from_exact(u: Callable, grad: Callable, hess: Callable, name: str = "") -> ModelProblem:
    """``-Lap u = f`` with ``g_D = u`` and ``g_N = n . grad u``."""

    def f(x):
        H = hess(x)
        return -(H[:, 0, 0] + H[:, 1, 1])

    def g_N(x, n):
        return np.einsum("qi,qi->q", grad(x), n)

    return ModelProblem("poisson", f, g_N=g_N, g_D=u, exact=u, exact_grad=grad,
                        exact_hess=hess, name=name)


def elasticity_from_exact(u: Callable, grad: Callable, hess: Callable, E: float, nu: float,
                          name: str = "") -> ModelProblem:
    """Plane-strain data ``f = -div sigma(u)``, ``g_N = sigma(u) n``, ``g_D = u``.

    ``grad(x)[q, c, i] = d_i u_c`` and ``hess(x)[q, c, i, j] = d_i d_j u_c``.
    """
    lam, mu = lame_parameters(E, nu)

    def stress(x):
        G = grad(x)
        eps = 0.5 * (G + G.transpose(0, 2, 1))
        tr = eps[:, 0, 0] + eps[:, 1, 1]
        return 2 * mu * eps + lam * tr[:, None, None] * np.eye(2)

    def f(x):
        H = hess(x)
        lap = H[:, :, 0, 0] + H[:, :, 1, 1]
        grad_div = H[:, 0, :, 0] + H[:, 1, :, 1]
        return -(mu * lap + (lam + mu) * grad_div)

    def g_N(x, n):
        return np.einsum("qij,qj->qi", stress(x), n)

    prob = ModelProblem("elasticity", f, g_N=g_N, g_D=u, exact=u, exact_grad=grad,
                        exact_hess=hess, E=E, nu=nu, name=name)
    prob.stress = stress
    return prob


def manufactured_poisson() -> ModelProblem:
    """``u = sin(pi x) sin(pi y)`` on the unit square."""
    pi = np.pi

    def u(x):
        return np.sin(pi * x[:, 0]) * np.sin(pi * x[:, 1])

    def grad(x):
        sx, sy = np.sin(pi * x[:, 0]), np.sin(pi * x[:, 1])
        cx, cy = np.cos(pi * x[:, 0]), np.cos(pi * x[:, 1])
        return pi * np.stack([cx * sy, sx * cy], axis=1)

    def hess(x):
        sx, sy = np.sin(pi * x[:, 0]), np.sin(pi * x[:, 1])
        cx, cy = np.cos(pi * x[:, 0]), np.cos(pi * x[:, 1])
        H = np.empty((len(x), 2, 2))
        H[:, 0, 0] = H[:, 1, 1] = -pi * pi * sx * sy
        H[:, 0, 1] = H[:, 1, 0] = pi * pi * cx * cy
        return H

    return poisson_from_exact(u, grad, hess, name="manufactured-poisson")


def manufactured_elasticity(E: float = STEEL_E, nu: float = STEEL_NU) -> ModelProblem:
    """``u = [-cos(pi x) sin(pi y), sin(pi x / 7) sin(pi y / 3)] / 10``."""
    pi = np.pi
    a, b = pi / 7, pi / 3

    def u(x):
        X, Y = x[:, 0], x[:, 1]
        return 0.1 * np.stack([-np.cos(pi * X) * np.sin(pi * Y),
                               np.sin(a * X) * np.sin(b * Y)], axis=1)

    def grad(x):
        X, Y = x[:, 0], x[:, 1]
        G = np.empty((len(x), 2, 2))
        G[:, 0, 0] = pi * np.sin(pi * X) * np.sin(pi * Y)
        G[:, 0, 1] = -pi * np.cos(pi * X) * np.cos(pi * Y)
        G[:, 1, 0] = a * np.cos(a * X) * np.sin(b * Y)
        G[:, 1, 1] = b * np.sin(a * X) * np.cos(b * Y)
        return 0.1 * G

    def hess(x):
        X, Y = x[:, 0], x[:, 1]
        H = np.empty((len(x), 2, 2, 2))
        H[:, 0, 0, 0] = H[:, 0, 1, 1] = pi * pi * np.cos(pi * X) * np.sin(pi * Y)
        H[:, 0, 0, 1] = H[:, 0, 1, 0] = pi * pi * np.sin(pi * X) * np.cos(pi * Y)
        s = np.sin(a * X) * np.sin(b * Y)
        H[:, 1, 0, 0] = -a * a * s
        H[:, 1, 1, 1] = -b * b * s
        H[:, 1, 0, 1] = H[:, 1, 1, 0] = a * b * np.cos(a * X) * np.cos(b * Y)
        return 0.1 * H

    return elasticity_from_exact(u, grad, hess, E, nu, name="manufactured-elasticity")


def _poly_terms(p: int):
    """Monomials ``x^i y^j`` with ``i + j <= p`` and fixed pseudo-random weights."""
    terms = [(i, j) for i in range(p + 1) for j in range(p + 1 - i)]
    w = np.cos(1.0 + np.arange(len(terms)) * 1.7)
    return terms, w


def _poly_eval(terms, w, x, dx: int, dy: int):
    out = np.zeros(len(x))
    for (i, j), c in zip(terms, w):
        if i < dx or j < dy:
            continue
        fx = np.prod(np.arange(i - dx + 1, i + 1)) if dx else 1.0
        fy = np.prod(np.arange(j - dy + 1, j + 1)) if dy else 1.0
        out += c * fx * fy * x[:, 0] ** (i - dx) * x[:, 1] ** (j - dy)
    return out


def _poly_fields(p: int, shift: int = 0):
    terms, w = _poly_terms(p)
    w = np.roll(w, shift)

    def u(x):
        return _poly_eval(terms, w, x, 0, 0)

    def grad(x):
        return np.stack([_poly_eval(terms, w, x, 1, 0), _poly_eval(terms, w, x, 0, 1)], axis=1)

    def hess(x):
        H = np.empty((len(x), 2, 2))
        H[:, 0, 0] = _poly_eval(terms, w, x, 2, 0)
        H[:, 1, 1] = _poly_eval(terms, w, x, 0, 2)
        H[:, 0, 1] = H[:, 1, 0] = _poly_eval(terms, w, x, 1, 1)
        return H

    return u, grad, hess


def polynomial_poisson(p: int) -> ModelProblem:
    """Full polynomial of total degree ``p`` (contained in the spline space)."""
    return poisson_from_exact(*_poly_fields(p), name=f"polynomial-poisson-p{p}")


def polynomial_elasticity(p: int, E: float = 1.0, nu: float = STEEL_NU) -> ModelProblem:
    """Displacement with two independent total-degree-``p`` components."""
    f0, f1 = _poly_fields(p, 0), _poly_fields(p, 3)

    def u(x):
        return np.stack([f0[0](x), f1[0](x)], axis=1)

    def grad(x):
        return np.stack([f0[1](x), f1[1](x)], axis=1)

    def hess(x):
        return np.stack([f0[2](x), f1[2](x)], axis=1)

    return elasticity_from_exact(u, grad, hess, E, nu, name=f"polynomial-elasticity-p{p}")


def neumann_plate(width: float = 2.0, E: float = 100.0, nu: float = 0.3,
                  load: float = 1.0) -> ModelProblem:
    """Plate pulled by a unit traction ``+-(load, 0)`` on ``x = +-width/2``; no body force."""

    def f(x):
        return np.zeros((len(x), 2))

    def g_N(x, n):
        t = np.zeros((len(x), 2))
        right = np.abs(x[:, 0] - width / 2) < 1e-9
        left = np.abs(x[:, 0] + width / 2) < 1e-9
        t[right, 0] = load
        t[left, 0] = -load
        return t

    return ModelProblem("elasticity", f, g_N=g_N, E=E, nu=nu, name="neumann-plate")


def von_mises(grad: np.ndarray, E: float, nu: float) -> np.ndarray:
    """Plane-strain von Mises stress from displacement gradients ``(n, 2, 2)``."""
    lam, mu = lame_parameters(E, nu)
    eps = 0.5 * (grad + grad.transpose(0, 2, 1))
    tr = eps[:, 0, 0] + eps[:, 1, 1]
    sxx = 2 * mu * eps[:, 0, 0] + lam * tr
    syy = 2 * mu * eps[:, 1, 1] + lam * tr
    sxy = 2 * mu * eps[:, 0, 1]
    szz = nu * (sxx + syy)
    return np.sqrt(0.5 * ((sxx - syy) ** 2 + (syy - szz) ** 2 + (szz - sxx) ** 2) + 3 * sxy**2)


PROBLEMS = {
    "poisson": manufactured_poisson,
    "elasticity": manufactured_elasticity,
}
