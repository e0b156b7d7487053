"""scikit-learn style front end.

``CutIGASolver`` wraps one discretise/remove/solve pipeline behind
``fit``/``predict``; ``DiagonalRemovalSelector`` exposes the greedy basis
selection as a feature selector over matrix columns.
"""
from __future__ import annotations

import math
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.feature_selection import SelectorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .discrete_space import select_removal
from .forms import ModelProblem
from .studies import StudyConfig, prepare_case, run_case

__all__ = ["CutIGASolver", "DiagonalRemovalSelector"]


class CutIGASolver(RegressorMixin, BaseEstimator):
    """Cut spline discretisation with basis removal.

    Parameters
    ----------
    problem : {"poisson", "elasticity"}
        Manufactured problem used when :meth:`fit` receives no problem.
    geometry : str
        Builtin geometry name.
    p : int
        Spline order.
    h : float
        Background grid size.
    theta : float
        Grid rotation angle.
    c : float
        Removal constant, ``tol = c h^p scale``.
    method : {"nonsym", "sym"}
        Nitsche variant.
    measure : {"diagonal", "star"}
        Removal measure.
    beta, tau, gamma : float
        Nitsche penalty (``None`` means ``10 p^2``), least-squares and ghost
        weights.
    quad_order, subdiv_depth : int
        Quadrature order (``None`` means ``p + 1``) and curved-cut
        subdivision depth.
    offset : tuple of float
        Grid origin.

    Attributes
    ----------
    space_ : SpacePartition
    system_ : AssembledSystem
    coef_ : ndarray
        Coefficients over the full index set (zero on removed functions).
    report_ : RemovalReport
    record_ : StudyRecord
    """

    def __init__(self, problem="poisson", geometry="rotated-unit-square", p=2, h=0.1,
                 theta=math.pi / 7, c=0.0, method="nonsym", measure="diagonal", beta=None,
                 tau=0.0, gamma=0.1, quad_order=None, subdiv_depth=4, offset=(0.0, 0.0)):
        self.problem = problem
        self.geometry = geometry
        self.p = p
        self.h = h
        self.theta = theta
        self.c = c
        self.method = method
        self.measure = measure
        self.beta = beta
        self.tau = tau
        self.gamma = gamma
        self.quad_order = quad_order
        self.subdiv_depth = subdiv_depth
        self.offset = offset

    def _config(self, kind: str) -> StudyConfig:
        return StudyConfig(problem=kind, geometry=self.geometry, theta=self.theta, p=self.p,
                           h_ladder=(self.h,), c=self.c, beta=self.beta, tau=self.tau,
                           gamma=self.gamma, method=self.method, measure_kind=self.measure,
                           quad_order=self.quad_order, subdiv_depth=self.subdiv_depth,
                           offset=tuple(self.offset))

    def fit(self, X: Optional[Union[ModelProblem, str]] = None, y=None):
        """Discretise, remove, solve.

        ``X`` may be a :class:`ModelProblem`, a problem name or ``None`` (use
        ``self.problem``); ``y`` is ignored.
        """
        prob = X if X is not None else self.problem
        if isinstance(prob, ModelProblem):
            cfg = self._config(prob.kind)
            case = prepare_case(cfg, self.h, problem=prob)
        else:
            cfg = self._config(str(prob))
            case = prepare_case(cfg, self.h)
        res = run_case(case, self.c)
        self.case_ = case
        self.space_ = res.space
        self.system_ = res.system
        self.coef_ = res.coeffs
        self.report_ = res.report
        self.record_ = res.record
        self.n_components_ = case.problem.ncomp
        return self

    def predict(self, X) -> np.ndarray:
        """Discrete solution at physical points ``X`` of shape ``(n, 2)``."""
        check_is_fitted(self, "coef_")
        X = check_array(X, ensure_min_features=2)
        if X.shape[1] != 2:
            raise ValueError(f"expected points of shape (n, 2), got {X.shape}")
        return self.space_.evaluate(self.coef_, X, ncomp=self.n_components_)


class DiagonalRemovalSelector(SelectorMixin, BaseEstimator):
    """Keep the columns that survive greedy removal at tolerance ``tol``.

    ``fit`` accepts a square (sparse) matrix, whose diagonal is the measure,
    or a 1-D array of measures.
    """

    def __init__(self, tol=0.0):
        self.tol = tol

    def fit(self, X, y=None):
        if sp.issparse(X):
            m = np.asarray(X.diagonal(), dtype=float)
        else:
            arr = np.asarray(X, dtype=float)
            if arr.ndim == 1:
                m = arr
            else:
                arr = check_array(arr)
                if arr.shape[0] != arr.shape[1]:
                    raise ValueError("matrix input must be square")
                m = np.diag(arr).copy()
        self.measures_ = m
        self.report_ = select_removal(m, self.tol)
        self.n_features_in_ = len(m)
        return self

    def _get_support_mask(self):
        check_is_fitted(self, "report_")
        return ~self.report_.removed
