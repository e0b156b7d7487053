import numpy as np
import pytest
import scipy.sparse as sp
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from cutiga.estimators import CutIGASolver, DiagonalRemovalSelector
from cutiga.problems import manufactured_poisson, polynomial_poisson


class TestSolver:
    def test_params_round_trip(self):
        est = CutIGASolver(p=3, c=0.01, h=0.2)
        params = est.get_params()
        assert params["p"] == 3 and params["c"] == 0.01
        twin = clone(est)
        assert twin.get_params() == params
        twin.set_params(c=0.1)
        assert twin.c == 0.1 and est.c == 0.01

    def test_fit_predict_matches_exact(self):
        est = CutIGASolver(p=2, h=0.1, c=0.01).fit()
        prob = manufactured_poisson()
        pts = np.array([[0.3, 0.4], [0.5, 0.5], [0.7, 0.2]])
        np.testing.assert_allclose(est.predict(pts), prob.exact(pts), atol=5e-3)
        assert est.n_components_ == 1
        assert est.record_.removed == est.report_.removed_count

    def test_fit_with_problem_object(self):
        est = CutIGASolver(p=2, h=0.25, theta=0.0).fit(polynomial_poisson(2))
        pts = np.random.default_rng(0).uniform(0.05, 0.95, (10, 2))
        np.testing.assert_allclose(est.predict(pts), polynomial_poisson(2).exact(pts), atol=1e-10)

    def test_elasticity_output_shape(self):
        est = CutIGASolver(problem="elasticity", h=0.2).fit()
        assert est.predict([[0.5, 0.5]]).shape == (1, 2)

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            CutIGASolver().predict([[0.5, 0.5]])

    def test_bad_points(self):
        est = CutIGASolver(h=0.2).fit()
        with pytest.raises(ValueError):
            est.predict([[0.1, 0.2, 0.3]])


class TestSelector:
    def test_vector_input(self):
        sel = DiagonalRemovalSelector(tol=np.sqrt(1e-5)).fit(np.array([1e-8, 1e-6, 1.0]))
        np.testing.assert_array_equal(sel.get_support(), [False, False, True])
        X = np.arange(6.0).reshape(2, 3)
        np.testing.assert_array_equal(sel.transform(X), X[:, 2:])

    def test_sparse_matrix_input(self):
        A = sp.diags([1e-9, 2.0, 3.0]).tocsr()
        sel = DiagonalRemovalSelector(tol=1e-4).fit(A)
        assert sel.get_support().tolist() == [False, True, True]
        assert sel.n_features_in_ == 3

    def test_non_square(self):
        with pytest.raises(ValueError):
            DiagonalRemovalSelector().fit(np.ones((2, 3)))

    def test_agrees_with_solver_selection(self):
        est = CutIGASolver(problem="elasticity", h=0.2, c=0.01).fit()
        tol = est.case_.config.tol(0.2, 0.01, est.case_.problem)
        sel = DiagonalRemovalSelector(tol=tol).fit(est.case_.system.basis_diagonal())
        np.testing.assert_array_equal(sel.get_support(), ~est.report_.removed)
