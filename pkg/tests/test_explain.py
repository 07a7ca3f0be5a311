import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from occurlens.errors import DegenerateInputError, ParameterError
from occurlens.explain import ImportanceReport, ShapConfig, mean_shap, permutation_importance, shap_matrix, shap_values
from occurlens.metrics import roc_auc


def linear(a, c=0.0):
    a = np.asarray(a, dtype=float)
    return lambda X: X @ a + c


def bumpy(X):
    # nonlinear, with interactions
    return np.tanh(X[:, 0] * X[:, 1]) + np.sin(3 * X[:, 2]) * X[:, 0] + 0.5 * X[:, 3] ** 2


class TestShap:
    def test_single_feature(self):
        f = lambda X: np.exp(X[:, 0])  # noqa: E731
        phi, base = shap_values(f, [1.3], ShapConfig([0.2]))
        assert phi[0] == pytest.approx(np.exp(1.3) - np.exp(0.2), abs=1e-12)
        assert base == pytest.approx(np.exp(0.2))

    @given(st.lists(st.floats(-5, 5), min_size=2, max_size=2), st.lists(st.floats(-5, 5), min_size=2, max_size=2))
    def test_linear_closed_form(self, x, mu):
        phi, _ = shap_values(linear([3.0, 2.0]), x, ShapConfig(mu))
        assert np.max(np.abs(phi - np.array([3 * (x[0] - mu[0]), 2 * (x[1] - mu[1])]))) <= 1e-9

    def test_dummy_feature_exact_zero(self, rng):
        f = lambda X: np.sin(X[:, 0]) * X[:, 2]  # noqa: E731
        res = shap_matrix(f, rng.normal(size=(5, 3)), ShapConfig(np.zeros(3)))
        assert np.all(res.phi[:, 1] == 0.0)

    @settings(max_examples=25)
    @given(st.integers(0, 10_000))
    def test_local_accuracy_exact(self, seed):
        r = np.random.default_rng(seed)
        X = r.normal(size=(4, 4))
        res = shap_matrix(bumpy, X, ShapConfig(r.normal(size=4)))
        assert np.max(np.abs(res.phi.sum(axis=1) + res.base - bumpy(X))) <= 1e-9

    def test_local_accuracy_sampled(self, rng):
        X = rng.normal(size=(6, 4))
        res = shap_matrix(bumpy, X, ShapConfig(np.zeros(4), "sampled", 2048, seed=1))
        err = np.abs(res.phi.sum(axis=1) + res.base - bumpy(X))
        # each permutation path telescopes, so the sum is exact up to rounding
        assert np.all(err <= 3 * np.sqrt((res.stderr ** 2).sum(axis=1)) + 1e-9)

    def test_symmetry(self, rng):
        # duplicated column: same values, same background, symmetric model
        f = lambda X: (X[:, 0] + X[:, 1]) ** 2 + X[:, 0] * X[:, 1] * X[:, 2]  # noqa: E731
        X = rng.normal(size=(5, 3))
        X[:, 1] = X[:, 0]
        mu = rng.normal(size=3)
        mu[1] = mu[0]
        res = shap_matrix(f, X, ShapConfig(mu))
        assert np.max(np.abs(res.phi[:, 0] - res.phi[:, 1])) <= 1e-9

    @pytest.mark.parametrize("M", [4, 10])
    def test_sampled_converges(self, rng, M):
        # inputs on the normalized [0, 1] scale the pipeline feeds to models
        w = rng.normal(size=M)
        f = lambda X: bumpy(X[:, :4]) + np.tanh(X @ w)  # noqa: E731
        X = rng.random((3, M))
        mu = rng.random(M)
        exact = shap_matrix(f, X, ShapConfig(mu)).phi
        approx = shap_matrix(f, X, ShapConfig(mu, "sampled", 8192, seed=2)).phi
        assert np.max(np.abs(exact - approx)) <= 0.01

    def test_exact_refuses_many_features(self):
        with pytest.raises(ParameterError, match="sampled"):
            shap_matrix(linear(np.ones(16)), np.zeros((1, 16)), ShapConfig(np.zeros(16)))

    def test_config_checks(self):
        with pytest.raises(ParameterError):
            ShapConfig(np.zeros(2), "sampled", 10)
        with pytest.raises(ParameterError):
            shap_matrix(linear([1.0, 1.0]), np.zeros((1, 2)), ShapConfig(np.zeros(3)))

    def test_mean_shap_one_row(self):
        s = mean_shap(linear([3.0, -2.0]), [[1.0, 1.0]], ShapConfig([0.0, 0.0]))
        assert s.mean_signed == pytest.approx([3.0, -2.0])
        assert s.mean_abs == pytest.approx([3.0, 2.0])

    def test_mean_shap_empty(self):
        with pytest.raises(DegenerateInputError):
            mean_shap(linear([1.0]), np.zeros((0, 1)), ShapConfig([0.0]))


class TestPermutation:
    def _data(self, rng, n=4000):
        X = rng.random((n, 3))
        y = (rng.random(n) < 0.2 + 0.6 * X[:, 0]).astype(int)
        return X, y

    def test_absent_feature(self, rng):
        X, y = self._data(rng)
        res = permutation_importance(lambda Z: Z[:, 0], X, y, repeats=10, seed=1)
        assert np.all(np.abs(res.mean[1:]) <= 0.005)

    def test_single_informative_feature(self, rng):
        X, y = self._data(rng)
        auc = roc_auc(X[:, 0], y)
        res = permutation_importance(lambda Z: Z[:, 0], X, y, repeats=50, seed=2)
        assert res.mean[0] == pytest.approx(auc - 0.5, abs=0.02)

    def test_seeds(self, rng):
        X, y = self._data(rng, 500)
        f = lambda Z: Z[:, 0] + 0.3 * Z[:, 1]  # noqa: E731
        a = permutation_importance(f, X, y, repeats=1, seed=3)
        b = permutation_importance(f, X, y, repeats=1, seed=3)
        c = permutation_importance(f, X, y, repeats=1, seed=4)
        assert np.array_equal(a.mean, b.mean)
        assert not np.array_equal(a.mean, c.mean)

    def test_constant_model(self, rng):
        X, y = self._data(rng, 300)
        const = lambda Z: np.full(Z.shape[0], 0.3)  # noqa: E731
        res = permutation_importance(const, X, y, loss="log_loss", repeats=3)
        assert np.all(res.mean == 0.0) and not res.degenerate
        deg = permutation_importance(const, X, y, loss="one_minus_auc")
        assert deg.degenerate and np.all(np.isnan(deg.mean))

    def test_uniform_noise_variant(self, rng):
        X, y = self._data(rng, 2000)
        res = permutation_importance(lambda Z: Z[:, 0], X, y, repeats=5, seed=1, noise="uniform")
        assert res.mean[0] > 0.1 and np.all(np.abs(res.mean[1:]) <= 0.005)

    def test_errors(self, rng):
        X, y = self._data(rng, 50)
        with pytest.raises(ParameterError):
            permutation_importance(lambda Z: Z[:, 0], X, y, repeats=0)
        with pytest.raises(DegenerateInputError):
            permutation_importance(lambda Z: Z[:, 0], X, np.zeros(50, int))

    def test_shapes(self, rng):
        X, y = self._data(rng, 200)
        res = permutation_importance(lambda Z: Z[:, 0], X, y, repeats=4)
        assert res.mean.shape == res.std.shape == (3,) and res.scores.shape == (4, 3)


def test_report_rankings():
    rep = ImportanceReport(("a", "b", "c"), np.array([0.1, 0.3, 0.2]), perm_mean=np.array([0.0, 0.1, 0.2]))
    assert rep.ranking() == ["b", "c", "a"]
    assert rep.perm_ranking() == ["c", "b", "a"]
    assert sorted(rep.ranking()) == sorted(rep.features)
