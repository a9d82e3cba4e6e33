#!/usr/bin/env python3
"""
LSSVM 회귀 엔진 테스트
폐형해 대 경계 시스템 직접 해, 보간 극한, 정규화 극한, 모델 파일
"""

import json
import math
import sys

import numpy as np
import pytest

from src.errors import ConditioningError, DomainError, InputError, ModelFormatError
from src.lssvm import (
    Dataset,
    KernelSpec,
    KernelType,
    LssvmRegressor,
    bordered_system,
    from_document,
    grid_search,
    gram_matrix,
    kernel_eval,
    kkt_residual,
    load_model,
    median_sigma,
    predict,
    predict_many,
    save_model,
    to_document,
    train,
)


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


def _random_dataset(rng, l, n):
    x = rng.normal(size=(l, n))
    y = np.sin(x).sum(axis=1) + 0.1 * rng.normal(size=l)
    return Dataset.from_arrays(x, y)


class TestKernels:
    """커널 값"""

    def test_rbf_self_similarity(self):
        assert kernel_eval(KernelSpec.rbf(0.7), [1.0, -2.0], [1.0, -2.0]) == 1.0

    def test_linear_dot_product(self):
        assert kernel_eval(KernelSpec.linear(), [1.0, 2.0], [3.0, 4.0]) == 11.0

    def test_rbf_distance_two(self):
        assert kernel_eval(KernelSpec.rbf(1.0), [0.0, 0.0], [2.0, 0.0]) == pytest.approx(math.exp(-2.0), rel=1e-15)

    def test_polynomial(self):
        assert kernel_eval(KernelSpec.polynomial(3, 1.0), [1.0, 1.0], [1.0, 2.0]) == pytest.approx(64.0)

    def test_symmetry(self, rng):
        a, b = rng.normal(size=3), rng.normal(size=3)
        for spec in (KernelSpec.rbf(1.3), KernelSpec.linear(), KernelSpec.polynomial(2, 0.5)):
            assert kernel_eval(spec, a, b) == kernel_eval(spec, b, a)

    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            kernel_eval(KernelSpec.linear(), [1.0, 2.0], [1.0])

    @pytest.mark.parametrize("factory", [
        lambda: KernelSpec.rbf(0.0),
        lambda: KernelSpec.polynomial(0, 1.0),
        lambda: KernelSpec.polynomial(2, -1.0),
    ])
    def test_invalid_hyperparameters(self, factory):
        with pytest.raises(DomainError):
            factory()

    def test_unknown_kernel_name(self):
        with pytest.raises(InputError):
            KernelSpec.from_name("sigmoid")


class TestGramMatrix:
    """Gram 행렬"""

    def test_single_point(self):
        data = Dataset.from_arrays([[2.0]], [1.0])
        np.testing.assert_array_equal(gram_matrix(data, KernelSpec.linear()), [[4.0]])

    def test_exact_symmetry_and_unit_diagonal(self, rng):
        data = _random_dataset(rng, 12, 3)
        k = gram_matrix(data, KernelSpec.rbf(0.9))
        assert np.array_equal(k, k.T)
        np.testing.assert_array_equal(np.diag(k), np.ones(12))

    @pytest.mark.parametrize("spec", [KernelSpec.rbf(0.5), KernelSpec.polynomial(3, 1.0)])
    def test_positive_semidefinite(self, rng, spec):
        for l in (3, 7, 10):
            data = _random_dataset(rng, l, 2)
            assert np.linalg.eigvalsh(gram_matrix(data, spec)).min() >= -1e-10

    def test_median_sigma(self):
        x = np.array([[0.0], [1.0], [3.0]])
        assert median_sigma(x) == 2.0
        assert median_sigma(np.zeros((4, 2))) == 1.0


class TestTrain:
    """학습 (경계 시스템 / 폐형해)"""

    def test_hand_solved_linear_case(self):
        model = train(Dataset.from_arrays([[0.0], [1.0]], [0.0, 1.0]), KernelSpec.linear(), 2.0)
        assert model.b == pytest.approx(0.25, abs=1e-12)
        np.testing.assert_allclose(model.alpha, [-0.5, 0.5], atol=1e-12)
        assert predict(model, [0.0]) == pytest.approx(0.25, abs=1e-12)
        assert predict(model, [1.0]) == pytest.approx(0.75, abs=1e-12)

    def test_hand_solved_matches_dense_three_by_three(self):
        a = np.array([[0.0, 1.0, 1.0], [1.0, 0.5, 0.0], [1.0, 0.0, 1.5]])
        sol = np.linalg.solve(a, [0.0, 0.0, 1.0])
        np.testing.assert_allclose(sol, [0.25, -0.5, 0.5], atol=1e-12)

    def test_single_sample(self):
        model = train(Dataset.from_arrays([[3.0, 4.0]], [7.5]), KernelSpec.rbf(), 10.0)
        np.testing.assert_array_equal(model.alpha, [0.0])
        assert model.b == 7.5
        assert predict(model, [-100.0, 2.0]) == 7.5

    def test_zero_alpha_predicts_bias(self):
        model = train(Dataset.from_arrays([[1.0]], [2.0]), KernelSpec.linear(), 1.0)
        assert predict_many(model, [[0.0], [5.0], [-3.0]]).tolist() == [2.0, 2.0, 2.0]

    def test_closed_form_matches_bordered_solve(self, rng):
        for _ in range(50):
            l = int(rng.integers(2, 51))
            n = int(rng.integers(1, 6))
            data = _random_dataset(rng, l, n)
            spec = [KernelSpec.rbf(float(rng.uniform(0.5, 3.0))), KernelSpec.linear(),
                    KernelSpec.polynomial(2, 1.0)][int(rng.integers(0, 3))]
            c = float(10 ** rng.uniform(-1, 2))
            model = train(data, spec, c)

            gram = gram_matrix(data, model.kernel)
            direct = np.linalg.solve(bordered_system(gram, c), np.concatenate(([0.0], data.y)))
            assert model.b == pytest.approx(direct[0], abs=1e-8)
            np.testing.assert_allclose(model.alpha, direct[1:], atol=1e-8)
            assert abs(model.alpha.sum()) <= 1e-10 * (1 + np.max(np.abs(model.alpha)) * l)
            assert kkt_residual(gram, c, model.alpha, model.b, data.y) <= 1e-8

    def test_interpolation_limit(self, rng):
        gx, gy = np.meshgrid(np.linspace(-2, 2, 5), np.linspace(-1.5, 1.5, 4))
        x = np.column_stack([gx.ravel(), gy.ravel()])
        y = np.cos(x[:, 0]) + x[:, 1] ** 2
        data = Dataset.from_arrays(x, y)
        errors = []
        for c in (1.0, 1e2, 1e4, 1e6):
            model = train(data, KernelSpec.rbf(1.0), c)
            errors.append(float(np.max(np.abs(predict_many(model, x) - y))))
        assert all(b <= a for a, b in zip(errors, errors[1:]))
        assert errors[-1] < 1e-3

    def test_regularization_limit(self, rng):
        data = _random_dataset(rng, 15, 2)
        model = train(data, KernelSpec.rbf(1.0), 1e-12)
        assert np.max(np.abs(model.alpha)) < 1e-9
        preds = predict_many(model, rng.normal(size=(30, 2)))
        assert preds.max() - preds.min() < 1e-6
        assert model.b == pytest.approx(data.y.mean(), abs=1e-6)

    def test_permutation_invariance(self, rng):
        data = _random_dataset(rng, 25, 3)
        perm = rng.permutation(25)
        permuted = Dataset.from_arrays(data.x[perm], data.y[perm])
        spec = KernelSpec.rbf(1.2)
        queries = rng.normal(size=(10, 3))
        a = predict_many(train(data, spec, 100.0), queries)
        b = predict_many(train(permuted, spec, 100.0), queries)
        np.testing.assert_allclose(a, b, atol=1e-10)

    def test_duplicate_points_with_conflicting_targets(self):
        model = train(Dataset.from_arrays([[1.0], [1.0], [2.0]], [0.0, 1.0, 3.0]), KernelSpec.rbf(1.0), 100.0)
        assert np.all(np.isfinite(model.alpha))

    def test_non_positive_c(self):
        with pytest.raises(DomainError):
            train(Dataset.from_arrays([[0.0], [1.0]], [0.0, 1.0]), KernelSpec.linear(), 0.0)

    def test_indefinite_system_reports_solve(self):
        # Gram 원소가 무한대로 넘쳐 분해 실패
        data = Dataset.from_arrays([[0.0], [np.finfo(float).max]], [0.0, 1.0])
        with pytest.raises(ConditioningError) as excinfo:
            train(data, KernelSpec.polynomial(4, 1.0), 1.0)
        assert "cholesky" in str(excinfo.value)

    def test_median_heuristic_resolved_at_training(self, rng):
        data = _random_dataset(rng, 10, 2)
        model = train(data, KernelSpec.rbf(), 10.0)
        assert model.kernel.sigma == pytest.approx(median_sigma(data.x))


class TestDataset:
    """데이터셋 검증과 정규화"""

    def test_rejects_non_finite(self):
        with pytest.raises(InputError):
            Dataset.from_arrays([[0.0], [np.nan]], [0.0, 1.0])

    def test_rejects_length_mismatch(self):
        with pytest.raises(InputError):
            Dataset.from_arrays([[0.0], [1.0]], [0.0])

    def test_normalization_stored_and_applied(self, rng):
        x = rng.normal(loc=[800.0, 400.0], scale=[50.0, 0.0], size=(30, 2))
        data = Dataset.from_arrays(x, x[:, 0] / 100.0, normalize=True)
        assert data.norm.std[1] == 1.0
        model = train(data, KernelSpec.rbf(), 1e4)
        assert model.norm is data.norm
        np.testing.assert_allclose(predict_many(model, x), data.y, rtol=1e-3)

    def test_prediction_dimension_mismatch(self):
        model = train(Dataset.from_arrays([[0.0, 1.0], [1.0, 0.0]], [0.0, 1.0]), KernelSpec.linear(), 1.0)
        with pytest.raises(InputError):
            predict(model, [1.0, 2.0, 3.0])


class TestPersistence:
    """모델 JSON 문서"""

    def test_round_trip_is_exact(self, rng, tmp_path):
        data = Dataset.from_arrays(rng.normal(size=(12, 3)), rng.normal(size=12), normalize=True,
                                   feature_names=["p1", "p2", "x"])
        model = train(data, KernelSpec.rbf(), 50.0)
        path = tmp_path / "model.json"
        save_model(model, str(path))
        loaded = load_model(str(path))
        queries = rng.normal(size=(5, 3))
        assert np.array_equal(predict_many(model, queries), predict_many(loaded, queries))
        assert loaded.feature_names == ("p1", "p2", "x")
        assert loaded.kernel.kind is KernelType.RBF

    def test_save_replaces_file_without_leftovers(self, rng, tmp_path):
        model = train(Dataset.from_arrays(rng.normal(size=(8, 2)), rng.normal(size=8)), KernelSpec.linear(), 10.0)
        path = tmp_path / "model.json"
        path.write_text("stale", encoding="utf-8")
        save_model(model, str(path))
        assert sorted(p.name for p in tmp_path.iterdir()) == ["model.json"]
        loaded = load_model(str(path))
        assert np.array_equal(loaded.alpha, model.alpha)
        assert loaded.b == model.b

    def test_document_fields(self):
        model = train(Dataset.from_arrays([[0.0], [1.0]], [0.0, 1.0]), KernelSpec.polynomial(3, 0.5), 2.0)
        doc = to_document(model)
        assert doc["format_version"] == 1
        assert doc["kernel"] == {"type": "poly", "params": {"degree": 3, "offset": 0.5}}
        assert set(doc) == {"format_version", "kernel", "C", "alpha", "b", "train_x", "feature_names", "norm"}

    def test_version_mismatch_names_both_versions(self):
        doc = to_document(train(Dataset.from_arrays([[0.0], [1.0]], [0.0, 1.0]), KernelSpec.linear(), 2.0))
        doc["format_version"] = 99
        with pytest.raises(ModelFormatError) as excinfo:
            from_document(doc)
        assert "99" in str(excinfo.value) and "format_version=1" in str(excinfo.value)

    def test_corrupted_file(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ModelFormatError):
            load_model(str(path))

    def test_missing_fields(self):
        with pytest.raises(ModelFormatError):
            from_document({"format_version": 1, "kernel": {"type": "rbf"}})

    def test_json_serializable(self):
        model = train(Dataset.from_arrays([[0.0], [1.0]], [0.0, 1.0]), KernelSpec.linear(), 2.0)
        json.dumps(to_document(model))


class TestGridSearch:
    """k-fold 하이퍼파라미터 탐색"""

    def test_estimator_wrapper(self, rng):
        x = rng.uniform(-1, 1, size=(30, 1))
        y = x[:, 0] ** 2
        est = LssvmRegressor(kernel="rbf", C=1e4).fit(x, y)
        assert est.score(x, y) > 0.99

    def test_grid_search_is_deterministic(self, rng):
        x = rng.uniform(-1, 1, size=(40, 2))
        y = np.sin(2 * x[:, 0]) + x[:, 1]
        first = grid_search(x, y, KernelSpec.rbf(), c_grid=[1.0, 100.0, 1e4], sigma_scales=[0.5, 1.0], seed=3)
        second = grid_search(x, y, KernelSpec.rbf(), c_grid=[1.0, 100.0, 1e4], sigma_scales=[0.5, 1.0], seed=3)
        assert first == second
        assert first[0] in (1.0, 100.0, 1e4)
        assert first[1].sigma is not None

    def test_grid_search_keeps_fixed_sigma(self, rng):
        x = rng.uniform(-1, 1, size=(20, 1))
        c, spec = grid_search(x, x[:, 0], KernelSpec.rbf(0.8), c_grid=[10.0, 1000.0], folds=4)
        assert spec.sigma == 0.8

    def test_grid_search_needs_two_samples(self):
        with pytest.raises(InputError):
            grid_search([[0.0]], [1.0], KernelSpec.linear(), c_grid=[1.0])


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
