#!/usr/bin/env python3
"""
직렬 하이브리드 밸브 모델 테스트
면적 역산, 보간 왕복, 직렬 구조, 특성 집합 비교, 모델 파일
"""

import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from src import telemetry
from src.errors import DomainError, InconsistentSampleError, InputError, InvalidSampleError, ModelFormatError
from src.hybrid import (
    DirectFlowModel,
    FeatureSet,
    HybridSample,
    HybridValveModel,
    area_target,
    area_targets,
    dump_flow_model,
    fit_direct,
    fit_hybrid,
    load_flow_model,
    model_from_document,
    predict_flow,
    predict_many,
    samples_from_arrays,
)
from src.lssvm import KernelSpec
from src.mechanism import WATER, ValveGeometry, orifice_flow
from src.metrics import evaluate
from src.simulator import SimConfig, run

CONFIGS = Path(__file__).parent / "configs"

GEOM = ValveGeometry(area=0.0, beta=0.5, discharge_coeff=0.95, epsilon=1.0, fl=0.9)


def _load(name: str) -> SimConfig:
    return SimConfig.model_validate_json((CONFIGS / name).read_text(encoding="utf-8"))


def _arrays(cfg: SimConfig, fs: FeatureSet, lagged: int = 0):
    frame = telemetry.records_to_frame(run(cfg))
    x, _ = telemetry.feature_matrix(frame, fs.columns, lagged)
    return x, telemetry.target_vector(frame), telemetry.target_vector(frame, "q")


def _samples(x, q):
    return [HybridSample.from_features(row, qi) for row, qi in zip(x, q)]


@pytest.fixture(scope="module")
def noiseless():
    x, q, _ = _arrays(_load("sine_noiseless.json"), FeatureSet.P1P2X)
    return x, q


@pytest.fixture(scope="module")
def noiseless_model(noiseless):
    x, q = noiseless
    return fit_hybrid(_samples(x, q), FeatureSet.P1P2X, GEOM, WATER, KernelSpec.rbf(), 1e6)


class TestAreaTarget:
    """면적 목표값 (오리피스 식의 역)"""

    def test_zero_flow(self):
        sample = HybridSample.from_features((800.0, 400.0, 0.5), 0.0)
        assert area_target(sample, GEOM, WATER) == 0.0

    def test_unit_inverse(self):
        geom = ValveGeometry(area=0.0, beta=0.0, discharge_coeff=1.0, epsilon=1.0, fl=1.0)
        fluid = replace(WATER, rho1=1000.0)
        sample = HybridSample.from_features((100.5, 100.0, 0.5), 1.0)
        assert area_target(sample, geom, fluid) == pytest.approx(1.0, rel=1e-15)

    def test_round_trip_with_orifice_flow(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            geom = ValveGeometry(area=float(rng.uniform(1e-5, 1e-2)), beta=float(rng.uniform(0, 0.9)),
                                 discharge_coeff=float(rng.uniform(0.5, 1.0)),
                                 epsilon=float(rng.uniform(0.5, 1.0)), fl=0.9)
            p2 = float(rng.uniform(50, 500))
            p1 = p2 + float(rng.uniform(0.1, 500))
            q = orifice_flow(geom, p1, p2, WATER.rho1)
            sample = HybridSample.from_features((p1, p2, 0.5), q)
            assert area_target(sample, geom, WATER) == pytest.approx(geom.area, rel=1e-12)

    def test_equal_pressures_with_flow_is_inconsistent(self):
        sample = HybridSample.from_features((400.0, 400.0, 0.5), 1e-3)
        with pytest.raises(InconsistentSampleError):
            area_target(sample, GEOM, WATER)
        assert area_target(HybridSample.from_features((400.0, 400.0, 0.5), 0.0), GEOM, WATER) == 0.0

    def test_sample_invariants(self):
        with pytest.raises(DomainError):
            HybridSample.from_features((800.0, 400.0, 0.5), -1e-6)
        with pytest.raises(DomainError):
            HybridSample.from_features((300.0, 400.0, 0.5), 1e-3)

    def test_inconsistent_sample_reports_given_index(self):
        sample = HybridSample.from_features((400.0, 400.0, 0.5), 1e-3)
        with pytest.raises(InconsistentSampleError) as excinfo:
            area_target(sample, GEOM, WATER, index=17)
        assert excinfo.value.indices == [17]


class TestSampleBatch:
    """배열에서 샘플 생성 시 일괄 검사"""

    def test_builds_p2_convention_samples(self):
        x = [[800.0, 400.0, 0.5], [700.0, 350.0, 0.2]]
        samples = samples_from_arrays(x, [1e-3, 5e-4])
        assert samples == [HybridSample.from_features(row, qi) for row, qi in zip(x, [1e-3, 5e-4])]

    def test_negative_flow_names_index(self):
        x = [[800.0, 400.0, 0.5]] * 4
        with pytest.raises(InvalidSampleError) as excinfo:
            samples_from_arrays(x, [1e-3, 1e-3, -1e-6, 1e-3])
        assert excinfo.value.indices == [2]
        assert "index: 2" in str(excinfo.value)
        assert isinstance(excinfo.value, DomainError)

    def test_reverse_pressure_names_every_index(self):
        x = [[300.0, 400.0, 0.5], [800.0, 400.0, 0.5], [700.0, 400.0, 0.4], [100.0, 400.0, 0.2]]
        with pytest.raises(InvalidSampleError) as excinfo:
            samples_from_arrays(x, [1e-3] * 4)
        assert excinfo.value.indices == [0, 3]
        assert "p1 must be >= pvc at index: 0, 3" in str(excinfo.value)

    def test_inconsistent_rows(self):
        x = [[800.0, 400.0, 0.5], [400.0, 400.0, 0.5]]
        with pytest.raises(InconsistentSampleError) as excinfo:
            samples_from_arrays(x, [1e-3, 1e-3])
        assert excinfo.value.indices == [1]

    def test_shape_mismatch(self):
        with pytest.raises(InputError):
            samples_from_arrays([[800.0, 400.0, 0.5]], [1e-3, 2e-3])

    def test_area_targets_reports_all_reverse_rows(self):
        x = np.array([[800.0, 400.0, 0.5], [300.0, 400.0, 0.5], [200.0, 400.0, 0.5]])
        with pytest.raises(InvalidSampleError) as excinfo:
            area_targets(x, np.full(3, 1e-3), x[:, 1], FeatureSet.P1P2X, GEOM, WATER)
        assert excinfo.value.indices == [1, 2]

    def test_long_index_lists_are_truncated(self):
        x = [[100.0, 400.0, 0.5]] * 25
        with pytest.raises(InvalidSampleError) as excinfo:
            samples_from_arrays(x, [1e-3] * 25)
        assert len(excinfo.value.indices) == 25
        assert str(excinfo.value).endswith("19 (+5 more)")


class TestFitHybrid:
    """직렬 모델 학습"""

    def test_needs_two_samples(self):
        with pytest.raises(InputError):
            fit_hybrid(_samples([[800.0, 400.0, 0.5]], [1e-3]), FeatureSet.P1P2X, GEOM, WATER,
                       KernelSpec.rbf(), 1e3)

    def test_lists_inconsistent_samples(self):
        x = [[800.0, 400.0, 0.5], [400.0, 400.0, 0.5], [700.0, 400.0, 0.4], [300.0, 300.0, 0.2]]
        q = [1e-3, 2e-3, 1e-3, 5e-4]
        with pytest.raises(InconsistentSampleError) as excinfo:
            fit_hybrid(_samples(x, q), FeatureSet.P1P2X, GEOM, WATER, KernelSpec.rbf(), 1e3)
        assert excinfo.value.indices == [1, 3]

    def test_saturated_valve_gives_constant(self):
        x = [[800.0, 400.0, 1.0]] * 6
        q = [7e-3] * 6
        model = fit_hybrid(_samples(x, q), FeatureSet.P1P2X, GEOM, WATER, KernelSpec.rbf(), 1e3)
        assert predict_flow(model, [800.0, 400.0, 1.0]) == pytest.approx(7e-3, rel=1e-9)

    def test_two_samples_interpolated(self):
        x = [[800.0, 400.0, 0.3], [750.0, 400.0, 0.7]]
        q = [2.5e-3, 5.4e-3]
        model = fit_hybrid(_samples(x, q), FeatureSet.P1P2X, GEOM, WATER, KernelSpec.rbf(), 1e6)
        for row, qi in zip(x, q):
            assert predict_flow(model, row) == pytest.approx(qi, rel=5e-3)

    def test_noiseless_round_trip(self, noiseless, noiseless_model):
        x, q = noiseless
        assert x.shape == (2000, 3)
        qhat = predict_many(noiseless_model, x)
        report = evaluate(q, qhat)
        assert report.mape < 1.0
        assert report.rmse < 0.01 * float(np.mean(q))
        # 학습 샘플 각각에서 0.5% 이내
        assert report.err_max < 0.5

    def test_single_vector_matches_batch(self, noiseless, noiseless_model):
        x, _ = noiseless
        assert predict_flow(noiseless_model, x[17]) == predict_many(noiseless_model, x[17:18])[0]

    def test_noisy_held_out_accuracy(self):
        x, q_sensed, q_true = _arrays(_load("sine_noisy.json"), FeatureSet.P1P2X)
        split = 1500
        model = fit_hybrid(_samples(x[:split], q_sensed[:split]), FeatureSet.P1P2X, GEOM, WATER,
                           KernelSpec.rbf(), 100.0)
        report = evaluate(q_true[split:], predict_many(model, x[split:]))
        assert report.mape < 5.0

    def test_temperature_feature_improves_held_out_rmse(self):
        cfg = _load("temperature_sweep.json")
        fluid = cfg.fluid_properties()
        law = cfg.density_law.to_law(fluid)
        geom = cfg.geometry.to_geometry()
        split = 1500
        rmse = {}
        for fs in FeatureSet:
            x, q, q_true = _arrays(cfg, fs)
            model = fit_hybrid(_samples(x[:split], q[:split]), fs, geom, fluid, KernelSpec.rbf(), 1e5,
                               density_law=law)
            rmse[fs] = evaluate(q_true[split:], predict_many(model, x[split:])).rmse
        assert rmse[FeatureSet.P1P2XT] <= rmse[FeatureSet.P1P2X]

    def test_feature_sets_agree_without_temperature_dependence(self):
        cfg = _load("sine_noiseless.json").model_copy(update={"duration": 8.0})
        preds = {}
        for fs in FeatureSet:
            x, q, _ = _arrays(cfg, fs)
            model = fit_hybrid(_samples(x, q), fs, GEOM, WATER, KernelSpec.rbf(), 1e6)
            preds[fs] = predict_many(model, x)
        np.testing.assert_allclose(preds[FeatureSet.P1P2XT], preds[FeatureSet.P1P2X], rtol=5e-3)


class TestPredictFlow:
    """유량 예측"""

    def _constant_area_model(self, area):
        x = [[800.0, 400.0, 0.2], [760.0, 400.0, 0.5], [820.0, 400.0, 0.8]]
        q = [area * GEOM.discharge_coeff / math.sqrt(1 - GEOM.beta ** 4)
             * math.sqrt(2 * (row[0] - row[1]) * 1000.0 / WATER.rho1) for row in x]
        return fit_hybrid(_samples(x, q), FeatureSet.P1P2X, GEOM, WATER, KernelSpec.rbf(), 1.0)

    def test_zero_area_model_predicts_zero(self):
        x = [[800.0, 400.0, 0.0], [700.0, 400.0, 0.0]]
        model = fit_hybrid(_samples(x, [0.0, 0.0]), FeatureSet.P1P2X, GEOM, WATER, KernelSpec.rbf(), 1e3)
        assert predict_flow(model, [900.0, 300.0, 0.7]) == 0.0
        assert np.all(predict_many(model, [[500.0, 100.0, 0.1], [800.0, 799.0, 1.0]]) == 0.0)

    def test_doubling_drop_scales_by_sqrt2(self):
        model = self._constant_area_model(3e-4)
        q1 = predict_flow(model, [600.0, 400.0, 0.5])
        q2 = predict_flow(model, [800.0, 400.0, 0.5])
        assert q2 / q1 == pytest.approx(math.sqrt(2.0), rel=1e-12)

    def test_non_negative_everywhere(self, noiseless_model):
        rng = np.random.default_rng(9)
        queries = np.column_stack([rng.uniform(400, 1200, 500), rng.uniform(0, 400, 500), rng.uniform(-1, 2, 500)])
        assert np.all(predict_many(noiseless_model, queries) >= 0.0)

    def test_reverse_pressure_clamped_to_zero(self, noiseless_model):
        assert predict_flow(noiseless_model, [300.0, 400.0, 0.5]) == 0.0

    def test_dimension_mismatch(self, noiseless_model):
        with pytest.raises(InputError):
            predict_flow(noiseless_model, [800.0, 400.0, 0.5, 293.15])

    def test_series_structure(self):
        cfg = _load("sine_noiseless.json").model_copy(update={"duration": 4.0})
        x, q, _ = _arrays(cfg, FeatureSet.P1P2X)
        s = 0.37
        scaled = replace(GEOM, discharge_coeff=GEOM.discharge_coeff * s)
        base = fit_hybrid(_samples(x, q), FeatureSet.P1P2X, GEOM, WATER, KernelSpec.rbf(), 1e3)
        other = fit_hybrid(_samples(x, q), FeatureSet.P1P2X, scaled, WATER, KernelSpec.rbf(), 1e3)
        np.testing.assert_allclose(other.area_model.b, base.area_model.b / s, rtol=1e-9)
        np.testing.assert_allclose(predict_many(other, x), predict_many(base, x), rtol=1e-9)


class TestDirectAndLagged:
    """직접 모델과 지연 특성"""

    def test_direct_model_fits_flow(self, noiseless):
        x, q = noiseless
        model = fit_direct(x[::4], q[::4], FeatureSet.P1P2X, KernelSpec.rbf(), 1e6)
        assert isinstance(model, DirectFlowModel)
        assert evaluate(q[::4], predict_many(model, x[::4])).mape < 1.0

    def test_lagged_features(self):
        cfg = _load("sine_noiseless.json").model_copy(update={"duration": 4.0})
        x, q, _ = _arrays(cfg, FeatureSet.P1P2X, lagged=2)
        assert x.shape == (200, 9)
        np.testing.assert_array_equal(x[0, 3:6], x[0, :3])
        np.testing.assert_array_equal(x[5, 3:6], x[4, :3])
        model = fit_hybrid(_samples(x, q), FeatureSet.P1P2X, GEOM, WATER, KernelSpec.rbf(), 1e4, lagged=2)
        assert model.area_model.dim == 9
        assert evaluate(q, predict_many(model, x)).mape < 1.0

    def test_dimension_invariant(self, noiseless_model):
        with pytest.raises(InputError):
            HybridValveModel(GEOM, WATER, noiseless_model.area_model, FeatureSet.P1P2XT)


class TestPersistence:
    """모델 JSON 문서"""

    def test_hybrid_round_trip_is_exact(self, tmp_path):
        cfg = _load("temperature_sweep.json").model_copy(update={"duration": 4.0})
        fluid = cfg.fluid_properties()
        x, q, _ = _arrays(cfg, FeatureSet.P1P2XT)
        model = fit_hybrid(_samples(x, q), FeatureSet.P1P2XT, GEOM, fluid, KernelSpec.rbf(), 1e4,
                           density_law=cfg.density_law.to_law(fluid))
        path = tmp_path / "hybrid.json"
        path.write_text(dump_flow_model(model), encoding="utf-8")
        loaded = load_flow_model(str(path))
        assert isinstance(loaded, HybridValveModel)
        assert loaded.density_law == model.density_law
        assert loaded.geom == model.geom
        assert np.array_equal(predict_many(loaded, x), predict_many(model, x))

    def test_document_fields(self, noiseless_model):
        doc = json.loads(dump_flow_model(noiseless_model))
        assert doc["format_version"] == 1
        assert doc["kind"] == "hybrid"
        assert doc["feature_set"] == "p1p2x"
        assert doc["pvc_convention"] == "p2"
        assert doc["density_law"] is None
        assert doc["lssvm"]["format_version"] == 1

    def test_direct_round_trip(self, noiseless):
        x, q = noiseless
        model = fit_direct(x[:50], q[:50], FeatureSet.P1P2X, KernelSpec.linear(), 10.0)
        loaded = model_from_document(json.loads(dump_flow_model(model)))
        assert isinstance(loaded, DirectFlowModel)
        assert np.array_equal(predict_many(loaded, x[:50]), predict_many(model, x[:50]))

    def test_version_mismatch(self, noiseless_model):
        doc = json.loads(dump_flow_model(noiseless_model))
        doc["format_version"] = 2
        with pytest.raises(ModelFormatError) as excinfo:
            model_from_document(doc)
        assert "format_version=2" in str(excinfo.value)
        assert "format_version=1" in str(excinfo.value)

    def test_unknown_kind(self, noiseless_model):
        doc = json.loads(dump_flow_model(noiseless_model))
        doc["kind"] = "parallel"
        with pytest.raises(ModelFormatError):
            model_from_document(doc)

    def test_corrupted_file(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{"format_version": 1, "kind": ', encoding="utf-8")
        with pytest.raises(ModelFormatError):
            load_flow_model(str(path))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
