"""
직렬 하이브리드 (그레이박스) 밸브 모델

LSSVM 이 측정할 수 없는 유효 유로 면적 f(x) (m²) 를 학습하고, 오리피스 유량식이
f(x) 와 압력으로부터 유량을 계산한다:

    Q = C_v·ε·f(x)/sqrt(1−β⁴)·sqrt(2·(P1 − pvc)·1000/ρ1),   pvc = P2

비교용으로 특성 → Q 를 직접 학습하는 순수 데이터 모델 (DirectFlowModel) 도 제공한다.
"""

import json
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ValidationError

from src import lssvm
from src.errors import DomainError, InconsistentSampleError, InputError, InvalidSampleError, ModelFormatError
from src.lssvm import Dataset, KernelSpec, TrainedLssvm
from src.mechanism import DensityLaw, FluidProperties, ValveGeometry, orifice_factor

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
PVC_CONVENTION = "p2"


class FeatureSet(Enum):
    """입력 벡터 배치: (P1 kPa, P2 kPa, X 행정비[, T K])"""
    P1P2X = "p1p2x"
    P1P2XT = "p1p2xt"

    @property
    def columns(self) -> Tuple[str, ...]:
        if self is FeatureSet.P1P2XT:
            return ("p1", "p2", "x", "temp")
        return ("p1", "p2", "x")

    @property
    def arity(self) -> int:
        return len(self.columns)

    @property
    def uses_temperature(self) -> bool:
        return self is FeatureSet.P1P2XT

    @property
    def label(self) -> str:
        return "P1,P2,X,T" if self.uses_temperature else "P1,P2,X"


@dataclass(frozen=True)
class HybridSample:
    """학습 샘플 하나"""
    features: Tuple[float, ...]
    q: float      # 측정 유량 (m³/s)
    pvc: float    # 축류부 압력 대용값 (kPa)

    def __post_init__(self):
        if not self.q >= 0:
            raise DomainError(f"HybridSample.q must be >= 0, got {self.q!r}")
        if not self.features[0] >= self.pvc:
            raise DomainError(f"HybridSample requires p1 >= pvc, got p1={self.features[0]!r}, pvc={self.pvc!r}")

    @property
    def p1(self) -> float:
        return self.features[0]

    @classmethod
    def from_features(cls, features: Sequence[float], q: float) -> "HybridSample":
        """pvc = P2 규약으로 샘플 생성"""
        return cls(tuple(float(v) for v in features), float(q), float(features[1]))


def _densities(x: np.ndarray, fs: FeatureSet, fluid: FluidProperties,
               density_law: Optional[DensityLaw]) -> Union[float, np.ndarray]:
    if density_law is not None and fs.uses_temperature:
        return density_law.density(x[:, 3])
    return fluid.rho1


def area_target(sample: HybridSample, geom: ValveGeometry, fluid: FluidProperties,
                rho1: Optional[float] = None, index: int = 0) -> float:
    """측정 유량에서 유효 면적 역산 (오리피스 식의 역)

    index 는 오류 메시지에 쓸 샘플 위치.
    """
    dp = sample.p1 - sample.pvc
    if dp == 0:
        if sample.q == 0:
            return 0.0
        raise InconsistentSampleError([index])
    rho = fluid.rho1 if rho1 is None else rho1
    return float(sample.q / orifice_factor(geom, dp, rho))


@dataclass(frozen=True)
class HybridValveModel:
    """메커니즘 파라미터 + 면적 LSSVM"""
    geom: ValveGeometry
    fluid: FluidProperties
    area_model: TrainedLssvm
    feature_set: FeatureSet
    density_law: Optional[DensityLaw] = None
    lagged: int = 0

    def __post_init__(self):
        expected = self.feature_set.arity * (1 + self.lagged)
        if self.area_model.dim != expected:
            raise InputError(
                f"area model has {self.area_model.dim} inputs, feature set {self.feature_set.value} "
                f"with lagged={self.lagged} needs {expected}"
            )

    @property
    def kind(self) -> str:
        return "hybrid"

    def to_document(self) -> Dict[str, Any]:
        return {
            "format_version": FORMAT_VERSION,
            "kind": self.kind,
            "lssvm": lssvm.to_document(self.area_model),
            "geom": self.geom.to_dict(),
            "fluid": self.fluid.to_dict(),
            "feature_set": self.feature_set.value,
            "pvc_convention": PVC_CONVENTION,
            "density_law": self.density_law.to_dict() if self.density_law is not None else None,
            "lagged": self.lagged,
        }


@dataclass(frozen=True)
class DirectFlowModel:
    """특성 → Q 를 직접 학습한 순수 데이터 모델"""
    flow_model: TrainedLssvm
    feature_set: FeatureSet
    lagged: int = 0

    @property
    def kind(self) -> str:
        return "direct"

    def to_document(self) -> Dict[str, Any]:
        return {
            "format_version": FORMAT_VERSION,
            "kind": self.kind,
            "lssvm": lssvm.to_document(self.flow_model),
            "feature_set": self.feature_set.value,
            "lagged": self.lagged,
        }


FlowModel = Union[HybridValveModel, DirectFlowModel]


def _sample_arrays(data: Sequence[HybridSample]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    x = np.array([s.features for s in data], dtype=float)
    q = np.array([s.q for s in data], dtype=float)
    pvc = np.array([s.pvc for s in data], dtype=float)
    return x, q, pvc


def check_samples(x: np.ndarray, q: np.ndarray, pvc: np.ndarray):
    """배치 전체를 한 번에 검사해 실패한 인덱스를 모두 보고"""
    negative = np.flatnonzero(~(q >= 0))
    if negative.size:
        raise InvalidSampleError("q must be >= 0", negative.tolist())
    below = np.flatnonzero(~(x[:, 0] >= pvc))
    if below.size:
        raise InvalidSampleError("p1 must be >= pvc", below.tolist())
    inconsistent = np.flatnonzero((x[:, 0] == pvc) & (q > 0))
    if inconsistent.size:
        raise InconsistentSampleError(inconsistent.tolist())


def samples_from_arrays(x, q) -> List[HybridSample]:
    """특징 행렬과 유량에서 샘플 목록 생성 (pvc = P2 규약)"""
    x = np.asarray(x, dtype=float)
    q = np.asarray(q, dtype=float).ravel()
    if x.ndim != 2 or x.shape[1] < 2 or x.shape[0] != q.shape[0]:
        raise InputError(f"samples need an (n, >=2) feature matrix and n flows, got {x.shape} and {q.shape}")
    check_samples(x, q, x[:, 1])
    return [HybridSample(tuple(row.tolist()), float(qi), float(row[1])) for row, qi in zip(x, q)]


def area_targets(x: np.ndarray, q: np.ndarray, pvc: np.ndarray, fs: FeatureSet,
                 geom: ValveGeometry, fluid: FluidProperties,
                 density_law: Optional[DensityLaw] = None) -> np.ndarray:
    """모든 샘플의 면적 목표값 (배치)"""
    check_samples(x, q, pvc)
    dp = x[:, 0] - pvc

    factor = orifice_factor(geom, dp, _densities(x, fs, fluid, density_law))
    targets = np.zeros_like(q)
    moving = dp > 0
    targets[moving] = q[moving] / np.broadcast_to(factor, q.shape)[moving]
    return targets


def fit_hybrid(
    data: Sequence[HybridSample],
    fs: FeatureSet,
    geom: ValveGeometry,
    fluid: FluidProperties,
    kernel: KernelSpec,
    c: float,
    density_law: Optional[DensityLaw] = None,
    lagged: int = 0,
    normalize: bool = True,
) -> HybridValveModel:
    """면적 목표값을 계산하고 LSSVM 을 학습해 직렬 모델 구성"""
    if len(data) < 2:
        raise InputError(f"fit_hybrid needs at least 2 samples, got {len(data)}")
    x, q, pvc = _sample_arrays(data)
    expected = fs.arity * (1 + lagged)
    if x.shape[1] != expected:
        raise InputError(f"samples have {x.shape[1]} features, {fs.value} with lagged={lagged} needs {expected}")

    targets = area_targets(x, q, pvc, fs, geom, fluid, density_law)
    names = _feature_names(fs, lagged)
    area_model = lssvm.train(Dataset.from_arrays(x, targets, normalize=normalize, feature_names=names), kernel, c)
    logger.info(f"Fitted hybrid model on {len(data)} samples ({fs.value}, lagged={lagged})")
    return HybridValveModel(geom, fluid, area_model, fs, density_law if fs.uses_temperature else None, lagged)


def fit_direct(
    x,
    q,
    fs: FeatureSet,
    kernel: KernelSpec,
    c: float,
    lagged: int = 0,
    normalize: bool = True,
) -> DirectFlowModel:
    """특성 → Q 직접 회귀"""
    x = np.asarray(x, dtype=float)
    if x.shape[0] < 2:
        raise InputError(f"fit_direct needs at least 2 samples, got {x.shape[0]}")
    names = _feature_names(fs, lagged)
    model = lssvm.train(Dataset.from_arrays(x, q, normalize=normalize, feature_names=names), kernel, c)
    logger.info(f"Fitted direct model on {x.shape[0]} samples ({fs.value}, lagged={lagged})")
    return DirectFlowModel(model, fs, lagged)


def _feature_names(fs: FeatureSet, lagged: int) -> List[str]:
    names = list(fs.columns)
    for j in range(1, lagged + 1):
        names.extend(f"{c}_lag{j}" for c in fs.columns)
    return names


def predict_many(model: FlowModel, x) -> np.ndarray:
    """여러 특성 벡터의 예측 유량 (m³/s), 항상 0 이상"""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.shape[0] == 0:
        return np.zeros(0)

    if isinstance(model, DirectFlowModel):
        return np.maximum(lssvm.predict_many(model.flow_model, x), 0.0)

    area = np.maximum(lssvm.predict_many(model.area_model, x), 0.0)
    dp = x[:, 0] - x[:, 1]
    if np.any(dp < 0):
        logger.warning(f"P1 < P2 in {int(np.sum(dp < 0))} rows; predicted flow set to 0 there")
        dp = np.maximum(dp, 0.0)
    rho = _densities(x, model.feature_set, model.fluid, model.density_law)
    return area * orifice_factor(model.geom, dp, rho)


def predict_flow(model: FlowModel, features) -> float:
    """특성 벡터 하나의 예측 유량"""
    features = np.atleast_1d(np.asarray(features, dtype=float))
    if features.ndim != 1:
        raise InputError(f"predict_flow expects a single feature vector, got shape {features.shape}")
    return float(predict_many(model, features.reshape(1, -1))[0])


# ---------------------------------------------------------------------------
# 모델 파일

class _DensityLawDocument(BaseModel):
    rho_ref: float
    alpha_t: float
    t_ref: float


class FlowModelDocument(BaseModel):
    """하이브리드 / 직접 모델 JSON 문서"""
    format_version: int
    kind: str
    lssvm: Dict[str, Any]
    feature_set: FeatureSet
    lagged: int = 0
    geom: Optional[Dict[str, float]] = None
    fluid: Optional[Dict[str, float]] = None
    pvc_convention: Optional[str] = None
    density_law: Optional[_DensityLawDocument] = None


def model_from_document(doc: Dict[str, Any]) -> FlowModel:
    lssvm.check_version(doc, FORMAT_VERSION)
    try:
        parsed = FlowModelDocument.model_validate(doc)
    except ValidationError as e:
        raise ModelFormatError(f"invalid model document: {e}")

    inner = lssvm.from_document(parsed.lssvm)
    if parsed.kind == "direct":
        return DirectFlowModel(inner, parsed.feature_set, parsed.lagged)
    if parsed.kind != "hybrid":
        raise ModelFormatError(f"unknown model kind {parsed.kind!r}")
    if parsed.geom is None or parsed.fluid is None:
        raise ModelFormatError("hybrid model document needs geom and fluid")
    if parsed.pvc_convention != PVC_CONVENTION:
        raise ModelFormatError(f"unsupported pvc convention {parsed.pvc_convention!r}")
    try:
        geom = ValveGeometry(**parsed.geom)
        fluid = FluidProperties(**parsed.fluid)
        law = DensityLaw(**parsed.density_law.model_dump()) if parsed.density_law is not None else None
        return HybridValveModel(geom, fluid, inner, parsed.feature_set, law, parsed.lagged)
    except (TypeError, ValueError) as e:
        raise ModelFormatError(f"invalid hybrid model document: {e}")


def dump_flow_model(model: FlowModel) -> str:
    """모델 문서를 JSON 문자열로"""
    return json.dumps(model.to_document())


def load_flow_model(path: str) -> FlowModel:
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ModelFormatError(f"model file is not valid JSON: {e}")
    return model_from_document(doc)
