"""
최소제곱 서포트 벡터 머신 (LSSVM) 회귀 엔진

학습은 경계 행렬 시스템
    [0   1ᵀ        ] [b]   [0]
    [1   K + C⁻¹I  ] [α] = [Y]
을 H = K + C⁻¹I 의 Cholesky 분해 한 번으로 푼다:
    b = (1ᵀH⁻¹Y)/(1ᵀH⁻¹1),  α = H⁻¹(Y − 1·b)
예측은 f(x) = Σ α_i k(x, x_i) + b.
"""

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ValidationError
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.spatial.distance import cdist, pdist
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.model_selection import GridSearchCV, KFold

from src.config import config
from src.errors import ConditioningError, DomainError, InputError, ModelFormatError
from src.telemetry import atomic_write_text

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


class KernelType(Enum):
    RBF = "rbf"
    LINEAR = "linear"
    POLYNOMIAL = "poly"


@dataclass(frozen=True)
class KernelSpec:
    """커널 종류와 하이퍼파라미터

    RBF 의 sigma 가 None 이면 학습 시 중앙값 휴리스틱으로 정해진다.
    """
    kind: KernelType
    sigma: Optional[float] = None
    degree: int = 2
    offset: float = 1.0

    def __post_init__(self):
        if self.kind is KernelType.RBF and self.sigma is not None and not self.sigma > 0:
            raise DomainError(f"rbf sigma must be > 0, got {self.sigma!r}")
        if self.kind is KernelType.POLYNOMIAL:
            if int(self.degree) != self.degree or self.degree < 1:
                raise DomainError(f"polynomial degree must be an integer >= 1, got {self.degree!r}")
            if not self.offset >= 0:
                raise DomainError(f"polynomial offset must be >= 0, got {self.offset!r}")

    @classmethod
    def rbf(cls, sigma: Optional[float] = None) -> "KernelSpec":
        return cls(KernelType.RBF, sigma=sigma)

    @classmethod
    def linear(cls) -> "KernelSpec":
        return cls(KernelType.LINEAR)

    @classmethod
    def polynomial(cls, degree: int = 2, offset: float = 1.0) -> "KernelSpec":
        return cls(KernelType.POLYNOMIAL, degree=degree, offset=offset)

    @classmethod
    def from_name(cls, name: str, sigma: Optional[float] = None,
                  degree: int = 2, offset: float = 1.0) -> "KernelSpec":
        try:
            kind = KernelType(name)
        except ValueError:
            raise InputError(f"unknown kernel {name!r}; expected one of rbf, linear, poly")
        if kind is KernelType.RBF:
            return cls.rbf(sigma)
        if kind is KernelType.LINEAR:
            return cls.linear()
        return cls.polynomial(degree, offset)

    @property
    def params(self) -> Dict[str, Any]:
        if self.kind is KernelType.RBF:
            return {"sigma": self.sigma}
        if self.kind is KernelType.POLYNOMIAL:
            return {"degree": self.degree, "offset": self.offset}
        return {}

    def to_dict(self) -> Dict[str, Any]:
        return {"type": self.kind.value, "params": self.params}

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "KernelSpec":
        params = doc.get("params") or {}
        return cls.from_name(
            doc["type"],
            sigma=params.get("sigma"),
            degree=params.get("degree", 2),
            offset=params.get("offset", 1.0),
        )


@dataclass(frozen=True)
class Normalization:
    """특성별 z-score 통계"""
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray, feature_names: Sequence[str] = ()) -> "Normalization":
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        flat = std == 0
        if np.any(flat):
            names = [feature_names[i] if i < len(feature_names) else str(i) for i in np.flatnonzero(flat)]
            logger.warning(f"Zero-variance features left unscaled: {', '.join(names)}")
            std = np.where(flat, 1.0, std)
        return cls(_frozen(mean), _frozen(std))

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std

    def to_dict(self) -> Dict[str, List[float]]:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}


@dataclass(frozen=True)
class Dataset:
    """학습 데이터 (행 = 샘플)"""
    x: np.ndarray
    y: np.ndarray
    norm: Optional[Normalization] = None
    feature_names: Tuple[str, ...] = ()

    @classmethod
    def from_arrays(cls, x, y, normalize: bool = False,
                    feature_names: Sequence[str] = ()) -> "Dataset":
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if x.ndim != 2 or x.shape[0] < 1:
            raise InputError(f"training inputs must be an l x n matrix with l >= 1, got shape {x.shape}")
        if y.ndim != 1 or y.shape[0] != x.shape[0]:
            raise InputError(f"targets must be a vector of length {x.shape[0]}, got shape {y.shape}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise InputError("training data contains non-finite values")
        if feature_names and len(feature_names) != x.shape[1]:
            raise InputError(f"{len(feature_names)} feature names for {x.shape[1]} features")
        norm = Normalization.fit(x, feature_names) if normalize else None
        return cls(_frozen(x), _frozen(y), norm, tuple(feature_names))

    @property
    def size(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def model_inputs(self) -> np.ndarray:
        """정규화 통계가 있으면 적용한 입력"""
        if self.norm is None:
            return self.x
        return self.norm.apply(self.x)


@dataclass(frozen=True)
class TrainedLssvm:
    """학습된 LSSVM (불변)

    train_x 는 정규화가 적용된 학습 입력이다.
    """
    alpha: np.ndarray
    b: float
    train_x: np.ndarray
    kernel: KernelSpec
    c: float
    norm: Optional[Normalization] = None
    feature_names: Tuple[str, ...] = field(default=())

    @property
    def dim(self) -> int:
        return self.train_x.shape[1]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def median_sigma(x: np.ndarray) -> float:
    """학습 입력 쌍거리의 중앙값 (0 이면 1.0)"""
    if x.shape[0] < 2:
        return 1.0
    sigma = float(np.median(pdist(x)))
    return sigma if sigma > 0 else 1.0


def resolve_kernel(k: KernelSpec, x: np.ndarray) -> KernelSpec:
    if k.kind is KernelType.RBF and k.sigma is None:
        sigma = median_sigma(x)
        logger.debug(f"Median-heuristic sigma = {sigma!r}")
        return KernelSpec.rbf(sigma)
    return k


def _cross_kernel(k: KernelSpec, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if k.kind is KernelType.RBF:
        if k.sigma is None:
            raise InputError("rbf kernel needs a resolved sigma")
        return np.exp(-cdist(a, b, "sqeuclidean") / (2.0 * k.sigma ** 2))
    if k.kind is KernelType.LINEAR:
        return a @ b.T
    return (a @ b.T + k.offset) ** k.degree


def kernel_eval(k: KernelSpec, x, x2) -> float:
    """두 벡터의 커널 값"""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    if x.shape != x2.shape or x.ndim != 1:
        raise InputError(f"kernel arguments must be vectors of equal dimension, got {x.shape} and {x2.shape}")
    return float(_cross_kernel(k, x.reshape(1, -1), x2.reshape(1, -1))[0, 0])


def gram_matrix(data: Dataset, k: KernelSpec) -> np.ndarray:
    """Gram 행렬 K_ij = k(x_i, x_j), 상삼각을 계산해 대칭 복사"""
    x = data.model_inputs()
    k = resolve_kernel(k, x)
    upper = np.triu(_cross_kernel(k, x, x))
    return upper + np.triu(upper, 1).T


def bordered_system(gram: np.ndarray, c: float) -> np.ndarray:
    """(l+1)×(l+1) 경계 행렬 [[0, 1ᵀ], [1, K + C⁻¹I]]"""
    l = gram.shape[0]
    a = np.zeros((l + 1, l + 1))
    a[0, 1:] = 1.0
    a[1:, 0] = 1.0
    a[1:, 1:] = gram + np.eye(l) / c
    return a


def kkt_residual(gram: np.ndarray, c: float, alpha: np.ndarray, b: float, y: np.ndarray) -> float:
    """경계 시스템 잔차의 최대 노름 (max(|Y|, 1) 로 스케일)"""
    lhs = bordered_system(gram, c) @ np.concatenate(([b], alpha))
    rhs = np.concatenate(([0.0], y))
    return float(np.max(np.abs(lhs - rhs)) / max(float(np.max(np.abs(y))), 1.0))


def train(data: Dataset, k: KernelSpec, c: float) -> TrainedLssvm:
    """폐형해로 (α, b) 계산"""
    if not c > 0:
        raise DomainError(f"regularization C must be > 0, got {c!r}")
    x = data.model_inputs()
    y = data.y
    kernel = resolve_kernel(k, x)
    l = data.size

    if l == 1:
        # Σα = 0 이면 α₁ = 0, b = y₁
        return TrainedLssvm(_frozen([0.0]), float(y[0]), _frozen(x), kernel, c, data.norm, data.feature_names)

    gram = gram_matrix(Dataset(x, y), kernel)
    h = gram + np.eye(l) / c
    try:
        factor = cho_factor(h, lower=True, check_finite=True)
    except (LinAlgError, ValueError) as e:
        raise ConditioningError(f"H = K + I/C is not numerically positive definite: {e}", solve="cholesky(H)")

    ones = np.ones(l)
    h_y = cho_solve(factor, y)
    h_1 = cho_solve(factor, ones)
    if not (np.all(np.isfinite(h_y)) and np.all(np.isfinite(h_1))):
        raise ConditioningError("non-finite solution", solve="H^-1 Y" if not np.all(np.isfinite(h_y)) else "H^-1 1")

    b = float(ones @ h_y / (ones @ h_1))
    alpha = h_y - b * h_1

    _check_invariants(gram, c, alpha, b, y)
    logger.info(f"Trained LSSVM: l={l}, n={data.dim}, kernel={kernel.kind.value}, C={c:g}")
    return TrainedLssvm(_frozen(alpha), b, _frozen(x), kernel, c, data.norm, data.feature_names)


def _check_invariants(gram: np.ndarray, c: float, alpha: np.ndarray, b: float, y: np.ndarray):
    l = alpha.shape[0]
    kkt_tol = config.get("lssvm.kkt_tolerance", 1e-8)
    sum_tol = config.get("lssvm.zero_sum_tolerance", 1e-10)

    residual = kkt_residual(gram, c, alpha, b, y)
    zero_sum = abs(float(alpha.sum()))
    logger.debug(f"KKT residual = {residual:.3e}, |sum(alpha)| = {zero_sum:.3e}")
    if residual > kkt_tol:
        logger.warning(f"KKT residual {residual:.3e} exceeds tolerance {kkt_tol:g}")
    if zero_sum > sum_tol * (1.0 + float(np.max(np.abs(alpha))) * l):
        logger.warning(f"Dual coefficients sum to {zero_sum:.3e}, above tolerance")


def _prepare_inputs(model: TrainedLssvm, x: np.ndarray) -> np.ndarray:
    if x.shape[1] != model.dim:
        raise InputError(f"input dimension {x.shape[1]} does not match model dimension {model.dim}")
    if model.norm is not None:
        return model.norm.apply(x)
    return x


def predict_many(model: TrainedLssvm, x) -> np.ndarray:
    """여러 입력의 예측값"""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, model.dim) if model.dim > 1 else x.reshape(-1, 1)
    if x.shape[0] == 0:
        return np.zeros(0)
    z = _prepare_inputs(model, x)
    return _cross_kernel(model.kernel, z, model.train_x) @ model.alpha + model.b


def predict(model: TrainedLssvm, x) -> float:
    """f(x) = Σ α_i k(x, x_i) + b"""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1:
        raise InputError(f"predict expects a single vector, got shape {x.shape}")
    if x.shape[0] != model.dim:
        raise InputError(f"input dimension {x.shape[0]} does not match model dimension {model.dim}")
    return float(predict_many(model, x.reshape(1, -1))[0])


# ---------------------------------------------------------------------------
# 모델 파일

class _KernelDocument(BaseModel):
    type: str
    params: Dict[str, Any] = {}


class _NormDocument(BaseModel):
    mean: List[float]
    std: List[float]


class LssvmDocument(BaseModel):
    """LSSVM 모델 JSON 문서"""
    format_version: int
    kernel: _KernelDocument
    C: float
    alpha: List[float]
    b: float
    train_x: List[List[float]]
    feature_names: List[str] = []
    norm: Optional[_NormDocument] = None


def to_document(model: TrainedLssvm) -> Dict[str, Any]:
    return {
        "format_version": FORMAT_VERSION,
        "kernel": model.kernel.to_dict(),
        "C": model.c,
        "alpha": model.alpha.tolist(),
        "b": model.b,
        "train_x": model.train_x.tolist(),
        "feature_names": list(model.feature_names),
        "norm": model.norm.to_dict() if model.norm is not None else None,
    }


def check_version(doc: Dict[str, Any], expected: int = FORMAT_VERSION):
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise ModelFormatError("model document has no format_version")
    found = doc["format_version"]
    if found != expected:
        raise ModelFormatError("unsupported model format", found=found, expected=expected)


def from_document(doc: Dict[str, Any]) -> TrainedLssvm:
    check_version(doc)
    try:
        parsed = LssvmDocument.model_validate(doc)
    except ValidationError as e:
        raise ModelFormatError(f"invalid lssvm model document: {e}")

    train_x = np.asarray(parsed.train_x, dtype=float)
    alpha = np.asarray(parsed.alpha, dtype=float)
    if train_x.ndim != 2 or train_x.shape[0] != alpha.shape[0]:
        raise ModelFormatError(f"train_x shape {train_x.shape} does not match {alpha.shape[0]} coefficients")
    norm = None
    if parsed.norm is not None:
        norm = Normalization(_frozen(parsed.norm.mean), _frozen(parsed.norm.std))
    try:
        kernel = KernelSpec.from_dict(parsed.kernel.model_dump())
    except (InputError, DomainError) as e:
        raise ModelFormatError(f"invalid kernel in model document: {e}")
    return TrainedLssvm(
        _frozen(alpha), float(parsed.b), _frozen(train_x), kernel, float(parsed.C), norm,
        tuple(parsed.feature_names),
    )


def save_model(model: TrainedLssvm, path: str):
    atomic_write_text(path, json.dumps(to_document(model)))


def load_model(path: str) -> TrainedLssvm:
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ModelFormatError(f"model file is not valid JSON: {e}")
    return from_document(doc)


# ---------------------------------------------------------------------------
# scikit-learn 래퍼와 k-fold 그리드 탐색

class LssvmRegressor(RegressorMixin, BaseEstimator):
    """GridSearchCV 에서 쓰기 위한 추정기 래퍼"""

    def __init__(self, kernel: str = "rbf", C: float = 1.0, sigma: Optional[float] = None,
                 degree: int = 2, offset: float = 1.0, normalize: bool = True):
        self.kernel = kernel
        self.C = C
        self.sigma = sigma
        self.degree = degree
        self.offset = offset
        self.normalize = normalize

    def fit(self, X, y):
        data = Dataset.from_arrays(X, y, normalize=self.normalize)
        spec = KernelSpec.from_name(self.kernel, self.sigma, self.degree, self.offset)
        self.model_ = train(data, spec, self.C)
        return self

    def predict(self, X):
        return predict_many(self.model_, X)


def grid_search(
    x,
    y,
    kernel: KernelSpec,
    normalize: bool = True,
    c_grid: Optional[Sequence[float]] = None,
    sigma_scales: Optional[Sequence[float]] = None,
    folds: Optional[int] = None,
    seed: int = 0,
) -> Tuple[float, KernelSpec]:
    """k-fold 교차검증으로 (C, sigma) 선택, (best_c, best_kernel) 반환"""
    data = Dataset.from_arrays(x, y, normalize=normalize)
    lssvm_config = config.get_lssvm_config()
    c_grid = list(c_grid or lssvm_config.get("grid_c", [1.0, 10.0, 100.0, 1000.0]))
    folds = int(folds or lssvm_config.get("grid_folds", 5))
    folds = min(folds, data.size)
    if folds < 2:
        raise InputError(f"grid search needs at least 2 samples, got {data.size}")

    param_grid: Dict[str, List[Any]] = {"C": c_grid}
    if kernel.kind is KernelType.RBF:
        if kernel.sigma is not None:
            param_grid["sigma"] = [kernel.sigma]
        else:
            base = median_sigma(data.model_inputs())
            scales = sigma_scales or lssvm_config.get("grid_sigma_scale", [0.5, 1.0, 2.0])
            param_grid["sigma"] = [base * s for s in scales]

    estimator = LssvmRegressor(kernel=kernel.kind.value, degree=kernel.degree,
                               offset=kernel.offset, normalize=normalize)
    search = GridSearchCV(
        estimator,
        param_grid,
        cv=KFold(n_splits=folds, shuffle=True, random_state=seed),
        scoring="neg_root_mean_squared_error",
    )
    search.fit(data.x, data.y)
    best = search.best_params_
    logger.info(f"Grid search best params: {best} (RMSE {-search.best_score_:.6g})")

    best_kernel = kernel
    if kernel.kind is KernelType.RBF:
        best_kernel = KernelSpec.rbf(best["sigma"])
    return float(best["C"]), best_kernel
