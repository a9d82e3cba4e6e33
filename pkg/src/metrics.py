"""
예측 정확도 지표: RMSE, MAPE(%), 최대 절대 백분율 오차 Err_max(%)
"""

import logging
from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np
from sklearn.metrics import mean_absolute_percentage_error, root_mean_squared_error

from src.errors import InputError, ZeroTargetError

logger = logging.getLogger(__name__)

ArrayLike = Union[Sequence[float], np.ndarray]


@dataclass(frozen=True)
class EvaluationReport:
    """평가 결과"""
    n: int
    rmse: float
    mape: float      # %
    err_max: float   # %

    CSV_HEADER = "n,rmse,mape_pct,errmax_pct"

    def to_csv_line(self) -> str:
        return f"{self.n},{self.rmse!r},{self.mape!r},{self.err_max!r}"

    def to_table(self, label: str = "flow") -> str:
        """결과 분석 표 형식"""
        header = f"{'Input':<14}{'RMSE':>14}{'MAPE / %':>12}{'Err_max / %':>14}{'n':>8}"
        row = f"{label:<14}{self.rmse:>14.6g}{self.mape:>12.4f}{self.err_max:>14.4f}{self.n:>8d}"
        return f"{header}\n{row}"


def _as_vectors(y: ArrayLike, yhat: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=float).ravel()
    yhat = np.asarray(yhat, dtype=float).ravel()
    if y.shape != yhat.shape:
        raise InputError(f"length mismatch: {y.shape[0]} targets vs {yhat.shape[0]} predictions")
    if y.shape[0] < 1:
        raise InputError("evaluation needs at least one sample")
    return y, yhat


def rmse(y: ArrayLike, yhat: ArrayLike) -> float:
    y, yhat = _as_vectors(y, yhat)
    return float(root_mean_squared_error(y, yhat))


def percentage_errors(y: ArrayLike, yhat: ArrayLike) -> np.ndarray:
    """|y − ŷ| / |y| · 100, 실제값이 0 이면 ZeroTargetError"""
    y, yhat = _as_vectors(y, yhat)
    _check_nonzero(y)
    return np.abs(y - yhat) / np.abs(y) * 100.0


def _check_nonzero(y: np.ndarray):
    zeros = np.flatnonzero(y == 0)
    if zeros.size:
        raise ZeroTargetError(int(zeros[0]))


def evaluate(y: ArrayLike, yhat: ArrayLike) -> EvaluationReport:
    """RMSE, MAPE, Err_max 계산"""
    y, yhat = _as_vectors(y, yhat)
    # sklearn 은 |y| < eps 를 eps 로 바꾸므로 0 은 먼저 거른다
    _check_nonzero(y)
    err_max = float(np.max(percentage_errors(y, yhat)))
    # 부동소수 반올림으로 평균이 최댓값을 넘지 않게
    mape = min(float(mean_absolute_percentage_error(y, yhat)) * 100.0, err_max)
    report = EvaluationReport(n=int(y.shape[0]), rmse=rmse(y, yhat), mape=mape, err_max=err_max)
    logger.debug(f"Evaluation: {report}")
    return report
