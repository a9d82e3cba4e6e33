"""
텔레메트리 CSV 입출력과 특성 행렬 구성

CSV 헤더:
    t,cv,x,x_sensed,p1,p1_sensed,p2,p2_sensed,temp,q,q_sensed,fault_ids,fault_intensities
실수는 유효숫자 17자리, 고장 컬럼은 세미콜론 구분 목록 (없으면 빈 값).
"""

import logging
import os
import tempfile
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.config import config
from src.errors import InputError
from src.simulator import TelemetryRecord

logger = logging.getLogger(__name__)

TELEMETRY_COLUMNS = [
    "t", "cv", "x", "x_sensed", "p1", "p1_sensed", "p2", "p2_sensed",
    "temp", "q", "q_sensed", "fault_ids", "fault_intensities",
]

# 특성 이름 → 우선순위 순 후보 컬럼 (센서값 우선)
FEATURE_SOURCES = {
    "p1": ("p1_sensed", "p1"),
    "p2": ("p2_sensed", "p2"),
    "x": ("x_sensed", "x"),
    "temp": ("temp",),
}
TARGET_SOURCES = ("q_sensed", "q")


def float_format() -> str:
    return config.get("cli.float_format", "%.17g")


def records_to_frame(records: Sequence[TelemetryRecord]) -> pd.DataFrame:
    rows = []
    for r in records:
        rows.append({
            "t": r.t, "cv": r.cv, "x": r.x, "x_sensed": r.x_sensed,
            "p1": r.p1, "p1_sensed": r.p1_sensed, "p2": r.p2, "p2_sensed": r.p2_sensed,
            "temp": r.temp, "q": r.q, "q_sensed": r.q_sensed,
            "fault_ids": ";".join(fid for fid, _ in r.active_faults),
            "fault_intensities": ";".join(float_format() % z for _, z in r.active_faults),
        })
    return pd.DataFrame(rows, columns=TELEMETRY_COLUMNS)


def atomic_write_text(path: str, text: str):
    """임시 파일에 쓴 뒤 rename"""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise


def write_frame(frame: pd.DataFrame, path: str):
    text = frame.to_csv(index=False, float_format=float_format(), lineterminator="\n")
    atomic_write_text(path, text)
    logger.info(f"Wrote {len(frame)} rows to {path}")


def write_telemetry(records: Sequence[TelemetryRecord], path: str):
    write_frame(records_to_frame(records), path)


def read_table(path: str) -> pd.DataFrame:
    """CSV 로드 (실수는 왕복 정밀도로, 빈 고장 컬럼은 빈 문자열로)"""
    frame = pd.read_csv(path, float_precision="round_trip", dtype={"fault_ids": str, "fault_intensities": str})
    for column in ("fault_ids", "fault_intensities"):
        if column in frame.columns:
            frame[column] = frame[column].fillna("")
    return frame


def resolve_column(frame: pd.DataFrame, candidates: Sequence[str]) -> str:
    for name in candidates:
        if name in frame.columns:
            return name
    raise InputError(f"missing column: {' or '.join(candidates)}")


def lag_matrix(base: np.ndarray, lagged: int) -> np.ndarray:
    """직전 k 개 샘플의 특성을 뒤에 덧붙임 (앞쪽은 첫 행으로 채움)"""
    if lagged < 0:
        raise InputError(f"lagged must be >= 0, got {lagged}")
    if lagged == 0 or base.shape[0] == 0:
        return base
    n = base.shape[0]
    blocks = [base]
    for j in range(1, lagged + 1):
        blocks.append(base[np.maximum(np.arange(n) - j, 0)])
    return np.hstack(blocks)


def feature_matrix(frame: pd.DataFrame, names: Sequence[str], lagged: int = 0) -> Tuple[np.ndarray, List[str]]:
    """특성 행렬과 사용한 컬럼 이름"""
    columns = [resolve_column(frame, FEATURE_SOURCES.get(name, (name,))) for name in names]
    base = frame[columns].to_numpy(dtype=float).reshape(len(frame), len(columns))
    labels = list(columns)
    for j in range(1, lagged + 1):
        labels.extend(f"{c}_lag{j}" for c in columns)
    return lag_matrix(base, lagged), labels


def target_vector(frame: pd.DataFrame, column: Optional[str] = None) -> np.ndarray:
    name = column or resolve_column(frame, TARGET_SOURCES)
    if name not in frame.columns:
        raise InputError(f"missing column: {name}")
    return frame[name].to_numpy(dtype=float)
