"""
밸브 모델링 툴킷 예외 계층

CLI는 ValveModelError 계열을 종료 코드 2로, OSError를 종료 코드 3으로 변환한다.
"""

from typing import Optional, Sequence


class ValveModelError(Exception):
    """툴킷 공통 기본 예외"""


class DomainError(ValveModelError, ValueError):
    """수식 정의역을 벗어난 인자"""


class InputError(ValveModelError, ValueError):
    """형식이 잘못된 입력 (차원 불일치, 누락 컬럼 등)"""


class NotApplicableError(ValveModelError):
    """현재 유동 영역에서 적용할 수 없는 계산"""


class ConditioningError(ValveModelError):
    """H 행렬 분해 또는 선형 해 계산 실패"""

    def __init__(self, message: str, solve: str):
        super().__init__(f"{message} (solve: {solve})")
        self.solve = solve


def _format_indices(indices: Sequence[int], limit: int = 20) -> str:
    shown = ", ".join(str(i) for i in indices[:limit])
    more = "" if len(indices) <= limit else f" (+{len(indices) - limit} more)"
    return shown + more


class InvalidSampleError(DomainError):
    """유량식 정의역을 벗어난 샘플 (q < 0, p1 < pvc)"""

    def __init__(self, reason: str, indices: Sequence[int]):
        self.reason = reason
        self.indices = list(indices)
        super().__init__(f"{reason} at index: {_format_indices(self.indices)}")


class InconsistentSampleError(InputError):
    """p1 = pvc 인데 유량이 양수인 샘플"""

    def __init__(self, indices: Sequence[int]):
        self.indices = list(indices)
        super().__init__(
            f"inconsistent samples (p1 == pvc with q > 0) at index: {_format_indices(self.indices)}"
        )


class ZeroTargetError(InputError):
    """MAPE / Err_max 계산 시 실제값이 0"""

    def __init__(self, index: int):
        self.index = index
        super().__init__(
            f"zero target at index {index}: MAPE and Err_max are undefined "
            f"(filter zero targets first, e.g. --skip-zero-targets)"
        )


class SimulationError(ValveModelError):
    """시뮬레이션 상태가 유한하지 않거나 스텝 계산이 정의역을 벗어남"""

    def __init__(self, message: str, step_index: int, t: float):
        super().__init__(f"step {step_index} (t={t!r}): {message}")
        self.step_index = step_index
        self.t = t


class ModelFormatError(InputError):
    """모델 파일을 읽을 수 없거나 버전이 다름"""

    def __init__(self, message: str, found: Optional[int] = None, expected: Optional[int] = None):
        if found is not None and expected is not None:
            message = f"{message} (file format_version={found}, supported format_version={expected})"
        super().__init__(message)
        self.found = found
        self.expected = expected
