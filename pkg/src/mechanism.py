"""
조절밸브 유체역학 메커니즘 모델

- 박벽 오리피스 유량식
- Clausius-Clapeyron 포화 증기압
- 임계 압력비 F_F, 초킹 압력차 Δp_T, 유동 영역 분류
- 유량 계수 (비초킹 난류 / 층류)

단위 규약: 압력 kPa(절대), 온도 K, 오리피스 유량 m³/s, 유량 계수 계산의 qv는 m³/h.
kPa → Pa 변환은 오리피스 유량식 내부에서만 한다.
"""

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, Optional, Union

import numpy as np

from src.errors import DomainError, InputError, NotApplicableError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

FF_MAX = 0.96
FF_MIN = 0.68
LAMINAR_REYNOLDS = 1000.0
# qv [m³/h], Δp [kPa] 조합의 사이징 상수
DEFAULT_N1 = 0.1
KPA_TO_PA = 1000.0


class FlowRegime(Enum):
    NON_CHOKED_TURBULENT = "non_choked_turbulent"
    LAMINAR = "laminar"
    CHOKED_CAVITATION = "choked_cavitation"
    CHOKED_FLASHING = "choked_flashing"

    @property
    def is_choked(self) -> bool:
        return self in (FlowRegime.CHOKED_CAVITATION, FlowRegime.CHOKED_FLASHING)


@dataclass(frozen=True)
class FluidProperties:
    """매질 물성"""
    rho1: float                   # 밸브 전단 밀도 (kg/m³)
    rho0: float                   # 기준 밀도 (kg/m³)
    gas_constant: float           # 증기의 비기체상수 (J/(kg·K))
    heat_of_vaporization: float   # 비증발잠열 (J/kg)
    p_crit: float                 # 임계 압력 (kPa)
    vapor_ref_t: float            # 증기압 보정점 온도 (K)
    vapor_ref_p: float            # 증기압 보정점 압력 (kPa)

    def __post_init__(self):
        for name in ("rho1", "rho0", "gas_constant", "heat_of_vaporization", "p_crit", "vapor_ref_t"):
            if not getattr(self, name) > 0:
                raise DomainError(f"FluidProperties.{name} must be > 0, got {getattr(self, name)!r}")
        if not 0 < self.vapor_ref_p <= self.p_crit:
            raise DomainError(
                f"FluidProperties.vapor_ref_p must be in (0, p_crit={self.p_crit}], got {self.vapor_ref_p!r}"
            )

    def to_dict(self) -> Dict[str, float]:
        return {
            "rho1": self.rho1,
            "rho0": self.rho0,
            "gas_constant": self.gas_constant,
            "heat_of_vaporization": self.heat_of_vaporization,
            "p_crit": self.p_crit,
            "vapor_ref_t": self.vapor_ref_t,
            "vapor_ref_p": self.vapor_ref_p,
        }


@dataclass(frozen=True)
class ValveGeometry:
    """밸브 형상 및 계수"""
    area: float             # 축류부 유로 면적 A_c (m²)
    beta: float             # 직경비 d_e/d_1
    discharge_coeff: float  # 유속 계수 C_v
    epsilon: float          # 팽창 계수
    fl: float               # 압력 회복 계수 F_L

    def __post_init__(self):
        if not self.area >= 0:
            raise DomainError(f"ValveGeometry.area must be >= 0, got {self.area!r}")
        if not 0 <= self.beta < 1:
            raise DomainError(f"ValveGeometry.beta must be in [0, 1), got {self.beta!r}")
        if not self.discharge_coeff > 0:
            raise DomainError(f"ValveGeometry.discharge_coeff must be > 0, got {self.discharge_coeff!r}")
        if not 0 < self.epsilon <= 1:
            raise DomainError(f"ValveGeometry.epsilon must be in (0, 1], got {self.epsilon!r}")
        if not 0 < self.fl <= 1:
            raise DomainError(f"ValveGeometry.fl must be in (0, 1], got {self.fl!r}")

    def with_area(self, area: float) -> "ValveGeometry":
        return replace(self, area=area)

    def to_dict(self) -> Dict[str, float]:
        return {
            "area": self.area,
            "beta": self.beta,
            "discharge_coeff": self.discharge_coeff,
            "epsilon": self.epsilon,
            "fl": self.fl,
        }


@dataclass(frozen=True)
class OperatingPoint:
    """운전점"""
    p1: float                   # 전단 압력 (kPa)
    p2: float                   # 후단 압력 (kPa)
    temperature: float          # 온도 (K)
    qv: Optional[float] = None  # 체적 유량 (m³/h), 유량 계수 계산용
    re_v: Optional[float] = None  # 밸브 레이놀즈 수 (측정값으로 주어짐)

    def __post_init__(self):
        if not self.p1 > 0:
            raise DomainError(f"OperatingPoint.p1 must be > 0, got {self.p1!r}")
        if not self.p2 >= 0:
            raise DomainError(f"OperatingPoint.p2 must be >= 0, got {self.p2!r}")
        if not self.p1 >= self.p2:
            raise DomainError(f"OperatingPoint requires p1 >= p2, got p1={self.p1!r}, p2={self.p2!r}")
        if not self.temperature > 0:
            raise DomainError(f"OperatingPoint.temperature must be > 0, got {self.temperature!r}")
        if self.re_v is not None and not self.re_v > 0:
            raise DomainError(f"OperatingPoint.re_v must be > 0 when present, got {self.re_v!r}")

    @property
    def dp(self) -> float:
        return self.p1 - self.p2


@dataclass(frozen=True)
class DensityLaw:
    """선형 밀도-온도 관계 rho(T) = rho_ref·(1 − alpha_t·(T − t_ref))"""
    rho_ref: float
    alpha_t: float = 2.1e-4
    t_ref: float = 293.15

    def __post_init__(self):
        if not self.rho_ref > 0:
            raise DomainError(f"DensityLaw.rho_ref must be > 0, got {self.rho_ref!r}")
        if not self.t_ref > 0:
            raise DomainError(f"DensityLaw.t_ref must be > 0, got {self.t_ref!r}")

    def density(self, temperature: ArrayLike) -> ArrayLike:
        rho = self.rho_ref * (1.0 - self.alpha_t * (np.asarray(temperature, dtype=float) - self.t_ref))
        if np.any(rho <= 0):
            raise DomainError(f"density law gives non-positive density at T={temperature!r}")
        if np.ndim(rho) == 0:
            return float(rho)
        return rho

    def to_dict(self) -> Dict[str, float]:
        return {"rho_ref": self.rho_ref, "alpha_t": self.alpha_t, "t_ref": self.t_ref}


WATER = FluidProperties(
    rho1=998.2,
    rho0=999.1,
    gas_constant=461.5,
    heat_of_vaporization=2.257e6,
    p_crit=22565.0,
    vapor_ref_t=373.15,
    vapor_ref_p=101.325,
)

# 원 자료에 인쇄된 R = 287 N·m/(kg·K) 를 그대로 쓰는 변형
WATER_R287 = replace(WATER, gas_constant=287.0)

FLUID_PRESETS: Dict[str, FluidProperties] = {
    "water": WATER,
    "water_r287": WATER_R287,
}


def fluid_preset(name: str) -> FluidProperties:
    """이름으로 매질 프리셋 조회"""
    try:
        return FLUID_PRESETS[name]
    except KeyError:
        raise InputError(f"unknown fluid preset {name!r}; available: {', '.join(sorted(FLUID_PRESETS))}")


def vapor_pressure(fluid: FluidProperties, temperature: float) -> float:
    """적분형 Clausius-Clapeyron 식으로 포화 증기압 (kPa) 계산

    ln p_v 는 1/T 에 대해 기울기 −ΔH_vap/R_s 인 직선이며, 적분 상수는
    보정점 (vapor_ref_t, vapor_ref_p) 에서 정해진다.
    """
    if not temperature > 0:
        raise DomainError(f"temperature must be > 0 K, got {temperature!r}")
    slope = fluid.heat_of_vaporization / fluid.gas_constant
    return fluid.vapor_ref_p * math.exp(slope * (1.0 / fluid.vapor_ref_t - 1.0 / temperature))


def critical_pressure_ratio(pv: float, p_crit: float) -> float:
    """임계 압력비 F_F = 0.96 − 0.28·sqrt(pv/p_crit)"""
    if not p_crit > 0:
        raise DomainError(f"p_crit must be > 0, got {p_crit!r}")
    if not 0 <= pv <= p_crit:
        raise DomainError(f"vapor pressure must be in [0, p_crit={p_crit}], got {pv!r}")
    ff = FF_MAX - (FF_MAX - FF_MIN) * math.sqrt(pv / p_crit)
    # 반올림으로 경계값을 벗어나지 않도록
    return min(max(ff, FF_MIN), FF_MAX)


def choked_pressure_drop(geom: ValveGeometry, p1: float, pv: float, p_crit: float) -> float:
    """초킹 시작 압력차 Δp_T = F_L²·(p1 − F_F·pv)

    p1 < F_F·pv 이면 음수가 될 수 있으며 이때 모든 양의 압력차는 초킹이다.
    """
    if not p1 > 0:
        raise DomainError(f"p1 must be > 0, got {p1!r}")
    ff = critical_pressure_ratio(pv, p_crit)
    return geom.fl ** 2 * (p1 - ff * pv)


def recovery_coefficient(dp_t: float, p1: float, pv: float, p_crit: float) -> float:
    """초킹 압력차로부터 압력 회복 계수 F_L = sqrt(Δp_T / (p1 − F_F·pv))"""
    ff = critical_pressure_ratio(pv, p_crit)
    denom = p1 - ff * pv
    if not denom > 0:
        raise DomainError(f"p1 - F_F*pv must be > 0, got {denom!r}")
    if not dp_t >= 0:
        raise DomainError(f"choked pressure drop must be >= 0, got {dp_t!r}")
    return math.sqrt(dp_t / denom)


def choked_limited_drop(geom: ValveGeometry, p1: float, p2: float, pv: float, p_crit: float) -> float:
    """유량을 실제로 만드는 압력차 min(Δp, max(Δp_T, 0))"""
    dp = p1 - p2
    dp_t = choked_pressure_drop(geom, p1, pv, p_crit)
    if dp < dp_t:
        return dp
    return max(dp_t, 0.0)


def classify_regime(op: OperatingPoint, geom: ValveGeometry, fluid: FluidProperties) -> FlowRegime:
    """운전점의 유동 영역 분류"""
    if op.re_v is None:
        raise InputError("classify_regime requires the valve Reynolds number re_v")
    if op.re_v < LAMINAR_REYNOLDS:
        return FlowRegime.LAMINAR

    pv = vapor_pressure(fluid, op.temperature)
    dp_t = choked_pressure_drop(geom, op.p1, pv, fluid.p_crit)
    if op.dp < dp_t:
        return FlowRegime.NON_CHOKED_TURBULENT
    if op.p2 > pv:
        return FlowRegime.CHOKED_CAVITATION
    return FlowRegime.CHOKED_FLASHING


def orifice_factor(geom: ValveGeometry, dp: ArrayLike, rho1: ArrayLike) -> ArrayLike:
    """단위 면적당 오리피스 유량 C_v·ε/sqrt(1−β⁴)·sqrt(2·Δp·1000/ρ1)

    dp 는 kPa. 면적 곱을 빼고 쓰는 곳(면적 역산, 배치 예측)과 공유한다.
    """
    return (
        geom.discharge_coeff * geom.epsilon / math.sqrt(1.0 - geom.beta ** 4)
        * np.sqrt(2.0 * dp * KPA_TO_PA / rho1)
    )


def orifice_flow(geom: ValveGeometry, p1: float, pvc: float, rho1: float) -> float:
    """박벽 오리피스 체적 유량 (m³/s)"""
    if not rho1 > 0:
        raise DomainError(f"rho1 must be > 0, got {rho1!r}")
    if p1 < pvc:
        raise DomainError(f"orifice flow requires p1 >= pvc, got p1={p1!r}, pvc={pvc!r}")
    return float(geom.area * orifice_factor(geom, p1 - pvc, rho1))


def flow_coefficient(
    op: OperatingPoint,
    fluid: FluidProperties,
    regime: FlowRegime,
    n1: float = DEFAULT_N1,
    fr: Optional[float] = None,
) -> float:
    """유량 계수 C (비초킹 난류 또는 층류 영역)"""
    if regime.is_choked:
        raise NotApplicableError(f"flow coefficient is not defined in the {regime.value} regime")
    if op.qv is None or not op.qv > 0:
        raise InputError(f"flow coefficient requires qv > 0, got {op.qv!r}")
    dp = op.dp
    if not dp > 0:
        raise DomainError(f"flow coefficient requires p1 - p2 > 0, got {dp!r}")

    density_term = math.sqrt((fluid.rho1 / fluid.rho0) / dp)
    if regime is FlowRegime.LAMINAR:
        if fr is None or not 0 < fr <= 1:
            raise DomainError(f"laminar flow coefficient requires 0 < fr <= 1, got {fr!r}")
        return op.qv / (n1 * fr) * density_term
    return op.qv / n1 * density_term
