"""
공압 조절밸브 텔레메트리 시뮬레이터 (DAMADICS 형 19개 고장 카탈로그)

1차 지연 액추에이터 + 오리피스 유량식으로 이루어진 대리 플랜트이다.
고장 효과는 고정된 순서로 합성된다: cv 경로 → 액추에이터 → 유체 → 센서.
적분은 명시적 오일러 (dt ≪ tau, 기본 dt = tau/50).
"""

import logging
import math
import zlib
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.errors import DomainError, SimulationError
from src.mechanism import (
    DensityLaw,
    FluidProperties,
    ValveGeometry,
    choked_limited_drop,
    fluid_preset,
    orifice_flow,
    vapor_pressure,
)

logger = logging.getLogger(__name__)


class FaultId(Enum):
    F1 = "f1"
    F2 = "f2"
    F3 = "f3"
    F4 = "f4"
    F5 = "f5"
    F6 = "f6"
    F7 = "f7"
    F8 = "f8"
    F9 = "f9"
    F10 = "f10"
    F11 = "f11"
    F12 = "f12"
    F13 = "f13"
    F14 = "f14"
    F15 = "f15"
    F16 = "f16"
    F17 = "f17"
    F18 = "f18"
    F19 = "f19"


class Development(Enum):
    ABRUPT = "abrupt"
    SLOWLY_DEVELOPING = "slowly_developing"
    RAPIDLY_DEVELOPING = "rapidly_developing"

    @property
    def label(self) -> str:
        return self.value.replace("_", " ")


@dataclass(frozen=True)
class FaultInfo:
    """고장 카탈로그 항목"""
    description: str
    interval: Tuple[float, float]
    development: Development

    @property
    def interval_label(self) -> str:
        return f"<{self.interval[0]:g},{self.interval[1]:g}>"


_ABRUPT = Development.ABRUPT
_SLOW = Development.SLOWLY_DEVELOPING
_RAPID = Development.RAPIDLY_DEVELOPING

FAULT_CATALOG: Dict[FaultId, FaultInfo] = {
    # 밸브 고장
    FaultId.F1: FaultInfo("Valve clogging", (0.0, 1.0), _ABRUPT),
    FaultId.F2: FaultInfo("Valve plug or valve seat sedimentation", (0.0, 1.0), _SLOW),
    FaultId.F3: FaultInfo("Valve plug or valve seat erosion", (0.0, 1.0), _SLOW),
    FaultId.F4: FaultInfo("Increased of valve or bushing friction", (-1.0, 1.0), _SLOW),
    FaultId.F5: FaultInfo("External leakage (leaky bushing, covers, terminals)", (0.0, 1.0), _SLOW),
    FaultId.F6: FaultInfo("Internal leakage (valve tightness)", (0.0, 1.0), _SLOW),
    FaultId.F7: FaultInfo("Medium evaporation or critical flow", (0.0, 1.0), _ABRUPT),
    # 공압 서보모터 고장
    FaultId.F8: FaultInfo("Twisted servo-motor's piston rod", (0.0, 1.0), _ABRUPT),
    FaultId.F9: FaultInfo("Servo-motor's housing or terminals tightness", (0.0, 1.0), _ABRUPT),
    FaultId.F10: FaultInfo("Servo-motor's diaphragm perforation", (0.0, 1.0), _ABRUPT),
    FaultId.F11: FaultInfo("Servo-motor's spring fault", (0.0, 1.0), _ABRUPT),
    # 포지셔너 고장
    FaultId.F12: FaultInfo("Electro-pneumatic transducer fault", (-1.0, 1.0), _ABRUPT),
    FaultId.F13: FaultInfo("Rod displacement sensor fault", (-1.0, 1.0), _SLOW),
    FaultId.F14: FaultInfo("Pressure sensor fault", (-1.0, 1.0), _ABRUPT),
    FaultId.F15: FaultInfo("Positioner feedback fault", (0.0, 1.0), _ABRUPT),
    # 일반 / 외부 고장
    FaultId.F16: FaultInfo("Positioner supply pressure drop", (0.0, 1.0), _RAPID),
    FaultId.F17: FaultInfo("Unexpected pressure change across the valve", (-1.0, 1.0), _RAPID),
    FaultId.F18: FaultInfo("Fully or partly opened bypass valves", (0.0, 1.0), _ABRUPT),
    FaultId.F19: FaultInfo("Flow rate sensor fault", (-1.0, 1.0), _ABRUPT),
}

DEFAULT_RAMP = {
    Development.SLOWLY_DEVELOPING: 300.0,
    Development.RAPIDLY_DEVELOPING: 30.0,
}


def fault_table_rows() -> List[str]:
    """카탈로그를 `f1  Valve clogging  <0,1>  abrupt` 형식의 행으로"""
    return [
        f"{fid.value:<3} {info.description}  {info.interval_label}  {info.development.label}"
        for fid, info in FAULT_CATALOG.items()
    ]


# ---------------------------------------------------------------------------
# 설정 모델

class _ConfigModel(BaseModel):
    # 오타 난 키를 조용히 무시하지 않도록
    model_config = ConfigDict(extra="forbid")


def _check_time_rows(rows: List[Tuple[float, float]], name: str):
    if not rows:
        raise ValueError(f"{name} needs at least one (time, value) entry")
    times = [r[0] for r in rows]
    if times != sorted(times):
        raise ValueError(f"{name} must be sorted by time")


class FaultSpec(_ConfigModel):
    """주입할 고장 하나"""
    id: FaultId
    intensity: float
    onset: float = Field(default=0.0, ge=0.0)
    development: Optional[Development] = None
    ramp_duration: Optional[float] = None

    @field_validator("id", mode="before")
    @classmethod
    def _lower_id(cls, v):
        return v.lower() if isinstance(v, str) else v

    @field_validator("development", mode="before")
    @classmethod
    def _normalize_development(cls, v):
        return v.strip().lower().replace(" ", "_") if isinstance(v, str) else v

    @model_validator(mode="after")
    def _check(self):
        info = FAULT_CATALOG[self.id]
        lo, hi = info.interval
        if not lo <= self.intensity <= hi:
            raise ValueError(
                f"intensity {self.intensity} outside {info.interval_label} for {self.id.value}"
            )
        if self.development is None:
            self.development = info.development
        if self.development is not Development.ABRUPT:
            if self.ramp_duration is None:
                self.ramp_duration = DEFAULT_RAMP[self.development]
            if not self.ramp_duration > 0:
                raise ValueError(f"ramp_duration must be > 0 for {self.development.label} faults")
        return self


def effective_intensity(f: FaultSpec, t: float) -> float:
    """시각 t 의 실효 고장 강도 (onset 전 0, 급변 또는 선형 램프)"""
    if t < f.onset:
        return 0.0
    if f.development is Development.ABRUPT:
        return f.intensity
    frac = min((t - f.onset) / f.ramp_duration, 1.0)
    return f.intensity * frac


class Profile(_ConfigModel):
    """시간 궤적 (constant | step | sine | table)"""
    type: Literal["constant", "step", "sine", "table"] = "constant"
    value: float = 0.5
    # step: (시작 시각, 값), 값은 다음 시작 시각까지 유지
    steps: List[Tuple[float, float]] = []
    offset: float = 0.5
    amplitude: float = 0.0
    period: float = 1.0
    phase: float = 0.0
    # table: (시각, 값) 구간 선형 보간
    points: List[Tuple[float, float]] = []

    @model_validator(mode="after")
    def _check(self):
        if self.type == "sine" and not self.period > 0:
            raise ValueError("sine profile period must be > 0")
        if self.type == "step":
            _check_time_rows(self.steps, "steps")
        if self.type == "table":
            _check_time_rows(self.points, "points")
        return self

    def bounds(self) -> Tuple[float, float]:
        """궤적이 가질 수 있는 (최솟값, 최댓값)"""
        if self.type == "constant":
            return self.value, self.value
        if self.type == "sine":
            return self.offset - abs(self.amplitude), self.offset + abs(self.amplitude)
        values = [v for _, v in (self.steps if self.type == "step" else self.points)]
        return min(values), max(values)

    def at(self, t: float) -> float:
        if self.type == "constant":
            return self.value
        if self.type == "sine":
            return self.offset + self.amplitude * math.sin(2.0 * math.pi * t / self.period + self.phase)
        if self.type == "step":
            current = self.steps[0][1]
            for start, value in self.steps:
                if t >= start:
                    current = value
            return current
        times, values = zip(*self.points)
        return float(np.interp(t, times, values))


class BasePressures(_ConfigModel):
    p1: float = Field(default=800.0, gt=0)
    p2: float = Field(default=400.0, ge=0)

    @model_validator(mode="after")
    def _check(self):
        if self.p1 < self.p2:
            raise ValueError(f"base p1 ({self.p1}) must be >= p2 ({self.p2})")
        return self


class Characteristic(_ConfigModel):
    type: Literal["linear", "equal_percentage"] = "linear"
    rangeability: float = Field(default=50.0, gt=1)

    def __call__(self, x: float) -> float:
        if self.type == "linear":
            return x
        return self.rangeability ** (x - 1.0)


class GeometryConfig(_ConfigModel):
    """유로 면적을 제외한 밸브 형상 (면적은 행정에서 계산)"""
    beta: float = 0.5
    discharge_coeff: float = 0.95
    epsilon: float = 1.0
    fl: float = 0.9

    def to_geometry(self, area: float = 0.0) -> ValveGeometry:
        return ValveGeometry(area=area, beta=self.beta, discharge_coeff=self.discharge_coeff,
                             epsilon=self.epsilon, fl=self.fl)

    @model_validator(mode="after")
    def _check(self):
        self.to_geometry()
        return self


class DensityLawConfig(_ConfigModel):
    enabled: bool = True
    alpha_t: float = 2.1e-4
    t_ref: float = 293.15

    def to_law(self, fluid: FluidProperties) -> Optional[DensityLaw]:
        if not self.enabled:
            return None
        return DensityLaw(rho_ref=fluid.rho1, alpha_t=self.alpha_t, t_ref=self.t_ref)


class NoiseStd(_ConfigModel):
    """채널별 센서 잡음 표준편차 (채널 단위)"""
    x: float = Field(default=0.0, ge=0)
    p1: float = Field(default=0.0, ge=0)
    p2: float = Field(default=0.0, ge=0)
    q: float = Field(default=0.0, ge=0)


class FaultTunables(_ConfigModel):
    """고장 효과 크기 (설계 선택값)"""
    sedimentation_gain: float = 0.5
    erosion_gain: float = 0.5
    friction_tau_gain: float = 4.0
    friction_band: float = 0.02
    external_leak_drop: float = 0.05
    internal_leak_fraction: float = 0.05
    spring_offset: float = 0.1
    transducer_bias: float = 0.1
    rod_sensor_bias: float = 0.1
    pressure_sensor_bias: float = 0.02
    hold_threshold: float = 0.5
    supply_drop_gain: float = 0.9
    pressure_shift: float = 0.1
    bypass_fraction: float = 0.2
    flow_sensor_bias: float = 0.05


class SimConfig(_ConfigModel):
    """시뮬레이션 설정 (JSON 스키마는 README 참조)"""
    dt: Optional[float] = Field(default=None, gt=0)   # 없으면 tau/50
    duration: float = Field(gt=0)
    seed: int = 0
    cv_profile: Profile = Profile()
    base_pressures: BasePressures = BasePressures()
    base_temp: float = Field(default=293.15, gt=0)
    p1_profile: Optional[Profile] = None
    temp_profile: Optional[Profile] = None
    tau: float = Field(default=1.0, gt=0)
    ac_max: float = Field(default=5e-4, gt=0)
    x0: Optional[float] = Field(default=None, ge=0, le=1)
    characteristic: Characteristic = Characteristic()
    geometry: GeometryConfig = GeometryConfig()
    fluid: Union[str, Dict[str, float]] = "water"
    density_law: Optional[DensityLawConfig] = None
    noise_std: NoiseStd = NoiseStd()
    tunables: FaultTunables = FaultTunables()
    faults: List[FaultSpec] = []

    @model_validator(mode="after")
    def _check(self):
        if self.dt is None:
            self.dt = self.tau / 50.0
        if self.duration < self.dt:
            raise ValueError(f"duration ({self.duration}) must be >= dt ({self.dt})")
        ids = [f.id for f in self.faults]
        duplicated = sorted({i.value for i in ids if ids.count(i) > 1})
        if duplicated:
            raise ValueError(f"at most one fault per id, duplicated: {', '.join(duplicated)}")
        self._check_operating_range(self.fluid_properties())
        return self

    def _check_operating_range(self, fluid: FluidProperties):
        """프로파일 전 구간에서 유량식이 정의되는지 확인"""
        if self.p1_profile is not None:
            p1_min, _ = self.p1_profile.bounds()
            if not p1_min > 0:
                raise ValueError(f"p1_profile minimum must be > 0 kPa, got {p1_min!r}")

        if self.temp_profile is not None:
            t_min, t_max = self.temp_profile.bounds()
            field = "temp_profile"
        else:
            t_min = t_max = self.base_temp
            field = "base_temp"
        if not t_min > 0:
            raise ValueError(f"{field} minimum must be > 0 K, got {t_min!r}")
        pv = vapor_pressure(fluid, t_max)
        if pv > fluid.p_crit:
            raise ValueError(
                f"{field} maximum {t_max!r} K gives vapor pressure {pv:.6g} kPa above p_crit={fluid.p_crit}"
            )
        if self.density_law is not None:
            law = self.density_law.to_law(fluid)
            if law is not None:
                law.density(t_min)
                law.density(t_max)

    def fluid_properties(self) -> FluidProperties:
        if isinstance(self.fluid, str):
            return fluid_preset(self.fluid)
        try:
            return FluidProperties(**self.fluid)
        except TypeError as e:
            raise ValueError(f"invalid fluid properties: {e}")

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.duration / self.dt + 1e-9))


# ---------------------------------------------------------------------------
# 상태와 기록

@dataclass(frozen=True)
class SimState:
    x: float
    last_cv: Optional[float] = None      # F15 유지용 직전 cv_eff
    band_anchor: Optional[float] = None  # F4 히스테리시스 기준점


@dataclass(frozen=True)
class TelemetryRecord:
    """한 샘플"""
    t: float
    cv: float
    x: float
    x_sensed: float
    p1: float
    p1_sensed: float
    p2: float
    p2_sensed: float
    temp: float
    q: float
    q_sensed: float
    active_faults: Tuple[Tuple[str, float], ...] = ()


class NoiseChannels:
    """채널별 독립 난수 스트림

    채널 이름의 CRC32 를 spawn key 로 쓰므로 채널을 추가해도 기존 채널의
    스트림은 변하지 않는다.
    """

    def __init__(self, seed: int, stds: NoiseStd):
        self.stds = stds.model_dump()
        self._streams = {
            name: np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(zlib.crc32(name.encode()),)))
            for name in self.stds
        }

    def add(self, name: str, value: float) -> float:
        std = self.stds[name]
        if std > 0:
            return value + std * float(self._streams[name].standard_normal())
        return value


def _clip(v: float, lo: float, hi: float) -> float:
    return min(max(v, lo), hi)


class ValveSimulator:
    """대리 액추에이터 + 밸브 플랜트"""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.fluid = cfg.fluid_properties()
        self.geometry = cfg.geometry.to_geometry()
        self.density_law = cfg.density_law.to_law(self.fluid) if cfg.density_law else None
        self.faults: Dict[FaultId, FaultSpec] = {f.id: f for f in cfg.faults}
        if cfg.dt > cfg.tau / 10:
            logger.warning(f"dt={cfg.dt} is coarse for tau={cfg.tau}; explicit Euler prefers dt <= tau/50")

    def command(self, t: float) -> float:
        return _clip(self.cfg.cv_profile.at(t), 0.0, 1.0)

    def initial_state(self) -> SimState:
        x0 = self.cfg.x0 if self.cfg.x0 is not None else self.command(0.0)
        return SimState(x=x0)

    def _intensities(self, t: float) -> Dict[FaultId, float]:
        active = {}
        for fid, spec in self.faults.items():
            z = effective_intensity(spec, t)
            if z != 0.0:
                active[fid] = z
        return active

    def step(self, state: SimState, cv: float, t: float, rng: NoiseChannels,
             step_index: int = 0) -> Tuple[SimState, TelemetryRecord]:
        """시각 t 의 기록을 만들고 상태를 t + dt 로 적분"""
        if not (math.isfinite(state.x) and math.isfinite(cv)):
            raise SimulationError(f"non-finite state x={state.x!r}, cv={cv!r}", step_index, t)
        try:
            return self._advance(state, cv, t, rng, step_index)
        except DomainError as e:
            raise SimulationError(str(e), step_index, t) from e

    def _advance(self, state: SimState, cv: float, t: float, rng: NoiseChannels,
                 step_index: int) -> Tuple[SimState, TelemetryRecord]:
        cfg = self.cfg
        tn = cfg.tunables
        z = self._intensities(t)

        # cv 경로
        cv_eff = cv
        if FaultId.F12 in z:
            cv_eff += tn.transducer_bias * z[FaultId.F12]
        if FaultId.F8 in z:
            cv_eff *= 1.0 - z[FaultId.F8]
        if FaultId.F11 in z:
            cv_eff += tn.spring_offset * z[FaultId.F11]
        cv_eff = _clip(cv_eff, 0.0, 1.0)
        if FaultId.F15 in z and z[FaultId.F15] > tn.hold_threshold and state.last_cv is not None:
            cv_eff = state.last_cv
        last_cv = cv_eff

        band_anchor = None
        if FaultId.F4 in z:
            band = tn.friction_band * abs(z[FaultId.F4])
            band_anchor = state.band_anchor if state.band_anchor is not None else cv_eff
            if cv_eff > band_anchor + band:
                band_anchor = cv_eff - band
            elif cv_eff < band_anchor - band:
                band_anchor = cv_eff + band
            cv_eff = band_anchor

        # 액추에이터
        tau_eff = cfg.tau
        if FaultId.F4 in z:
            tau_eff *= 1.0 + tn.friction_tau_gain * abs(z[FaultId.F4])
        if FaultId.F16 in z:
            tau_eff /= 1.0 - tn.supply_drop_gain * z[FaultId.F16]
        gain = 1.0
        for fid in (FaultId.F9, FaultId.F10):
            if fid in z:
                gain *= 1.0 - z[fid]
        x_max = 1.0 - z[FaultId.F1] if FaultId.F1 in z else 1.0
        x = _clip(state.x, 0.0, x_max)

        # 유체
        p1 = cfg.p1_profile.at(t) if cfg.p1_profile is not None else cfg.base_pressures.p1
        p2 = cfg.base_pressures.p2
        temp = cfg.temp_profile.at(t) if cfg.temp_profile is not None else cfg.base_temp
        if FaultId.F5 in z:
            p1 *= 1.0 - tn.external_leak_drop * z[FaultId.F5]
        if FaultId.F17 in z:
            p1 *= 1.0 + tn.pressure_shift * z[FaultId.F17]
        rho = self.density_law.density(temp) if self.density_law is not None else self.fluid.rho1

        pv = vapor_pressure(self.fluid, temp)
        if FaultId.F7 in z and p1 > pv:
            pv = min(pv + z[FaultId.F7] * (p1 - pv), self.fluid.p_crit)
        dp = choked_limited_drop(self.geometry, p1, min(p2, p1), pv, self.fluid.p_crit)

        area = cfg.ac_max * cfg.characteristic(x)
        if FaultId.F2 in z:
            area *= 1.0 - tn.sedimentation_gain * z[FaultId.F2]
        if FaultId.F3 in z:
            area *= 1.0 + tn.erosion_gain * z[FaultId.F3]
        q = orifice_flow(self.geometry.with_area(area), p1, p1 - dp, rho)
        if FaultId.F6 in z or FaultId.F18 in z:
            q_full = orifice_flow(self.geometry.with_area(cfg.ac_max), p1, p1 - dp, rho)
            if FaultId.F6 in z:
                q += z[FaultId.F6] * tn.internal_leak_fraction * q_full
            if FaultId.F18 in z:
                q += z[FaultId.F18] * tn.bypass_fraction * q_full

        # 센서
        x_sensed = x
        if FaultId.F13 in z:
            x_sensed += tn.rod_sensor_bias * z[FaultId.F13]
        p1_sensed = p1
        if FaultId.F14 in z:
            p1_sensed += tn.pressure_sensor_bias * z[FaultId.F14] * p1
        q_sensed = q
        if FaultId.F19 in z:
            q_sensed += tn.flow_sensor_bias * z[FaultId.F19] * q

        record = TelemetryRecord(
            t=t,
            cv=cv,
            x=x,
            x_sensed=rng.add("x", x_sensed),
            p1=p1,
            p1_sensed=rng.add("p1", p1_sensed),
            p2=p2,
            p2_sensed=rng.add("p2", p2),
            temp=temp,
            q=q,
            q_sensed=rng.add("q", q_sensed),
            active_faults=tuple((fid.value, zi) for fid, zi in z.items()),
        )

        x_next = _clip(x + cfg.dt / tau_eff * (gain * cv_eff - x), 0.0, x_max)
        values = (x_next, q, record.x_sensed, record.p1_sensed, record.p2_sensed, record.q_sensed)
        if not all(math.isfinite(v) for v in values):
            raise SimulationError("non-finite simulator state", step_index, t)
        return SimState(x=x_next, last_cv=last_cv, band_anchor=band_anchor), record

    def run(self) -> List[TelemetryRecord]:
        """전체 기간 시뮬레이션"""
        cfg = self.cfg
        rng = NoiseChannels(cfg.seed, cfg.noise_std)
        state = self.initial_state()
        records = []
        for k in range(cfg.n_steps):
            t = k * cfg.dt
            state, record = self.step(state, self.command(t), t, rng, step_index=k)
            records.append(record)
        logger.info(f"Simulated {len(records)} records (dt={cfg.dt}, faults={[f.id.value for f in cfg.faults]})")
        return records


def run(cfg: SimConfig) -> List[TelemetryRecord]:
    return ValveSimulator(cfg).run()


def load_sim_config(path: str) -> SimConfig:
    """JSON 시뮬레이션 설정 로드 (파싱/검증 오류는 그대로 전파)"""
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    return SimConfig.model_validate_json(text)
