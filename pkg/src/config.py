import json
import logging
import os
from typing import Dict, Any, Optional

from dotenv import load_dotenv

load_dotenv()


class Config:
    """설정 파일 관리 클래스"""

    def __init__(self, config_path: str = "config.json"):
        self.config_path = config_path
        self.config = self._load_config()
        self._setup_logging()

    def _load_config(self) -> Dict[str, Any]:
        """설정 파일 로드 (없는 키는 기본값으로 채움)"""
        defaults = self._get_default_config()
        try:
            with open(self.config_path, 'r', encoding='utf-8') as f:
                loaded = json.load(f)
        except FileNotFoundError:
            print(f"Warning: Config file {self.config_path} not found. Using defaults.")
            return defaults
        except json.JSONDecodeError as e:
            print(f"Error: Invalid JSON in config file: {e}")
            return defaults
        return self._merge(defaults, loaded)

    @staticmethod
    def _merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
        """섹션 단위 재귀 병합"""
        merged = dict(base)
        for key, value in override.items():
            if isinstance(value, dict) and isinstance(merged.get(key), dict):
                merged[key] = Config._merge(merged[key], value)
            else:
                merged[key] = value
        return merged

    def _get_default_config(self) -> Dict[str, Any]:
        """기본 설정 반환"""
        return {
            "logging": {
                "level": "INFO",
                "format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
                "file": None
            },
            "lssvm": {
                "default_kernel": "rbf",
                "default_c": 1000.0,
                "default_sigma": None,
                "default_degree": 2,
                "default_offset": 1.0,
                "kkt_tolerance": 1e-8,
                "zero_sum_tolerance": 1e-10,
                "grid_folds": 5,
                "grid_c": [1.0, 10.0, 100.0, 1000.0, 10000.0, 100000.0, 1000000.0],
                "grid_sigma_scale": [0.25, 0.5, 1.0, 2.0, 4.0]
            },
            "hybrid": {
                "fluid": "water",
                "geometry": {
                    "discharge_coeff": 0.95,
                    "epsilon": 1.0,
                    "beta": 0.5,
                    "fl": 0.9
                },
                "density_law": {
                    "enabled": True,
                    "alpha_t": 2.1e-4,
                    "t_ref": 293.15
                }
            },
            "simulator": {
                "default_seed": 0
            },
            "cli": {
                "float_format": "%.17g"
            }
        }

    def _setup_logging(self):
        """로깅 설정"""
        logging_config = self.config.get("logging", {})

        # 환경 변수가 설정 파일보다 우선
        level_str = os.getenv("LOG_LEVEL") or logging_config.get("level", "INFO")
        level = getattr(logging, level_str.upper(), logging.INFO)

        format_str = logging_config.get("format", "%(asctime)s - %(name)s - %(levelname)s - %(message)s")

        logging.basicConfig(
            level=level,
            format=format_str,
            force=True  # 기존 설정 덮어쓰기
        )

        # 파일 로깅 설정 (선택사항)
        log_file = logging_config.get("file")
        if log_file:
            file_handler = logging.FileHandler(log_file)
            file_handler.setLevel(level)
            file_handler.setFormatter(logging.Formatter(format_str))
            logging.getLogger().addHandler(file_handler)

    def get(self, key: str, default: Any = None) -> Any:
        """설정 값 가져오기 (점 표기법 지원)"""
        keys = key.split('.')
        value = self.config

        for k in keys:
            if isinstance(value, dict) and k in value:
                value = value[k]
            else:
                return default

        return value

    def get_lssvm_config(self) -> Dict[str, Any]:
        """LSSVM 기본값 반환"""
        return self.get("lssvm", {})

    def get_hybrid_config(self) -> Dict[str, Any]:
        """하이브리드 모델 기본값 반환"""
        return self.get("hybrid", {})

    def get_default_seed(self) -> int:
        """시뮬레이터 기본 시드 (VALVE_SEED 환경 변수 우선)"""
        env_seed: Optional[str] = os.getenv("VALVE_SEED")
        if env_seed:
            return int(env_seed)
        return int(self.get("simulator.default_seed", 0))


# 전역 설정 인스턴스
config = Config(os.getenv("VALVE_CONFIG", "config.json"))
