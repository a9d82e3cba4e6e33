#!/usr/bin/env python3
"""
Grey-box Valve Toolkit - Main Entry Point

기계론적 조절밸브 유량식과 LSSVM 회귀를 직렬로 결합한 그레이박스 밸브 모델,
19개 고장을 주입하는 액추에이터 텔레메트리 시뮬레이터, 예측 정확도 평가 도구입니다.

사용법:
    python main.py simulate configs/sine_noiseless.json telemetry.csv
    python main.py train telemetry.csv model.json --features p1p2x --c 1e6
    python main.py predict model.json telemetry.csv predicted.csv
    python main.py evaluate predicted.csv
    python main.py faults
"""

import sys

from dotenv import load_dotenv

load_dotenv()

from src.cli import main  # noqa: E402  (.env 가 설정 경로를 정하므로 먼저 로드)

if __name__ == "__main__":
    sys.exit(main())
