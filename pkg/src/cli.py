"""
명령줄 하네스: simulate / train / predict / evaluate / faults

종료 코드: 0 성공, 2 입력/검증 오류, 3 입출력 오류.
결과(보고서, 고장 표, 기록 수)는 stdout, 로그는 stderr 로 나간다.
"""

import argparse
import json
import logging
import os
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from src import hybrid, simulator, telemetry
from src.config import config
from src.errors import ValveModelError, ZeroTargetError
from src.hybrid import FeatureSet
from src.lssvm import KernelSpec, grid_search
from src.mechanism import DensityLaw, FluidProperties, ValveGeometry, fluid_preset
from src.metrics import EvaluationReport, evaluate

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_IO = 3


def _non_negative_int(value: str) -> int:
    n = int(value)
    if n < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {n}")
    return n


def _check_paths(inputs: Sequence[str] = (), outputs: Sequence[str] = ()):
    """작업 시작 전 입력 파일과 출력 디렉터리 확인"""
    for path in inputs:
        if not os.path.isfile(path):
            raise FileNotFoundError(f"input file not found: {path}")
    for path in outputs:
        directory = os.path.dirname(os.path.abspath(path))
        if not os.path.isdir(directory):
            raise FileNotFoundError(f"output directory not found: {directory}")
        if not os.access(directory, os.W_OK):
            raise PermissionError(f"output directory not writable: {directory}")


# ---------------------------------------------------------------------------
# simulate

def cmd_simulate(args: argparse.Namespace) -> int:
    """시뮬레이션 설정으로 텔레메트리 CSV 생성"""
    _check_paths([args.config], [args.out])
    cfg = simulator.load_sim_config(args.config)
    if args.seed is not None:
        cfg = cfg.model_copy(update={"seed": args.seed})
    records = simulator.run(cfg)
    telemetry.write_telemetry(records, args.out)
    print(f"{len(records)} records written to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train

def _mechanism_params(sim_config: Optional[str]) -> Tuple[ValveGeometry, FluidProperties, Optional[DensityLaw]]:
    """하이브리드 모델의 밸브 형상/유체/밀도 법칙 (시뮬레이션 설정 우선)"""
    if sim_config:
        cfg = simulator.load_sim_config(sim_config)
        fluid = cfg.fluid_properties()
        law = cfg.density_law.to_law(fluid) if cfg.density_law is not None else None
        return cfg.geometry.to_geometry(), fluid, law

    hybrid_config = config.get_hybrid_config()
    fluid = fluid_preset(hybrid_config.get("fluid", "water"))
    geom = ValveGeometry(area=0.0, **hybrid_config.get("geometry", {}))
    law_config = hybrid_config.get("density_law", {})
    law = None
    if law_config.get("enabled", False):
        law = DensityLaw(rho_ref=fluid.rho1, alpha_t=law_config.get("alpha_t", 2.1e-4),
                         t_ref=law_config.get("t_ref", 293.15))
    return geom, fluid, law


def _load_training_data(path: str, fs: FeatureSet, lagged: int,
                        skip_zero_targets: bool) -> Tuple[np.ndarray, np.ndarray]:
    frame = telemetry.read_table(path)
    x, labels = telemetry.feature_matrix(frame, fs.columns, lagged)
    q = telemetry.target_vector(frame)
    logger.info(f"Training columns: {', '.join(labels)}")
    if skip_zero_targets:
        keep = q != 0
        if not np.all(keep):
            logger.info(f"Skipping {int(np.sum(~keep))} zero-target rows")
        x, q = x[keep], q[keep]
    return x, q


def cmd_train(args: argparse.Namespace) -> int:
    """하이브리드 또는 직접 모델 학습 후 JSON 저장"""
    inputs = [args.data] + ([args.sim_config] if args.sim_config else [])
    _check_paths(inputs, [args.model_out])
    fs = FeatureSet(args.features)
    lssvm_config = config.get_lssvm_config()
    c = args.c if args.c is not None else float(lssvm_config.get("default_c", 1000.0))
    sigma = args.sigma if args.sigma is not None else lssvm_config.get("default_sigma")
    kernel = KernelSpec.from_name(args.kernel, sigma, args.degree, args.offset)
    seed = args.seed if args.seed is not None else config.get_default_seed()

    x, q = _load_training_data(args.data, fs, args.lagged, args.skip_zero_targets)
    if not args.no_report:
        zeros = np.flatnonzero(q == 0)
        if zeros.size:
            raise ZeroTargetError(int(zeros[0]))

    if args.mode == "direct":
        if args.grid_search:
            c, kernel = grid_search(x, q, kernel, seed=seed)
        model = hybrid.fit_direct(x, q, fs, kernel, c, lagged=args.lagged)
    else:
        geom, fluid, law = _mechanism_params(args.sim_config)
        samples = hybrid.samples_from_arrays(x, q)
        if args.grid_search:
            targets = hybrid.area_targets(x, q, x[:, 1], fs, geom, fluid, law)
            c, kernel = grid_search(x, targets, kernel, seed=seed)
        model = hybrid.fit_hybrid(samples, fs, geom, fluid, kernel, c, density_law=law, lagged=args.lagged)

    report: Optional[EvaluationReport] = None
    if not args.no_report:
        report = evaluate(q, hybrid.predict_many(model, x))

    telemetry.atomic_write_text(args.model_out, hybrid.dump_flow_model(model))
    logger.info(f"Model written to {args.model_out}")
    if report is not None:
        _print_report(report, fs.label)
    return EXIT_OK


# ---------------------------------------------------------------------------
# predict / evaluate

def cmd_predict(args: argparse.Namespace) -> int:
    """입력 CSV 에 q_pred 컬럼을 덧붙여 저장"""
    _check_paths([args.model, args.data], [args.out])
    model = hybrid.load_flow_model(args.model)
    frame = telemetry.read_table(args.data)
    x, _ = telemetry.feature_matrix(frame, model.feature_set.columns, model.lagged)
    frame["q_pred"] = hybrid.predict_many(model, x)
    telemetry.write_frame(frame, args.out)
    print(f"{len(frame)} predictions written to {args.out}")
    return EXIT_OK


def _evaluation_vectors(truth_path: str, pred_path: Optional[str]) -> Tuple[np.ndarray, np.ndarray]:
    truth = telemetry.read_table(truth_path)
    y = telemetry.target_vector(truth, "q")
    if pred_path is None:
        return y, telemetry.target_vector(truth, "q_pred")
    yhat = telemetry.target_vector(telemetry.read_table(pred_path), "q_pred")
    if y.shape[0] != yhat.shape[0]:
        raise ValueError(f"row count mismatch: {truth_path} has {y.shape[0]}, {pred_path} has {yhat.shape[0]}")
    return y, yhat


def cmd_evaluate(args: argparse.Namespace) -> int:
    """q 대 q_pred 정확도 보고"""
    _check_paths([args.truth] + ([args.pred] if args.pred else []))
    y, yhat = _evaluation_vectors(args.truth, args.pred)
    if args.skip_zero_targets:
        keep = y != 0
        y, yhat = y[keep], yhat[keep]
    _print_report(evaluate(y, yhat), args.label)
    return EXIT_OK


def _print_report(report: EvaluationReport, label: str):
    print(report.to_table(label))
    print()
    print(EvaluationReport.CSV_HEADER)
    print(report.to_csv_line())


def cmd_faults(args: argparse.Namespace) -> int:
    """고장 카탈로그 19행 출력"""
    for row in simulator.fault_table_rows():
        print(row)
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    lssvm_config = config.get_lssvm_config()
    parser = argparse.ArgumentParser(prog="valve", description="Grey-box control valve modeling toolkit")
    commands = parser.add_subparsers(dest="command", required=True)

    sim = commands.add_parser("simulate", help="고장 주입 텔레메트리 생성")
    sim.add_argument("config", help="시뮬레이션 설정 JSON")
    sim.add_argument("out", help="출력 텔레메트리 CSV")
    sim.add_argument("--seed", type=int, default=None, help="설정 파일의 seed 덮어쓰기")
    sim.set_defaults(handler=cmd_simulate)

    train = commands.add_parser("train", help="하이브리드/직접 모델 학습")
    train.add_argument("data", help="텔레메트리 CSV")
    train.add_argument("model_out", help="출력 모델 JSON")
    train.add_argument("--features", choices=[f.value for f in FeatureSet], default=FeatureSet.P1P2X.value)
    train.add_argument("--mode", choices=["hybrid", "direct"], default="hybrid",
                       help="hybrid: 면적 f(x) 학습, direct: Q 직접 학습")
    train.add_argument("--kernel", choices=["rbf", "linear", "poly"],
                       default=lssvm_config.get("default_kernel", "rbf"))
    train.add_argument("--sigma", type=float, default=None, help="RBF 폭 (기본: 중앙값 휴리스틱)")
    train.add_argument("--c", type=float, default=None, help="정규화 계수 C")
    train.add_argument("--degree", type=int, default=lssvm_config.get("default_degree", 2))
    train.add_argument("--offset", type=float, default=lssvm_config.get("default_offset", 1.0))
    train.add_argument("--lagged", type=_non_negative_int, default=0, help="직전 k 샘플 특성 덧붙이기")
    train.add_argument("--seed", type=int, default=None, help="그리드 탐색 fold 분할 시드")
    train.add_argument("--skip-zero-targets", action="store_true", help="q = 0 행 제외")
    train.add_argument("--grid-search", action="store_true", help="k-fold 로 C, sigma 선택")
    train.add_argument("--no-report", action="store_true", help="학습 데이터 평가 생략")
    train.add_argument("--sim-config", default=None, help="밸브 형상/유체를 가져올 시뮬레이션 설정")
    train.set_defaults(handler=cmd_train)

    pred = commands.add_parser("predict", help="q_pred 컬럼 추가")
    pred.add_argument("model", help="모델 JSON")
    pred.add_argument("data", help="입력 CSV")
    pred.add_argument("out", help="출력 CSV")
    pred.set_defaults(handler=cmd_predict)

    ev = commands.add_parser("evaluate", help="RMSE / MAPE / Err_max")
    ev.add_argument("truth", help="q 컬럼이 있는 CSV (q_pred 도 있으면 단일 파일 모드)")
    ev.add_argument("pred", nargs="?", default=None, help="q_pred 컬럼이 있는 CSV")
    ev.add_argument("--skip-zero-targets", action="store_true", help="q = 0 행 제외")
    ev.add_argument("--label", default="q_pred", help="보고서 행 이름")
    ev.set_defaults(handler=cmd_evaluate)

    faults = commands.add_parser("faults", help="고장 카탈로그 출력")
    faults.set_defaults(handler=cmd_faults)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command == "train":
        if args.sigma is not None and args.kernel != "rbf":
            parser.error("--sigma only applies to --kernel rbf")
        if args.mode == "direct" and args.sim_config:
            parser.error("--sim-config only applies to --mode hybrid")

    try:
        return args.handler(args)
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return EXIT_IO
    except (ValveModelError, ValidationError, ValueError, KeyError, json.JSONDecodeError) as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_INPUT
