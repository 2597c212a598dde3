import argparse
import logging
from typing import Callable, Dict, List, Optional

from app.config.presets import NSE_FORCING_VARIANTS, NSE_RE_VARIANTS, PRESET_NAMES
from app.domain.controller.experiment_controller import experiment_controller
from app.domain.schema.error_schema import ConfigError, MultiPdeError
from app.domain.schema.physics_schema import ABLATION_VARIANTS, SystemTag

logger = logging.getLogger(__name__)

SYSTEMS = [tag.value for tag in SystemTag]
VARIANTS = ["full", *ABLATION_VARIANTS]


def _add_config_args(parser: argparse.ArgumentParser, system_required: bool = False) -> None:
    parser.add_argument("--system", choices=SYSTEMS, required=system_required)
    parser.add_argument("--config", help="TOML/JSON 실행 설정 문서")
    parser.add_argument("--preset", help=f"paper 또는 {', '.join(PRESET_NAMES)}")
    parser.add_argument("--seed", type=int)


def _seed_overrides(args: argparse.Namespace) -> Dict:
    return {"seed": args.seed} if getattr(args, "seed", None) is not None else {}


def _system_from_data(args: argparse.Namespace) -> Optional[str]:
    """--system 이 없고 설정 문서도 없으면 데이터셋 메타데이터에서 system 결정"""
    if args.system or args.config:
        return args.system
    return experiment_controller.dataset_repository.read_meta(args.data).system.tag.value


# ========== generate ==========

def generate(args: argparse.Namespace) -> int:
    logger.info(f"🔧 generate 진입: system={args.system}, preset={args.preset}")
    overrides = experiment_controller.variant_overrides(forcing_variant=args.forcing_variant, re=args.re)
    config = experiment_controller.run_config(
        args.config, args.preset, args.system, {**overrides, **_seed_overrides(args)}
    )
    if args.re_sweep:
        if args.re is not None:
            raise ConfigError("--re and --re-sweep are mutually exclusive")
        experiment_controller.generate_re_sweep(config, args.out or config.output_dir)
        return 0
    experiment_controller.generate(config, args.out or config.output_dir)
    return 0


# ========== train ==========

def train(args: argparse.Namespace) -> int:
    logger.info(f"🔧 train 진입: data={args.data}, variant={args.ablate or 'config'}")
    overrides = experiment_controller.variant_overrides(epochs=args.epochs)
    config = experiment_controller.run_config(
        args.config, args.preset, _system_from_data(args), {**overrides, **_seed_overrides(args)}
    )
    experiment_controller.train(
        config, args.data, args.out or config.output_dir,
        variant=args.ablate, from_checkpoint=args.from_checkpoint,
    )
    return 0


# ========== evaluate ==========

def evaluate(args: argparse.Namespace) -> int:
    logger.info(f"🔧 evaluate 진입: checkpoint={args.checkpoint}, data={args.data}")
    eval_config = None
    if args.config or args.preset:
        eval_config = experiment_controller.run_config(args.config, args.preset, _system_from_data(args)).evaluate
    report = experiment_controller.evaluate(args.checkpoint, args.data, args.out, eval_config, spectrum=args.spectrum)
    if report.diverged:
        logger.warning(f"⚠️ {report.diverged}개 궤적이 롤아웃 도중 발산 (HCT 는 발산 직전까지 집계)")
    return 0


# ========== ablate ==========

def ablate(args: argparse.Namespace) -> int:
    variants = args.variants or VARIANTS
    logger.info(f"🔧 ablate 진입: {', '.join(variants)}")
    overrides = experiment_controller.variant_overrides(epochs=args.epochs)
    config = experiment_controller.run_config(
        args.config, args.preset, _system_from_data(args), {**overrides, **_seed_overrides(args)}
    )
    frame = experiment_controller.ablate(config, args.data, args.out or config.output_dir, variants)
    logger.info("📊 ablation 결과\n" + frame.to_string(index=False))
    return 0


# ========== run ==========

def run(args: argparse.Namespace) -> int:
    logger.info(f"🔧 run 진입: system={args.system}, preset={args.preset}")
    overrides = experiment_controller.variant_overrides(
        forcing_variant=args.forcing_variant, re=args.re, epochs=args.epochs
    )
    config = experiment_controller.run_config(
        args.config, args.preset, args.system, {**overrides, **_seed_overrides(args)}
    )
    experiment_controller.run(config, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="multipde", description="MultiPDE 하이브리드 솔버 실험 CLI")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="기준 해 생성 → MPD1 데이터셋")
    _add_config_args(p)
    p.add_argument("--out")
    p.add_argument("--forcing-variant", choices=list(NSE_FORCING_VARIANTS))
    p.add_argument("--re", type=float)
    p.add_argument("--re-sweep", action="store_true",
                   help=f"Re 별 데이터셋 생성 ({','.join(f'{re:g}' for re in NSE_RE_VARIANTS)})")
    p.set_defaults(handler=generate)

    p = sub.add_parser("train", help="데이터셋으로 모델 학습 → checkpoint.mpk, history.csv")
    _add_config_args(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.add_argument("--from-checkpoint")
    p.add_argument("--ablate", choices=VARIANTS)
    p.add_argument("--epochs", type=int)
    p.set_defaults(handler=train)

    p = sub.add_parser("evaluate", help="체크포인트 평가 → metrics.json, pcc.csv")
    _add_config_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--spectrum", action="store_true")
    p.set_defaults(handler=evaluate)

    p = sub.add_parser("ablate", help="variant 별 train + evaluate → ablation.csv")
    _add_config_args(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.add_argument("--variants", nargs="+", choices=VARIANTS)
    p.add_argument("--epochs", type=int)
    p.set_defaults(handler=ablate)

    p = sub.add_parser("run", help="generate → train → evaluate")
    _add_config_args(p)
    p.add_argument("--out")
    p.add_argument("--forcing-variant", choices=list(NSE_FORCING_VARIANTS))
    p.add_argument("--re", type=float)
    p.add_argument("--epochs", type=int)
    p.set_defaults(handler=run)
    return parser


def dispatch(argv: Optional[List[str]] = None) -> int:
    """서브커맨드 실행 후 exit code 반환 (설정 오류 2, 발산 3)"""
    args = build_parser().parse_args(argv)
    handler: Callable[[argparse.Namespace], int] = args.handler
    try:
        return handler(args)
    except MultiPdeError as e:
        logger.error(f"❌ {args.command} 실패 ({type(e).__name__}): {e}")
        checkpoint_path = getattr(e, "checkpoint_path", None)
        if checkpoint_path:
            logger.error(f"❌ 마지막 체크포인트: {checkpoint_path}")
        return e.exit_code
