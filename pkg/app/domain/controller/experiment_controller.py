import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import pandas as pd

from app.config.presets import NSE_FORCING_VARIANTS, NSE_RE_VARIANTS
from app.domain.model.multipde_model import MultiPdeModel
from app.domain.repository.checkpoint_repository import Checkpoint, checkpoint_repository
from app.domain.repository.dataset_repository import dataset_repository
from app.domain.schema.dataset_schema import TrajectoryDataset
from app.domain.schema.error_schema import ConfigError
from app.domain.schema.metrics_schema import EvalConfig, MetricsReport
from app.domain.schema.physics_schema import ModelConfig, SystemTag
from app.domain.schema.run_schema import RunConfig, build_run_config, deep_merge, load_document
from app.domain.service.datagen_service import datagen_service
from app.domain.service.eval_service import eval_service
from app.domain.service.train_service import FitResult, train_service

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

DATASET_FILE = "dataset.mpd"
ABLATION_COLUMNS = ["variant", "rmse", "mae", "mnad", "hct", "diverged"]


class ExperimentController:
    def __init__(self):
        self.datagen_service = datagen_service
        self.train_service = train_service
        self.eval_service = eval_service
        self.dataset_repository = dataset_repository
        self.checkpoint_repository = checkpoint_repository
        logger.info("🔧 실험 컨트롤러 초기화 완료")

    # ---------- 설정 ----------

    def run_config(
        self,
        config_path: Optional[PathLike] = None,
        preset: Optional[str] = None,
        system: Optional[str] = None,
        overrides: Optional[Dict[str, Any]] = None,
    ) -> RunConfig:
        """
        설정 문서/프리셋/CLI override 병합
        문서도 프리셋도 없으면 system 의 paper 프리셋을 사용
        """
        document = load_document(config_path) if config_path else None
        if document is None and preset is None:
            if system is None:
                raise ConfigError("either --config, --preset or --system is required")
            preset = "paper"
        return build_run_config(document, preset, system, overrides)

    @staticmethod
    def variant_overrides(
        forcing_variant: Optional[str] = None,
        re: Optional[float] = None,
        epochs: Optional[int] = None,
    ) -> Dict[str, Any]:
        """NSE 일반화 실험 (외력/Re) 및 epoch override"""
        overrides: Dict[str, Any] = {}
        if forcing_variant is not None:
            if forcing_variant not in NSE_FORCING_VARIANTS:
                raise ConfigError(
                    f"unknown forcing variant: {forcing_variant} (available: {', '.join(NSE_FORCING_VARIANTS)})"
                )
            overrides = deep_merge(overrides, {"system": {"forcing": NSE_FORCING_VARIANTS[forcing_variant]}})
        if re is not None:
            overrides = deep_merge(overrides, {"system": {"re": re}})
        if epochs is not None:
            overrides = deep_merge(overrides, {"train": {"epochs": epochs}})
        return overrides

    @staticmethod
    def write_run_record(out_dir: PathLike, command: str, config: RunConfig, **extra: Any) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        record = {
            "command": command,
            "config_hash": config.config_hash(),
            "seed": config.seed,
            "config": config.model_dump(mode="json"),
            **extra,
        }
        path = out / "run.json"
        path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    # ---------- generate ----------

    def generate(self, config: RunConfig, out_dir: PathLike) -> Path:
        """MPD1 데이터셋 생성 → out_dir/dataset.mpd"""
        if config.system.tag != SystemTag.NSE and config.system.forcing is not None:
            raise ConfigError(f"forcing is only defined for nse, got {config.system.tag.value}")
        spec = config.gen_spec()
        logger.info(f"🔧 데이터 생성 시작: {config.system.tag.value}, hash={config.config_hash()[:12]}")
        dataset = self.datagen_service.generate(spec)
        dataset.meta.config_hash = config.config_hash()
        path = self.dataset_repository.save(dataset, Path(out_dir) / DATASET_FILE)
        self.write_run_record(out_dir, "generate", config, shape=dataset.meta.shape, dt=dataset.meta.dt)
        logger.info(f"✅ 데이터셋 저장 완료: {path} {dataset.meta.shape}")
        return path

    def generate_re_sweep(self, config: RunConfig, out_dir: PathLike,
                          re_values: Sequence[float] = NSE_RE_VARIANTS) -> List[Path]:
        """NSE Re 일반화 실험: Re 별 데이터셋 → out_dir/re{Re}/dataset.mpd"""
        if config.system.tag != SystemTag.NSE:
            raise ConfigError(f"Re sweep is only defined for nse, got {config.system.tag.value}")
        paths = []
        for re in re_values:
            swept = RunConfig.model_validate(deep_merge(config.model_dump(mode="json"), {"system": {"re": re}}))
            paths.append(self.generate(swept, Path(out_dir) / f"re{re:g}"))
        logger.info(f"✅ Re sweep 완료: {len(paths)}개 데이터셋")
        return paths

    # ---------- train ----------

    def build_model(self, config: RunConfig, dataset: TrajectoryDataset, variant: Optional[str] = None) -> MultiPdeModel:
        if config.system.tag != dataset.meta.system.tag:
            raise ConfigError(
                f"config system {config.system.tag.value} does not match dataset {dataset.meta.system.tag.value}"
            )
        try:
            model_config = config.model_config_for(dataset.grid, dataset.meta.dt, variant, system=dataset.meta.system)
        except ValueError as e:
            raise ConfigError(f"invalid model config: {e}") from e
        return MultiPdeModel(model_config)

    def train(
        self,
        config: RunConfig,
        data_path: PathLike,
        out_dir: PathLike,
        variant: Optional[str] = None,
        from_checkpoint: Optional[PathLike] = None,
    ) -> FitResult:
        dataset = self.dataset_repository.load(data_path)
        config_hash = config.config_hash()
        resume = None
        if from_checkpoint is not None:
            resume = self.checkpoint_repository.load(from_checkpoint)
            if resume.meta.config_hash != config_hash:
                logger.warning(f"⚠️ 체크포인트 config hash 불일치: {resume.meta.config_hash[:12]} != {config_hash[:12]}")
            model = MultiPdeModel(ModelConfig.model_validate(resume.meta.network_config))
        else:
            model = self.build_model(config, dataset, variant)

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        result = self.train_service.fit(model, dataset, config.train, out, config_hash, resume)
        result.history_frame().to_csv(out / "history.csv", index=False)
        self.write_run_record(
            out, "train", config,
            variant=model.config.flags.variant,
            dataset=str(data_path),
            epochs=len(result.history),
        )
        logger.info(f"💾 학습 결과 저장: {out}")
        return result

    # ---------- evaluate ----------

    def load_model(self, checkpoint_path: PathLike) -> Tuple[MultiPdeModel, Checkpoint]:
        ckpt = self.checkpoint_repository.load(checkpoint_path)
        model = MultiPdeModel(ModelConfig.model_validate(ckpt.meta.network_config))
        model.load_state_dict(ckpt.model_state)
        model.eval()
        return model, ckpt

    def evaluate(
        self,
        checkpoint_path: PathLike,
        data_path: PathLike,
        out_dir: PathLike,
        eval_config: Optional[EvalConfig] = None,
        spectrum: bool = False,
    ) -> MetricsReport:
        """체크포인트 롤아웃 → metrics.json / metrics.csv / pcc.csv (/ spectrum.csv)"""
        model, ckpt = self.load_model(checkpoint_path)
        dataset = self.dataset_repository.load(data_path)
        if eval_config is None:
            eval_config = build_run_config(preset="paper", system=dataset.meta.system.tag.value).evaluate
        if spectrum:
            eval_config = eval_config.model_copy(update={"spectrum": True})
        report, pcc_df, spectrum_df = self.eval_service.evaluate(
            model, dataset, eval_config,
            config_hash=ckpt.meta.config_hash,
            seed=model.config.seed,
            variant=model.config.flags.variant,
        )
        self.eval_service.write_report(out_dir, report, pcc_df, spectrum_df)
        return report

    # ---------- ablate ----------

    def ablate(self, config: RunConfig, data_path: PathLike, out_dir: PathLike, variants: Sequence[str]) -> pd.DataFrame:
        """variant 마다 train + evaluate 후 ablation.csv 로 정리"""
        out = Path(out_dir)
        rows: List[Dict[str, Any]] = []
        for variant in variants:
            logger.info(f"🔄 ablation variant: {variant}")
            variant_dir = out / variant
            fit = self.train(config, data_path, variant_dir, variant=variant)
            report = self.evaluate(fit.checkpoint_path, data_path, variant_dir, config.evaluate)
            rows.append({
                "variant": variant, "rmse": report.rmse, "mae": report.mae,
                "mnad": report.mnad, "hct": report.hct, "diverged": report.diverged,
            })
        frame = pd.DataFrame(rows, columns=ABLATION_COLUMNS)
        out.mkdir(parents=True, exist_ok=True)
        frame.to_csv(out / "ablation.csv", index=False)
        logger.info(f"📊 ablation 완료: {len(rows)}개 variant → {out / 'ablation.csv'}")
        return frame

    # ---------- run ----------

    def run(self, config: RunConfig, out_dir: Optional[PathLike] = None) -> MetricsReport:
        """generate → train → evaluate 를 한 디렉토리에서"""
        out = Path(out_dir or config.output_dir)
        data_path = self.generate(config, out)
        fit = self.train(config, data_path, out)
        report = self.evaluate(fit.checkpoint_path, data_path, out, config.evaluate)
        self.write_run_record(out, "run", config, variant=config.model.variant, hct=report.hct)
        return report


# 싱글톤 인스턴스
experiment_controller = ExperimentController()
