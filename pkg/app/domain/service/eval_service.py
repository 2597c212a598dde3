"""
평가 지표 (RMSE, MAE, MNAD, PCC, HCT) 와 에너지 스펙트럼 비교

H, Ȟ 는 [n_traj, T, C, *space] 또는 궤적 하나 [T, C, *space].
"""
import json
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd
import torch

from app.domain.model.multipde_model import MultiPdeModel
from app.domain.schema.dataset_schema import TrajectoryDataset
from app.domain.schema.error_schema import MetricError, ShapeError
from app.domain.schema.field_schema import Grid
from app.domain.schema.metrics_schema import EvalConfig, MetricsReport, TrajectoryMetrics
from app.domain.service.spectral_service import spectral_service

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, torch.Tensor]


def _np(x: ArrayLike) -> np.ndarray:
    if isinstance(x, torch.Tensor):
        return x.detach().cpu().numpy().astype(np.float64)
    return np.asarray(x, dtype=np.float64)


def _pair(h: ArrayLike, p: ArrayLike):
    h, p = _np(h), _np(p)
    if h.shape != p.shape:
        raise ShapeError(f"truth shape {h.shape} != prediction shape {p.shape}")
    return h, p


def _batched(h: np.ndarray, p: np.ndarray, ndim_single: Optional[int]):
    """궤적 하나면 n=1 축 추가"""
    if ndim_single is not None and h.ndim == ndim_single:
        return h[None], p[None]
    return h, p


class EvalService:
    """지표 계산과 리포트 생성"""

    # ---------- 오차 지표 ----------

    def rmse(self, h: ArrayLike, p: ArrayLike) -> float:
        """sqrt((1/n) Σ_i MSE_i)"""
        h, p = _pair(h, p)
        per_traj = ((h - p) ** 2).reshape(h.shape[0], -1).mean(axis=1)
        return float(np.sqrt(per_traj.mean()))

    def mae(self, h: ArrayLike, p: ArrayLike) -> float:
        h, p = _pair(h, p)
        return float(np.abs(h - p).reshape(h.shape[0], -1).mean(axis=1).mean())

    def mnad(self, h: ArrayLike, p: ArrayLike) -> float:
        """(1/n) Σ_i mean|H_i − Ȟ_i| / (max H_i − min H_i)"""
        h, p = _pair(h, p)
        flat_h = h.reshape(h.shape[0], -1)
        flat_p = p.reshape(p.shape[0], -1)
        ranges = flat_h.max(axis=1) - flat_h.min(axis=1)
        if np.any(ranges == 0):
            raise MetricError("zero range: constant truth trajectory")
        return float((np.abs(flat_h - flat_p).mean(axis=1) / ranges).mean())

    def _mnad_or_none(self, h: ArrayLike, p: ArrayLike) -> Optional[float]:
        try:
            return self.mnad(h, p)
        except MetricError as e:
            logger.warning(f"⚠️ MNAD 생략: {e}")
            return None

    # ---------- 상관 ----------

    def pcc(self, a: ArrayLike, b: ArrayLike, per_channel: bool = False) -> float:
        """스냅샷 하나 [C, *space] 의 Pearson 상관"""
        a, b = _pair(a, b)
        if per_channel:
            return float(np.mean([self._pcc_flat(a[c].ravel(), b[c].ravel()) for c in range(a.shape[0])]))
        return self._pcc_flat(a.ravel(), b.ravel())

    @staticmethod
    def _pcc_flat(a: np.ndarray, b: np.ndarray) -> float:
        ca, cb = a - a.mean(), b - b.mean()
        sa, sb = np.sqrt(np.mean(ca * ca)), np.sqrt(np.mean(cb * cb))
        if sa == 0.0 or sb == 0.0:
            # 분산 0: 둘 다 상수이고 같을 때만 1
            return 1.0 if (sa == 0.0 and sb == 0.0 and np.array_equal(a, b)) else 0.0
        return float(np.clip(np.mean(ca * cb) / (sa * sb), -1.0, 1.0))

    def pcc_series(self, h: ArrayLike, p: ArrayLike, per_channel: bool = False) -> np.ndarray:
        """궤적 하나 [T, C, *space] → [T]"""
        h, p = _pair(h, p)
        return np.array([self.pcc(h[t], p[t], per_channel) for t in range(h.shape[0])], dtype=np.float64)

    def hct_from_series(self, series: Sequence[float], dt: float, threshold: float = 0.8) -> float:
        """Σ Δt·[PCC > threshold] (연속 여부와 무관)"""
        return float(dt * np.count_nonzero(np.asarray(series) > threshold))

    def hct(self, h: ArrayLike, p: ArrayLike, dt: float, threshold: float = 0.8, per_channel: bool = False) -> float:
        """궤적 하나 [T, C, *space] 의 HCT (초)"""
        return self.hct_from_series(self.pcc_series(h, p, per_channel), dt, threshold)

    def mean_hct(self, h: ArrayLike, p: ArrayLike, dt: float, threshold: float = 0.8, per_channel: bool = False) -> float:
        """[n, T, C, *space] 궤적 평균 HCT"""
        h, p = _pair(h, p)
        return float(np.mean([self.hct(hi, pi, dt, threshold, per_channel) for hi, pi in zip(h, p)]))

    # ---------- 스펙트럼 ----------

    def compare_spectrum(self, h: ArrayLike, p: ArrayLike, grid: Grid, k_scale: int = 5,
                         window: Sequence[Optional[int]] = (0, None)) -> pd.DataFrame:
        """window 스텝 구간의 시간평균 E(k): 참값/예측 + k^s·E(k)"""
        h, p = _pair(h, p)
        if grid.ndim != 2 or h.ndim < 4 or h.shape[-3] != 2:
            raise MetricError("spectrum comparison needs 2-channel 2D trajectories")
        h, p = _batched(h, p, 4)
        start, end = window
        h, p = h[:, start:end], p[:, start:end]
        if h.shape[1] == 0:
            raise MetricError(f"empty spectrum window {tuple(window)}")
        k, e_true = spectral_service.energy_spectrum_tensor(torch.from_numpy(h), grid)
        _, e_pred = spectral_service.energy_spectrum_tensor(torch.from_numpy(p), grid)
        e_true = e_true.reshape(-1, e_true.shape[-1]).mean(dim=0).numpy()
        e_pred = e_pred.reshape(-1, e_pred.shape[-1]).mean(dim=0).numpy()
        k = k.numpy()
        scale = k ** k_scale
        return pd.DataFrame({
            "k": k,
            "E_true": e_true,
            "E_pred": e_pred,
            f"k^{k_scale}*E_true": scale * e_true,
            f"k^{k_scale}*E_pred": scale * e_pred,
        })

    # ---------- 모델 평가 ----------

    def evaluate(self, model: MultiPdeModel, dataset: TrajectoryDataset, config: EvalConfig,
                 config_hash: str = "", seed: int = 0, variant: str = "full"):
        """테스트 궤적 롤아웃 → (MetricsReport, pcc DataFrame, spectrum DataFrame | None)"""
        test = dataset.test()
        if test.shape[0] == 0:
            raise ShapeError("dataset has no test trajectories")
        n_time = test.shape[1]
        steps = min(config.horizon_steps or n_time - 1, n_time - 1)
        dt = dataset.meta.dt
        system = dataset.meta.system
        rows: List[TrajectoryMetrics] = []
        finished_truth, finished_pred = [], []
        pcc_columns = {}

        model.eval()
        for i in range(test.shape[0]):
            with torch.no_grad():
                result = model.rollout(test[i:i + 1, 0], steps, system=system, truncate=True)
            pred = result.states[0]
            truth = test[i, 1:1 + result.steps_completed]
            series = self.pcc_series(truth, pred, config.per_channel) if result.steps_completed else np.zeros(0)
            hct = self.hct_from_series(series, dt, config.hct_threshold)
            row = TrajectoryMetrics(
                index=i, hct=hct, steps_completed=result.steps_completed,
                diverged=result.diverged, pcc=series.tolist(),
            )
            if not result.diverged:
                t, p = truth.unsqueeze(0), pred.unsqueeze(0)
                row.rmse, row.mae, row.mnad = self.rmse(t, p), self.mae(t, p), self._mnad_or_none(t, p)
                finished_truth.append(truth)
                finished_pred.append(pred)
            rows.append(row)
            padded = np.full(steps, np.nan)
            padded[: len(series)] = series
            pcc_columns[f"traj_{i}"] = padded
            logger.info(
                f"📊 궤적 {i + 1}/{test.shape[0]}: HCT={hct:.4f}s"
                + (f" RMSE={row.rmse:.4e}" if row.rmse is not None else " (발산)")
            )

        report = MetricsReport(
            config_hash=config_hash, seed=seed, system=system.tag.value, variant=variant,
            n_trajectories=len(rows), horizon_steps=steps, dt=dt,
            hct=float(np.mean([r.hct for r in rows])),
            diverged=sum(r.diverged for r in rows),
            trajectories=rows,
        )
        if finished_truth:
            h, p = torch.stack(finished_truth), torch.stack(finished_pred)
            report.rmse, report.mae, report.mnad = self.rmse(h, p), self.mae(h, p), self._mnad_or_none(h, p)

        pcc_df = pd.DataFrame({"step": np.arange(1, steps + 1), "time": dt * np.arange(1, steps + 1), **pcc_columns})
        spectrum_df = None
        if config.spectrum:
            if not finished_truth:
                logger.warning("⚠️ 모든 궤적이 발산하여 스펙트럼을 생략합니다")
            else:
                spectrum_df = self.compare_spectrum(
                    torch.stack(finished_truth), torch.stack(finished_pred), dataset.grid,
                    config.k_scale, config.spectrum_window,
                )
        logger.info(f"✅ 평가 완료: HCT={report.hct:.4f}s, RMSE={report.rmse}, 발산 {report.diverged}개")
        return report, pcc_df, spectrum_df

    # ---------- 리포트 ----------

    def write_report(self, out_dir: Union[str, Path], report: MetricsReport, pcc_df: pd.DataFrame,
                     spectrum_df: Optional[pd.DataFrame] = None) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.json").write_text(json.dumps(report.model_dump(mode="json"), indent=2, sort_keys=True) + "\n")
        metrics_df = pd.DataFrame(
            [r.model_dump(exclude={"pcc"}) for r in report.trajectories],
            columns=["index", "rmse", "mae", "mnad", "hct", "steps_completed", "diverged"],
        )
        metrics_df.to_csv(out / "metrics.csv", index=False)
        pcc_df.to_csv(out / "pcc.csv", index=False)
        if spectrum_df is not None:
            spectrum_df.to_csv(out / "spectrum.csv", index=False)
        logger.info(f"💾 리포트 저장: {out}")
        return out


# 싱글톤 인스턴스
eval_service = EvalService()
