# app/services/BiomarkerService.py

import math
from typing import Callable

import numpy as np
import scipy.stats as ss
from flask import current_app

from app.errors import DataValidationError, NumericalError
from app.models.Reports import BiomarkerResult, BootstrapInterval
from app.models.Volume import CONTRALATERAL, IPSILATERAL, LabelVolume

# statistic(a_rows, b_rows) -> valores por fila; filas = remuestreos (B, n)
Statistic = Callable[[np.ndarray, np.ndarray], np.ndarray]


def hemispheric_ratio(labels: LabelVolume) -> float:
    """Volumen contralateral / volumen ipsilateral (mm^3 / mm^3)."""
    counts = labels.counts()
    if counts[IPSILATERAL] == 0:
        raise DataValidationError("El hemisferio ipsilateral está vacío; el cociente no está definido.")
    if counts[CONTRALATERAL] == 0:
        raise DataValidationError("El hemisferio contralateral está vacío; el cociente no está definido.")
    voxel = labels.voxel_volume
    return (counts[CONTRALATERAL] * voxel) / (counts[IPSILATERAL] * voxel)


def cohens_d_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """d de Cohen con desviación combinada para cada fila; NaN donde la varianza combinada es cero."""
    na, nb = a.shape[-1], b.shape[-1]
    pooled = ((na - 1) * a.var(axis=-1, ddof=1) + (nb - 1) * b.var(axis=-1, ddof=1)) / (na + nb - 2)
    diff = a.mean(axis=-1) - b.mean(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(pooled > 0, diff / np.sqrt(pooled), np.nan)


def paired_cohens_d_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Variante emparejada: media de las diferencias / desviación de las diferencias."""
    diff = a - b
    sd = diff.std(axis=-1, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(sd > 0, diff.mean(axis=-1) / sd, np.nan)


def cohens_d(sample_a, sample_b, paired: bool = False) -> float:
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise DataValidationError("La d de Cohen requiere al menos 2 valores por muestra.")
    if paired and a.size != b.size:
        raise DataValidationError("La variante emparejada requiere muestras del mismo tamaño.")
    value = float((paired_cohens_d_rows if paired else cohens_d_rows)(a[np.newaxis], b[np.newaxis])[0])
    if math.isnan(value):
        raise NumericalError("Varianza combinada nula: la d de Cohen no está definida.")
    return value


def order_statistic(sorted_values: np.ndarray, p: float) -> float:
    """k = floor((B + 1) * p) recortado a [1, B]; devuelve el k-ésimo menor."""
    count = len(sorted_values)
    k = min(max(int(math.floor((count + 1) * p)), 1), count)
    return float(sorted_values[k - 1])


def bca_acceleration(jackknife_values: np.ndarray) -> float:
    """Aceleración a partir de la asimetría de los valores jackknife."""
    values = jackknife_values[np.isfinite(jackknife_values)]
    if len(values) < 2:
        return 0.0
    u = (len(values) - 1) * (values.mean() - values)
    denominator = 6.0 * np.sum(u * u) ** 1.5
    if denominator == 0.0:
        return 0.0
    return float(np.sum(u * u * u) / denominator)


def adjust_percentiles(alpha: float, z0: float, acceleration: float) -> tuple[float, float]:
    z_low = ss.norm.ppf(alpha / 2.0)
    z_high = ss.norm.ppf(1.0 - alpha / 2.0)
    p_low = ss.norm.cdf(z0 + (z0 + z_low) / (1.0 - acceleration * (z0 + z_low)))
    p_high = ss.norm.cdf(z0 + (z0 + z_high) / (1.0 - acceleration * (z0 + z_high)))
    return float(p_low), float(p_high)


class BiomarkerService:
    """
    Cocientes hemisféricos, tamaño del efecto y sus intervalos bootstrap.

    El remuestreo es por índice de volumen (los pares gt/pred viajan juntos) y
    cada remuestreo b usa su propio generador derivado de (seed, b).
    """

    def __init__(self):
        self.logger = current_app.logger

    @staticmethod
    def resample_indices(n: int, resamples: int, seed: int) -> np.ndarray:
        children = np.random.SeedSequence(seed).spawn(resamples)
        return np.stack([np.random.default_rng(child).integers(0, n, size=n) for child in children])

    @staticmethod
    def _statistic(paired: bool) -> Statistic:
        return paired_cohens_d_rows if paired else cohens_d_rows

    def bootstrap_distribution(self, a: np.ndarray, b: np.ndarray, statistic: Statistic,
                               resamples: int, seed: int) -> np.ndarray:
        """Estadísticos de los remuestreos válidos (se descartan los NaN/infinitos)."""
        indices = self.resample_indices(len(a), resamples, seed)
        values = np.asarray(statistic(a[indices], b[indices]), dtype=np.float64)
        return values[np.isfinite(values)]

    def _check_inputs(self, sample_a, sample_b, resamples: int):
        a = np.asarray(sample_a, dtype=np.float64)
        b = np.asarray(sample_b, dtype=np.float64)
        if a.shape != b.shape or a.ndim != 1:
            raise DataValidationError("El bootstrap emparejado requiere dos muestras 1D del mismo tamaño.")
        if resamples < 1000:
            raise DataValidationError(f"Se requieren al menos 1000 remuestreos, se recibieron {resamples}.")
        return a, b

    def _degenerate(self, estimate: float, resamples: int, valid: int, alpha: float, method: str,
                    reason: str) -> BootstrapInterval:
        self.logger.warning(f"[WARNING] Distribución bootstrap degenerada ({reason}); el intervalo colapsa al estimador.")
        return BootstrapInterval(estimate, estimate, estimate, resamples=resamples, valid_resamples=valid,
                                 alpha=alpha, degenerate=True, method=method)

    def bca_ci(self, sample_a, sample_b, statistic: Statistic | None = None, resamples: int = 10000,
               alpha: float = 0.05, seed: int = 0, paired: bool = False,
               force_z0: float | None = None, force_acceleration: float | None = None) -> BootstrapInterval:
        a, b = self._check_inputs(sample_a, sample_b, resamples)
        statistic = statistic or self._statistic(paired)
        estimate = float(statistic(a[np.newaxis], b[np.newaxis])[0])
        if not math.isfinite(estimate):
            raise NumericalError("El estadístico no está definido sobre las muestras originales.")

        values = self.bootstrap_distribution(a, b, statistic, resamples, seed)
        if len(values) == 0 or np.ptp(values) == 0.0:
            return self._degenerate(estimate, resamples, len(values), alpha, "bca", "estadístico constante")

        if force_z0 is None:
            below = float(np.mean(values < estimate))
            if below in (0.0, 1.0):
                return self._degenerate(estimate, resamples, len(values), alpha, "bca",
                                        "estimador fuera del rango bootstrap")
            z0 = float(ss.norm.ppf(below))
        else:
            z0 = force_z0

        if force_acceleration is None:
            n = len(a)
            keep = ~np.eye(n, dtype=bool)
            jackknife = statistic(
                np.stack([a[keep[i]] for i in range(n)]), np.stack([b[keep[i]] for i in range(n)])
            )
            acceleration = bca_acceleration(np.asarray(jackknife, dtype=np.float64))
        else:
            acceleration = force_acceleration

        p_low, p_high = adjust_percentiles(alpha, z0, acceleration)
        ordered = np.sort(values)
        return BootstrapInterval(
            low=order_statistic(ordered, p_low),
            high=order_statistic(ordered, p_high),
            estimate=estimate,
            z0=z0,
            acceleration=acceleration,
            resamples=resamples,
            valid_resamples=len(values),
            alpha=alpha,
        )

    def percentile_ci(self, sample_a, sample_b, statistic: Statistic | None = None, resamples: int = 10000,
                      alpha: float = 0.05, seed: int = 0, paired: bool = False) -> BootstrapInterval:
        a, b = self._check_inputs(sample_a, sample_b, resamples)
        statistic = statistic or self._statistic(paired)
        estimate = float(statistic(a[np.newaxis], b[np.newaxis])[0])
        values = self.bootstrap_distribution(a, b, statistic, resamples, seed)
        if len(values) == 0 or np.ptp(values) == 0.0:
            return self._degenerate(estimate, resamples, len(values), alpha, "percentile", "estadístico constante")
        ordered = np.sort(values)
        return BootstrapInterval(
            low=order_statistic(ordered, alpha / 2.0),
            high=order_statistic(ordered, 1.0 - alpha / 2.0),
            estimate=estimate,
            resamples=resamples,
            valid_resamples=len(values),
            alpha=alpha,
            method="percentile",
        )

    def biomarker(self, gt_labels: list[LabelVolume], pred_labels: list[LabelVolume], resamples: int = 10000,
                  alpha: float = 0.05, seed: int = 0, paired: bool = False) -> BiomarkerResult:
        """Cocientes por volumen, d(gt, pred) e intervalo BCa."""
        if len(gt_labels) != len(pred_labels):
            raise DataValidationError("Las listas de etiquetas gt y pred deben estar emparejadas.")
        gt_ratios = [hemispheric_ratio(v) for v in gt_labels]
        pred_ratios = [hemispheric_ratio(v) for v in pred_labels]
        d = cohens_d(gt_ratios, pred_ratios, paired=paired)
        interval = self.bca_ci(gt_ratios, pred_ratios, resamples=resamples, alpha=alpha, seed=seed, paired=paired)
        self.logger.info(
            f"[BIOMARKER] n={len(gt_ratios)} d={d:.4f} IC{int(round((1 - alpha) * 100))}%=[{interval.low:.4f}, "
            f"{interval.high:.4f}] remuestreos={resamples}."
        )
        return BiomarkerResult(gt_ratios, pred_ratios, d, interval.low, interval.high, resamples, alpha,
                               degenerate=interval.degenerate, paired=paired)
