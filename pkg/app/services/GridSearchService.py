# app/services/GridSearchService.py

import math

import numpy as np
from flask import current_app
from scipy import ndimage

from app.errors import DataValidationError
from app.extensions import get_executor
from app.mapping.analysis_schema import ALPHA_GRID, PERCENTILE_GRID
from app.models.Reports import GridSearchResult
from app.models.Volume import BinaryMask, LabelVolume, VolumeGrid, check_same_extents
from app.services.MetricsService import FACE_STRUCTURE, MetricsService
from app.services.MidlineService import INPLANE_CROSS


def largest_component(mask: np.ndarray) -> np.ndarray:
    """Mayor componente 6-conexa; ante empate, la de menor etiqueta."""
    labeled, count = ndimage.label(mask, structure=FACE_STRUCTURE)
    if count == 0:
        return np.zeros_like(mask, dtype=bool)
    sizes = np.bincount(labeled.ravel())
    sizes[0] = 0
    return labeled == int(np.argmax(sizes))


def threshold_mask(values: np.ndarray, threshold: float, alpha: int) -> np.ndarray:
    mask = values > threshold
    if alpha > 0:
        mask = ndimage.binary_closing(mask, structure=INPLANE_CROSS, iterations=alpha)
    return largest_component(mask)


class GridSearchService:
    """
    Segmentación de referencia por umbral (percentil i de la imagen, alpha
    cierres en el plano, mayor componente) y búsqueda exhaustiva de (i, alpha)
    que maximiza el Dice medio del cerebro.
    """

    def __init__(self):
        self.logger = current_app.logger

    @staticmethod
    def baseline_threshold_segment(volume: VolumeGrid, percentile_index: int, alpha: int) -> BinaryMask:
        if not 0 <= percentile_index <= 100:
            raise DataValidationError(f"Índice de percentil fuera de rango: {percentile_index}.")
        if alpha < 0:
            raise DataValidationError(f"alpha debe ser >= 0, se recibió {alpha}.")
        threshold = float(np.percentile(volume.values, percentile_index))
        return BinaryMask(threshold_mask(volume.values, threshold, alpha), volume.spacing)

    @staticmethod
    def volume_scores(volume: VolumeGrid, gt: LabelVolume, percentile_grid, alpha_grid) -> np.ndarray:
        """Dice del cerebro para cada (i, alpha) en un volumen."""
        check_same_extents(volume, gt, "gridsearch")
        brain = gt.brain_mask()
        thresholds = np.percentile(volume.values, list(percentile_grid))
        scores = np.zeros((len(percentile_grid), len(alpha_grid)))
        for a, threshold in enumerate(thresholds):
            for b, alpha in enumerate(alpha_grid):
                mask = BinaryMask(threshold_mask(volume.values, float(threshold), alpha), volume.spacing)
                scores[a, b] = MetricsService.dice(mask, brain)
        return scores

    def gridsearch(self, volumes: list[VolumeGrid], gts: list[LabelVolume],
                   percentile_grid=PERCENTILE_GRID, alpha_grid=ALPHA_GRID,
                   parallel: bool = False) -> GridSearchResult:
        if not volumes:
            raise DataValidationError("La búsqueda en rejilla necesita al menos un volumen.")
        if len(volumes) != len(gts):
            raise DataValidationError("Cada volumen necesita su segmentación de referencia.")
        percentile_grid = tuple(percentile_grid)
        alpha_grid = tuple(alpha_grid)
        self.logger.info(
            f"[GRID] {len(percentile_grid)}x{len(alpha_grid)} combinaciones sobre {len(volumes)} volumen(es)."
        )

        pairs = list(zip(volumes, gts))
        if parallel:
            app = current_app._get_current_object()

            def task(pair):
                with app.app_context():
                    return self.volume_scores(pair[0], pair[1], percentile_grid, alpha_grid)

            per_volume = list(get_executor().map(task, pairs))
        else:
            per_volume = [self.volume_scores(v, g, percentile_grid, alpha_grid) for v, g in pairs]

        stacked = np.stack(per_volume)
        table = np.zeros(stacked.shape[1:])
        best = (-math.inf, 0, 0)
        for a in range(len(percentile_grid)):
            for b in range(len(alpha_grid)):
                # suma exacta: el resultado no depende del orden de los volúmenes
                table[a, b] = math.fsum(stacked[:, a, b]) / len(per_volume)
                if table[a, b] > best[0]:
                    best = (table[a, b], a, b)

        score, a, b = best
        self.logger.info(
            f"[GRID] Mejor combinación: i={percentile_grid[a]} alpha={alpha_grid[b]} Dice medio={score:.4f}."
        )
        return GridSearchResult(percentile_grid[a], alpha_grid[b], float(score), percentile_grid, alpha_grid, table,
                                volume_scores=tuple(float(s) for s in stacked[:, a, b]))
