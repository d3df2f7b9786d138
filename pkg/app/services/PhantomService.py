# app/services/PhantomService.py

import numpy as np
from flask import current_app

from app.errors import DataValidationError
from app.mapping.phantom_schema import PhantomParams
from app.models.Dataset import PhantomCase
from app.models.Volume import BinaryMask, LabelVolume, VolumeGrid
from app.services.DataService import DataService

MAX_LESION_ATTEMPTS = 200


class PhantomService:
    """
    Generador de fantomas de lesión: cerebro elipsoidal partido por un plano
    sagital (eje W) en dos hemisferios, lesión hiperintensa opcional dentro del
    hemisferio ipsilateral y ruido gaussiano aditivo.
    """

    def __init__(self):
        self.logger = current_app.logger

    @staticmethod
    def _brain_ellipsoid(params: PhantomParams) -> np.ndarray:
        radii = [frac * e for frac, e in zip(params.brain_radii, params.extents)]
        if any(r < 1.0 for r in radii):
            raise DataValidationError(
                f"Las extensiones {params.extents} son demasiado pequeñas para el elipsoide "
                f"(semiejes en vóxeles {tuple(round(r, 2) for r in radii)})."
            )
        grids = np.meshgrid(*[np.arange(e, dtype=np.float64) for e in params.extents], indexing="ij")
        distance = sum(((g - (e - 1) / 2.0) / r) ** 2 for g, e, r in zip(grids, params.extents, radii))
        return distance <= 1.0

    @staticmethod
    def _lesion_mask(extents, center, radius_hw: float, radius_d: float) -> np.ndarray:
        d, h, w = np.meshgrid(*[np.arange(e, dtype=np.float64) for e in extents], indexing="ij")
        distance = ((d - center[0]) / radius_d) ** 2 + ((h - center[1]) / radius_hw) ** 2 \
            + ((w - center[2]) / radius_hw) ** 2
        return distance <= 1.0

    def _place_lesion(self, rng: np.random.Generator, params: PhantomParams, ipsi: np.ndarray):
        """Muestreo por rechazo de un elipsoide contenido por completo en el hemisferio ipsilateral."""
        low, high = params.lesion_radius_range
        radius_hw = rng.uniform(low, high)
        # radio físico similar en los tres ejes
        radius_d = max(1.0, radius_hw * params.spacing[1] / params.spacing[0])
        candidates = np.argwhere(ipsi)
        for _ in range(MAX_LESION_ATTEMPTS):
            center = candidates[rng.integers(len(candidates))]
            lesion = self._lesion_mask(params.extents, center, radius_hw, radius_d)
            if lesion.any() and not (lesion & ~ipsi).any():
                return lesion
        return None

    def generate_phantom(self, params: PhantomParams) -> PhantomCase:
        rng = np.random.default_rng(params.seed)
        depth, height, width = params.extents
        brain = self._brain_ellipsoid(params)

        shift = 0 if params.sham else int(rng.integers(params.midline_shift_range[0],
                                                       params.midline_shift_range[1] + 1))
        # el hemisferio lesionado se hincha y desplaza la línea media hacia el contralateral
        midline = width // 2 - shift
        columns = np.arange(width)[np.newaxis, np.newaxis, :]
        contra = brain & (columns < midline)
        ipsi = brain & ~contra
        if not contra.any() or not ipsi.any():
            raise DataValidationError(
                f"Las extensiones {params.extents} no dejan vóxeles en ambos hemisferios (línea media en w={midline})."
            )
        labels = DataService.derive_regions(BinaryMask(brain, params.spacing), BinaryMask(contra, params.spacing))

        values = np.full(params.extents, params.background_mean, dtype=np.float64)
        values[contra] = params.contra_mean + params.contra_std * rng.standard_normal(int(contra.sum()))
        values[ipsi] = params.ipsi_mean + params.ipsi_std * rng.standard_normal(int(ipsi.sum()))

        lesion = None
        if not params.sham and rng.random() < params.lesion_probability:
            lesion = self._place_lesion(rng, params, ipsi)
            if lesion is None:
                self.logger.warning(
                    f"[WARNING] No se pudo ubicar la lesión dentro del hemisferio ipsilateral (semilla {params.seed})."
                )
            else:
                values[lesion] += params.lesion_shift

        if params.noise_sigma > 0:
            values += params.noise_sigma * rng.standard_normal(params.extents)
        # precisión float32: lo que se escribe en disco es exactamente lo que se generó
        values = values.astype(np.float32).astype(np.float64)

        return PhantomCase(
            volume=VolumeGrid(values, params.spacing),
            labels=LabelVolume(labels.labels, params.spacing),
            midline_index=midline,
            midline_shift=shift,
            has_lesion=lesion is not None,
            lesion_mask=lesion,
        )

    def generate_many(self, params: PhantomParams, count: int) -> list[PhantomCase]:
        """`count` fantomas con semillas consecutivas a partir de params.seed."""
        return [self.generate_phantom(params.model_copy(update={"seed": params.seed + i})) for i in range(count)]
