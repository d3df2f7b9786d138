# app/repositories/VolumeRepository.py

import os

import nibabel as nib
import numpy as np
from flask import current_app
from nibabel.filebasedimages import ImageFileError
from nibabel.spatialimages import HeaderDataError
from nibabel.wrapstruct import WrapStructError

from app.errors import DataValidationError, VolumeFormatError
from app.models.Volume import LabelVolume, VolumeGrid
from app.repositories.RepositoryBase import Create, Read

SUPPORTED_DTYPES = (np.dtype(np.float32), np.dtype(np.uint8))
# pixdim se guarda en float32: el espaciado se relee con precisión de micrómetro
SPACING_DECIMALS = 6


def _check_path(path: str):
    if path.endswith(".nii.gz"):
        raise VolumeFormatError(f"'{path}': no se admiten volúmenes comprimidos (.nii.gz).")
    if not path.endswith(".nii"):
        raise VolumeFormatError(f"'{path}': solo se admite NIfTI-1 de un único archivo (.nii).")


def _default_affine(spacing) -> np.ndarray:
    return np.diag([*spacing, 1.0])


class VolumeRepository(Create, Read):
    """NIfTI-1 sin comprimir; imágenes en float32, etiquetas en uint8."""

    def _read(self, path: str, expected_dtype: np.dtype | None = None):
        _check_path(path)
        if not os.path.exists(path):
            raise FileNotFoundError(2, "No existe el volumen", path)
        try:
            img = nib.load(path)
            if not isinstance(img, nib.Nifti1Image) or isinstance(img, nib.Nifti2Image):
                raise VolumeFormatError(f"'{path}': no es un NIfTI-1.")
            if img.header["magic"].item() != b"n+1":
                raise VolumeFormatError(f"'{path}': magic '{img.header['magic'].item()!r}' no es n+1.")
            dtype = img.header.get_data_dtype()
            if dtype not in SUPPORTED_DTYPES:
                raise VolumeFormatError(f"'{path}': tipo de dato {dtype} no soportado (float32 o uint8).")
            if expected_dtype is not None and dtype != expected_dtype:
                raise VolumeFormatError(f"'{path}': se esperaba {expected_dtype}, el archivo contiene {dtype}.")
            if len(img.shape) != 3:
                raise VolumeFormatError(f"'{path}': se esperaba un volumen 3D, forma {img.shape}.")
            data = np.asarray(img.dataobj)
        except VolumeFormatError:
            raise
        except (ImageFileError, HeaderDataError, WrapStructError, EOFError, ValueError, OSError) as e:
            current_app.logger.error(f"[ERROR] No se pudo leer el volumen '{path}': {e}")
            raise VolumeFormatError(f"'{path}': archivo NIfTI ilegible o truncado ({e}).") from e

        spacing = tuple(float(np.round(z, SPACING_DECIMALS)) for z in img.header.get_zooms()[:3])
        return data, spacing, np.asarray(img.affine, dtype=np.float64)

    def read_volume(self, path: str) -> VolumeGrid:
        data, spacing, affine = self._read(path)
        values = data.astype(np.float64)
        if np.isnan(values).any():
            raise DataValidationError(f"'{path}': el volumen contiene {int(np.isnan(values).sum())} vóxel(es) NaN.")
        return VolumeGrid(values, spacing, affine)

    def read_labels(self, path: str) -> LabelVolume:
        data, spacing, affine = self._read(path, np.dtype(np.uint8))
        return LabelVolume(data, spacing, affine)

    def _write(self, data: np.ndarray, dtype, spacing, affine, path: str) -> str:
        _check_path(path)
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        img = nib.Nifti1Image(data.astype(dtype), affine if affine is not None else _default_affine(spacing))
        img.header.set_data_dtype(dtype)
        img.header.set_zooms(spacing)
        nib.save(img, path)
        current_app.logger.debug(f"[DEBUG] Volumen escrito en '{path}' ({np.dtype(dtype).name}, {data.shape}).")
        return path

    def write_volume(self, grid: VolumeGrid, path: str) -> str:
        if np.isnan(grid.values).any():
            raise DataValidationError("No se puede escribir un volumen con vóxeles NaN.")
        return self._write(grid.values, np.float32, grid.spacing, grid.affine, path)

    def write_labels(self, labels: LabelVolume, path: str) -> str:
        return self._write(labels.labels, np.uint8, labels.spacing, labels.affine, path)

    def save(self, entity, path: str) -> str:
        if isinstance(entity, LabelVolume):
            return self.write_labels(entity, path)
        return self.write_volume(entity, path)

    def load(self, path: str) -> VolumeGrid:
        return self.read_volume(path)
