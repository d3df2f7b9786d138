# app/repositories/ManifestRepository.py

import os

import pandas as pd
from flask import current_app

from app.errors import DataValidationError
from app.models.Dataset import MANIFEST_COLUMNS, DatasetItem
from app.repositories.RepositoryBase import Create, Read

REQUIRED_COLUMNS = ["id", "group", "volume_path", "labels_path"]


class ManifestRepository(Create, Read):
    """Manifiesto CSV (id, group, volume_path, labels_path[, sham, role])."""

    def save(self, items: list[DatasetItem], path: str) -> str:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        frame = pd.DataFrame([item.to_dict() for item in items], columns=MANIFEST_COLUMNS)
        frame.to_csv(path, index=False)
        current_app.logger.info(f"[INFO] Manifiesto con {len(items)} fila(s) escrito en '{path}'.")
        return path

    def load(self, path: str) -> list[DatasetItem]:
        """Las rutas relativas se resuelven respecto del directorio del manifiesto."""
        frame = pd.read_csv(path, dtype={"id": str, "group": str}, keep_default_na=False)
        missing = [c for c in REQUIRED_COLUMNS if c not in frame.columns]
        if missing:
            raise DataValidationError(f"'{path}': faltan columnas del manifiesto {missing}.")
        if frame["id"].duplicated().any():
            duplicated = sorted(frame.loc[frame["id"].duplicated(), "id"].unique())
            raise DataValidationError(f"'{path}': ids duplicados {duplicated}.")

        base = os.path.dirname(os.path.abspath(path))

        def resolve(value: str) -> str:
            if not value:
                return value
            return value if os.path.isabs(value) else os.path.join(base, value)

        items = []
        for row in frame.to_dict(orient="records"):
            sham = str(row.get("sham", "")).strip().lower() in ("true", "1", "yes")
            items.append(DatasetItem(
                id=str(row["id"]),
                group=str(row["group"]),
                volume_path=resolve(str(row["volume_path"])),
                labels_path=resolve(str(row["labels_path"])),
                sham=sham,
                role=str(row.get("role", "") or ""),
            ))
        current_app.logger.debug(f"[DEBUG] Manifiesto '{path}' cargado: {len(items)} fila(s).")
        return items

    @staticmethod
    def match_ids(left: list[DatasetItem], right: list[DatasetItem]) -> list[tuple[DatasetItem, DatasetItem]]:
        """Empareja dos manifiestos por id; cualquier id sin pareja es un error."""
        left_ids = {item.id: item for item in left}
        right_ids = {item.id: item for item in right}
        unmatched = sorted(set(left_ids) ^ set(right_ids))
        if unmatched:
            raise DataValidationError(f"Ids sin pareja entre manifiestos: {unmatched}.")
        return [(left_ids[i], right_ids[i]) for i in sorted(left_ids)]
