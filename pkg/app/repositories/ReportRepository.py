# app/repositories/ReportRepository.py

import os

import pandas as pd
from flask import current_app

from app.repositories.RepositoryBase import Create, Read


def summarize(frame: pd.DataFrame, value_columns: list[str], by: list[str],
              label_column: str = "volume_id") -> pd.DataFrame:
    """
    Filas resumen "media ± DE muestral" por grupo, con el formato de tabla
    (p. ej. "0.952 ± 0.040"). La columna `label_column` indica el resumen.
    """
    rows = []
    for keys, block in frame.groupby(by, sort=True, dropna=False):
        keys = keys if isinstance(keys, tuple) else (keys,)
        row = dict(zip(by, keys))
        row[label_column] = "mean ± std"
        for column in value_columns:
            values = block[column].astype(float)
            mean = values.mean(skipna=True)
            std = values.std(ddof=1, skipna=True)
            row[column] = f"{mean:.4f} ± {0.0 if pd.isna(std) else std:.4f}"
        rows.append(row)
    return pd.DataFrame(rows)


class ReportRepository(Create, Read):
    """Informes CSV (métricas, línea media, biomarcador, rejilla, historial, capacidad)."""

    def save(self, rows, path: str, columns: list[str] | None = None) -> str:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        frame = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(list(rows), columns=columns)
        frame.to_csv(path, index=False)
        current_app.logger.info(f"[INFO] Informe escrito en '{path}' ({len(frame)} fila(s)).")
        return path

    def save_with_summary(self, rows: list[dict], path: str, value_columns: list[str], by: list[str],
                          columns: list[str] | None = None) -> str:
        """Filas por volumen seguidas de las filas resumen por grupo."""
        frame = pd.DataFrame(rows, columns=columns)
        if frame.empty:
            return self.save(frame, path)
        summary = summarize(frame, value_columns, by)
        groups = [c for c in by if c != "region"]
        if groups and frame[groups[0]].nunique() > 1:
            overall = summarize(frame.assign(**{groups[0]: "all"}), value_columns, by)
            summary = pd.concat([summary, overall], ignore_index=True)
        return self.save(pd.concat([frame.astype(object), summary], ignore_index=True), path)

    def load(self, path: str) -> pd.DataFrame:
        return pd.read_csv(path)
