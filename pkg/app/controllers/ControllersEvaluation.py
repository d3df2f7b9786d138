# app/controllers/ControllersEvaluation.py

import os

import click
import pandas as pd
from flask import Blueprint, current_app

from app.mapping.run_schema import load_run_config, write_run_config
from app.middleware import handle_cli_errors
from app.repositories.ManifestRepository import ManifestRepository
from app.repositories.ReportRepository import ReportRepository
from app.repositories.VolumeRepository import VolumeRepository
from app.services.BiomarkerService import BiomarkerService
from app.services.GridSearchService import GridSearchService
from app.services.MetricsService import MetricsService
from app.services.MidlineService import MidlineService

bp = Blueprint('evaluation', __name__, cli_group=None)

EVALUATION_COLUMNS = ["volume_id", "group", "region", "dice", "hd_mm", "precision", "recall",
                      "precision_undefined", "hd_undefined"]
MIDLINE_COLUMNS = ["volume_id", "group", "n", "dice_ipsi", "dice_contra", "band_voxels"]


def _parse_slices(text: str | None) -> tuple[int, ...] | None:
    if text is None or not text.strip():
        return None
    try:
        return tuple(int(s) for s in text.split(',') if s.strip())
    except ValueError:
        raise click.UsageError(f"--slices debe ser una lista de enteros separados por coma: '{text}'.")


def _paired_labels(pred_manifest: str, gt_manifest: str):
    """Pares (item, etiquetas predichas, etiquetas de referencia) emparejados por id."""
    manifests = ManifestRepository()
    volumes = VolumeRepository()
    pairs = manifests.match_ids(manifests.load(pred_manifest), manifests.load(gt_manifest))
    return [(gt_item, volumes.read_labels(pred_item.labels_path), volumes.read_labels(gt_item.labels_path))
            for pred_item, gt_item in pairs]


def _common_options(f):
    f = click.option('--out', 'out_dir', required=True, type=click.Path(file_okay=False))(f)
    f = click.option('--gt', 'gt_manifest', required=True, type=click.Path(exists=True, dir_okay=False),
                     help='Manifiesto de referencia.')(f)
    f = click.option('--pred', 'pred_manifest', required=True, type=click.Path(exists=True, dir_okay=False),
                     help='Manifiesto de predicciones (predictions.csv).')(f)
    f = click.option('--config', 'config_path', type=click.Path(dir_okay=False),
                     help='Archivo TOML de configuración.')(f)
    return f


@bp.cli.command('evaluate')
@_common_options
@click.option('--slices', default=None, help='Índices de corte (eje 0) separados por coma.')
@click.option('--hd-method', type=click.Choice(['brute', 'edt']), default=None)
@handle_cli_errors
def evaluate(config_path, pred_manifest, gt_manifest, out_dir, slices, hd_method):
    """Dice, HD, precisión y exhaustividad por volumen y región, con resumen por grupo."""
    run = load_run_config(config_path, {
        "command": "evaluate",
        "paths": {"pred": pred_manifest, "gt": gt_manifest, "out": out_dir},
        "analysis": {"slice_filter": _parse_slices(slices), "hd_method": hd_method},
    })
    metrics = MetricsService(run.analysis.hd_method)
    rows = []
    for item, pred, gt in _paired_labels(pred_manifest, gt_manifest):
        for row in metrics.evaluate_volume(pred, gt, run.analysis.slice_filter):
            row.volume_id, row.group = item.id, item.group
            rows.append(row.to_dict())
        current_app.logger.info(f"[INFO] Volumen '{item.id}' evaluado.")

    write_run_config(run, out_dir)
    ReportRepository().save_with_summary(rows, os.path.join(out_dir, "evaluation.csv"),
                                         value_columns=["dice", "hd_mm", "precision", "recall"],
                                         by=["group", "region"], columns=EVALUATION_COLUMNS)


@bp.cli.command('midline')
@_common_options
@click.option('--slices', default=None, help='Índices de corte (eje 0) separados por coma.')
@click.option('--iterations', type=int, default=None, help='Número de bandas n = 1..iterations.')
@handle_cli_errors
def midline(config_path, pred_manifest, gt_manifest, out_dir, slices, iterations):
    """Dice ipsi/contralateral dentro de bandas crecientes alrededor de la línea media."""
    run = load_run_config(config_path, {
        "command": "midline",
        "paths": {"pred": pred_manifest, "gt": gt_manifest, "out": out_dir},
        "analysis": {"slice_filter": _parse_slices(slices), "midline_iterations": iterations},
    })
    service = MidlineService()
    rows = []
    for item, pred, gt in _paired_labels(pred_manifest, gt_manifest):
        for row in service.midline_report(pred, gt, run.analysis.midline_iterations, run.analysis.slice_filter,
                                          volume_id=item.id):
            rows.append({**row.to_dict(), "group": item.group})

    frame = pd.DataFrame(rows, columns=MIDLINE_COLUMNS)
    curve = frame.groupby("n", sort=True)[["dice_ipsi", "dice_contra"]].mean().reset_index()

    write_run_config(run, out_dir)
    reports = ReportRepository()
    reports.save_with_summary(rows, os.path.join(out_dir, "midline.csv"),
                              value_columns=["dice_ipsi", "dice_contra"], by=["group", "n"], columns=MIDLINE_COLUMNS)
    reports.save(curve, os.path.join(out_dir, "midline_curve.csv"))


@bp.cli.command('biomarker')
@_common_options
@click.option('--resamples', type=int, default=None)
@click.option('--alpha', 'ci_alpha', type=float, default=None)
@click.option('--seed', type=int, default=None)
@click.option('--paired/--unpaired', default=None, help='Variante pareada de la d de Cohen.')
@handle_cli_errors
def biomarker(config_path, pred_manifest, gt_manifest, out_dir, resamples, ci_alpha, seed, paired):
    """Cociente hemisférico, d de Cohen (gt vs pred) e intervalo BCa."""
    run = load_run_config(config_path, {
        "command": "biomarker",
        "paths": {"pred": pred_manifest, "gt": gt_manifest, "out": out_dir},
        "analysis": {"resamples": resamples, "ci_alpha": ci_alpha, "bootstrap_seed": seed,
                     "paired_cohens_d": paired},
    })
    triples = _paired_labels(pred_manifest, gt_manifest)
    analysis = run.analysis
    result = BiomarkerService().biomarker(
        [gt for _, _, gt in triples], [pred for _, pred, _ in triples],
        resamples=analysis.resamples, alpha=analysis.ci_alpha, seed=analysis.bootstrap_seed,
        paired=analysis.paired_cohens_d,
    )
    ratios = [
        {"volume_id": item.id, "group": item.group, "gt_ratio": g, "pred_ratio": p}
        for (item, _, _), g, p in zip(triples, result.gt_ratios, result.pred_ratios)
    ]

    write_run_config(run, out_dir)
    reports = ReportRepository()
    reports.save([result.to_dict()], os.path.join(out_dir, "biomarker.csv"))
    reports.save_with_summary(ratios, os.path.join(out_dir, "ratios.csv"),
                              value_columns=["gt_ratio", "pred_ratio"], by=["group"])


@bp.cli.command('gridsearch')
@click.option('--config', 'config_path', type=click.Path(dir_okay=False), help='Archivo TOML de configuración.')
@click.option('--manifest', 'manifest_path', required=True, type=click.Path(exists=True, dir_okay=False))
@click.option('--out', 'out_dir', required=True, type=click.Path(file_okay=False))
@click.option('--roles', default='train,val', show_default=True,
              help='Roles del manifiesto sobre los que se busca.')
@click.option('--parallel/--sequential', default=False)
@handle_cli_errors
def gridsearch(config_path, manifest_path, out_dir, roles, parallel):
    """Búsqueda exhaustiva (percentil, cierres) del umbral de referencia."""
    run = load_run_config(config_path, {
        "command": "gridsearch",
        "paths": {"manifest": manifest_path, "out": out_dir},
    })
    wanted = {r.strip() for r in roles.split(',') if r.strip()}
    items = ManifestRepository().load(manifest_path)
    if any(item.role for item in items):
        items = [i for i in items if i.role in wanted]
    else:
        items = [i for i in items if not i.sham]
    if not items:
        raise click.UsageError(f"El manifiesto no tiene elementos con roles {sorted(wanted)}.")

    volumes = VolumeRepository()
    result = GridSearchService().gridsearch(
        [volumes.read_volume(i.volume_path) for i in items],
        [volumes.read_labels(i.labels_path) for i in items],
        run.analysis.percentile_grid, run.analysis.alpha_grid, parallel=parallel,
    )

    write_run_config(run, out_dir)
    reports = ReportRepository()
    reports.save(result.rows(), os.path.join(out_dir, "gridsearch.csv"))
    reports.save([result.to_dict()], os.path.join(out_dir, "gridsearch_best.csv"))
    scores = [{"volume_id": item.id, "group": item.group, "dice": score}
              for item, score in zip(items, result.volume_scores)]
    reports.save_with_summary(scores, os.path.join(out_dir, "gridsearch_volumes.csv"),
                              value_columns=["dice"], by=["group"])
