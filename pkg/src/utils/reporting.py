"""CSV and JSON outputs of the command-line tools."""
import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence

from src.models import COEFFICIENT_NAMES, CohortReport, ModelCoefficients, SliceOutcome
from src.utils.errors import IoFailureError

logger = logging.getLogger(__name__)

SLICE_DIAGNOSTICS_COLUMNS = ('slice_index', 'p_value', 'rmse_hu', 'n_pixels',
                             'direction_override', 'calcinates_replaced')
LINE_FIT_COLUMNS = ('slice_index', 'axis', 'index', 'start', 'end', 'fitted') + COEFFICIENT_NAMES + \
                   ('rmse', 'iterations', 'converged', 'termination_reason', 'error')
METRICS_LONG_COLUMNS = ('slice_index', 'metric', 'value')
TRUTH_COLUMNS = ('slice_index', 'row', 'coefficient', 'truth', 'fitted', 'relative_error')

SLICE_DIAGNOSTICS_FILE = 'slice_diagnostics.csv'
LINE_FITS_FILE = 'line_fits.csv'
METRICS_LONG_FILE = 'metrics_long.csv'
TRUTH_VS_FIT_FILE = 'truth_vs_fit.csv'
REPORT_FILE = 'report.json'


def write_csv(path, columns: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', newline='', encoding='utf-8') as handle:
            writer = csv.DictWriter(handle, fieldnames=list(columns), extrasaction='ignore')
            writer.writeheader()
            for row in rows:
                writer.writerow(row)
    except OSError as e:
        raise IoFailureError(f'Cannot write {path}: {str(e)}') from e
    return path


def write_json(path, data: Any) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(data, indent=2, sort_keys=False), encoding='utf-8')
    except OSError as e:
        raise IoFailureError(f'Cannot write {path}: {str(e)}') from e
    return path


def read_csv_columns(path, columns: Sequence[str]) -> Dict[str, List[float]]:
    """
    Numeric values of the named columns; blank cells are skipped

    Raises:
        KeyError: if a column is missing
    """
    path = Path(path)
    values: Dict[str, List[float]] = {name: [] for name in columns}
    try:
        with open(path, newline='', encoding='utf-8') as handle:
            reader = csv.DictReader(handle)
            missing = [name for name in columns if name not in (reader.fieldnames or [])]
            if missing:
                raise KeyError(f'{path}: missing columns {", ".join(missing)}')
            for row in reader:
                for name in columns:
                    cell = (row.get(name) or '').strip()
                    if cell:
                        values[name].append(float(cell))
    except OSError as e:
        raise IoFailureError(f'Cannot read {path}: {str(e)}') from e
    return values


def line_fit_rows(outcomes: Iterable[SliceOutcome]) -> List[Dict[str, Any]]:
    """One row per fitted or skipped span of every slice, rows before columns"""
    rows = []
    for outcome in outcomes:
        for fits in (outcome.field.row_fits, outcome.field.column_fits):
            for index in sorted(fits):
                for line in fits[index]:
                    row = line.to_dict()
                    row['slice_index'] = outcome.slice_index
                    rows.append(row)
    return rows


def truth_rows(outcomes: Iterable[SliceOutcome],
               truth: Mapping[int, Mapping[int, ModelCoefficients]]) -> List[Dict[str, Any]]:
    """Relative error of each row-fit coefficient against the generating one"""
    rows = []
    for outcome in outcomes:
        expected = truth.get(outcome.slice_index, {})
        for row_index in sorted(expected):
            fitted = [line for line in outcome.field.row_fits.get(row_index, []) if line.fitted]
            if not fitted:
                continue
            line = max(fitted, key=lambda item: item.length)
            for name in COEFFICIENT_NAMES:
                true_value = getattr(expected[row_index], name)
                fit_value = getattr(line.result.coefficients, name)
                relative = abs(fit_value - true_value) / abs(true_value) if true_value else abs(fit_value)
                rows.append({
                    'slice_index': outcome.slice_index,
                    'row': row_index,
                    'coefficient': name,
                    'truth': true_value,
                    'fitted': fit_value,
                    'relative_error': relative
                })
    return rows


def write_report(out_dir, outcomes: Sequence[SliceOutcome] = (), reports: Sequence[CohortReport] = (),
                 truth: Optional[Mapping[int, Mapping[int, ModelCoefficients]]] = None,
                 metrics: Sequence[Mapping[str, Any]] = ()) -> List[Path]:
    """
    Write every output the given results support

    Returns:
        paths written, in a fixed order

    Raises:
        ValueError: if there is nothing to write
        IoFailureError: if a file cannot be written
    """
    if not outcomes and not reports and not metrics:
        raise ValueError('No results to report')
    out_dir = Path(out_dir)
    paths = []
    if outcomes:
        paths.append(write_csv(out_dir / SLICE_DIAGNOSTICS_FILE, SLICE_DIAGNOSTICS_COLUMNS,
                               (outcome.diagnostics_row() for outcome in outcomes)))
        paths.append(write_csv(out_dir / LINE_FITS_FILE, LINE_FIT_COLUMNS, line_fit_rows(outcomes)))
        if truth is not None:
            paths.append(write_csv(out_dir / TRUTH_VS_FIT_FILE, TRUTH_COLUMNS, truth_rows(outcomes, truth)))
    if metrics:
        paths.append(write_csv(out_dir / METRICS_LONG_FILE, METRICS_LONG_COLUMNS, metrics))
    if reports:
        paths.append(write_json(out_dir / REPORT_FILE, {'reports': [report.to_dict() for report in reports]}))
    logger.info(f'Wrote {len(paths)} report files to {out_dir}')
    return paths
