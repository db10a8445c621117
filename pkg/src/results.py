"""
Results - Scrittura dei risultati di un run: riepilogo JSON, tabella CSV delle celle,
eco della configurazione e report di errore
"""

import csv
import json
import math
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Optional
import logging

import numpy as np
import yaml

from config.settings import OUTPUT_CONFIG
from src.experiments import CellRecord, StudyResult
from src.manifold import ManifoldPoint, point_to_json


logger = logging.getLogger(__name__)

SCHEMA_VERSION = OUTPUT_CONFIG['schema_version']

CSV_COLUMNS = ['study', 'cell_id', 'seed', 'sigma', 'r', 'err', 'bound', 'success',
               'iterations', 'residual']


def jsonable(value: Any) -> Any:
    """Converte tipi numpy, tuple, Path e NaN in valori JSON standard"""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, np.generic):
        return jsonable(value.item())
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, Path):
        return str(value)
    return value


def _format_cell(value: Any) -> str:
    if value is None:
        return ''
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (float, np.floating)):
        return format(float(value), OUTPUT_CONFIG['float_format'])
    return str(value)


def cell_to_json(cell: CellRecord) -> Dict[str, Any]:
    return jsonable(asdict(cell))


def write_cells_csv(result: StudyResult, output_dir: Path) -> Path:
    """Tabella per cella con le colonne fisse, float a 17 cifre significative"""
    path = Path(output_dir) / OUTPUT_CONFIG['cells_file']
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(CSV_COLUMNS)
        for cell in result.cells:
            writer.writerow([_format_cell(getattr(cell, column)) for column in CSV_COLUMNS])
    return path


def write_json(data: Dict[str, Any], path: Path) -> Path:
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(jsonable(data), f, indent=2, sort_keys=True, allow_nan=False)
        f.write('\n')
    return path


def write_summary(result: StudyResult, output_dir: Path,
                  extra: Optional[Dict[str, Any]] = None) -> Path:
    """
    Riepilogo JSON dello studio

    Il timestamp compare solo in metadata.created_at; scriverlo per ultimo segna il run completato.
    """
    summary = {
        'schema_version': SCHEMA_VERSION,
        'study': result.study,
        'aggregates': result.aggregates,
        'fingerprint': result.fingerprint,
        'failures': result.failures,
        'cell_count': len(result.cells),
        'cells': [cell_to_json(cell) for cell in result.cells],
        'metadata': {'created_at': datetime.now(timezone.utc).isoformat()},
    }
    if extra:
        summary.update(extra)
    return write_json(summary, Path(output_dir) / OUTPUT_CONFIG['summary_file'])


def write_point_summary(point: ManifoldPoint, output_dir: Path,
                        extra: Optional[Dict[str, Any]] = None) -> Path:
    """Riepilogo JSON di un singolo punto del grafo (sottocomando solve)"""
    summary = {
        'schema_version': SCHEMA_VERSION,
        'study': 'solve',
        'point': point_to_json(point),
        'metadata': {'created_at': datetime.now(timezone.utc).isoformat()},
    }
    if extra:
        summary.update(extra)
    return write_json(summary, Path(output_dir) / OUTPUT_CONFIG['summary_file'])


def write_config_echo(config: Dict[str, Any], output_dir: Path) -> Path:
    """Configurazione completa risolta, sufficiente a riprodurre il run"""
    path = Path(output_dir) / OUTPUT_CONFIG['echo_file']
    with open(path, 'w', encoding='utf-8') as f:
        yaml.safe_dump(jsonable(config), f, sort_keys=True, default_flow_style=False)
    return path


def write_error(output_dir: Path, exit_code: int, error: BaseException) -> Optional[Path]:
    """Report di errore leggibile da macchina; None se la directory non è scrivibile"""
    try:
        Path(output_dir).mkdir(parents=True, exist_ok=True)
        return write_json({
            'schema_version': SCHEMA_VERSION,
            'exit_code': exit_code,
            'error_type': type(error).__name__,
            'message': str(error),
            'rule': getattr(error, 'rule', None),
        }, Path(output_dir) / OUTPUT_CONFIG['error_file'])
    except OSError as e:
        logger.error(f"Impossibile scrivere il report di errore: {e}")
        return None


def run_completed(output_dir: Path) -> bool:
    return (Path(output_dir) / OUTPUT_CONFIG['summary_file']).exists()


def write_fixtures(values: Dict[str, Any], config: Dict[str, Any], path: Path) -> Path:
    """Fixture di regressione con la configurazione che le riproduce"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return write_json({
        'schema_version': SCHEMA_VERSION,
        'recorded': True,
        'config': config,
        'values': values,
        'metadata': {'created_at': datetime.now(timezone.utc).isoformat(),
                     'numpy': np.__version__},
    }, path)


def load_fixtures(path: Path) -> Dict[str, Any]:
    """Carica le fixture; un file non registrato ha recorded = false e values = null"""
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


def fixtures_recorded(path: Path) -> bool:
    path = Path(path)
    return path.is_file() and bool(load_fixtures(path).get('recorded'))
