"""
Configurazioni globali per lp-manifold
"""

import copy
import os
from pathlib import Path
from typing import Any, Dict, Optional, Union

import yaml

from src.exceptions import ValidationError


# Directory base del progetto
BASE_DIR = Path(__file__).parent.parent


# Modello spettrale L = -d_xx - c*id su (0, pi)
SPECTRAL_CONFIG = {
    'mode_count': 8,
    'shift_c': 3.0,  # lambda_k = k^2 - 3 (lambda_1=-2, lambda_2=1)
    'alpha': 0.0,
    'grid_size': 256,
    'quadrature_tol': 1e-12
}


# Nonlinearità e troncamento
NONLINEAR_CONFIG = {
    'p': 2,
    'signed_power': False,
    'R': None,  # None: scelto per bisezione con target_sc
    'target_sc': 0.5,
    'safety_factor': 1.25,
    'n_pairs': 1000,
    'seed': 0
}


# Cammini di Wiener e processo OU
STOCHASTIC_CONFIG = {
    'dt': 0.01,
    'tail_cutoff': 40.0
}


# Risolutore di Lyapunov-Perron
MANIFOLD_CONFIG = {
    'beta': None,  # None: (lambda_u + lambda_s)/2
    'horizon': None,  # None: 30/(lambda_s - beta)
    'max_iterations': 200,
    'tolerance': 1e-12,
    'chart_fraction': 0.5,
    'contraction_slack': 0.05
}


# Studi numerici
EXPERIMENTS_CONFIG = {
    'sigma_list': [0.5, 0.25, 0.125],
    'radius_units': 'cutoff',  # 'cutoff': raggi in unità di R, 'absolute': valori di |xi|_alpha
    'radius_list': [0.2, 0.1, 0.05],
    'ladder_radii': [0.4, 0.2, 0.1, 0.05],
    'n_samples': 20,
    'base_seed': 0,
    'dt_flow': 0.05,
    'invariance_step': 0.1,
    'invariance_radius': 0.2,
    'probe_radius': 0.1,  # raggio del test di forma Monte Carlo
    'pilot_samples': 50,
    'calibration_factor': 1.5,
    'failure_budget': 0.1,  # frazione massima di celle fallite
    'ks_threshold': 0.1,
    'growth_horizon': 50.0
}


# Esecuzione
RUNTIME_CONFIG = {
    'concurrency': 4,
    'deterministic': False  # come --deterministic
}


# Singolo calcolo del grafo (sottocomando solve)
SOLVE_CONFIG = {
    'r': 0.2,  # stesse unità di experiments.radius_units
    'sigma': 0.1,  # 0: modalità deterministica
    'seed': 0,
    'mode': 1  # direzione e_mode in E_u
}


# Configurazioni logging
LOGGING_CONFIG = {
    'level': 'INFO',
    'format': '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    'console_format': '%(levelname)s - %(name)s - %(message)s',  # senza orari sul terminale
    'log_file': 'run.log',  # dentro la directory del run
    'max_file_size': 10 * 1024 * 1024,  # 10MB
    'backup_count': 5
}


# Output dei run
OUTPUT_CONFIG = {
    'output_root': BASE_DIR / 'runs',
    'schema_version': '1.0',
    'float_format': '.17g',
    'summary_file': 'summary.json',
    'cells_file': 'cells.csv',
    'echo_file': 'config_echo.yaml',
    'error_file': 'error.json',
    'fixtures_file': BASE_DIR / 'tests' / 'fixtures' / 'regression.json'  # valori di regressione registrati
}


# Sezioni ammesse nei file YAML dei run
RUN_SECTIONS = {
    'spectral': SPECTRAL_CONFIG,
    'nonlinear': NONLINEAR_CONFIG,
    'stochastic': STOCHASTIC_CONFIG,
    'manifold': MANIFOLD_CONFIG,
    'experiments': EXPERIMENTS_CONFIG,
    'runtime': RUNTIME_CONFIG,
    'solve': SOLVE_CONFIG
}


def get_config(section: str = None) -> Dict[str, Any]:
    """
    Ottiene configurazioni per una sezione specifica o tutte

    Args:
        section: Nome della sezione (es: 'spectral', 'logging')

    Returns:
        Dizionario con le configurazioni
    """
    configs = dict(RUN_SECTIONS)
    configs['logging'] = LOGGING_CONFIG
    configs['output'] = OUTPUT_CONFIG

    if section:
        return configs.get(section, {})

    return configs


def get_env_var(var_name: str, default: Any = None) -> Any:
    """
    Ottiene una variabile d'ambiente con valore di default

    Args:
        var_name: Nome della variabile d'ambiente
        default: Valore di default se la variabile non esiste

    Returns:
        Valore della variabile d'ambiente o default
    """
    return os.getenv(var_name, default)


def default_run_config() -> Dict[str, Dict[str, Any]]:
    """Copia profonda dei default di tutte le sezioni di un run"""
    return {name: copy.deepcopy(values) for name, values in RUN_SECTIONS.items()}


def load_config_file(config_path: Optional[Union[str, Path]] = None) -> Dict[str, Dict[str, Any]]:
    """
    Carica un file YAML e lo fonde con i default (modalità stretta)

    Args:
        config_path: Path del file, None per i soli default

    Returns:
        Configurazione completa per sezione

    Raises:
        ValidationError: file mancante, YAML non valido, sezioni o chiavi sconosciute
    """
    config = default_run_config()
    if config_path is None:
        return config

    config_path = Path(config_path)
    if not config_path.is_file():
        raise ValidationError(f"File di configurazione non trovato: {config_path}", rule="config readable")
    try:
        with open(config_path, 'r', encoding='utf-8') as f:
            loaded = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ValidationError(f"YAML non valido in {config_path}: {e}", rule="config parses")

    if loaded is None:
        return config
    if not isinstance(loaded, dict):
        raise ValidationError(f"{config_path}: attesa una mappa di sezioni", rule="config parses")

    for section, values in loaded.items():
        if section not in config:
            raise ValidationError(f"Sezione sconosciuta: {section}", rule="known keys")
        if values is None:
            continue
        if not isinstance(values, dict):
            raise ValidationError(f"La sezione {section} deve essere una mappa", rule="config parses")
        for key, value in values.items():
            if key not in config[section]:
                raise ValidationError(f"Chiave sconosciuta: {section}.{key}", rule="known keys")
            config[section][key] = value

    return config


def create_directories(output_root: Optional[Path] = None):
    """Crea le directory necessarie se non esistono"""
    root = Path(output_root or get_env_var('LP_MANIFOLD_OUTPUT_ROOT', OUTPUT_CONFIG['output_root']))
    root.mkdir(parents=True, exist_ok=True)
    return root


if __name__ == '__main__':
    # Test configurazioni
    print("🔧 Configurazioni lp-manifold:")
    print(f"   Base directory: {BASE_DIR}")
    print(f"   Modi spettrali: {SPECTRAL_CONFIG['mode_count']} (c={SPECTRAL_CONFIG['shift_c']})")
    print(f"   Esponente p: {NONLINEAR_CONFIG['p']}")
    print(f"   Passo temporale: {STOCHASTIC_CONFIG['dt']}")

    print("\n📋 Sezioni di un run:")
    for name, values in RUN_SECTIONS.items():
        print(f"   {name}: {len(values)} chiavi")
