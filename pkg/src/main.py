#!/usr/bin/env python3
"""
LP Manifold - Applicazione CLI per calcolare varietà instabili locali e lanciare gli studi numerici
"""

import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional
import logging

import click
from dotenv import load_dotenv

from config.settings import (LOGGING_CONFIG, OUTPUT_CONFIG, create_directories, get_env_var,
                             load_config_file)
from src.exceptions import (ConvergenceError, FailureBudgetError, ManifoldError,
                            SpectrumError, ValidationError)
from src.experiments import (STUDY_FUNCTIONS, StudyConfig, StudyContext, build_context,
                             check_failure_budget, fingerprint, fixture_sanity,
                             regression_fixtures, sample_ou, unstable_direction)
from src.manifold import LpSolverConfig, random_graph_point
from src.nonlinear import (NonlinearitySpec, choose_truncation_radius, lipschitz_estimate,
                           sc_constant, theorem_sigma_ceiling)
from src.results import (fixtures_recorded, run_completed, write_cells_csv, write_config_echo,
                         write_error, write_fixtures, write_point_summary, write_summary)
from src.spectral import build_sine_model, coeffs_to_unit_sine
from src.stochastic import dump_path_csv


# Carica variabili d'ambiente
load_dotenv()

logger = logging.getLogger(__name__)

EXIT_VALIDATION = 2
EXIT_FAILURE = 3
EXIT_IO = 4

# Sottocomando -> studio
STUDY_COMMANDS = {
    'shape-study': 'shape_error_sweep',
    'mc-probability': 'mc_probability',
    'invariance': 'invariance_residual',
    'k-diagnostics': 'k_diagnostics',
    'ladder-study': 'ladder_study',
}


def setup_logging(verbose: bool = False, log_file: Optional[Path] = None):
    """
    Configura il logging: terminale senza orari, file rotante con formato completo

    Args:
        verbose: Livello DEBUG
        log_file: File di log del run (opzionale)
    """
    level_name = 'DEBUG' if verbose else get_env_var('LP_MANIFOLD_LOG_LEVEL', LOGGING_CONFIG['level'])
    level = getattr(logging, str(level_name).upper(), logging.INFO)

    console = logging.StreamHandler()
    console.setFormatter(logging.Formatter(LOGGING_CONFIG['console_format']))
    handlers: List[logging.Handler] = [console]
    if log_file is not None:
        file_handler = RotatingFileHandler(log_file, maxBytes=LOGGING_CONFIG['max_file_size'],
                                           backupCount=LOGGING_CONFIG['backup_count'],
                                           encoding='utf-8')
        file_handler.setFormatter(logging.Formatter(LOGGING_CONFIG['format']))
        handlers.append(file_handler)

    logging.basicConfig(level=level, handlers=handlers, force=True)


def exit_code_for(error: BaseException) -> int:
    """Codice di uscita per tipo di errore"""
    if isinstance(error, ValidationError):
        return EXIT_VALIDATION
    if isinstance(error, (ConvergenceError, FailureBudgetError, ManifoldError)):
        return EXIT_FAILURE
    if isinstance(error, OSError):
        return EXIT_IO
    return 1


def apply_overrides(config: Dict[str, Dict[str, Any]], seed: Optional[int],
                    deterministic: bool) -> Dict[str, Dict[str, Any]]:
    """Applica --seed e --deterministic alla configurazione risolta"""
    if seed is not None:
        config['experiments']['base_seed'] = seed
        config['solve']['seed'] = seed
    deterministic = bool(deterministic or config['runtime']['deterministic'])
    config['runtime']['deterministic'] = deterministic
    if deterministic:
        config['solve']['sigma'] = 0.0
    return config


def collect_violations(config: Dict[str, Dict[str, Any]], deterministic: bool = False,
                       check_sc: bool = True) -> List[Dict[str, str]]:
    """
    Elenca tutte le precondizioni violate dalla configurazione

    Args:
        config: Configurazione risolta
        deterministic: Salta le soglie su sigma
        check_sc: Verifica anche che SC < 1 sia raggiungibile (richiede stime di l_F)

    Returns:
        Lista di {'rule', 'message'}; vuota se la configurazione è valida
    """
    violations: List[Dict[str, str]] = []

    def violation(rule: str, message: str):
        violations.append({'rule': rule, 'message': message})

    sp, nl, mf = config['spectral'], config['nonlinear'], config['manifold']
    target_sc = float(nl['target_sc'])
    if not 0.0 < target_sc < 1.0:
        violation("0 < target_sc < 1", f"target_sc={target_sc}")

    try:
        model = build_sine_model(int(sp['mode_count']), float(sp['shift_c']), float(sp['alpha']),
                                 int(sp['grid_size']), float(sp['quadrature_tol']))
    except SpectrumError as e:
        violation(e.rule or "spectrum changes sign", str(e))
        return violations
    except ValidationError as e:
        violation(e.rule or "spectral model", str(e))
        return violations

    lambda_u, lambda_s = model.lambda_u, model.lambda_s
    beta = 0.5 * (lambda_u + lambda_s) if mf['beta'] is None else float(mf['beta'])
    if not lambda_u < beta < lambda_s:
        violation("beta in (lambda_u, lambda_s)",
                  f"beta={beta} fuori da ({lambda_u:g}, {lambda_s:g})")

    p = float(nl['p'])
    if not deterministic:
        sigmas = [float(s) for s in config['experiments']['sigma_list']]
        if float(config['solve']['sigma']) > 0:
            sigmas.append(float(config['solve']['sigma']))
        shape_ceiling = (lambda_s - (p - 1.0) * lambda_u) / p
        for sigma in sorted(set(sigmas)):
            if sigma >= shape_ceiling:
                violation("sigma < (lambda_s-(p-1)lambda_u)/p",
                          f"sigma={sigma} >= {shape_ceiling:g}")
            if sigma >= -lambda_u:
                violation("sigma < -lambda_u", f"sigma={sigma} >= {-lambda_u:g}")

    if check_sc and not violations:
        spec = NonlinearitySpec(p=p, signed_power=bool(nl['signed_power']),
                                safety_factor=float(nl['safety_factor']))
        try:
            if nl['R'] is None:
                choose_truncation_radius(target_sc, spec, model, beta, int(nl['n_pairs']),
                                         int(nl['seed']))
            else:
                l_F = lipschitz_estimate(spec.with_radius(float(nl['R'])), model,
                                         int(nl['n_pairs']), int(nl['seed']))
                sc = sc_constant(1.0, l_F, model.alpha, beta, lambda_u, lambda_s)
                if sc >= 1.0:
                    violation("SC < 1 achievable", f"SC={sc:.4f} con R={nl['R']}")
        except ConvergenceError as e:
            violation("SC < 1 achievable", str(e))
        except ValidationError as e:
            violation(e.rule or "nonlinearity", str(e))

    return violations


def _require_valid(config: Dict[str, Dict[str, Any]], deterministic: bool):
    violations = collect_violations(config, deterministic, check_sc=False)
    if violations:
        first = violations[0]
        raise ValidationError('; '.join(f"{v['rule']}: {v['message']}" for v in violations),
                              rule=first['rule'])


def _build_context(study_config: StudyConfig) -> StudyContext:
    try:
        return build_context(study_config)
    except ConvergenceError as e:
        raise ValidationError(str(e), rule="SC < 1 achievable") from e


def resolve_output_dir(output_dir: Optional[Path], command: str) -> Path:
    """Directory del run: --output-dir oppure <LP_MANIFOLD_OUTPUT_ROOT>/<sottocomando>"""
    if output_dir is not None:
        return Path(output_dir)
    return create_directories() / command


def execute_run(command: str, config_path: Optional[Path], output_dir: Optional[Path],
                seed: Optional[int], deterministic: bool, force: bool, verbose: bool,
                body: Callable[[Dict[str, Dict[str, Any]], Path], None]):
    """
    Flusso comune dei sottocomandi: configurazione, controllo sovrascrittura, esecuzione, errori

    Args:
        command: Nome del sottocomando
        body: Funzione (config, run_dir) che scrive i risultati
    """
    setup_logging(verbose)
    run_dir = None
    try:
        run_dir = resolve_output_dir(output_dir, command)
        config = apply_overrides(load_config_file(config_path), seed, deterministic)
        deterministic = config['runtime']['deterministic']
        _require_valid(config, deterministic)

        if run_completed(run_dir) and not force:
            raise ValidationError(f"Run già completato in {run_dir} (usa --force per sovrascrivere)",
                                  rule="no overwrite without --force")
        run_dir.mkdir(parents=True, exist_ok=True)
        for stale in (OUTPUT_CONFIG['summary_file'], OUTPUT_CONFIG['error_file']):
            (run_dir / stale).unlink(missing_ok=True)

        setup_logging(verbose, run_dir / LOGGING_CONFIG['log_file'])
        logger.info(f"🚀 {command}: output in {run_dir}")
        write_config_echo(config, run_dir)
        body(config, run_dir)
        click.echo(f"✅ {command} completato: {run_dir}")

    except (ManifoldError, OSError) as e:
        code = exit_code_for(e)
        logger.error(f"❌ {type(e).__name__}: {e}")
        if verbose:
            import traceback
            traceback.print_exc()
        if run_dir is not None and not run_completed(run_dir):
            write_error(run_dir, code, e)
        click.echo(f"❌ Errore: {e}", err=True)
        sys.exit(code)


def run_options(func):
    """Opzioni condivise dai sottocomandi che producono un run"""
    options = [
        click.option('--config', '-c', 'config_path', type=click.Path(path_type=Path),
                     help='File YAML di configurazione (default: solo i valori predefiniti)'),
        click.option('--output-dir', '-o', type=click.Path(path_type=Path),
                     help='Directory del run (default: $LP_MANIFOLD_OUTPUT_ROOT/<sottocomando>)'),
        click.option('--seed', type=int, help='Sostituisce il seme base della configurazione'),
        click.option('--deterministic', is_flag=True, help='Forza sigma = 0 (caso deterministico)'),
        click.option('--force', is_flag=True, help='Sovrascrive un run già completato'),
        click.option('--verbose', '-v', is_flag=True, help='Output verboso'),
    ]
    for option in reversed(options):
        func = option(func)
    return func


@click.group()
def cli():
    """LP Manifold - Varietà instabili locali con il metodo di Lyapunov-Perron"""
    pass


@cli.command()
@run_options
def solve(config_path: Optional[Path], output_dir: Optional[Path], seed: Optional[int],
          deterministic: bool, force: bool, verbose: bool):
    """Calcola un punto del grafo h(omega, xi) con xi = r e_mode"""

    def body(config: Dict[str, Dict[str, Any]], run_dir: Path):
        deterministic_run = config['runtime']['deterministic']
        study_config = StudyConfig.from_config(config, deterministic=deterministic_run)
        context = _build_context(study_config)
        settings = config['solve']
        sigma = 0.0 if deterministic_run else float(settings['sigma'])
        if sigma < 0:
            raise ValidationError(f"sigma={sigma} negativa", rule="sigma >= 0")
        run_seed = None if sigma == 0 else int(settings['seed'])

        r = study_config.radius(float(settings['r']), context.spec.R)
        xi = unstable_direction(context.model, r, int(settings['mode']))
        path, ou = sample_ou(run_seed, sigma, context)
        point = random_graph_point(xi, ou, context.spec, context.model, context.cfg)
        if sigma > 0:
            dump_path_csv(path, ou, run_dir / 'path.csv')

        report = point.report
        click.echo(f"📐 Frame: {point.frame}, iterazioni: {report.iterations}, "
                   f"contrazione: {report.observed_contraction:.4f} (SC={report.sc_value:.4f})")
        click.echo(f"   |h| = {point.h_value.norm():.6e}, residuo = {report.final_residual:.3e}")
        if verbose:
            for k, value in enumerate(coeffs_to_unit_sine(point.h_value), start=1):
                if value != 0.0:
                    click.echo(f"   h_{k} (sin kx) = {value:.12e}")

        extra = {'fingerprint': fingerprint(study_config, context),
                 'r': r, 'sigma': sigma, 'seed': run_seed, 'z0': ou.z0,
                 'h_unit_sine': coeffs_to_unit_sine(point.h_value).tolist()}
        write_point_summary(point, run_dir, extra)

    execute_run('solve', config_path, output_dir, seed, deterministic, force, verbose, body)


def _study_command(command: str):
    study = STUDY_COMMANDS[command]

    @run_options
    def command_body(config_path: Optional[Path], output_dir: Optional[Path], seed: Optional[int],
                     deterministic: bool, force: bool, verbose: bool):
        def body(config: Dict[str, Dict[str, Any]], run_dir: Path):
            study_config = StudyConfig.from_config(
                config, deterministic=config['runtime']['deterministic'])
            context = _build_context(study_config)
            result = STUDY_FUNCTIONS[study](study_config, context)
            write_cells_csv(result, run_dir)
            click.echo(f"📊 {study}: {len(result.cells)} celle, {result.failures} fallite")
            check_failure_budget(result, study_config.failure_budget)
            write_summary(result, run_dir)

        execute_run(command, config_path, output_dir, seed, deterministic, force, verbose, body)

    command_body.__doc__ = f"Esegue lo studio {study} e scrive summary.json e cells.csv"
    return cli.command(name=command)(command_body)


for _command in STUDY_COMMANDS:
    _study_command(_command)


@cli.command(name='record-fixtures')
@click.option('--config', '-c', 'config_path', type=click.Path(path_type=Path),
              help='File YAML di configurazione (default: solo i valori predefiniti)')
@click.option('--output', '-o', 'output_path', type=click.Path(path_type=Path),
              help='File delle fixture (default: tests/fixtures/regression.json)')
@click.option('--force', is_flag=True, help='Sovrascrive fixture già registrate')
@click.option('--verbose', '-v', is_flag=True, help='Output verboso')
def record_fixtures(config_path: Optional[Path], output_path: Optional[Path], force: bool,
                    verbose: bool):
    """Registra R*, l_F(0.1) e il residuo di invarianza di un run verificato"""
    setup_logging(verbose)
    path = Path(output_path or OUTPUT_CONFIG['fixtures_file'])
    try:
        if fixtures_recorded(path) and not force:
            raise ValidationError(f"Fixture già registrate in {path} (usa --force per sovrascrivere)",
                                  rule="no overwrite without --force")
        config = apply_overrides(load_config_file(config_path), None, True)
        values = regression_fixtures(StudyConfig.from_config(config, deterministic=True))
        violations = fixture_sanity(values)
        if violations:
            raise ManifoldError("Run non verificato, fixture non registrate: " + '; '.join(
                f"{v['rule']}: {v['message']}" for v in violations))
        write_fixtures(values, config, path)
    except (ManifoldError, OSError) as e:
        click.echo(f"❌ Errore: {e}", err=True)
        sys.exit(exit_code_for(e))

    click.echo(f"📌 Fixture registrate in {path}")
    click.echo(f"   R*={values['R_star']:.12g}, l_F(0.1)={values['l_F_at_lipschitz_radius']:.6g}, "
               f"rho={values['invariance_rho']:.3e}")


@cli.command()
@click.option('--config', '-c', 'config_path', type=click.Path(path_type=Path),
              help='File YAML di configurazione da verificare')
@click.option('--deterministic', is_flag=True, help='Ignora le soglie su sigma')
@click.option('--verbose', '-v', is_flag=True, help='Output verboso')
def validate(config_path: Optional[Path], deterministic: bool, verbose: bool):
    """Verifica una configurazione contro le precondizioni dei moduli"""
    setup_logging(verbose)
    try:
        config = load_config_file(config_path)
    except ValidationError as e:
        click.echo(f"❌ Errore: {e}", err=True)
        sys.exit(EXIT_VALIDATION)

    deterministic = bool(deterministic or config['runtime']['deterministic'])
    violations = collect_violations(config, deterministic)
    if not violations:
        sp, nl = config['spectral'], config['nonlinear']
        model = build_sine_model(int(sp['mode_count']), float(sp['shift_c']), float(sp['alpha']),
                                 int(sp['grid_size']), float(sp['quadrature_tol']))
        ceiling = theorem_sigma_ceiling(model.lambda_u, model.lambda_s, float(nl['p']))
        cfg = LpSolverConfig.for_model(model, beta=config['manifold']['beta'],
                                       horizon=config['manifold']['horizon'],
                                       dt=float(config['stochastic']['dt']))
        click.echo("✅ Configurazione valida")
        click.echo(f"   lambda_u={model.lambda_u:g}, lambda_s={model.lambda_s:g}, N={model.split_index}")
        click.echo(f"   beta={cfg.beta:g}, T={cfg.horizon:g}, soglia sigma={ceiling:g}")
        return

    click.echo(f"❌ {len(violations)} precondizioni violate:")
    for v in violations:
        click.echo(f"   - [{v['rule']}] {v['message']}")
    sys.exit(EXIT_VALIDATION)


if __name__ == '__main__':
    cli()
