"""
Experiments - Studi riproducibili sulla varietà instabile: scaling dell'errore di forma,
probabilità Monte Carlo, residuo di invarianza, diagnostica delle costanti K e scala h1-h2-h3
"""

import hashlib
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple
import logging

import numpy as np
import scipy
from scipy import stats

from src.cell_runner import run_cells
from src.exceptions import ConvergenceError, FailureBudgetError, ManifoldError, ValidationError
from src.manifold import (LpSolverConfig, FixedPointReport, closed_form_shape, flow_forward,
                          hbar1, hbar2, hbar3, random_graph_point, random_leading_shape,
                          solve_graph)
from src.nonlinear import (NonlinearitySpec, certify_lipschitz, choose_truncation_radius,
                           lipschitz_estimate, sc_constant, theorem_sigma_ceiling)
from src.spectral import SpectralModel, SpectralVector, build_sine_model, project
from src.stochastic import (OuTrajectory, WienerPath, growth_diagnostics, ou_trajectory,
                            sample_wiener, shift_path, tail_constants, zero_path)


logger = logging.getLogger(__name__)

RADIUS_UNITS = ('absolute', 'cutoff')

STUDIES = ('shape_error_sweep', 'mc_probability', 'invariance_residual',
           'k_diagnostics', 'ladder_study')


@dataclass(frozen=True)
class StudyConfig:
    """Parametri completi di uno studio"""
    spectral: Dict[str, Any]
    nonlinear: Dict[str, Any]
    stochastic: Dict[str, Any]
    manifold: Dict[str, Any]
    sigma_list: Tuple[float, ...]
    radius_list: Tuple[float, ...]
    n_samples: int
    base_seed: int
    dt_flow: float
    radius_units: str = 'cutoff'
    invariance_step: float = 0.1
    invariance_radius: float = 0.2
    probe_radius: float = 0.1
    ladder_radii: Tuple[float, ...] = (0.4, 0.2, 0.1, 0.05)
    pilot_samples: int = 50
    calibration_factor: float = 1.5
    failure_budget: float = 0.1
    ks_threshold: float = 0.1
    growth_horizon: float = 50.0
    concurrency: int = 4
    deterministic: bool = False

    def __post_init__(self):
        if not self.sigma_list or not self.radius_list:
            raise ValidationError("sigma_list e radius_list non possono essere vuote", rule="nonempty lists")
        if self.n_samples < 1:
            raise ValidationError("n_samples deve essere >= 1", rule="n_samples >= 1")
        if any(s <= 0 for s in self.sigma_list):
            raise ValidationError("Ogni sigma deve essere positivo", rule="sigma > 0")
        if any(r < 0 for r in self.radius_list):
            raise ValidationError("Ogni raggio deve essere >= 0", rule="r >= 0")
        if self.dt_flow <= 0:
            raise ValidationError("dt_flow deve essere positivo", rule="dt_flow > 0")
        if self.radius_units not in RADIUS_UNITS:
            raise ValidationError(f"radius_units={self.radius_units!r} non in {RADIUS_UNITS}",
                                  rule="radius_units in (absolute, cutoff)")

    @classmethod
    def from_config(cls, config: Dict[str, Dict[str, Any]], deterministic: bool = False,
                    seed_override: Optional[int] = None) -> 'StudyConfig':
        """
        Costruisce lo StudyConfig dalla configurazione per sezioni

        Args:
            config: Configurazione risolta (vedi config.settings.load_config_file)
            deterministic: Forza sigma = 0
            seed_override: Sostituisce experiments.base_seed

        Returns:
            StudyConfig validato
        """
        exp = config['experiments']
        return cls(
            spectral=dict(config['spectral']),
            nonlinear=dict(config['nonlinear']),
            stochastic=dict(config['stochastic']),
            manifold=dict(config['manifold']),
            sigma_list=tuple(float(s) for s in exp['sigma_list']),
            radius_list=tuple(float(r) for r in exp['radius_list']),
            n_samples=int(exp['n_samples']),
            base_seed=int(exp['base_seed'] if seed_override is None else seed_override),
            dt_flow=float(exp['dt_flow']),
            radius_units=str(exp['radius_units']),
            invariance_step=float(exp['invariance_step']),
            invariance_radius=float(exp['invariance_radius']),
            probe_radius=float(exp['probe_radius']),
            ladder_radii=tuple(float(r) for r in exp['ladder_radii']),
            pilot_samples=int(exp['pilot_samples']),
            calibration_factor=float(exp['calibration_factor']),
            failure_budget=float(exp['failure_budget']),
            ks_threshold=float(exp['ks_threshold']),
            growth_horizon=float(exp['growth_horizon']),
            concurrency=int(config['runtime']['concurrency']),
            deterministic=deterministic,
        )

    def noise_levels(self) -> Tuple[float, ...]:
        return (0.0,) if self.deterministic else self.sigma_list

    def radius(self, r: float, R: float) -> float:
        """Raggio |xi|_alpha effettivo: r stesso o r * R se radius_units = 'cutoff'"""
        return r * R if self.radius_units == 'cutoff' else r


@dataclass(frozen=True, eq=False)
class StudyContext:
    """Oggetti condivisi da tutte le celle: modello, nonlinearità certificata, risolutore"""
    model: SpectralModel
    spec: NonlinearitySpec
    cfg: LpSolverConfig
    sc: float


@dataclass
class CellRecord:
    """Riga per cella; i campi extra finiscono solo nel riepilogo JSON"""
    study: str
    cell_id: int
    seed: Optional[int]
    sigma: float
    r: float
    err: Optional[float] = None
    bound: Optional[float] = None
    success: bool = False
    iterations: Optional[int] = None
    residual: Optional[float] = None
    error_type: Optional[str] = None
    error: Optional[str] = None
    extras: Dict[str, Any] = field(default_factory=dict)


@dataclass
class StudyResult:
    """Celle, statistiche aggregate e impronta dei parametri in vigore"""
    study: str
    cells: List[CellRecord]
    aggregates: Dict[str, Any]
    fingerprint: Dict[str, Any]

    @property
    def failures(self) -> int:
        return sum(1 for cell in self.cells if cell.error_type is not None)


def derive_seed(base_seed: int, study: str, index: int) -> int:
    """Seme deterministico per (studio, campione) da SeedSequence"""
    key = int.from_bytes(hashlib.sha256(study.encode('utf-8')).digest()[:8], 'little')
    state = np.random.SeedSequence([base_seed, key, index]).generate_state(1, dtype=np.uint64)
    return int(state[0])


def build_context(config: StudyConfig) -> StudyContext:
    """
    Costruisce modello, raggio di troncamento certificato e configurazione del risolutore

    Returns:
        StudyContext con SC < 1
    """
    sp = config.spectral
    model = build_sine_model(int(sp['mode_count']), float(sp['shift_c']), float(sp['alpha']),
                             int(sp['grid_size']), float(sp.get('quadrature_tol', 1e-12)))
    mf = config.manifold
    cfg = LpSolverConfig.for_model(
        model, beta=mf['beta'], horizon=mf['horizon'], dt=float(config.stochastic['dt']),
        max_iterations=int(mf['max_iterations']), tolerance=float(mf['tolerance']),
        target_sc=float(config.nonlinear['target_sc']),
        chart_fraction=float(mf['chart_fraction']),
        contraction_slack=float(mf['contraction_slack']),
        tail_cutoff=float(config.stochastic['tail_cutoff']))

    nl = config.nonlinear
    spec = NonlinearitySpec(p=float(nl['p']), signed_power=bool(nl['signed_power']),
                            safety_factor=float(nl['safety_factor']))
    n_pairs, seed = int(nl['n_pairs']), int(nl['seed'])
    if nl['R'] is None:
        spec, _ = choose_truncation_radius(cfg.target_sc, spec, model, cfg.beta, n_pairs, seed)
    else:
        spec = spec.with_radius(float(nl['R']))
    spec = certify_lipschitz(spec, model, n_pairs, seed)
    sc = sc_constant(1.0, spec.l_F, model.alpha, cfg.beta, model.lambda_u, model.lambda_s)
    if sc >= 1.0:
        raise ValidationError(f"SC={sc:.4f} >= 1 con R={spec.R}", rule="SC < 1")
    logger.info(f"🔧 Contesto: N={model.split_index}, beta={cfg.beta}, T={cfg.horizon:.4g}, "
                f"R={spec.R:.4g}, l_F={spec.l_F:.4g}, SC={sc:.4f}")
    return StudyContext(model=model, spec=spec, cfg=cfg, sc=sc)


def fingerprint(config: StudyConfig, context: StudyContext) -> Dict[str, Any]:
    """Tutti i parametri, tolleranze e default in vigore per lo studio"""
    cfg = context.cfg
    return {
        'model': context.model.describe(),
        'nonlinearity': {'p': context.spec.p, 'signed_power': context.spec.signed_power,
                         'R': context.spec.R, 'l_F': context.spec.l_F,
                         'safety_factor': context.spec.safety_factor},
        'solver': {'beta': cfg.beta, 'horizon': cfg.horizon, 'dt': cfg.dt,
                   'max_iterations': cfg.max_iterations, 'tolerance': cfg.tolerance,
                   'target_sc': cfg.target_sc, 'chart_fraction': cfg.chart_fraction,
                   'contraction_slack': cfg.contraction_slack, 'tail_cutoff': cfg.tail_cutoff,
                   'M_c': 1.0},
        'sc': context.sc,
        'study': {'sigma_list': list(config.sigma_list), 'radius_list': list(config.radius_list),
                  'radius_units': config.radius_units,
                  'n_samples': config.n_samples, 'base_seed': config.base_seed,
                  'dt_flow': config.dt_flow, 'deterministic': config.deterministic,
                  'calibration_factor': config.calibration_factor,
                  'pilot_samples': config.pilot_samples, 'ks_threshold': config.ks_threshold},
        'versions': {'numpy': np.__version__, 'scipy': scipy.__version__},
    }


def unstable_direction(model: SpectralModel, r: float, mode: int = 1) -> SpectralVector:
    """xi = c e_mode con |xi|_alpha = r"""
    if not 1 <= mode <= model.split_index:
        raise ValidationError(f"Il modo {mode} non appartiene a E_u (N={model.split_index})",
                              rule="mode <= N")
    return SpectralVector.basis(mode, model, r / model.alpha_weights[mode - 1])


def sample_ou(seed: Optional[int], sigma: float, context: StudyContext,
              t_max: float = 0.0, backward: Optional[float] = None) -> Tuple[WienerPath, OuTrajectory]:
    """
    Cammino e traiettoria OU che coprono [-T, t_max]

    Con sigma = 0 il cammino è identicamente nullo.
    """
    cfg = context.cfg
    dt = cfg.dt
    span = cfg.horizon if backward is None else max(cfg.horizon, backward)
    steps_back = int(math.ceil((span + cfg.tail_cutoff) / dt - 1e-9))
    steps_fwd = int(math.ceil(t_max / dt - 1e-9))
    if sigma == 0:
        path = zero_path(-steps_back * dt, steps_fwd * dt, dt)
    else:
        path = sample_wiener(seed, -steps_back * dt, steps_fwd * dt, dt)
    return path, ou_trajectory(path, sigma, cfg.tail_cutoff)


def _solver_extras(report: FixedPointReport, context: StudyContext) -> Dict[str, Any]:
    """Certificato di contrazione di un singolo solve"""
    cfg = context.cfg
    bound = math.ceil(math.log(cfg.tolerance / report.first_increment) / math.log(context.sc)) + 2 \
        if report.first_increment > cfg.tolerance else 1
    return {
        'contraction': report.observed_contraction,
        'sc': report.sc_value,
        'tail_bound': report.truncation_tail_bound,
        'cutoff_active': report.cutoff_active,
        'iteration_bound': bound,
        'contraction_ok': (report.observed_contraction <= report.sc_value + cfg.contraction_slack
                           and report.iterations <= bound),
    }


def _run(study: str, metas: Sequence[Dict[str, Any]], body: Callable[[Dict[str, Any]], CellRecord],
         config: StudyConfig) -> List[CellRecord]:
    """Esegue una cella per meta; gli errori diventano record con success=False"""
    def make_cell(meta: Dict[str, Any]) -> Callable[[], CellRecord]:
        return lambda: body(meta)

    def on_error(index: int, error: ManifoldError) -> CellRecord:
        meta = metas[index]
        return CellRecord(study=study, cell_id=index, seed=meta.get('seed'),
                          sigma=meta.get('sigma', 0.0), r=meta.get('r', 0.0), success=False,
                          error_type=type(error).__name__, error=str(error))

    logger.info(f"🔍 {study}: {len(metas)} celle")
    return run_cells([make_cell(meta) for meta in metas], config.concurrency, on_error)


def _loglog_slope(radii: Sequence[float], errors: Sequence[float]) -> Optional[float]:
    points = [(r, e) for r, e in zip(radii, errors)
              if r > 0 and e is not None and e > 0 and math.isfinite(e)]
    if len(points) < 2:
        return None
    x = np.log([r for r, _ in points])
    y = np.log([e for _, e in points])
    return float(np.polyfit(x, y, 1)[0])


def _strictly_decreasing(values: Sequence[float]) -> bool:
    return all(a > b for a, b in zip(values, values[1:]))


def _wilson(successes: int, trials: int) -> Tuple[float, float]:
    if trials == 0:
        return (0.0, 1.0)
    ci = stats.binomtest(successes, trials).proportion_ci(confidence_level=0.95, method='wilson')
    return (float(ci.low), float(ci.high))


def shape_error_sweep(config: StudyConfig, context: Optional[StudyContext] = None) -> StudyResult:
    """
    Errore di forma err(r) = ||h - (L_s - p L_u)^{-1} xi_s^p|| al variare del raggio

    Args:
        config: Parametri dello studio (deterministico o per campioni)
        context: Contesto precalcolato (opzionale)

    Returns:
        StudyResult con err(r), err(r)/r^p e pendenza log-log
    """
    study = 'shape_error_sweep'
    context = context or build_context(config)
    model, spec, cfg = context.model, context.spec, context.cfg
    p = spec.p
    radii = sorted((config.radius(r, spec.R) for r in config.radius_list), reverse=True)
    samples = 1 if config.deterministic else config.n_samples

    metas = [{'sigma': sigma, 'sample': i, 'r': r, 'seed': derive_seed(config.base_seed, study, i)}
             for sigma in config.noise_levels() for i in range(samples) for r in radii]

    def body(meta: Dict[str, Any]) -> CellRecord:
        sigma, r = meta['sigma'], meta['r']
        _, ou = sample_ou(meta['seed'], sigma, context)
        xi = unstable_direction(model, r)
        point = random_graph_point(xi, ou, spec, model, cfg)
        reference = closed_form_shape(xi, p, model, spec.signed_power)
        err = (point.h_value - reference).norm()
        leading = random_leading_shape(xi, p, model, ou.z0, spec.signed_power)
        extras = _solver_extras(point.report, context)
        extras.update({'err_over_rp': err / r ** p if r > 0 else 0.0,
                       'err_leading': (point.h_value - leading).norm(),
                       'h_norm': point.h_value.norm(), 'z0': ou.z0})
        return CellRecord(study=study, cell_id=0, seed=meta['seed'] if sigma > 0 else None,
                          sigma=sigma, r=r, err=err, success=True,
                          iterations=point.report.iterations,
                          residual=point.report.final_residual, extras=extras)

    cells = _renumber(_run(study, metas, body, config))

    aggregates: Dict[str, Any] = {'by_sigma': {}}
    for sigma in config.noise_levels():
        per_r = []
        for r in radii:
            errs = [c.err for c in cells if c.sigma == sigma and c.r == r and c.success]
            per_r.append(float(np.median(errs)) if errs else None)
        ratios = [e / r ** p if (e is not None and r > 0) else None for r, e in zip(radii, per_r)]
        positive = [q for q, r in zip(ratios, radii) if r > 0]
        aggregates['by_sigma'][str(sigma)] = {
            'radii': radii,
            'err': per_r,
            'err_over_rp': ratios,
            'slope': _loglog_slope(radii, per_r),
            'ratio_shrinks_with_r': (None not in positive and len(positive) > 1
                                     and _strictly_decreasing(positive)),
        }
    aggregates['contraction_ok_fraction'] = _fraction(cells, 'contraction_ok')
    return StudyResult(study, cells, aggregates, fingerprint(config, context))


def _renumber(cells: List[CellRecord]) -> List[CellRecord]:
    for index, cell in enumerate(cells):
        cell.cell_id = index
    return cells


def _fraction(cells: Sequence[CellRecord], key: str) -> Optional[float]:
    flags = [bool(c.extras[key]) for c in cells if key in c.extras]
    return sum(flags) / len(flags) if flags else None


def calibrate_shape_constant(config: StudyConfig, context: StudyContext) -> float:
    """
    C := calibration_factor * max err/(|xi| + |xi|^2) su un pilota al sigma più grande

    Il valore viene congelato per tutti i sigma dello studio.
    """
    study = 'mc_probability_pilot'
    sigma = max(config.sigma_list)
    model, spec, cfg = context.model, context.spec, context.cfg
    r = config.radius(config.probe_radius, spec.R)
    metas = [{'sigma': sigma, 'r': r, 'seed': derive_seed(config.base_seed, study, i)}
             for i in range(config.pilot_samples)]

    def body(meta: Dict[str, Any]) -> CellRecord:
        _, ou = sample_ou(meta['seed'], sigma, context)
        xi = unstable_direction(model, r)
        point = random_graph_point(xi, ou, spec, model, cfg)
        err = (point.h_value - closed_form_shape(xi, spec.p, model, spec.signed_power)).norm()
        return CellRecord(study=study, cell_id=0, seed=meta['seed'], sigma=sigma, r=r,
                          err=err, success=True)

    pilot = [c for c in _run(study, metas, body, config) if c.success]
    if not pilot:
        raise ConvergenceError("Calibrazione di C fallita: nessun campione pilota risolto")
    C = config.calibration_factor * max(c.err / (r + r ** 2) for c in pilot)
    logger.info(f"📐 Costante di forma calibrata a sigma={sigma}: C={C:.6g} ({len(pilot)} campioni)")
    return C


def mc_probability(config: StudyConfig, context: Optional[StudyContext] = None) -> StudyResult:
    """
    Stime Monte Carlo di P(K+- > 1/sigma) e della frazione di successo del limite di forma

    Lo stesso cammino omega viene usato per ogni sigma (numeri casuali comuni).

    Returns:
        StudyResult con probabilità, intervalli di Wilson e verifiche di monotonia
    """
    study = 'mc_probability'
    context = context or build_context(config)
    model, spec, cfg = context.model, context.spec, context.cfg
    ceiling = theorem_sigma_ceiling(model.lambda_u, model.lambda_s, spec.p)
    for sigma in config.sigma_list:
        if sigma >= ceiling:
            raise ValidationError(f"sigma={sigma} oltre la soglia {ceiling:.4g}",
                                  rule="sigma < min((lambda_s-(p-1)lambda_u)/p, -lambda_u)")

    C = calibrate_shape_constant(config, context)
    r = config.radius(config.probe_radius, spec.R)
    sigmas = sorted(config.sigma_list, reverse=True)
    metas = [{'sigma': sigma, 'r': r, 'sample': i, 'seed': derive_seed(config.base_seed, study, i)}
             for sigma in sigmas for i in range(config.n_samples)]

    def body(meta: Dict[str, Any]) -> CellRecord:
        sigma = meta['sigma']
        _, ou = sample_ou(meta['seed'], sigma, context)
        constants = tail_constants(ou, model.lambda_u, spec.p)
        xi = unstable_direction(model, r)
        bound = C * (r + r ** 2)
        extras = {'Kpm': constants.Kpm, 'K1': constants.K1, 'exceed': constants.Kpm > 1.0 / sigma}
        try:
            point = random_graph_point(xi, ou, spec, model, cfg)
        except ManifoldError as e:
            return CellRecord(study=study, cell_id=0, seed=meta['seed'], sigma=sigma, r=r,
                              bound=bound, success=False, error_type=type(e).__name__,
                              error=str(e), extras=extras)
        err = (point.h_value - closed_form_shape(xi, spec.p, model, spec.signed_power)).norm()
        extras.update(_solver_extras(point.report, context))
        return CellRecord(study=study, cell_id=0, seed=meta['seed'], sigma=sigma, r=r, err=err,
                          bound=bound, success=err <= bound, iterations=point.report.iterations,
                          residual=point.report.final_residual, extras=extras)

    cells = _renumber(_run(study, metas, body, config))

    rows = []
    for sigma in sigmas:
        subset = [c for c in cells if c.sigma == sigma]
        exceed = sum(1 for c in subset if c.extras.get('exceed'))
        success = sum(1 for c in subset if c.success)
        rows.append({
            'sigma': sigma,
            'n': len(subset),
            'p_exceed': exceed / len(subset),
            'p_exceed_ci': _wilson(exceed, len(subset)),
            'success_fraction': success / len(subset),
            'success_ci': _wilson(success, len(subset)),
            'failures': sum(1 for c in subset if c.error_type is not None),
        })

    p_values = [row['p_exceed'] for row in rows]
    successes = [row['success_fraction'] for row in rows]
    aggregates: Dict[str, Any] = {
        'C': C,
        'probe_radius': r,
        'sigma_ceiling': ceiling,
        'by_sigma': rows,
        'p_exceed_strictly_decreasing': _strictly_decreasing(p_values),
        'success_nondecreasing': all(b >= a for a, b in zip(successes, successes[1:])),
        'contraction_ok_fraction': _fraction(cells, 'contraction_ok'),
    }
    aggregates.update(_loglinear_fit(rows))
    return StudyResult(study, cells, aggregates, fingerprint(config, context))


def _loglinear_fit(rows: Sequence[Dict[str, Any]]) -> Dict[str, Any]:
    """
    Retta log P = a + b(-1/sigma) sulle righe con P > 0 e verifica negli intervalli di confidenza

    Le righe senza superamenti non entrano nella retta ma vengono riportate in
    loglinear_dropped_sigmas; per loro la retta deve restare sotto l'estremo superiore di Wilson.
    """
    kept = [row for row in rows if row['p_exceed'] > 0]
    dropped = [row['sigma'] for row in rows if row['p_exceed'] <= 0]
    if dropped:
        logger.info(f"ℹ️ Retta log-lineare senza sigma={dropped}: nessun superamento osservato")
    if len(kept) < 2:
        return {'loglinear_slope': None, 'loglinear_within_ci': False,
                'loglinear_dropped_sigmas': dropped}
    x = np.array([-1.0 / row['sigma'] for row in kept])
    y = np.log([row['p_exceed'] for row in kept])
    slope, intercept = np.polyfit(x, y, 1)
    fitted = [float(np.exp(intercept - slope / row['sigma'])) for row in rows]
    within = all(row['p_exceed_ci'][0] <= f <= row['p_exceed_ci'][1] for row, f in zip(rows, fitted))
    return {'loglinear_slope': float(slope), 'loglinear_intercept': float(intercept),
            'loglinear_within_ci': bool(within), 'loglinear_dropped_sigmas': dropped}


def invariance_residual(config: StudyConfig, context: Optional[StudyContext] = None) -> StudyResult:
    """
    Residuo rho = |P_s v(dt) - h(theta_dt omega, P_u v(dt))|_alpha partendo da xi + h(omega, xi)

    Il flusso usa exponential Euler a dt_flow, dt_flow/2 e dt_flow/4; il rapporto delle
    differenze successive misura l'ordine della parte di errore dovuta all'integratore.
    """
    study = 'invariance_residual'
    context = context or build_context(config)
    model, spec, cfg = context.model, context.spec, context.cfg
    step = config.invariance_step
    r = config.radius(config.invariance_radius, spec.R)
    samples = 1 if config.deterministic else config.n_samples
    metas = [{'sigma': sigma, 'r': r, 'sample': i, 'seed': derive_seed(config.base_seed, study, i)}
             for sigma in config.noise_levels() for i in range(samples)]

    def body(meta: Dict[str, Any]) -> CellRecord:
        sigma = meta['sigma']
        path, ou = sample_ou(meta['seed'], sigma, context, t_max=step, backward=cfg.horizon + step)
        xi = unstable_direction(model, r) if r > 0 else SpectralVector.zeros(model)
        _, point, report = solve_graph(xi, ou, spec, model, cfg)
        start = xi + point.h_value

        flows = [flow_forward(start, ou, spec, model, step, config.dt_flow / k) for k in (1, 2, 4)]
        shifted = ou_trajectory(shift_path(path, step), sigma, cfg.tail_cutoff)
        end = flows[0]
        _, target, _ = solve_graph(project(end, 'unstable', model), shifted, spec, model, cfg)
        rho = (project(end, 'stable', model) - target.h_value).alpha_norm(model)

        coarse = (project(flows[0] - flows[1], 'stable', model)).alpha_norm(model)
        fine = (project(flows[1] - flows[2], 'stable', model)).alpha_norm(model)
        extras = _solver_extras(report, context)
        extras.update({'rho_scaled': rho / (step ** 2 + cfg.dt),
                       'integrator_ratio': coarse / fine if fine > 0 else None,
                       'integrator_gap': coarse})
        return CellRecord(study=study, cell_id=0, seed=meta['seed'] if sigma > 0 else None,
                          sigma=sigma, r=r, err=rho, success=True, iterations=report.iterations,
                          residual=report.final_residual, extras=extras)

    cells = _renumber(_run(study, metas, body, config))
    rhos = [c.err for c in cells if c.success]
    ratios = [c.extras['integrator_ratio'] for c in cells
              if c.success and c.extras.get('integrator_ratio') is not None]
    aggregates = {
        'step': step,
        'rho_max': max(rhos) if rhos else None,
        'rho_median': float(np.median(rhos)) if rhos else None,
        'integrator_ratio_median': float(np.median(ratios)) if ratios else None,
        'contraction_ok_fraction': _fraction(cells, 'contraction_ok'),
    }
    return StudyResult(study, cells, aggregates, fingerprint(config, context))


def k_diagnostics(config: StudyConfig, context: Optional[StudyContext] = None) -> StudyResult:
    """
    Diagnostica di K1 - 1 contro Exp(1), forme dei limiti per K2 e K3 e crescita di z

    C viene stimata sulla prima metà dei campioni e verificata sulla seconda.
    """
    study = 'k_diagnostics'
    if config.n_samples < 1000:
        raise ValidationError(f"n_samples={config.n_samples} < 1000", rule="n_samples >= 1000")
    context = context or build_context(config)
    model, spec = context.model, context.spec
    p = spec.p
    horizon = config.growth_horizon
    metas = [{'sigma': sigma, 'r': 0.0, 'sample': i, 'seed': derive_seed(config.base_seed, study, i)}
             for sigma in config.sigma_list for i in range(config.n_samples)]

    def body(meta: Dict[str, Any]) -> CellRecord:
        sigma = meta['sigma']
        _, ou = sample_ou(meta['seed'], sigma, context, t_max=horizon, backward=horizon)
        constants = tail_constants(ou, model.lambda_u, p)
        growth = growth_diagnostics(ou, horizon)
        extras = {'K1': constants.K1, 'Kpm': constants.Kpm, 'K2': constants.K2, 'K3': constants.K3,
                  'growth_ok': all(value < 0.1 for value in growth.values())}
        extras.update(growth)
        return CellRecord(study=study, cell_id=0, seed=meta['seed'], sigma=sigma, r=0.0,
                          err=constants.K2, success=True, extras=extras)

    cells = _renumber(_run(study, metas, body, config))

    by_sigma = []
    for sigma in config.sigma_list:
        subset = [c for c in cells if c.sigma == sigma and c.error_type is None]
        half = len(subset) // 2
        pilot, audit = subset[:half], subset[half:]

        k1_excess = np.array([c.extras['K1'] - 1.0 for c in subset])
        ks = stats.kstest(k1_excess, 'expon')
        if ks.statistic > config.ks_threshold:
            logger.warning(f"⚠️ KS di K1-1 contro Exp(1) a sigma={sigma}: {ks.statistic:.3f} "
                           f"oltre {config.ks_threshold}")

        def shape(c: CellRecord, power: float) -> float:
            Kpm = c.extras['Kpm']
            return math.exp(power * sigma * Kpm) * (1.0 + Kpm)

        C2 = max(c.extras['K2'] / shape(c, 1.0) for c in pilot) if pilot else float('nan')
        C3 = max(c.extras['K3'] / shape(c, p - 1.0) for c in pilot) if pilot else float('nan')
        violations2 = violations3 = 0
        for c in audit:
            c.bound = C2 * shape(c, 1.0)
            c.success = c.extras['K2'] <= c.bound
            violations2 += not c.success
            violations3 += c.extras['K3'] > C3 * shape(c, p - 1.0)
        for c in pilot:
            c.bound = C2 * shape(c, 1.0)

        by_sigma.append({
            'sigma': sigma,
            'n': len(subset),
            'k1_excess_mean': float(np.mean(k1_excess)),
            'ks_statistic': float(ks.statistic),
            'ks_pvalue': float(ks.pvalue),
            'ks_diagnostic_only': True,
            'C2': C2,
            'C3': C3,
            'K2_violations': int(violations2),
            'K3_violations': int(violations3),
            'growth_ok_fraction': _fraction(subset, 'growth_ok'),
        })
    return StudyResult(study, cells, {'by_sigma': by_sigma}, fingerprint(config, context))


def ladder_study(config: StudyConfig, context: Optional[StudyContext] = None) -> StudyResult:
    """
    Scala di approssimazione deterministica: ||h - h1(0)||, ||h1(0) - h2||, ||h2 - h3||
    e ||h3 - forma chiusa|| per raggi dimezzati
    """
    study = 'ladder_study'
    context = context or build_context(config)
    model, spec, cfg = context.model, context.spec, context.cfg
    radii = sorted((config.radius(r, spec.R) for r in config.ladder_radii), reverse=True)
    metas = [{'sigma': 0.0, 'r': r, 'seed': None} for r in radii]

    def body(meta: Dict[str, Any]) -> CellRecord:
        r = meta['r']
        _, ou = sample_ou(None, 0.0, context)
        xi = unstable_direction(model, r)
        traj, point, report = solve_graph(xi, ou, spec, model, cfg)
        h = point.h_value
        h1 = hbar1(traj, ou, spec, model, cfg)
        h2 = hbar2(xi, ou, spec, model, cfg)
        h3 = hbar3(xi, ou, spec, model, cfg)
        shape = closed_form_shape(xi, spec.p, model, spec.signed_power)
        gaps = {
            'h_h1': (h - h1).norm(),
            'h1_h2': (h1 - h2).norm(),
            'h2_h3': (h2 - h3).norm(),
            'h_h2': (h - h2).norm(),
            'h3_shape': (h3 - shape).norm(),
        }
        extras = dict(gaps)
        extras.update({f'{key}_over_r2': value / r ** 2 for key, value in gaps.items()})
        extras.update(_solver_extras(report, context))
        return CellRecord(study=study, cell_id=0, seed=None, sigma=0.0, r=r,
                          err=(h - shape).norm(), success=True, iterations=report.iterations,
                          residual=report.final_residual, extras=extras)

    cells = _renumber(_run(study, metas, body, config))
    ok = [c for c in cells if c.success]
    h_h2 = [c.extras['h_h2'] for c in ok]
    h2_h3_ratio = [c.extras['h2_h3_over_r2'] for c in ok]
    aggregates = {
        'radii': [c.r for c in ok],
        'h_h2': h_h2,
        'h2_h3_over_r2': h2_h3_ratio,
        'h2_h3_over_r2_max': max(h2_h3_ratio) if h2_h3_ratio else None,
        'h_h2_monotone': _strictly_decreasing(h_h2),
        'cutoff_radius': context.spec.R,
    }
    return StudyResult(study, cells, aggregates, fingerprint(config, context))


def check_failure_budget(result: StudyResult, budget: float) -> None:
    """FailureBudgetError se la frazione di celle fallite supera il budget"""
    if not result.cells:
        return
    fraction = result.failures / len(result.cells)
    if fraction > budget:
        raise FailureBudgetError(
            f"{result.study}: {result.failures}/{len(result.cells)} celle fallite "
            f"(budget {budget:.0%})")


# Valori di regressione: confronto a 1e-10, residuo di invarianza entro 2x il registrato
FIXTURE_TOLERANCE = 1e-10
FIXTURE_RHO_FACTOR = 2.0
LIPSCHITZ_REFERENCE_RADIUS = 0.1
LIPSCHITZ_CEILING = 1.0
INTEGRATOR_RATIO_RANGE = (1.7, 2.3)


def regression_fixtures(config: StudyConfig) -> Dict[str, Any]:
    """
    Valori numerici da registrare dopo un run verificato e da confrontare nei run successivi

    Args:
        config: Parametri dello studio (forzato a sigma = 0)

    Returns:
        Dizionario con R*, SC(R*), l_F a R = 0.1, residuo di invarianza e rapporto
        dell'integratore
    """
    config = replace(config, deterministic=True)
    context = build_context(config)
    model, cfg = context.model, context.cfg
    nl = config.nonlinear
    spec = NonlinearitySpec(p=float(nl['p']), signed_power=bool(nl['signed_power']),
                            safety_factor=float(nl['safety_factor']))
    n_pairs, seed = int(nl['n_pairs']), int(nl['seed'])

    chosen, sc = choose_truncation_radius(cfg.target_sc, spec, model, cfg.beta, n_pairs, seed)
    l_F = lipschitz_estimate(spec.with_radius(LIPSCHITZ_REFERENCE_RADIUS), model, n_pairs, seed)
    invariance = invariance_residual(config, context)
    cell = invariance.cells[0]
    if not cell.success:
        raise ConvergenceError(f"Residuo di invarianza non calcolato: {cell.error}")

    values = {
        'target_sc': cfg.target_sc,
        'R_star': chosen.R,
        'sc_at_R_star': sc,
        'lipschitz_radius': LIPSCHITZ_REFERENCE_RADIUS,
        'l_F_at_lipschitz_radius': l_F,
        'invariance_radius': cell.r,
        'invariance_step': config.invariance_step,
        'invariance_rho': cell.err,
        'integrator_ratio': cell.extras['integrator_ratio'],
    }
    logger.info(f"📌 Fixture: R*={chosen.R:.12g}, SC={sc:.6f}, l_F(0.1)={l_F:.6g}, "
                f"rho={cell.err:.3e}")
    return values


def fixture_sanity(values: Dict[str, Any]) -> List[Dict[str, str]]:
    """Controlli che un run deve superare prima che i suoi valori diventino fixture"""
    violations: List[Dict[str, str]] = []
    if values['l_F_at_lipschitz_radius'] > LIPSCHITZ_CEILING:
        violations.append({'rule': "l_F(R=0.1) <= 1",
                           'message': f"l_F={values['l_F_at_lipschitz_radius']:.6g}"})
    if not values['sc_at_R_star'] <= values['target_sc']:
        violations.append({'rule': "SC(R*) <= target_sc",
                           'message': f"SC={values['sc_at_R_star']:.6g}"})
    low, high = INTEGRATOR_RATIO_RANGE
    ratio = values['integrator_ratio']
    if ratio is None or not low <= ratio <= high:
        violations.append({'rule': "integrator ratio in [1.7, 2.3]", 'message': f"ratio={ratio}"})
    if not math.isfinite(values['invariance_rho']):
        violations.append({'rule': "rho finite", 'message': f"rho={values['invariance_rho']}"})
    return violations


def check_fixtures(recorded: Dict[str, Any], current: Dict[str, Any]) -> List[Dict[str, str]]:
    """
    Confronta un run con le fixture registrate

    Returns:
        Lista di {'rule', 'message'}; vuota se il run riproduce le fixture
    """
    violations = fixture_sanity(current)
    for key in ('R_star', 'sc_at_R_star', 'l_F_at_lipschitz_radius'):
        if abs(current[key] - recorded[key]) > FIXTURE_TOLERANCE:
            violations.append({'rule': f"{key} within 1e-10",
                               'message': f"{current[key]!r} contro {recorded[key]!r}"})
    limit = FIXTURE_RHO_FACTOR * recorded['invariance_rho']
    if current['invariance_rho'] > limit:
        violations.append({'rule': "rho <= 2 x fixture",
                           'message': f"rho={current['invariance_rho']:.3e} > {limit:.3e}"})
    return violations


STUDY_FUNCTIONS: Dict[str, Callable[..., StudyResult]] = {
    'shape_error_sweep': shape_error_sweep,
    'mc_probability': mc_probability,
    'invariance_residual': invariance_residual,
    'k_diagnostics': k_diagnostics,
    'ladder_study': ladder_study,
}
