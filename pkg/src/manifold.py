"""
Manifold - Punto fisso di Lyapunov-Perron, grafo h(omega, xi) della varietà instabile locale,
scala di approssimazione h1, h2, h3, forma chiusa (L_s - p L_u)^{-1} xi_s^p, coniugazione T
e integratore exponential-Euler dell'equazione trasformata
"""

import math
from dataclasses import dataclass
from typing import Any, Dict, List, Literal, Optional, Tuple
import logging

import numpy as np
from scipy import integrate

from src.exceptions import ConvergenceError, ValidationError, WindowError
from src.nonlinear import (NonlinearitySpec, power_coeffs, power_f, sc_constant,
                           truncated_coeffs)
from src.spectral import (SpectralModel, SpectralVector, alpha_norms, project,
                          shifted_stable_resolvent)
from src.stochastic import (DEFAULT_TAIL_CUTOFF, OuTrajectory, deterministic_ou, ou_at)


logger = logging.getLogger(__name__)

Frame = Literal['random', 'random_original', 'deterministic']

# massimo salto esponenziale ammesso dentro un blocco della quadratura
MAX_BLOCK_EXPONENT = 500.0


@dataclass(frozen=True)
class LpSolverConfig:
    """Parametri del risolutore di Lyapunov-Perron"""
    beta: float
    horizon: float
    dt: float = 0.01
    max_iterations: int = 200
    tolerance: float = 1e-12
    target_sc: float = 0.5
    chart_fraction: float = 0.5
    contraction_slack: float = 0.05
    tail_cutoff: float = DEFAULT_TAIL_CUTOFF

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValidationError("tolerance deve essere positiva", rule="tolerance > 0")
        if self.dt <= 0 or self.horizon <= 0:
            raise ValidationError("dt e horizon devono essere positivi", rule="dt, horizon > 0")
        if self.max_iterations < 1:
            raise ValidationError("max_iterations deve essere >= 1", rule="max_iterations >= 1")

    @property
    def node_count(self) -> int:
        return int(round(self.horizon / self.dt)) + 1

    def check_beta(self, model: SpectralModel) -> None:
        if not model.lambda_u < self.beta < model.lambda_s:
            raise ValidationError(
                f"beta={self.beta} fuori da ({model.lambda_u}, {model.lambda_s})",
                rule="beta in (lambda_u, lambda_s)")

    @classmethod
    def for_model(cls, model: SpectralModel, beta: Optional[float] = None,
                  horizon: Optional[float] = None, dt: float = 0.01, **kwargs) -> 'LpSolverConfig':
        """
        Risolve i default derivati dal modello

        Args:
            model: Modello spettrale
            beta: Peso (default: punto medio di (lambda_u, lambda_s))
            horizon: Orizzonte T (default: 30/(lambda_s - beta)), arrotondato a un multiplo di dt
            dt: Passo della griglia temporale

        Returns:
            LpSolverConfig validata
        """
        beta = 0.5 * (model.lambda_u + model.lambda_s) if beta is None else float(beta)
        if not model.lambda_u < beta < model.lambda_s:
            raise ValidationError(
                f"beta={beta} fuori da ({model.lambda_u}, {model.lambda_s})",
                rule="beta in (lambda_u, lambda_s)")
        if horizon is None:
            horizon = 30.0 / (model.lambda_s - beta)
        horizon = math.ceil(horizon / dt - 1e-9) * dt
        return cls(beta=beta, horizon=horizon, dt=dt, **kwargs)


@dataclass(frozen=True, eq=False)
class TrajectorySegment:
    """Nodi v(t_i), t_i in {-T, ..., -dt, 0}; values ha forma (nodi, modi)"""
    horizon: float
    dt: float
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        for name in ('times', 'values'):
            array = np.array(getattr(self, name), dtype=float)
            array.setflags(write=False)
            object.__setattr__(self, name, array)

    def node(self, i: int) -> SpectralVector:
        return SpectralVector(self.values[i])

    def at_zero(self) -> SpectralVector:
        return self.node(-1)


@dataclass(frozen=True)
class FixedPointReport:
    """Diagnostica dell'iterazione di Picard"""
    iterations: int
    observed_contraction: float
    final_residual: float
    sc_value: float
    truncation_tail_bound: float
    first_increment: float = 0.0
    cutoff_active: bool = False
    converged: bool = True
    M_c: float = 1.0


@dataclass(frozen=True, eq=False)
class ManifoldPoint:
    """Punto xi + h sul grafo della varietà"""
    xi: SpectralVector
    h_value: SpectralVector
    frame: Frame
    report: Optional[FixedPointReport] = None


def _check_unstable(xi: SpectralVector, model: SpectralModel) -> None:
    model.check_dimension(xi.coeffs)
    if np.any(xi.coeffs[model.stable_mask] != 0.0):
        raise ValidationError("xi deve essere supportato su E_u", rule="xi in E_u")


def _ou_window(ou: OuTrajectory, cfg: LpSolverConfig) -> slice:
    if abs(ou.dt - cfg.dt) > 1e-12 * cfg.dt:
        raise WindowError(f"Griglia OU con dt={ou.dt} diversa da dt={cfg.dt}", rule="grids aligned")
    return ou.window(-(cfg.node_count - 1) * cfg.dt, 0.0)


def _exponents(model: SpectralModel, times: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """phi_k(t) = -lambda_k t + Z(t), forma (nodi, modi)"""
    return -np.outer(times, model.eigenvalues) + Z[:, None]


def _product_weights(c: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Pesi di int_0^1 (1-u, u) e^{c u} du scalati per e^{-max(c, 0)}

    Per c > 0 si usa la simmetria u -> 1 - u, così l'esponente resta <= 0.
    """
    x = -np.abs(c)
    small = x > -0.1
    xs = np.where(small, x, 0.0)
    xl = np.where(small, -1.0, x)
    series0 = np.zeros_like(x)
    series1 = np.zeros_like(x)
    power = np.ones_like(x)
    factorial = 1.0
    for n in range(10):
        series0 += power / (factorial * (n + 1) * (n + 2))
        series1 += power / (factorial * (n + 2))
        power = power * xs
        factorial *= n + 1
    em1 = np.expm1(xl)
    closed0 = (em1 - xl) / xl ** 2
    closed1 = (xl * np.exp(xl) - em1) / xl ** 2
    w0 = np.where(small, series0, closed0)
    w1 = np.where(small, series1, closed1)
    flip = c > 0
    return np.where(flip, w1, w0), np.where(flip, w0, w1)


class _ExponentialQuadrature:
    """
    Integrazione di prodotto per I_i = int_{t_0}^{t_i} e^{phi(t_i) - phi(r)} g(r) dr

    Su ogni intervallo g e phi sono interpolati linearmente e il nucleo
    esponenziale è integrato esattamente.
    I nodi sono divisi in blocchi ancorati al primo nodo, con escursione di phi
    limitata da MAX_BLOCK_EXPONENT; il valore si propaga tra blocchi.
    """

    def __init__(self, phi: np.ndarray, dt: float):
        self.dt = dt
        self.blocks: List[Tuple[int, int, np.ndarray, np.ndarray, np.ndarray]] = []
        n = phi.shape[0]
        if phi.shape[1] == 0 or n == 1:
            empty = np.zeros((n - 1, phi.shape[1]))
            self.blocks.append((0, n - 1, np.ones_like(phi), empty, empty))
            return
        steps = np.max(np.abs(np.diff(phi, axis=0)), axis=1)
        start, excursion = 0, 0.0
        for j, step in enumerate(steps):
            if excursion + step > MAX_BLOCK_EXPONENT and j > start:
                self._add_block(phi, start, j)
                start, excursion = j, 0.0
            excursion += step
        self._add_block(phi, start, n - 1)

    def _add_block(self, phi: np.ndarray, start: int, stop: int) -> None:
        local = phi[start:stop + 1] - phi[start]
        down = np.exp(-local)
        # max(e^{-local_j}, e^{-local_{j+1}}) = e^{-local_j} e^{max(c, 0)}
        base = self.dt * np.maximum(down[:-1], down[1:])
        w0, w1 = _product_weights(local[:-1] - local[1:])
        self.blocks.append((start, stop, np.exp(local), base * w0, base * w1))

    def integrate(self, g: np.ndarray) -> np.ndarray:
        out = np.empty_like(g)
        carry = np.zeros(g.shape[1])
        for start, stop, up, w0, w1 in self.blocks:
            steps = w0 * g[start:stop] + w1 * g[start + 1:stop + 1]
            partial = np.concatenate([np.zeros((1, g.shape[1])), np.cumsum(steps, axis=0)])
            values = up * (carry + partial)
            out[start:stop + 1] = values
            carry = values[-1]
        return out


def _nonlinear_integrand(values: np.ndarray, z: np.ndarray, spec: NonlinearitySpec,
                         model: SpectralModel, truncated: bool = True) -> np.ndarray:
    """g(r) = e^{-z(r)} F(e^{z(r)} v(r)), con o senza cut-off"""
    scaled = np.exp(z)[:, None] * values
    if truncated:
        image = truncated_coeffs(scaled, spec, model)
    else:
        image = power_coeffs(scaled, spec, model)
    return np.exp(-z)[:, None] * image


class LpOperator:
    """Operatore J(., xi) di Lyapunov-Perron discretizzato su [-T, 0]"""

    def __init__(self, xi: SpectralVector, ou: OuTrajectory, spec: NonlinearitySpec,
                 model: SpectralModel, cfg: LpSolverConfig):
        _check_unstable(xi, model)
        spec.require_radius()
        cfg.check_beta(model)
        self.xi = xi
        self.spec = spec
        self.model = model
        self.cfg = cfg

        window = _ou_window(ou, cfg)
        self.times = ou.times[window]
        self.z = ou.z_values[window]
        self.Z = ou.Z_values[window]
        self.weights = np.exp(cfg.beta * self.times - self.Z)

        phi = _exponents(model, self.times, self.Z)
        unstable = model.unstable_mask
        self.unstable = unstable
        self.stable = model.stable_mask
        self.semigroup_term = np.exp(phi[:, unstable]) * xi.coeffs[unstable]
        self.stable_quadrature = _ExponentialQuadrature(phi[:, self.stable], cfg.dt)
        self.unstable_quadrature = _ExponentialQuadrature(phi[::-1, unstable], cfg.dt)

    def zero_trajectory(self) -> np.ndarray:
        return np.zeros((self.times.size, self.model.mode_count))

    def apply(self, values: np.ndarray) -> np.ndarray:
        g = _nonlinear_integrand(values, self.z, self.spec, self.model)
        out = np.empty_like(values)
        out[:, self.stable] = self.stable_quadrature.integrate(g[:, self.stable])
        backward = self.unstable_quadrature.integrate(g[::-1, self.unstable])[::-1]
        out[:, self.unstable] = self.semigroup_term - backward
        return out

    def norm(self, values: np.ndarray) -> float:
        """Norma discreta di C_beta^-"""
        return float(np.max(self.weights * alpha_norms(values, self.model)))

    def segment(self, values: np.ndarray) -> TrajectorySegment:
        return TrajectorySegment(horizon=self.cfg.horizon, dt=self.cfg.dt,
                                 times=self.times, values=values)


def cbeta_norm(traj: TrajectorySegment, beta: float, ou: OuTrajectory,
               model: SpectralModel) -> float:
    """
    max_i e^{beta t_i - Z(t_i)} |v(t_i)|_alpha

    Args:
        traj: Traiettoria sui nodi di [-T, 0]
        beta: Peso esponenziale
        ou: Traiettoria OU con la stessa griglia
        model: Modello che definisce la norma alpha

    Returns:
        Norma discreta
    """
    if abs(ou.dt - traj.dt) > 1e-12 * traj.dt:
        raise WindowError("Griglie di traiettoria e OU non allineate", rule="grids aligned")
    window = ou.window(float(traj.times[0]), float(traj.times[-1]))
    if ou.times[window].size != traj.times.size:
        raise WindowError("Griglie di traiettoria e OU non allineate", rule="grids aligned")
    weights = np.exp(beta * traj.times - ou.Z_values[window])
    return float(np.max(weights * alpha_norms(traj.values, model)))


def lp_apply(traj: TrajectorySegment, xi: SpectralVector, ou: OuTrajectory,
             spec: NonlinearitySpec, model: SpectralModel, cfg: LpSolverConfig) -> TrajectorySegment:
    """Un'applicazione dell'operatore J(v, xi) sui nodi della traiettoria"""
    operator = LpOperator(xi, ou, spec, model, cfg)
    if traj.values.shape != (operator.times.size, model.mode_count):
        raise WindowError("Traiettoria non allineata alla griglia del risolutore", rule="grids aligned")
    return operator.segment(operator.apply(traj.values))


def _observed_contraction(increments: List[float], floor: float) -> float:
    ratios = [b / a for a, b in zip(increments, increments[1:]) if a > floor]
    return max(ratios) if ratios else 0.0


def solve_graph(xi: SpectralVector, ou: OuTrajectory, spec: NonlinearitySpec,
                model: SpectralModel, cfg: LpSolverConfig
                ) -> Tuple[TrajectorySegment, ManifoldPoint, FixedPointReport]:
    """
    Iterazione di Picard v^{n+1} = J(v^n, xi) da v^0 = 0 e grafo h = P_s v*(0)

    Args:
        xi: Coordinata instabile (entro chart_fraction * R in norma alpha)
        ou: Traiettoria OU che copre [-T, 0]
        spec: Nonlinearità con R e l_F certificati
        model: Modello spettrale
        cfg: Parametri del risolutore

    Returns:
        Tupla (punto fisso, punto del grafo, report)
    """
    if spec.l_F is None:
        raise ValidationError("l_F non certificata: contrazione non verificabile", rule="l_F set")
    R = spec.require_radius()
    cfg.check_beta(model)
    sc = sc_constant(1.0, spec.l_F, model.alpha, cfg.beta, model.lambda_u, model.lambda_s)
    if sc >= 1.0:
        raise ValidationError(f"SC={sc:.4f} >= 1: contrazione non certificata", rule="SC < 1")
    chart = cfg.chart_fraction * R
    if xi.alpha_norm(model) > chart:
        raise ValidationError(
            f"|xi|_alpha={xi.alpha_norm(model):.4g} oltre il raggio della carta {chart:.4g}",
            rule="|xi|_alpha <= chart_fraction*R")

    operator = LpOperator(xi, ou, spec, model, cfg)
    values = operator.zero_trajectory()
    increments: List[float] = []
    converged = False
    for iteration in range(1, cfg.max_iterations + 1):
        updated = operator.apply(values)
        increment = operator.norm(updated - values)
        increments.append(increment)
        values = updated
        logger.debug(f"Picard {iteration}: incremento {increment:.3e}")
        if increment < cfg.tolerance:
            converged = True
            break
    if not converged:
        raise ConvergenceError(
            f"Picard non convergente in {cfg.max_iterations} iterazioni "
            f"(ultimo incremento {increments[-1]:.3e})")

    norm_star = operator.norm(values)
    residual = operator.norm(operator.apply(values) - values)
    contraction = _observed_contraction(increments, max(cfg.tolerance, 1e-12 * norm_star))
    gap = model.lambda_s - cfg.beta
    tail_bound = spec.l_F * norm_star * math.exp(-gap * cfg.horizon) / gap
    scaled = np.exp(operator.z)[:, None] * values
    cutoff_active = bool(np.any(alpha_norms(scaled, model) > R))

    report = FixedPointReport(
        iterations=len(increments), observed_contraction=contraction, final_residual=residual,
        sc_value=sc, truncation_tail_bound=tail_bound, first_increment=increments[0],
        cutoff_active=cutoff_active, converged=True)
    if contraction > sc + cfg.contraction_slack:
        logger.warning(f"⚠️ Contrazione osservata {contraction:.3f} oltre SC={sc:.3f}")

    h_value = project(SpectralVector(values[-1]), 'stable', model)
    frame: Frame = 'deterministic' if ou.sigma == 0 else 'random'
    point = ManifoldPoint(xi=xi, h_value=h_value, frame=frame, report=report)
    return operator.segment(values), point, report


def _stable_integral_at_zero(values: np.ndarray, ou: OuTrajectory, spec: NonlinearitySpec,
                             model: SpectralModel, cfg: LpSolverConfig,
                             truncated: bool = True) -> SpectralVector:
    """int_{-T}^0 e^{L_s r + Z(0) - Z(r)} e^{-z(r)} F_s(e^{z(r)} v(r)) dr"""
    window = _ou_window(ou, cfg)
    times, z, Z = ou.times[window], ou.z_values[window], ou.Z_values[window]
    if values.shape[0] != times.size:
        raise WindowError("Traiettoria non allineata alla griglia OU", rule="grids aligned")
    g = _nonlinear_integrand(values, z, spec, model, truncated=truncated)
    stable = model.stable_mask
    quadrature = _ExponentialQuadrature(_exponents(model, times, Z)[:, stable], cfg.dt)
    out = np.zeros(model.mode_count)
    out[stable] = quadrature.integrate(g[:, stable])[-1]
    return SpectralVector(out)


def semigroup_trajectory(xi: SpectralVector, ou: OuTrajectory, model: SpectralModel,
                         cfg: LpSolverConfig) -> TrajectorySegment:
    """Orbita e^{-L_u r + Z(r)} xi sui nodi di [-T, 0]"""
    _check_unstable(xi, model)
    window = _ou_window(ou, cfg)
    times, Z = ou.times[window], ou.Z_values[window]
    unstable = model.unstable_mask
    values = np.zeros((times.size, model.mode_count))
    values[:, unstable] = np.exp(_exponents(model, times, Z)[:, unstable]) * xi.coeffs[unstable]
    return TrajectorySegment(horizon=cfg.horizon, dt=cfg.dt, times=times, values=values)


def hbar1(v_u_star: TrajectorySegment, ou: OuTrajectory, spec: NonlinearitySpec,
          model: SpectralModel, cfg: LpSolverConfig) -> SpectralVector:
    """h1(0): integrale stabile con v sostituito dalla sua parte instabile"""
    values = np.where(model.unstable_mask, v_u_star.values, 0.0)
    return _stable_integral_at_zero(values, ou, spec, model, cfg)


def hbar2(xi: SpectralVector, ou: OuTrajectory, spec: NonlinearitySpec,
          model: SpectralModel, cfg: LpSolverConfig) -> SpectralVector:
    """h2: integrale stabile lungo l'orbita lineare, con F^(R)"""
    return hbar1(semigroup_trajectory(xi, ou, model, cfg), ou, spec, model, cfg)


def hbar3(xi: SpectralVector, ou: OuTrajectory, spec: NonlinearitySpec,
          model: SpectralModel, cfg: LpSolverConfig) -> SpectralVector:
    """h3: come h2 ma con la nonlinearità non troncata"""
    orbit = semigroup_trajectory(xi, ou, model, cfg)
    return _stable_integral_at_zero(orbit.values, ou, spec, model, cfg, truncated=False)


def closed_form_shape(xi: SpectralVector, p: float, model: SpectralModel,
                      signed_power: bool = False, method: str = 'auto') -> SpectralVector:
    """
    Forma principale (L_s - p L_u)^{-1} xi_s^p

    Con N = 1 il blocco instabile agisce come lo scalare lambda_u e la forma è il
    risolvente (L_s - p lambda_u)^{-1} P_s(xi^p); in generale resta l'integrale
    int_{-inf}^0 e^{L_s r} P_s[(e^{-L_u r} xi)^p] dr, troncato a 40/(lambda_s - p lambda_u).

    Args:
        xi: Coordinata instabile
        p: Esponente della nonlinearità
        model: Modello spettrale
        signed_power: Usa |u|^{p-1} u
        method: 'auto', 'resolvent' o 'quadrature'

    Returns:
        Vettore supportato su E_s
    """
    _check_unstable(xi, model)
    spec = NonlinearitySpec(p=p, signed_power=signed_power)
    if method == 'auto':
        method = 'resolvent' if model.split_index == 1 else 'quadrature'

    if method == 'resolvent':
        if model.split_index != 1:
            raise ValidationError("Forma chiusa con risolvente disponibile solo per N = 1",
                                  rule="N = 1 for resolvent form")
        forced = project(power_f(xi, spec, model), 'stable', model)
        return shifted_stable_resolvent(forced, -p * model.lambda_u, model)

    if method != 'quadrature':
        raise ValidationError(f"Metodo sconosciuto: {method}")

    stable = model.stable_mask
    unstable = model.unstable_mask
    decay = model.lambda_s - p * model.lambda_u
    lower = -40.0 / decay

    def integrand(r: float) -> np.ndarray:
        orbit = np.zeros(model.mode_count)
        orbit[unstable] = np.exp(-model.eigenvalues[unstable] * r) * xi.coeffs[unstable]
        image = power_coeffs(orbit, spec, model)
        out = np.zeros(model.mode_count)
        out[stable] = np.exp(model.eigenvalues[stable] * r) * image[stable]
        return out

    value, _ = integrate.quad_vec(integrand, lower, 0.0, epsabs=1e-15, epsrel=1e-12, norm='max')
    return SpectralVector(value)


def random_leading_shape(xi: SpectralVector, p: float, model: SpectralModel, z0: float,
                         signed_power: bool = False) -> SpectralVector:
    """e^{(p-1) z(0)} (L_s - p L_u)^{-1} xi_s^p"""
    return closed_form_shape(xi, p, model, signed_power) * math.exp((p - 1.0) * z0)


def transform_T(x: SpectralVector, z0: float) -> SpectralVector:
    """T(omega, x) = x e^{-z(omega)}"""
    return SpectralVector(x.coeffs * math.exp(-z0))


def transform_T_inv(x: SpectralVector, z0: float) -> SpectralVector:
    return SpectralVector(x.coeffs * math.exp(z0))


def random_graph_point(xi: SpectralVector, ou: OuTrajectory, spec: NonlinearitySpec,
                       model: SpectralModel, cfg: LpSolverConfig) -> ManifoldPoint:
    """
    Punto xi + e^{z(0)} h(omega, e^{-z(0)} xi) della varietà nelle coordinate originali u
    """
    z0 = ou.z0
    _, point, report = solve_graph(transform_T(xi, z0), ou, spec, model, cfg)
    frame: Frame = 'deterministic' if ou.sigma == 0 else 'random_original'
    return ManifoldPoint(xi=xi, h_value=transform_T_inv(point.h_value, z0), frame=frame,
                         report=report)


def deterministic_graph(xi: SpectralVector, spec: NonlinearitySpec, model: SpectralModel,
                        cfg: LpSolverConfig) -> ManifoldPoint:
    """Grafo h(xi) del caso deterministico: stesso codice con omega = 0"""
    ou = deterministic_ou(-(cfg.node_count - 1) * cfg.dt, 0.0, cfg.dt, cfg.tail_cutoff)
    return random_graph_point(xi, ou, spec, model, cfg)


def flow_forward(x: SpectralVector, ou: OuTrajectory, spec: NonlinearitySpec,
                 model: SpectralModel, t_end: float, dt_flow: float) -> SpectralVector:
    """
    Exponential Euler per dv/dt = -L v + z v + e^{-z} F^(R)(e^z v) su [0, t_end]

    Parte lineare esatta per modo con e^{-lambda h + Z(t+h) - Z(t)}, nonlinearità
    congelata a inizio passo e integrata col fattore (1 - e^{-c h})/c, c = lambda - z.

    Args:
        x: Stato iniziale in coordinate v
        ou: Traiettoria OU che copre [0, t_end]
        spec: Nonlinearità troncata
        model: Modello spettrale
        t_end: Tempo finale (multiplo di dt_flow)
        dt_flow: Passo dell'integratore

    Returns:
        Stato v(t_end)
    """
    model.check_dimension(x.coeffs)
    steps = int(round(t_end / dt_flow))
    if steps < 1 or abs(steps * dt_flow - t_end) > 1e-9 * max(1.0, t_end):
        raise ValidationError(f"t_end={t_end} non multiplo di dt_flow={dt_flow}",
                              rule="t_end = k*dt_flow")
    grid = np.arange(steps + 1) * dt_flow
    z_nodes, Z_nodes = ou_at(ou, grid)
    state = x.coeffs.copy()
    lam = model.eigenvalues
    for n in range(steps):
        z_n = z_nodes[n]
        forcing = math.exp(-z_n) * truncated_coeffs(math.exp(z_n) * state, spec, model)
        linear = np.exp(-lam * dt_flow + (Z_nodes[n + 1] - Z_nodes[n]))
        rate = lam - z_n
        with np.errstate(divide='ignore', invalid='ignore'):
            phi1 = np.where(rate != 0.0, -np.expm1(-rate * dt_flow) / rate, dt_flow)
        state = linear * state + phi1 * forcing
    return SpectralVector(state)


def report_to_json(report: FixedPointReport) -> Dict[str, Any]:
    return {
        'iterations': report.iterations,
        'contraction': report.observed_contraction,
        'residual': report.final_residual,
        'sc': report.sc_value,
        'tail_bound': report.truncation_tail_bound,
        'cutoff_active': report.cutoff_active,
        'M_c': report.M_c,
    }


def point_to_json(point: ManifoldPoint) -> Dict[str, Any]:
    """ManifoldPoint serializzato con i nomi di campo del formato dei risultati"""
    data: Dict[str, Any] = {
        'xi': point.xi.coeffs.tolist(),
        'h': point.h_value.coeffs.tolist(),
        'frame': point.frame,
    }
    if point.report is not None:
        data.update(report_to_json(point.report))
    return data
