"""
Nonlinear - Nonlinearità di potenza F(v) = v^p, cut-off liscio chi_R, nonlinearità troncata
F^(R) con costante di Lipschitz certificata e costante di contrazione SC
"""

import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple, Union
import logging

import numpy as np
from scipy import special

from src.exceptions import ConvergenceError, ValidationError
from src.spectral import SpectralModel, SpectralVector, alpha_norms, analyze, synthesize


logger = logging.getLogger(__name__)

R_BRACKET = (1e-8, 1e2)


@dataclass(frozen=True)
class NonlinearitySpec:
    """Parametri di F e del suo troncamento"""
    p: float = 2.0
    signed_power: bool = False
    R: Optional[float] = None
    l_F: Optional[float] = None
    safety_factor: float = 1.25

    def __post_init__(self):
        if self.p <= 1:
            raise ValidationError(f"p={self.p} deve essere > 1", rule="p > 1")
        if not self.signed_power and (float(self.p) != int(self.p) or self.p < 2):
            raise ValidationError(
                f"p={self.p} non intero richiede signed_power=true",
                rule="integer p >= 2 unless signed_power")
        if self.R is not None and self.R <= 0:
            raise ValidationError(f"R={self.R} deve essere positivo", rule="R > 0")
        if self.safety_factor < 1:
            raise ValidationError("safety_factor deve essere >= 1", rule="safety_factor >= 1")

    def with_radius(self, R: float) -> 'NonlinearitySpec':
        return replace(self, R=float(R), l_F=None)

    def require_radius(self) -> float:
        if self.R is None:
            raise ValidationError("Raggio di troncamento R non impostato", rule="R set")
        return self.R


def minimum_grid_size(p: float, mode_count: int) -> int:
    """Regola 3/2 generalizzata: grid_size >= ceil((p+1)/2 * mode_count)"""
    return int(math.ceil((p + 1.0) / 2.0 * mode_count))


def _check_grid(spec: NonlinearitySpec, model: SpectralModel) -> None:
    needed = minimum_grid_size(spec.p, model.mode_count)
    if model.grid_size < needed:
        raise ValidationError(
            f"grid_size={model.grid_size} insufficiente per p={spec.p}: servono almeno {needed} punti",
            rule="grid_size >= (p+1)/2*mode_count")


def pointwise_power(values: np.ndarray, spec: NonlinearitySpec) -> np.ndarray:
    if spec.signed_power:
        return np.abs(values) ** (spec.p - 1.0) * values
    return values ** int(spec.p)


def power_coeffs(coeffs: np.ndarray, spec: NonlinearitySpec, model: SpectralModel) -> np.ndarray:
    """Coefficienti di F(v) = v^p lungo l'ultimo asse, per via pseudo-spettrale"""
    _check_grid(spec, model)
    return analyze(pointwise_power(synthesize(coeffs, model), spec), model)


def power_f(v: SpectralVector, spec: NonlinearitySpec, model: SpectralModel) -> SpectralVector:
    """
    F(v) = v^p: sintesi su griglia, potenza puntuale, analisi

    Args:
        v: Vettore spettrale
        spec: Parametri della nonlinearità
        model: Modello spettrale (griglia con dealiasing)

    Returns:
        Coefficienti di v^p troncati a mode_count modi
    """
    return SpectralVector(power_coeffs(v.coeffs, spec, model))


def _psi(x: np.ndarray) -> np.ndarray:
    with np.errstate(divide='ignore', over='ignore'):
        return np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)


def chi(s: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """
    Profilo di cut-off C^inf: 1 per s <= 1, 0 per s >= 2, quoziente di mollificatori in mezzo
    """
    s_arr = np.asarray(s, dtype=float)
    a = _psi(2.0 - s_arr)
    b = _psi(s_arr - 1.0)
    with np.errstate(invalid='ignore'):
        blend = a / np.where(a + b > 0, a + b, 1.0)
    out = np.where(s_arr <= 1.0, 1.0, np.where(s_arr >= 2.0, 0.0, blend))
    if np.ndim(s) == 0:
        return float(out)
    return out


def truncated_coeffs(coeffs: np.ndarray, spec: NonlinearitySpec, model: SpectralModel) -> np.ndarray:
    """F^(R) = chi(|v|_alpha / R) * v^p lungo l'ultimo asse"""
    R = spec.require_radius()
    factor = chi(alpha_norms(coeffs, model) / R)
    return np.asarray(factor)[..., None] * power_coeffs(coeffs, spec, model)


def truncated_f(v: SpectralVector, spec: NonlinearitySpec, model: SpectralModel) -> SpectralVector:
    return SpectralVector(truncated_coeffs(v.coeffs, spec, model))


def _unit_directions(rng: np.random.Generator, n: int, model: SpectralModel) -> np.ndarray:
    """Direzioni con |d|_alpha = 1 e decadimento 1/k dei coefficienti"""
    k = np.arange(1, model.mode_count + 1)
    raw = rng.standard_normal((n, model.mode_count)) / k / model.alpha_weights
    return raw / alpha_norms(raw, model)[:, None]


def _sample_pairs(model: SpectralModel, n_pairs: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Coppie nella palla |.|_alpha <= 2 (raggio unitario, scalate poi per R)

    Un terzo coppie indipendenti, un terzo coppie radiali sulla stessa direzione,
    il resto piccole perturbazioni per catturare la pendenza locale.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    n_indep = n_pairs // 3
    n_radial = n_pairs // 3
    n_local = n_pairs - n_indep - n_radial

    first = _unit_directions(rng, n_pairs, model) * rng.uniform(0.0, 2.0, (n_pairs, 1))
    second = np.empty_like(first)

    second[:n_indep] = _unit_directions(rng, n_indep, model) * rng.uniform(0.0, 2.0, (n_indep, 1))

    radial = slice(n_indep, n_indep + n_radial)
    directions = first[radial] / np.maximum(alpha_norms(first[radial], model), 1e-300)[:, None]
    second[radial] = directions * rng.uniform(0.0, 2.0, (n_radial, 1))

    local = slice(n_indep + n_radial, n_pairs)
    eps = 10.0 ** rng.uniform(-4.0, -2.0, (n_local, 1))
    candidate = first[local] + eps * _unit_directions(rng, n_local, model)
    norms = alpha_norms(candidate, model)
    candidate *= np.minimum(1.0, 2.0 / np.maximum(norms, 1e-300))[:, None]
    second[local] = candidate
    return first, second


def _pair_ratios(spec: NonlinearitySpec, model: SpectralModel, n_pairs: int, seed: int) -> np.ndarray:
    R = spec.require_radius()
    first, second = _sample_pairs(model, n_pairs, seed)
    first, second = R * first, R * second
    gaps = alpha_norms(first - second, model)
    keep = gaps > 0
    if not np.any(keep):
        raise ValidationError("Campionamento degenere: tutte le coppie coincidono", rule="distinct pairs")
    diff = truncated_coeffs(first[keep], spec, model) - truncated_coeffs(second[keep], spec, model)
    return np.linalg.norm(diff, axis=-1) / gaps[keep]


def lipschitz_estimate(spec: NonlinearitySpec, model: SpectralModel,
                       n_pairs: int = 1000, seed: int = 0) -> float:
    """
    Stima di l_F per F^(R): safety_factor * max ||F^(R)(v) - F^(R)(w)|| / |v - w|_alpha

    Args:
        spec: Parametri con R impostato
        model: Modello spettrale
        n_pairs: Numero di coppie campionate (>= 1000)
        seed: Seme del campionamento

    Returns:
        Costante di Lipschitz stimata
    """
    if n_pairs < 1000:
        raise ValidationError(f"n_pairs={n_pairs} < 1000", rule="n_pairs >= 1000")
    ratios = _pair_ratios(spec, model, n_pairs, seed)
    estimate = spec.safety_factor * float(np.max(ratios))
    logger.debug(f"l_F(R={spec.R:.4g}) = {estimate:.6g} su {ratios.size} coppie")
    return estimate


def audit_lipschitz(spec: NonlinearitySpec, model: SpectralModel,
                    n_pairs: int = 10000, seed: int = 1) -> int:
    """Numero di coppie nuove che violano la stima registrata l_F"""
    if spec.l_F is None:
        raise ValidationError("l_F non certificata", rule="l_F set")
    ratios = _pair_ratios(spec, model, n_pairs, seed)
    return int(np.count_nonzero(ratios > spec.l_F * (1.0 + 1e-12)))


def certify_lipschitz(spec: NonlinearitySpec, model: SpectralModel, n_pairs: int = 1000,
                      seed: int = 0, audit_pairs: int = 10000,
                      max_rounds: int = 3) -> NonlinearitySpec:
    """
    Stima l_F e la verifica su coppie fresche; ogni violazione forza una nuova stima

    Returns:
        NonlinearitySpec con l_F certificata
    """
    l_F = lipschitz_estimate(spec, model, n_pairs, seed)
    for round_index in range(max_rounds):
        audit_seed = seed + 1 + round_index
        ratios = _pair_ratios(spec, model, audit_pairs, audit_seed)
        violations = int(np.count_nonzero(ratios > l_F * (1.0 + 1e-12)))
        if violations == 0:
            return replace(spec, l_F=l_F)
        logger.warning(f"⚠️ Audit Lipschitz: {violations} violazioni con l_F={l_F:.6g}, nuova stima")
        l_F = spec.safety_factor * max(l_F, float(np.max(ratios)))
    raise ConvergenceError(f"Certificazione di l_F fallita dopo {max_rounds} audit")


def sc_constant(M_c: float, l_F: float, alpha: float, beta: float,
                lambda_u: float, lambda_s: float) -> float:
    """SC = M l_F [1/(beta - lambda_u) + Gamma(1-alpha)/(lambda_s - beta)^(1-alpha)]"""
    if not lambda_u < beta < lambda_s:
        raise ValidationError(f"beta={beta} fuori da ({lambda_u}, {lambda_s})",
                              rule="beta in (lambda_u, lambda_s)")
    if not 0.0 <= alpha < 1.0:
        raise ValidationError(f"alpha={alpha} fuori da [0, 1)", rule="alpha in [0, 1)")
    return M_c * l_F * (1.0 / (beta - lambda_u)
                        + special.gamma(1.0 - alpha) / (lambda_s - beta) ** (1.0 - alpha))


def choose_truncation_radius(target_sc: float, spec: NonlinearitySpec, model: SpectralModel,
                             beta: float, n_pairs: int = 1000, seed: int = 0,
                             max_steps: int = 200) -> Tuple[NonlinearitySpec, float]:
    """
    Bisezione logaritmica su R in [1e-8, 1e2] finché SC(R) cade in [target_sc/2, target_sc]

    Args:
        target_sc: Valore obiettivo di SC in (0, 1)
        spec: Parametri di partenza (R viene sostituito)
        model: Modello spettrale
        beta: Peso esponenziale dello spazio C_beta^-

    Returns:
        Tupla (spec con R e l_F impostati, SC finale)
    """
    if not 0.0 < target_sc < 1.0:
        raise ValidationError(f"target_sc={target_sc} fuori da (0, 1)", rule="0 < target_sc < 1")

    def evaluate(R: float) -> Tuple[NonlinearitySpec, float]:
        candidate = spec.with_radius(R)
        l_F = lipschitz_estimate(candidate, model, n_pairs, seed)
        sc = sc_constant(1.0, l_F, model.alpha, beta, model.lambda_u, model.lambda_s)
        return replace(candidate, l_F=l_F), sc

    low, high = R_BRACKET
    low_spec, low_sc = evaluate(low)
    high_spec, high_sc = evaluate(high)
    if 0.5 * target_sc <= high_sc <= target_sc:
        return high_spec, high_sc
    if low_sc > target_sc or high_sc < 0.5 * target_sc:
        raise ConvergenceError(
            f"Bisezione su R non bracketta target_sc={target_sc}: "
            f"SC({low:g})={low_sc:.3g}, SC({high:g})={high_sc:.3g}")

    for _ in range(max_steps):
        mid = math.sqrt(low * high)
        mid_spec, mid_sc = evaluate(mid)
        if 0.5 * target_sc <= mid_sc <= target_sc:
            logger.info(f"📐 Raggio di troncamento R={mid:.6g}, l_F={mid_spec.l_F:.6g}, SC={mid_sc:.4f}")
            return mid_spec, mid_sc
        if mid_sc > target_sc:
            high = mid
        else:
            low = mid
    raise ConvergenceError(f"Bisezione su R non convergente in {max_steps} passi")


def theorem_sigma_ceiling(lambda_u: float, lambda_s: float, p: float) -> float:
    """Soglia min{(lambda_s - (p-1) lambda_u)/p, -lambda_u} per l'intensità del rumore"""
    return min((lambda_s - (p - 1.0) * lambda_u) / p, -lambda_u)
