"""
Spectral - Modello a modi finiti dell'operatore autoaggiunto L, splitting E = E_u + E_s,
norme frazionarie, semigruppi e trasformate pseudo-spettrali su griglia
"""

import math
from dataclasses import dataclass, field
from typing import Literal, Union
import logging

import numpy as np
from scipy import fft

from src.exceptions import ResonanceError, SpectrumError, ValidationError


logger = logging.getLogger(__name__)

Part = Literal['unstable', 'stable', 'full']

NORMALIZATION = 'sqrt(2/pi)*sin(kx)'
SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


def _readonly(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class SpectralModel:
    """Troncamento spettrale di L con autofunzioni sqrt(2/pi)*sin(kx) su (0, pi)"""
    mode_count: int
    eigenvalues: np.ndarray
    shift_a: float
    alpha: float
    split_index: int
    grid_size: int
    quadrature_tol: float = 1e-12
    normalization: str = NORMALIZATION

    def __post_init__(self):
        object.__setattr__(self, 'eigenvalues', _readonly(self.eigenvalues))

    @property
    def lambda_u(self) -> float:
        return float(self.eigenvalues[self.split_index - 1])

    @property
    def lambda_s(self) -> float:
        return float(self.eigenvalues[self.split_index])

    @property
    def alpha_weights(self) -> np.ndarray:
        """Pesi (lambda_k + a)^alpha della norma di E^alpha"""
        return (self.eigenvalues + self.shift_a) ** self.alpha

    @property
    def unstable_mask(self) -> np.ndarray:
        return np.arange(self.mode_count) < self.split_index

    @property
    def stable_mask(self) -> np.ndarray:
        return ~self.unstable_mask

    @property
    def grid_points(self) -> np.ndarray:
        """Nodi x_j = j*pi/(G+1), j = 1..G"""
        return np.arange(1, self.grid_size + 1) * math.pi / (self.grid_size + 1)

    def check_dimension(self, coeffs: np.ndarray) -> None:
        if np.shape(coeffs)[-1] != self.mode_count:
            raise ValidationError(
                f"Dimensione {np.shape(coeffs)[-1]} incompatibile con {self.mode_count} modi",
                rule="dimension matches model")

    def describe(self) -> dict:
        return {
            'mode_count': self.mode_count,
            'eigenvalues': self.eigenvalues.tolist(),
            'shift_a': self.shift_a,
            'alpha': self.alpha,
            'split_index': self.split_index,
            'lambda_u': self.lambda_u,
            'lambda_s': self.lambda_s,
            'grid_size': self.grid_size,
            'quadrature_tol': self.quadrature_tol,
            'normalization': self.normalization,
        }


@dataclass(frozen=True, eq=False)
class SpectralVector:
    """Vettore di coefficienti rispetto alla base ortonormale e_k"""
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = _readonly(self.coeffs)
        if coeffs.ndim != 1:
            raise ValidationError("SpectralVector richiede un vettore 1-d di coefficienti")
        object.__setattr__(self, 'coeffs', coeffs)

    @classmethod
    def zeros(cls, model: SpectralModel) -> 'SpectralVector':
        return cls(np.zeros(model.mode_count))

    @classmethod
    def basis(cls, k: int, model: SpectralModel, scale: float = 1.0) -> 'SpectralVector':
        """Vettore scale*e_k (k parte da 1)"""
        coeffs = np.zeros(model.mode_count)
        coeffs[k - 1] = scale
        return cls(coeffs)

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def alpha_norm(self, model: SpectralModel) -> float:
        model.check_dimension(self.coeffs)
        return float(np.linalg.norm(model.alpha_weights * self.coeffs))

    def __add__(self, other: 'SpectralVector') -> 'SpectralVector':
        return SpectralVector(self.coeffs + other.coeffs)

    def __sub__(self, other: 'SpectralVector') -> 'SpectralVector':
        return SpectralVector(self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> 'SpectralVector':
        return SpectralVector(self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> 'SpectralVector':
        return SpectralVector(-self.coeffs)


@dataclass(frozen=True, eq=False)
class GridField:
    """Campioni su x_j = j*pi/(G+1)"""
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        object.__setattr__(self, 'values', _readonly(self.values))


def build_sine_model(mode_count: int, shift_c: float, alpha: float = 0.0,
                     grid_size: int = 256, quadrature_tol: float = 1e-12) -> SpectralModel:
    """
    Costruisce il modello L = -d_xx - c*id con condizioni di Dirichlet su (0, pi)

    Args:
        mode_count: Numero di modi trattenuti
        shift_c: Costante c, autovalori lambda_k = k^2 - c
        alpha: Esponente frazionario in [0, 1)
        grid_size: Punti di collocazione (almeno 2*mode_count)
        quadrature_tol: Tolleranza dichiarata del round-trip su griglia

    Returns:
        SpectralModel con split_index N = max{k : lambda_k < 0}
    """
    if mode_count < 2:
        raise ValidationError("Servono almeno 2 modi", rule="mode_count >= 2")
    if not 0.0 <= alpha < 1.0:
        raise ValidationError(f"alpha={alpha} fuori da [0, 1)", rule="alpha in [0, 1)")
    if grid_size < 2 * mode_count:
        raise ValidationError(
            f"grid_size={grid_size} < 2*mode_count={2 * mode_count}",
            rule="grid_size >= 2*mode_count")

    k = np.arange(1, mode_count + 1, dtype=float)
    eigenvalues = k ** 2 - shift_c
    negative = int(np.count_nonzero(eigenvalues < 0))
    if negative == 0:
        raise SpectrumError("Nessun modo instabile: tutti gli autovalori sono >= 0",
                            rule="lambda_N < 0")
    if negative == mode_count:
        raise SpectrumError("Nessun modo stabile trattenuto: aumentare mode_count",
                            rule="lambda_{N+1} >= 0")

    shift_a = max(0.0, 1.0 - float(eigenvalues[0]))
    model = SpectralModel(mode_count=mode_count, eigenvalues=eigenvalues,
                          shift_a=shift_a, alpha=float(alpha), split_index=negative,
                          grid_size=int(grid_size), quadrature_tol=quadrature_tol)
    logger.debug(f"Modello spettrale: N={negative}, lambda_u={model.lambda_u}, "
                 f"lambda_s={model.lambda_s}, a={shift_a}")
    return model


def alpha_norms(coeffs: np.ndarray, model: SpectralModel) -> np.ndarray:
    """Norme |.|_alpha lungo l'ultimo asse"""
    return np.linalg.norm(coeffs * model.alpha_weights, axis=-1)


def part_mask(part: Part, model: SpectralModel) -> np.ndarray:
    if part == 'unstable':
        return model.unstable_mask
    if part == 'stable':
        return model.stable_mask
    if part == 'full':
        return np.ones(model.mode_count, dtype=bool)
    raise ValidationError(f"Parte sconosciuta: {part}")


def project(v: SpectralVector, part: Part, model: SpectralModel) -> SpectralVector:
    """Proiezione ortogonale P_u o P_s"""
    model.check_dimension(v.coeffs)
    if part not in ('unstable', 'stable'):
        raise ValidationError(f"project accetta solo 'unstable' o 'stable', non {part}")
    return SpectralVector(np.where(part_mask(part, model), v.coeffs, 0.0))


def semigroup_factors(t: float, part: Part, model: SpectralModel) -> np.ndarray:
    """Fattori diagonali e^{-lambda_k t} sul blocco scelto, zero altrove"""
    if part == 'stable' and t < 0:
        raise ValidationError("Semigruppo stabile definito solo per t >= 0", rule="t >= 0")
    if part == 'unstable' and t > 0:
        raise ValidationError("Semigruppo instabile definito solo per t <= 0", rule="t <= 0")
    if part == 'full' and t < 0:
        raise ValidationError("Semigruppo completo definito solo per t >= 0", rule="t >= 0")
    mask = part_mask(part, model)
    return np.where(mask, np.exp(-model.eigenvalues * t), 0.0)


def semigroup_apply(v: SpectralVector, t: float, part: Part,
                    model: SpectralModel) -> SpectralVector:
    """
    Applica e^{-L t} coefficiente per coefficiente sul blocco richiesto

    Con proiezioni ortogonali e L diagonale le stime del semigruppo valgono con M = 1.
    """
    model.check_dimension(v.coeffs)
    return SpectralVector(semigroup_factors(t, part, model) * v.coeffs)


def synthesize(coeffs: np.ndarray, model: SpectralModel) -> np.ndarray:
    """Sintesi v(x_j) = sum_k c_k e_k(x_j) lungo l'ultimo asse (DST-I)"""
    model.check_dimension(coeffs)
    coeffs = np.asarray(coeffs, dtype=float)
    padded = np.zeros(coeffs.shape[:-1] + (model.grid_size,))
    padded[..., :model.mode_count] = coeffs
    return 0.5 * SQRT_2_OVER_PI * fft.dst(padded, type=1, axis=-1)


def analyze(values: np.ndarray, model: SpectralModel) -> np.ndarray:
    """Analisi per quadratura discreta del seno, restituisce i primi mode_count coefficienti"""
    values = np.asarray(values, dtype=float)
    if values.shape[-1] != model.grid_size:
        raise ValidationError(
            f"Campo con {values.shape[-1]} punti, attesi {model.grid_size}",
            rule="grid dimension matches model")
    scale = 0.5 * SQRT_2_OVER_PI * math.pi / (model.grid_size + 1)
    return scale * fft.dst(values, type=1, axis=-1)[..., :model.mode_count]


def to_grid(v: SpectralVector, model: SpectralModel) -> GridField:
    return GridField(synthesize(v.coeffs, model))


def from_grid(f: GridField, model: SpectralModel) -> SpectralVector:
    return SpectralVector(analyze(f.values, model))


def grid_l2_norm(f: GridField, model: SpectralModel) -> float:
    """Norma L2 discreta (quadratura dei rettangoli sui nodi interni)"""
    h = math.pi / (model.grid_size + 1)
    return float(np.sqrt(np.sum(f.values ** 2) * h))


def shifted_stable_resolvent(w: SpectralVector, mu: float,
                             model: SpectralModel) -> SpectralVector:
    """
    Applica (L_s + mu)^{-1} sul blocco stabile

    Args:
        w: Vettore supportato sui modi stabili
        mu: Shift, tipicamente -p*lambda_u

    Returns:
        c_k / (lambda_k + mu) per k > N, zero sul blocco instabile
    """
    model.check_dimension(w.coeffs)
    if np.any(w.coeffs[model.unstable_mask] != 0.0):
        raise ValidationError("Il risolvente stabile richiede w supportato su E_s",
                              rule="w in E_s")
    shifted = model.eigenvalues + mu
    for k in np.nonzero(model.stable_mask)[0]:
        if abs(shifted[k]) <= 1e-12 * max(1.0, abs(mu)):
            raise ResonanceError(f"Risonanza: lambda_{k + 1} + mu = 0", mode=int(k + 1))
    out = np.zeros(model.mode_count)
    stable = model.stable_mask
    out[stable] = w.coeffs[stable] / shifted[stable]
    return SpectralVector(out)


def unit_sine_to_coeffs(amplitudes, model: SpectralModel) -> SpectralVector:
    """Converte ampiezze di sin(kx) nei coefficienti ortonormali"""
    amplitudes = np.asarray(amplitudes, dtype=float)
    model.check_dimension(amplitudes)
    return SpectralVector(amplitudes / SQRT_2_OVER_PI)


def coeffs_to_unit_sine(v: SpectralVector) -> np.ndarray:
    """Ampiezze rispetto a sin(kx) non normalizzato"""
    return v.coeffs * SQRT_2_OVER_PI
