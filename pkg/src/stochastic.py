"""
Stochastic - Cammini di Wiener bilateri, shift theta_t, processo di Ornstein-Uhlenbeck
stazionario z(theta_t omega), integrale Z e costanti aleatorie K1, K+-, K2, K3
"""

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Tuple, Union
import logging

import numpy as np
from scipy import integrate, signal

from src.exceptions import ValidationError, WindowError


logger = logging.getLogger(__name__)

DEFAULT_TAIL_CUTOFF = 40.0


def _grid_steps(length: float, dt: float, what: str) -> int:
    """Numero intero di passi dt contenuti in length, altrimenti WindowError"""
    steps = int(round(length / dt))
    if abs(steps * dt - length) > 1e-9 * max(1.0, abs(length)):
        raise WindowError(f"{what}={length} non è un multiplo di dt={dt}: la griglia non contiene 0",
                          rule="grid contains 0")
    return steps


@dataclass(frozen=True, eq=False)
class WienerPath:
    """Campioni omega(t_i) su t_i = (i - zero_index)*dt"""
    t_min: float
    t_max: float
    dt: float
    values: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)
        if self.values[self.zero_index] != 0.0:
            raise WindowError("Il cammino deve valere esattamente 0 in t = 0", rule="omega(0) = 0")

    @property
    def zero_index(self) -> int:
        return int(round(-self.t_min / self.dt))

    @property
    def times(self) -> np.ndarray:
        return (np.arange(self.values.size) - self.zero_index) * self.dt

    def index_of(self, t: float) -> int:
        i = self.zero_index + _grid_steps(t, self.dt, "t")
        if not 0 <= i < self.values.size:
            raise WindowError(f"t={t} fuori dalla finestra [{self.t_min}, {self.t_max}]")
        return i

    def negated(self) -> 'WienerPath':
        return WienerPath(self.t_min, self.t_max, self.dt, -self.values, self.seed)


@dataclass(frozen=True, eq=False)
class OuTrajectory:
    """
    Traiettoria z(theta_t omega) sulla griglia del cammino, con Z(t) = int_0^t z

    omega contiene i valori del cammino sugli stessi nodi, usati dalle costanti K.
    """
    times: np.ndarray
    z_values: np.ndarray
    Z_values: np.ndarray
    omega: np.ndarray
    sigma: float
    tail_cutoff: float
    dt: float
    tail_bound: float = 0.0
    seed: Optional[int] = None

    def __post_init__(self):
        for name in ('times', 'z_values', 'Z_values', 'omega'):
            array = np.array(getattr(self, name), dtype=float)
            array.setflags(write=False)
            object.__setattr__(self, name, array)

    @property
    def zero_index(self) -> int:
        return int(round(-self.times[0] / self.dt))

    @property
    def z0(self) -> float:
        return float(self.z_values[self.zero_index])

    @property
    def t_min(self) -> float:
        return float(self.times[0])

    @property
    def t_max(self) -> float:
        return float(self.times[-1])

    def window(self, t_start: float, t_end: float) -> slice:
        """Slice dei nodi in [t_start, t_end], WindowError se la finestra non è coperta"""
        i0 = self.zero_index
        start = i0 + _grid_steps(t_start, self.dt, "t_start")
        stop = i0 + _grid_steps(t_end, self.dt, "t_end") + 1
        if start < 0 or stop > self.times.size:
            raise WindowError(
                f"Finestra OU [{self.t_min:.4g}, {self.t_max:.4g}] non copre [{t_start}, {t_end}]: "
                f"campionare un cammino più lungo", rule="ou window covers horizon")
        return slice(start, stop)


@dataclass(frozen=True)
class TailConstants:
    """Costanti aleatorie K1, K+-, K2, K3 con i parametri usati"""
    K1: float
    Kpm: float
    K2: float
    K3: float
    gamma: float
    delta: float
    gamma1: float
    delta1: float


def required_t_min(horizon: float, tail_cutoff: float = DEFAULT_TAIL_CUTOFF) -> float:
    """Estremo sinistro del cammino necessario per coprire [-horizon, 0] con la coda OU"""
    return -(horizon + tail_cutoff)


def sample_wiener(seed: int, t_min: float, t_max: float, dt: float) -> WienerPath:
    """
    Campiona un cammino di Wiener bilatero con omega(0) = 0

    Due flussi di incrementi indipendenti (avanti e indietro) vengono generati da
    SeedSequence(seed).spawn(2) e incollati in 0; il flusso all'indietro è indicizzato
    a partire da 0, quindi allungare la finestra non cambia i valori già campionati.

    Args:
        seed: Seme intero
        t_min: Estremo sinistro (<= 0)
        t_max: Estremo destro (>= 0)
        dt: Passo della griglia

    Returns:
        WienerPath riproducibile dal seme
    """
    if dt <= 0:
        raise ValidationError(f"dt={dt} deve essere positivo", rule="dt > 0")
    if t_min > 0 or t_max < 0:
        raise WindowError(f"Finestra [{t_min}, {t_max}] non contiene 0", rule="t_min <= 0 <= t_max")

    n_back = _grid_steps(-t_min, dt, "t_min")
    n_fwd = _grid_steps(t_max, dt, "t_max")
    forward_seq, backward_seq = np.random.SeedSequence(seed).spawn(2)
    scale = math.sqrt(dt)
    forward = np.cumsum(np.random.default_rng(forward_seq).standard_normal(n_fwd) * scale)
    backward = np.cumsum(np.random.default_rng(backward_seq).standard_normal(n_back) * scale)

    values = np.concatenate([backward[::-1], [0.0], forward])
    return WienerPath(t_min=-n_back * dt, t_max=n_fwd * dt, dt=dt, values=values, seed=seed)


def zero_path(t_min: float, t_max: float, dt: float) -> WienerPath:
    """Cammino degenere omega = 0 (modalità deterministica)"""
    n_back = _grid_steps(-t_min, dt, "t_min")
    n_fwd = _grid_steps(t_max, dt, "t_max")
    return WienerPath(t_min=-n_back * dt, t_max=n_fwd * dt, dt=dt,
                      values=np.zeros(n_back + n_fwd + 1))


def shift_path(path: WienerPath, s: float) -> WienerPath:
    """
    Shift di Wiener theta_s omega = omega(. + s) - omega(s)

    Il risultato vive sulla finestra [t_min - s, t_max - s]; s deve stare nella finestra.
    """
    k = path.index_of(s)
    values = path.values - path.values[k]
    zero_index = k
    n = values.size
    return WienerPath(t_min=-zero_index * path.dt, t_max=(n - 1 - zero_index) * path.dt,
                      dt=path.dt, values=values, seed=path.seed)


def ou_trajectory(path: WienerPath, sigma: float,
                  tail_cutoff: float = DEFAULT_TAIL_CUTOFF) -> OuTrajectory:
    """
    Processo OU stazionario z(theta_t omega) = -sigma int_{-inf}^0 e^tau theta_t omega(tau) dtau

    La quadratura usa i pesi geometrici dt*(1-dt)^(j-1), j = 1..T_ou/dt, per cui il
    residuo discreto z_{i+1} - (1-dt) z_i - sigma*(omega_{i+1} - omega_i) si riduce al
    solo troncamento della coda. La griglia risultante va da t_min + T_ou a t_max.

    Args:
        path: Cammino di Wiener
        sigma: Intensità del rumore (>= 0)
        tail_cutoff: Troncamento T_ou dell'integrale

    Returns:
        OuTrajectory con z, Z e limite della coda troncata
    """
    if sigma < 0:
        raise ValidationError(f"sigma={sigma} deve essere >= 0", rule="sigma >= 0")
    dt = path.dt
    m = int(round(tail_cutoff / dt))
    if m < 1:
        raise ValidationError(f"tail_cutoff={tail_cutoff} più corto di dt", rule="tail_cutoff >= dt")
    if path.zero_index < m:
        raise WindowError(
            f"Finestra all'indietro {-path.t_min} più corta della coda OU {tail_cutoff}",
            rule="t_min <= -tail_cutoff")

    omega = path.values
    weights = dt * (1.0 - dt) ** np.arange(m)
    kernel = np.concatenate([[0.0], weights])
    lagged = signal.fftconvolve(omega, kernel)[m:omega.size]
    weight_sum = float(np.sum(weights))
    z = sigma * (weight_sum * omega[m:] - lagged)

    zero_index = path.zero_index - m
    cumulative = integrate.cumulative_trapezoid(z, dx=dt, initial=0.0)
    Z = cumulative - cumulative[zero_index]

    tail_bound = sigma * (1.0 - dt) ** m * (1.0 + 2.0 * float(np.max(np.abs(omega))))
    times = (np.arange(z.size) - zero_index) * dt
    logger.debug(f"OU: sigma={sigma}, nodi={z.size}, z(0)={z[zero_index]:.4g}, coda<={tail_bound:.2e}")
    return OuTrajectory(times=times, z_values=z, Z_values=Z, omega=omega[m:], sigma=float(sigma),
                        tail_cutoff=float(tail_cutoff), dt=dt, tail_bound=tail_bound,
                        seed=path.seed)


def deterministic_ou(t_min: float, t_max: float, dt: float,
                     tail_cutoff: float = DEFAULT_TAIL_CUTOFF) -> OuTrajectory:
    """Traiettoria z = 0, Z = 0 su [t_min, t_max], stessa costruzione del caso aleatorio"""
    return ou_trajectory(zero_path(t_min - tail_cutoff, t_max, dt), 0.0, tail_cutoff)


def ou_at(ou: OuTrajectory, t: Union[float, np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    """Interpolazione lineare a tratti di (z, Z) tra i nodi"""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < ou.t_min - 1e-12) or np.any(t_arr > ou.t_max + 1e-12):
        raise WindowError(f"t fuori dalla finestra OU [{ou.t_min}, {ou.t_max}]")
    return np.interp(t_arr, ou.times, ou.z_values), np.interp(t_arr, ou.times, ou.Z_values)


def residual_per_step(ou: OuTrajectory) -> np.ndarray:
    """Residuo discreto |z_{i+1} - z_i + z_i dt - sigma (omega_{i+1} - omega_i)|"""
    z, omega = ou.z_values, ou.omega
    return np.abs(z[1:] - z[:-1] + z[:-1] * ou.dt - ou.sigma * np.diff(omega))


def growth_diagnostics(ou: OuTrajectory, horizon: float) -> Dict[str, float]:
    """
    Diagnostica a orizzonte finito di |z(theta_t omega)|/|t| -> 0 e (1/t) int_0^t z -> 0

    Args:
        ou: Traiettoria che copre [-horizon, horizon]
        horizon: Orizzonte T > 0

    Returns:
        Dizionario con i quattro valori a t = +T e t = -T
    """
    if horizon <= 0:
        raise ValidationError("horizon deve essere positivo", rule="horizon > 0")
    window = ou.window(-horizon, horizon)
    z = ou.z_values[window]
    Z = ou.Z_values[window]
    return {
        'z_ratio_plus': abs(float(z[-1])) / horizon,
        'z_ratio_minus': abs(float(z[0])) / horizon,
        'mean_z_plus': abs(float(Z[-1])) / horizon,
        'mean_z_minus': abs(float(Z[0])) / horizon,
    }


def _require_noise(ou: OuTrajectory) -> None:
    if ou.sigma <= 0:
        raise ValidationError("Costanti K non definite per sigma = 0 (usare la modalità deterministica)",
                              rule="sigma > 0")


def _k1(z0: float, omega_back: np.ndarray, t_back: np.ndarray, sigma: float) -> float:
    return max(1.0, float(np.max(z0 / sigma + omega_back - np.abs(t_back))))


def k1_estimate(ou: OuTrajectory) -> float:
    """K1 = max(1, sup_{t<=0} [z(0)/sigma + omega(t) - |t|]) sulla finestra all'indietro"""
    _require_noise(ou)
    back = slice(0, ou.zero_index + 1)
    return _k1(ou.z0, ou.omega[back], ou.times[back], ou.sigma)


def kpm_estimate(ou: OuTrajectory) -> float:
    """K+- = K1(omega) + K1(-omega), col cammino negato letteralmente"""
    _require_noise(ou)
    back = slice(0, ou.zero_index + 1)
    times = ou.times[back]
    return (_k1(ou.z0, ou.omega[back], times, ou.sigma)
            + _k1(-ou.z0, -ou.omega[back], times, ou.sigma))


def k2_estimate(ou: OuTrajectory, gamma: float, delta: float, lambda_u: float) -> float:
    """
    K2 = sup_{tau<=0} |1 - e^{-lambda_u tau + sigma omega(tau)}| / (gamma e^{delta |tau|})

    Richiede gamma >= max(-lambda_u, sigma) e delta > -lambda_u + sigma.
    """
    _require_noise(ou)
    sigma = ou.sigma
    if gamma < max(-lambda_u, sigma):
        raise ValidationError(f"gamma={gamma} < max(-lambda_u, sigma)", rule="gamma >= max(-lambda_u, sigma)")
    if delta <= -lambda_u + sigma:
        raise ValidationError(f"delta={delta} <= -lambda_u + sigma", rule="delta > -lambda_u + sigma")
    back = slice(0, ou.zero_index + 1)
    tau = ou.times[back]
    numerator = np.abs(1.0 - np.exp(-lambda_u * tau + sigma * ou.omega[back]))
    return float(np.max(numerator / (gamma * np.exp(delta * np.abs(tau)))))


def k3_estimate(ou: OuTrajectory, gamma1: float, delta1: float, p: float) -> float:
    """K3 = sup_{r<=0} |1 - e^{(p-1) sigma omega(r)}| / (gamma1 e^{(p-1) delta1 |r|})"""
    _require_noise(ou)
    sigma = ou.sigma
    if gamma1 <= sigma:
        raise ValidationError(f"gamma1={gamma1} <= sigma", rule="gamma1 > sigma")
    if delta1 <= sigma:
        raise ValidationError(f"delta1={delta1} <= sigma", rule="delta1 > sigma")
    back = slice(0, ou.zero_index + 1)
    r = ou.times[back]
    numerator = np.abs(1.0 - np.exp((p - 1.0) * sigma * ou.omega[back]))
    return float(np.max(numerator / (gamma1 * np.exp((p - 1.0) * delta1 * np.abs(r)))))


def tail_constants(ou: OuTrajectory, lambda_u: float, p: float,
                   gamma: Optional[float] = None, delta: Optional[float] = None,
                   gamma1: Optional[float] = None, delta1: Optional[float] = None) -> TailConstants:
    """
    Calcola tutte le costanti K di un campione

    I parametri mancanti prendono i valori minimi ammessi con un margine sigma:
    gamma = max(-lambda_u, sigma), delta = -lambda_u + 2 sigma, gamma1 = delta1 = 2 sigma.
    """
    _require_noise(ou)
    sigma = ou.sigma
    gamma = max(-lambda_u, sigma) if gamma is None else gamma
    delta = -lambda_u + 2.0 * sigma if delta is None else delta
    gamma1 = 2.0 * sigma if gamma1 is None else gamma1
    delta1 = 2.0 * sigma if delta1 is None else delta1
    return TailConstants(
        K1=k1_estimate(ou),
        Kpm=kpm_estimate(ou),
        K2=k2_estimate(ou, gamma, delta, lambda_u),
        K3=k3_estimate(ou, gamma1, delta1, p),
        gamma=gamma, delta=delta, gamma1=gamma1, delta1=delta1,
    )


def dump_path_csv(path: WienerPath, ou: OuTrajectory, file_path: Union[str, Path]) -> Path:
    """
    Salva cammino e traiettoria OU in CSV (colonne t, omega, z, Z) con 17 cifre significative

    La prima riga è un commento con i metadati necessari alla ricostruzione esatta.
    I nodi precedenti l'inizio della griglia OU hanno z e Z vuoti.
    """
    file_path = Path(file_path)
    offset = path.zero_index - ou.zero_index
    with open(file_path, 'w', newline='', encoding='utf-8') as handle:
        handle.write(f"# dt={path.dt!r} zero_index={path.zero_index} sigma={ou.sigma!r} "
                     f"tail_cutoff={ou.tail_cutoff!r} tail_bound={ou.tail_bound!r} seed={path.seed}\n")
        writer = csv.writer(handle)
        writer.writerow(['t', 'omega', 'z', 'Z'])
        for i, (t, w) in enumerate(zip(path.times, path.values)):
            j = i - offset
            if j >= 0:
                writer.writerow([format(t, '.17g'), format(w, '.17g'),
                                 format(ou.z_values[j], '.17g'), format(ou.Z_values[j], '.17g')])
            else:
                writer.writerow([format(t, '.17g'), format(w, '.17g'), '', ''])
    logger.info(f"💾 Cammino salvato: {file_path}")
    return file_path


def load_path_csv(file_path: Union[str, Path]) -> Tuple[WienerPath, OuTrajectory]:
    """Ricarica un CSV scritto da dump_path_csv, bit per bit"""
    file_path = Path(file_path)
    with open(file_path, 'r', encoding='utf-8') as handle:
        header = handle.readline().lstrip('#').split()
        meta = dict(item.split('=', 1) for item in header)
        rows = list(csv.DictReader(handle))

    dt = float(meta['dt'])
    zero_index = int(meta['zero_index'])
    seed = None if meta['seed'] == 'None' else int(meta['seed'])
    omega = np.array([float(row['omega']) for row in rows])
    path = WienerPath(t_min=-zero_index * dt, t_max=(omega.size - 1 - zero_index) * dt,
                      dt=dt, values=omega, seed=seed)

    first = next(i for i, row in enumerate(rows) if row['z'] != '')
    z = np.array([float(row['z']) for row in rows[first:]])
    Z = np.array([float(row['Z']) for row in rows[first:]])
    ou_zero = zero_index - first
    ou = OuTrajectory(times=(np.arange(z.size) - ou_zero) * dt, z_values=z, Z_values=Z,
                      omega=omega[first:], sigma=float(meta['sigma']),
                      tail_cutoff=float(meta['tail_cutoff']), dt=dt,
                      tail_bound=float(meta['tail_bound']), seed=seed)
    return path, ou
