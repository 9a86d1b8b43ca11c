"""
Pronóstico analítico, al inicio del día, de la ocupación de camas de recuperación.

Cada paciente con gamma_p = 1 está en recuperación en t con probabilidad
F_S(t - Z_p) - F_T(t - Z_p); el número total N(t) es Poisson binomial y la
banda del 95% se aproxima con una normal Y(t).
"""

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd

from distributions import LognormalParams, erf, poisson_binomial_cdf

logger = logging.getLogger(__name__)

# |sigma_hat - sigma| por debajo de esto se trata como soporte no acotado
SIGMA_TOLERANCE = 1e-12
Z_95 = 1.96


@dataclass(frozen=True)
class ForecastConfig:
    grid_step: float = 0.1
    horizon: float = 24.0
    z: float = Z_95

    def validate(self):
        if not (self.grid_step > 0 and math.isfinite(self.grid_step)):
            raise ValueError(f"grid_step debe ser positivo (recibido {self.grid_step})")
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ValueError(f"horizon debe ser positivo (recibido {self.horizon})")
        if self.z <= 0:
            raise ValueError(f"z debe ser positivo (recibido {self.z})")
        return self


@dataclass(frozen=True)
class OccupancyCurve:
    """E[N(t)], Var[N(t)] y banda [L(t), U(t)] sobre una rejilla regular."""
    grid_step: float
    times: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __len__(self):
        return len(self.times)

    @property
    def peak(self) -> float:
        return float(self.mean.max()) if len(self.mean) else 0.0


def time_grid(grid_step: float, horizon: float) -> np.ndarray:
    """t = 0, dt, 2dt, ..., sin pasar de horizon; floor(horizon/dt) + 1 puntos."""
    if grid_step <= 0 or horizon <= 0:
        raise ValueError(f"Rejilla inválida: grid_step={grid_step}, horizon={horizon}")
    n = int(math.floor(horizon / grid_step + 1e-9))
    return np.minimum(np.arange(n + 1) * grid_step, horizon)


def support_upper_bound(surgery: LognormalParams, combined: LognormalParams, start: float) -> float:
    """
    Punto t > Z_p donde coinciden los argumentos estandarizados de F_S y F_T:
    Z_p + exp((sigma_hat mu - sigma mu_hat) / (sigma_hat - sigma)).

    Devuelve math.inf si sigma_hat == sigma (dentro de SIGMA_TOLERANCE).
    """
    sigma, sigma_hat = surgery.sigma, combined.sigma
    den = sigma_hat - sigma
    if abs(den) < SIGMA_TOLERANCE:
        return math.inf
    try:
        return start + math.exp((sigma_hat * surgery.mu - sigma * combined.mu) / den)
    except OverflowError:
        return math.inf


class RecoveryKernel:
    """
    Parámetros vectorizados de los pacientes que requieren recuperación.

    Es el núcleo compartido por el pronóstico y el objetivo MEO: evalúa la
    matriz paciente × tiempo de Pr(X_p(t) = 1) en una sola pasada.
    """

    def __init__(self, patients: Sequence, include_all: bool = False):
        self.n_patients = len(patients)
        indices = [i for i, p in enumerate(patients) if include_all or p.needs_recovery]
        self.indices = np.array(indices, dtype=int)
        sel = [patients[i] for i in indices]
        self.mu_s = np.array([p.surgery.mu for p in sel], dtype=float)
        self.sigma_s = np.array([p.surgery.sigma for p in sel], dtype=float)
        self.mu_t = np.array([p.combined.mu for p in sel], dtype=float)
        self.sigma_t = np.array([p.combined.sigma for p in sel], dtype=float)
        # El cruce sólo acota por arriba cuando sigma_hat < sigma; si no,
        # la diferencia negativa queda a la izquierda y la resuelve el recorte a 0.
        self.cutoff = np.array(
            [
                support_upper_bound(p.surgery, p.combined, 0.0) if p.combined.sigma < p.surgery.sigma - SIGMA_TOLERANCE else math.inf
                for p in sel
            ],
            dtype=float,
        )

    def __len__(self):
        return len(self.indices)

    def probabilities(self, starts, times) -> np.ndarray:
        """Matriz (pacientes en recuperación × tiempos) de Pr(X_p(t) = 1)."""
        starts = np.asarray(starts, dtype=float)
        if starts.shape != (self.n_patients,):
            raise ValueError(f"Se esperaban {self.n_patients} inicios, recibidos {starts.shape}")
        times = np.atleast_1d(np.asarray(times, dtype=float))
        if len(self.indices) == 0:
            return np.zeros((0, times.size))

        d = times[None, :] - starts[self.indices][:, None]
        activo = d > 0
        log_d = np.log(np.where(activo, d, 1.0))
        raiz2 = math.sqrt(2.0)
        f_s = 0.5 * erf((log_d - self.mu_s[:, None]) / (raiz2 * self.sigma_s[:, None]))
        f_t = 0.5 * erf((log_d - self.mu_t[:, None]) / (raiz2 * self.sigma_t[:, None]))
        prob = np.where(activo & (d <= self.cutoff[:, None]), f_s - f_t, 0.0)
        return np.clip(prob, 0.0, 1.0)


def occupancy_matrix(patients: Sequence, starts, times) -> np.ndarray:
    return RecoveryKernel(patients).probabilities(starts, times)


def in_recovery_prob(patient, start: float, t: float) -> float:
    """Pr(X_p(t) = 1) = max(0, F_S(t - Z_p) - F_T(t - Z_p)) dentro del soporte."""
    # gamma_p sólo filtra las sumas; la probabilidad individual se define igual
    return float(RecoveryKernel([patient], include_all=True).probabilities([start], [t])[0, 0])


def expected_occupancy(patients: Sequence, starts, t: float) -> float:
    """E[N(t)]: suma de Pr(X_p(t) = 1) sobre los pacientes con gamma_p = 1."""
    return float(occupancy_matrix(patients, starts, [t]).sum())


def occupancy_variance(patients: Sequence, starts, t: float) -> float:
    """Var[N(t)] = sum p (1 - p)."""
    p = occupancy_matrix(patients, starts, [t])[:, 0]
    return float(np.sum(p * (1.0 - p)))


def curve_from_probabilities(times: np.ndarray, grid_step: float, prob: np.ndarray, z: float = Z_95) -> OccupancyCurve:
    mean = prob.sum(axis=0) if prob.size else np.zeros(times.size)
    variance = (prob * (1.0 - prob)).sum(axis=0) if prob.size else np.zeros(times.size)
    half = z * np.sqrt(variance)
    return OccupancyCurve(
        grid_step=grid_step,
        times=times,
        mean=mean,
        variance=variance,
        lower=mean - half,
        upper=mean + half,
    )


def occupancy_curve(patients: Sequence, starts, grid_step: float = 0.1, horizon: float = 24.0, z: float = Z_95) -> OccupancyCurve:
    """Evalúa media, varianza y banda normal en t = 0, dt, ..., horizon."""
    ForecastConfig(grid_step, horizon, z).validate()
    times = time_grid(grid_step, horizon)
    prob = occupancy_matrix(patients, starts, times)
    curve = curve_from_probabilities(times, grid_step, prob, z)
    logger.info(f"Curva de ocupación: {len(times)} puntos, pico esperado {curve.peak:.3f}")
    return curve


def exact_occupancy_cdf(patients: Sequence, starts, t: float, k: int) -> float:
    """Pr(N(t) <= k) exacta vía la Poisson binomial, sin aproximación normal."""
    probs = occupancy_matrix(patients, starts, [t])[:, 0]
    return poisson_binomial_cdf(probs, k)


def curve_to_frame(curve: OccupancyCurve) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "time": curve.times,
            "mean": curve.mean,
            "variance": curve.variance,
            "lower": curve.lower,
            "upper": curve.upper,
        }
    )
