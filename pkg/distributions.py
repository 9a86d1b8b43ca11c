"""
Primitivas de la distribución lognormal, ajuste por momentos de la suma
cirugía + recuperación y CDF exacta de la Poisson binomial.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

logger = logging.getLogger(__name__)

# Residuo imaginario admitido en la inversión DFT de la Poisson binomial
IMAG_TOLERANCE = 1e-9
# exp(x) desborda un float64 por encima de este valor
_LOG_MAX_FLOAT = math.log(np.finfo(float).max)


class ParameterError(ValueError):
    """Parámetros de distribución inválidos o que provocan desbordamiento."""


def erf(x):
    """
    Función de error delegada en scipy.special.erf (cephes).

    Contrato de precisión: error absoluto <= 1e-13 en toda la recta real.
    """
    return special.erf(x)


@dataclass(frozen=True)
class LognormalParams:
    """Parámetros (mu, sigma2) del logaritmo de una duración en horas."""
    mu: float
    sigma2: float

    def __post_init__(self):
        if not (math.isfinite(self.mu) and math.isfinite(self.sigma2)):
            raise ParameterError(f"Parámetros lognormales no finitos: mu={self.mu}, sigma2={self.sigma2}")
        if self.sigma2 <= 0:
            raise ParameterError(f"sigma2 debe ser positivo (recibido {self.sigma2})")
        if self.mu + self.sigma2 / 2 >= _LOG_MAX_FLOAT:
            raise ParameterError(f"La media de Lognormal({self.mu}, {self.sigma2}) desborda")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    def mean(self) -> float:
        return math.exp(self.mu + self.sigma2 / 2)

    def variance(self) -> float:
        exponent = 2 * self.mu + self.sigma2
        if exponent >= _LOG_MAX_FLOAT:
            raise ParameterError(f"La varianza de Lognormal({self.mu}, {self.sigma2}) desborda")
        return math.expm1(self.sigma2) * math.exp(exponent)

    def to_dict(self) -> dict:
        return {"mu": self.mu, "sigma2": self.sigma2}

    @classmethod
    def from_dict(cls, data: dict) -> "LognormalParams":
        return cls(float(data["mu"]), float(data["sigma2"]))


def lognormal_cdf(t, params: LognormalParams):
    """
    F(t) = 1/2 + 1/2 erf((ln t - mu) / (sqrt(2) sigma)); 0 para t <= 0.

    Acepta un escalar o un array de tiempos y devuelve el mismo tipo.
    """
    arr = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.zeros_like(arr)
    positivos = arr > 0
    if positivos.any():
        z = (np.log(arr[positivos]) - params.mu) / (math.sqrt(2.0) * params.sigma)
        out[positivos] = 0.5 + 0.5 * erf(z)
    np.clip(out, 0.0, 1.0, out=out)
    if np.ndim(t) == 0:
        return float(out[0])
    return out.reshape(np.shape(t))


def moment_match_sum(surgery: LognormalParams, recovery: LognormalParams) -> LognormalParams:
    """
    Aproxima S + R (lognormales independientes) por una única lognormal con
    la misma media M y varianza V.
    """
    try:
        m = surgery.mean() + recovery.mean()
        v = surgery.variance() + recovery.variance()
        ratio = v / (m * m)
    except (OverflowError, ZeroDivisionError) as e:
        raise ParameterError(f"Ajuste por momentos desbordado para {surgery} + {recovery}: {e}") from e
    if not (math.isfinite(m) and math.isfinite(v) and math.isfinite(ratio)):
        raise ParameterError(f"Momentos no finitos (M={m}, V={v}) para {surgery} + {recovery}")

    # sigma2 = ln((V + M²)/M²), mu = ln(M²/sqrt(V + M²)) = ln M - sigma2/2
    sigma2 = math.log1p(ratio)
    mu = math.log(m) - sigma2 / 2
    return LognormalParams(mu, sigma2)


def _validar_probs(probs) -> np.ndarray:
    p = np.asarray(probs, dtype=float).ravel()
    if p.size and (np.any(~np.isfinite(p)) or p.min() < 0.0 or p.max() > 1.0):
        raise ParameterError("Las probabilidades deben estar en [0, 1]")
    return p


def poisson_binomial_cdf_vector(probs) -> np.ndarray:
    """
    CDF de la Poisson binomial para k = 0..n por inversión de la función
    característica (DFT).

    F(k) = 1/(n+1) * sum_l {1 - exp[-i w l (k+1)]} x_l / (1 - exp(-i w l)),
    con w = 2 pi / (n+1) y x_l = prod_j [1 - p_j + p_j exp(i w l)].
    El término l = 0 es una singularidad evitable y aporta (k+1).
    El resultado se recorta a [0, 1] y se fuerza no decreciente en k.
    """
    p = _validar_probs(probs)
    n = p.size
    if n == 0:
        return np.ones(1)

    omega = 2 * math.pi / (n + 1)
    l = np.arange(1, n + 1)
    z = np.exp(1j * omega * l)
    x = np.ones(n, dtype=complex)
    for pj in p:
        x *= (1.0 - pj) + pj * z

    k = np.arange(n + 1)
    numerador = 1.0 - np.exp(-1j * omega * np.outer(k + 1, l))
    denominador = 1.0 - np.exp(-1j * omega * l)
    total = ((k + 1) + numerador @ (x / denominador)) / (n + 1)

    residuo = float(np.abs(total.imag).max())
    if residuo > IMAG_TOLERANCE:
        logger.warning(f"Residuo imaginario {residuo:.3e} en la CDF Poisson binomial (n={n})")
    cdf = np.maximum.accumulate(np.clip(total.real, 0.0, 1.0))
    cdf[-1] = 1.0
    return cdf


def poisson_binomial_cdf(probs, k: int) -> float:
    """F(k) = Pr(N <= k); 0 para k < 0 y 1 para k >= n."""
    p = _validar_probs(probs)
    if k < 0:
        return 0.0
    if k >= p.size:
        return 1.0
    return float(poisson_binomial_cdf_vector(p)[k])


def poisson_binomial_pmf(probs) -> np.ndarray:
    """PMF completa por convolución directa, un paciente cada vez."""
    p = _validar_probs(probs)
    pmf = np.array([1.0])
    for pj in p:
        pmf = np.convolve(pmf, [1.0 - pj, pj])
    return pmf


def poisson_binomial_cdf_oracle(probs, k: int) -> float:
    """
    Oráculo independiente: programación dinámica truncada en k, O(n·k),
    sin aritmética compleja.
    """
    p = _validar_probs(probs)
    n = p.size
    if k < 0:
        return 0.0
    if k >= n:
        return 1.0

    dp = np.zeros(k + 1)
    dp[0] = 1.0
    for pj in p:
        dp[1:] = dp[1:] * (1.0 - pj) + dp[:-1] * pj
        dp[0] *= 1.0 - pj
    return float(min(1.0, max(0.0, dp.sum())))
