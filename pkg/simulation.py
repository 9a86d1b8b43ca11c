"""
Oráculo Monte Carlo del pronóstico analítico, estadísticas de cobertura de
la banda del 95% y generador de instancias sintéticas a la escala del caso
de estudio (61 pacientes, 21 quirófanos, 35 cirujanos).
"""

import enum
import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from distributions import LognormalParams
from forecast import OccupancyCurve, occupancy_curve
from model import Instance, InstanceError, Patient, Schedule, Surgeon
from solver import SAConfig, simulated_annealing

logger = logging.getLogger(__name__)

SE_TOLERANCE = 1e-12


class SamplingMode(str, enum.Enum):
    # S + R sumadas: mide el error de la aproximación lognormal de T
    TRUE = "true"
    # S y T acopladas por un mismo cuantil: régimen exacto del modelo
    MATCHED = "matched"


@dataclass(frozen=True)
class GenSpec:
    or_count: int = 21
    surgeon_count: int = 35
    patient_count: int = 61
    recovery_fraction: float = 45 / 61
    or_open_hours: float = 8.0
    day_hours: float = 24.0
    surgery_mu_range: tuple = (math.log(0.5), math.log(3.0))
    surgery_sigma2_range: tuple = (0.05, 0.5)
    recovery_mu_range: tuple = (math.log(0.25), math.log(2.0))
    recovery_sigma2_range: tuple = (0.05, 0.5)
    setup_range: tuple = (0.1, 0.5)
    cleanup_range: tuple = (0.1, 0.5)
    shift_start_range: tuple = (0.0, 1.0)
    seed: int = 0

    def validate(self):
        for nombre in ("or_count", "surgeon_count", "patient_count"):
            if getattr(self, nombre) < 1:
                raise InstanceError(f"{nombre} debe ser >= 1 (recibido {getattr(self, nombre)})")
        if self.surgeon_count > self.patient_count:
            raise InstanceError(
                f"Hay más cirujanos ({self.surgeon_count}) que pacientes ({self.patient_count}); cada cirujano necesita al menos uno"
            )
        if not (0.0 <= self.recovery_fraction <= 1.0):
            raise InstanceError(f"recovery_fraction debe estar en [0, 1] (recibido {self.recovery_fraction})")
        if not (0 < self.or_open_hours <= self.day_hours):
            raise InstanceError(f"Se requiere 0 < or_open_hours <= day_hours ({self.or_open_hours}, {self.day_hours})")
        for nombre in (
            "surgery_mu_range",
            "surgery_sigma2_range",
            "recovery_mu_range",
            "recovery_sigma2_range",
            "setup_range",
            "cleanup_range",
            "shift_start_range",
        ):
            lo, hi = getattr(self, nombre)
            if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
                raise InstanceError(f"Rango vacío o no finito en {nombre}: ({lo}, {hi})")
        if self.surgery_sigma2_range[0] <= 0 or self.recovery_sigma2_range[0] <= 0:
            raise InstanceError("Los rangos de sigma2 deben ser positivos")
        if self.setup_range[0] < 0 or self.cleanup_range[0] < 0:
            raise InstanceError("Los tiempos de preparación y limpieza no pueden ser negativos")
        if self.shift_start_range[0] < 0 or self.shift_start_range[1] >= self.or_open_hours:
            raise InstanceError(f"shift_start_range debe caer dentro de [0, {self.or_open_hours})")
        return self


@dataclass(eq=False)
class EmpiricalCurve:
    """Ocupación muestreada sobre la misma rejilla que el pronóstico analítico."""
    times: np.ndarray
    n_samples: int
    sample_mean: np.ndarray
    sample_variance: np.ndarray
    standard_error: np.ndarray
    above: np.ndarray
    below: np.ndarray
    inside: np.ndarray
    over: np.ndarray
    under: np.ndarray
    exact: np.ndarray
    analytic: OccupancyCurve
    mode: SamplingMode = SamplingMode.TRUE


@dataclass(frozen=True)
class CoverageSummary:
    above: float
    below: float
    inside: float
    over: float
    under: float
    exact: float
    mean_abs_error: float
    max_abs_error: float
    n_samples: int
    active_points: int
    within_3se: float = 1.0
    outside_3se: int = 0

    def to_dict(self) -> dict:
        return {
            "fraction_above": self.above,
            "fraction_below": self.below,
            "fraction_inside": self.inside,
            "fraction_over_estimate": self.over,
            "fraction_under_estimate": self.under,
            "fraction_exact": self.exact,
            "mean_abs_error": self.mean_abs_error,
            "max_abs_error": self.max_abs_error,
            "n_samples": self.n_samples,
            "active_points": self.active_points,
            "fraction_points_within_3se": self.within_3se,
            "points_outside_3se": self.outside_3se,
        }


def _uniforme(rng: np.random.Generator, rango: tuple, size=None):
    lo, hi = rango
    return rng.uniform(lo, hi, size=size)


def generate_instance(spec: GenSpec, rng: Optional[np.random.Generator] = None) -> Instance:
    """
    Instancia sintética. Cada cirujano opera en un único quirófano y sus
    pacientes forman un bloque contiguo dentro de él; los pacientes se
    reparten entre quirófanos por turno rotatorio.
    """
    spec.validate()
    if rng is None:
        rng = np.random.default_rng(spec.seed)

    salas = min(spec.or_count, spec.surgeon_count)
    cirujanos_por_sala = {r: [] for r in range(1, salas + 1)}
    for h in range(spec.surgeon_count):
        cirujanos_por_sala[h % salas + 1].append(h)
    pacientes_por_sala = {r: spec.patient_count // salas + (1 if r - 1 < spec.patient_count % salas else 0) for r in cirujanos_por_sala}

    arranques = _uniforme(rng, spec.shift_start_range, spec.surgeon_count)
    surgeons = tuple(
        Surgeon(id=f"H{h + 1:02d}", shift_start=float(arranques[h]), shift_end=spec.or_open_hours)
        for h in range(spec.surgeon_count)
    )

    asignacion = []
    for r, hs in cirujanos_por_sala.items():
        base, resto = divmod(pacientes_por_sala[r], len(hs))
        for j, h in enumerate(hs):
            asignacion += [(h, r)] * (base + (1 if j < resto else 0))

    n = spec.patient_count
    mu_s = _uniforme(rng, spec.surgery_mu_range, n)
    s2_s = _uniforme(rng, spec.surgery_sigma2_range, n)
    mu_r = _uniforme(rng, spec.recovery_mu_range, n)
    s2_r = _uniforme(rng, spec.recovery_sigma2_range, n)
    setups = _uniforme(rng, spec.setup_range, n)
    cleanups = _uniforme(rng, spec.cleanup_range, n)
    n_recuperacion = int(round(spec.recovery_fraction * n))
    recuperacion = np.zeros(n, dtype=bool)
    recuperacion[rng.choice(n, size=n_recuperacion, replace=False)] = True

    patients = tuple(
        Patient(
            id=f"P{i + 1:03d}",
            surgeon_id=surgeons[h].id,
            or_id=r,
            needs_recovery=bool(recuperacion[i]),
            surgery=LognormalParams(float(mu_s[i]), float(s2_s[i])),
            recovery=LognormalParams(float(mu_r[i]), float(s2_r[i])),
            setup=float(setups[i]),
            cleanup=float(cleanups[i]),
        )
        for i, (h, r) in enumerate(asignacion)
    )
    instance = Instance(
        surgeons=surgeons,
        patients=patients,
        or_count=spec.or_count,
        or_open_hours=spec.or_open_hours,
        day_hours=spec.day_hours,
    )
    logger.info(f"Instancia generada: {instance.summary()}")
    return instance


def _sample_intervals(instance: Instance, starts: np.ndarray, rng: np.random.Generator, size: int, mode: SamplingMode):
    """Matrices (size × pacientes en recuperación) de entrada y salida de recuperación."""
    sel = [instance.patients[i] for i in instance.kernel.indices]
    z = starts[instance.kernel.indices]
    mu_s = np.array([p.surgery.mu for p in sel])
    sigma_s = np.array([p.surgery.sigma for p in sel])
    if mode == SamplingMode.TRUE:
        mu_r = np.array([p.recovery.mu for p in sel])
        sigma_r = np.array([p.recovery.sigma for p in sel])
        s = rng.lognormal(mu_s, sigma_s, size=(size, len(sel)))
        r = rng.lognormal(mu_r, sigma_r, size=(size, len(sel)))
        return z + s, z + s + r
    mu_t = np.array([p.combined.mu for p in sel])
    sigma_t = np.array([p.combined.sigma for p in sel])
    normal = rng.standard_normal(size=(size, len(sel)))
    return z + np.exp(mu_s + sigma_s * normal), z + np.exp(mu_t + sigma_t * normal)


def sample_day(instance: Instance, schedule: Schedule, rng: np.random.Generator, mode: SamplingMode = SamplingMode.TRUE) -> list:
    """Un día simulado: (entrada, salida) de recuperación por paciente con gamma_p = 1."""
    starts = schedule.aligned_starts(instance)
    if len(instance.kernel) == 0:
        return []
    entrada, salida = _sample_intervals(instance, starts, rng, 1, SamplingMode(mode))
    return [(float(a), float(b)) for a, b in zip(entrada[0], salida[0])]


def monte_carlo_curve(
    instance: Instance,
    schedule: Schedule,
    n_samples: int,
    grid_step: float = 0.1,
    rng: Optional[np.random.Generator] = None,
    mode: SamplingMode = SamplingMode.TRUE,
    batch_size: int = 2000,
    z: float = 1.96,
) -> EmpiricalCurve:
    """Cuenta pacientes con entrada <= t < salida en cada punto de la rejilla."""
    if n_samples < 1:
        raise ValueError(f"n_samples debe ser >= 1 (recibido {n_samples})")
    mode = SamplingMode(mode)
    rng = rng if rng is not None else np.random.default_rng()
    starts = schedule.aligned_starts(instance)
    analitica = occupancy_curve(instance.patients, starts, grid_step, instance.day_hours, z)
    t = analitica.times

    suma = np.zeros(t.size)
    suma_cuadrados = np.zeros(t.size)
    contadores = {k: np.zeros(t.size, dtype=np.int64) for k in ("above", "below", "inside", "over", "under", "exact")}
    restantes = n_samples
    lote = 0
    while restantes > 0:
        b = min(batch_size, restantes)
        if len(instance.kernel):
            entrada, salida = _sample_intervals(instance, starts, rng, b, mode)
            ocupacion = ((entrada[:, :, None] <= t) & (t < salida[:, :, None])).sum(axis=1).astype(float)
        else:
            ocupacion = np.zeros((b, t.size))
        suma += ocupacion.sum(axis=0)
        suma_cuadrados += (ocupacion ** 2).sum(axis=0)
        contadores["above"] += (ocupacion > analitica.upper).sum(axis=0)
        contadores["below"] += (ocupacion < analitica.lower).sum(axis=0)
        contadores["inside"] += ((ocupacion >= analitica.lower) & (ocupacion <= analitica.upper)).sum(axis=0)
        contadores["over"] += (analitica.mean > ocupacion).sum(axis=0)
        contadores["under"] += (analitica.mean < ocupacion).sum(axis=0)
        contadores["exact"] += (analitica.mean == ocupacion).sum(axis=0)
        restantes -= b
        lote += 1
        if lote % 10 == 0:
            logger.info(f"  Monte Carlo: {n_samples - restantes}/{n_samples} muestras")

    media = suma / n_samples
    if n_samples > 1:
        varianza = np.maximum(suma_cuadrados - n_samples * media ** 2, 0.0) / (n_samples - 1)
    else:
        varianza = np.zeros(t.size)
    return EmpiricalCurve(
        times=t,
        n_samples=n_samples,
        sample_mean=media,
        sample_variance=varianza,
        standard_error=np.sqrt(varianza / n_samples),
        analytic=analitica,
        mode=mode,
        **contadores,
    )


def coverage_stats(empirical: EmpiricalCurve, active_only: bool = True) -> CoverageSummary:
    """
    Fracciones por encima, por debajo y dentro de la banda [L(t), U(t)], y de
    sobre/infraestimación de la media. Con active_only se descartan los
    puntos donde el pronóstico es degenerado (Var[N(t)] = 0).
    """
    mascara = empirical.analytic.variance > 0 if active_only else np.ones(empirical.times.size, dtype=bool)
    if not mascara.any():
        mascara = np.ones(empirical.times.size, dtype=bool)
    total = float(mascara.sum() * empirical.n_samples)

    def fraccion(contador):
        return float(contador[mascara].sum()) / total

    error = np.abs(empirical.analytic.mean - empirical.sample_mean)
    # sobre toda la rejilla, con el error típico muestral
    dentro_3se = error <= 3.0 * empirical.standard_error + SE_TOLERANCE
    return CoverageSummary(
        above=fraccion(empirical.above),
        below=fraccion(empirical.below),
        inside=fraccion(empirical.inside),
        over=fraccion(empirical.over),
        under=fraccion(empirical.under),
        exact=fraccion(empirical.exact),
        mean_abs_error=float(error[mascara].mean()),
        max_abs_error=float(error.max()) if error.size else 0.0,
        n_samples=empirical.n_samples,
        active_points=int(mascara.sum()),
        within_3se=float(dentro_3se.mean()) if dentro_3se.size else 1.0,
        outside_3se=int((~dentro_3se).sum()),
    )


def throughput_study(patient_counts: Sequence, base_spec: GenSpec, config: SAConfig, instances_per_count: int = 5) -> pd.DataFrame:
    """
    MEO base frente a MEO optimizado según el número de pacientes electivos.
    Una fila por instancia generada.
    """
    filas = []
    for n in patient_counts:
        for k in range(instances_per_count):
            spec = replace(base_spec, patient_count=int(n), surgeon_count=min(base_spec.surgeon_count, int(n)), seed=base_spec.seed + k)
            instance = generate_instance(spec)
            informe = simulated_annealing(instance, replace(config, seed=config.seed + k))
            filas.append(
                {
                    "patients": int(n),
                    "instance_seed": spec.seed,
                    "recovery_patients": instance.recovery_count,
                    "baseline_meo": informe.initial_meo,
                    "best_meo": informe.best_meo,
                    "reduction": informe.reduction,
                }
            )
        logger.info(f"Throughput: {n} pacientes completado")
    return pd.DataFrame(filas)
