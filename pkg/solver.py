"""
Heurística constructiva (camino crítico: inicio más temprano / fin más
tardío con colocación aleatoria) y Recocido Simulado sobre intercambios
de pacientes en la secuencia, minimizando el MEO.
"""

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from model import Instance, Schedule, meo

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SAConfig:
    iterations: int = 2500
    initial_temperature: float = 1.0
    cooling_factor: float = 0.95
    cooling_period: int = 200
    grid_step: float = 0.1
    seed: int = 0

    def validate(self):
        if self.iterations < 1:
            raise ValueError(f"iterations debe ser >= 1 (recibido {self.iterations})")
        if not (0 < self.cooling_factor < 1):
            raise ValueError(f"cooling_factor debe estar en (0, 1) (recibido {self.cooling_factor})")
        if self.cooling_period < 1:
            raise ValueError(f"cooling_period debe ser >= 1 (recibido {self.cooling_period})")
        if not self.initial_temperature > 0:
            raise ValueError(f"initial_temperature debe ser positiva (recibido {self.initial_temperature})")
        if not self.grid_step > 0:
            raise ValueError(f"grid_step debe ser positivo (recibido {self.grid_step})")
        if not (0 <= self.seed < 2**64):
            raise ValueError(f"seed debe ser un entero de 64 bits sin signo (recibido {self.seed})")
        return self


@dataclass(eq=False)
class SolveReport:
    best_schedule: Schedule
    best_sequence: tuple
    best_meo: float
    initial_meo: float
    seed: int
    meo_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))
    best_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))
    deltas: np.ndarray = field(default_factory=lambda: np.zeros(0))
    temperatures: np.ndarray = field(default_factory=lambda: np.zeros(0))
    accepted: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    duration_seconds: float = 0.0

    @property
    def accepted_count(self) -> int:
        return int(self.accepted.sum())

    @property
    def rejected_count(self) -> int:
        return int(self.accepted.size - self.accepted.sum())

    @property
    def reduction(self) -> float:
        """Reducción relativa del MEO respecto a la programación inicial."""
        if self.initial_meo <= 0:
            return 0.0
        return (self.initial_meo - self.best_meo) / self.initial_meo


def input_sequence(instance: Instance) -> tuple:
    return tuple(p.id for p in instance.patients)


def temperature_at(config: SAConfig, iteration: int) -> float:
    """T = T0 * factor^(iteración // periodo)."""
    return config.initial_temperature * config.cooling_factor ** (iteration // config.cooling_period)


def construct_schedule(instance: Instance, sequence: Sequence, rng: Optional[np.random.Generator]) -> Schedule:
    """
    Heurística constructiva. LC se inicializa al cierre del quirófano (lambda)
    y ES a max(apertura 0, rho_h). Pasada inversa: LC(p) <- min sobre los
    sucesores S de (LC(s) - tau_s - T+_s) - T-_p. Pasada directa:
    ES(p) <- max sobre los predecesores Q de (ES(q) + tau_q + T-_q) + T+_p,
    Start(p) = ES(p) + max(0, u (LC(p) - ES(p) - tau_p)) y ES(p) <- Start(p).

    Sucesores y predecesores son los pacientes posteriores/anteriores en la
    secuencia que comparten quirófano o cirujano. Con rng=None se usa u = 0.
    """
    pacientes = instance.patients
    indices = [instance.patient_index[pid] for pid in sequence]
    if len(indices) != len(pacientes) or len(set(indices)) != len(pacientes):
        raise ValueError("La secuencia debe contener a cada paciente exactamente una vez")

    cierre = instance.or_open_hours
    n = len(indices)
    lc = [cierre] * n

    # pasada inversa: holgura mínima reservada por los sucesores de cada recurso
    reserva_or = {}
    reserva_cirujano = {}
    for pos in range(n - 1, -1, -1):
        p = pacientes[indices[pos]]
        sucesores = [r for r in (reserva_or.get(p.or_id), reserva_cirujano.get(p.surgeon_id)) if r is not None]
        if sucesores:
            lc[pos] = min(sucesores) - p.cleanup
        limite = lc[pos] - p.tau - p.setup
        reserva_or[p.or_id] = min(reserva_or.get(p.or_id, math.inf), limite)
        reserva_cirujano[p.surgeon_id] = min(reserva_cirujano.get(p.surgeon_id, math.inf), limite)

    # pasada directa: encadena sobre los inicios ya realizados
    starts = np.empty(len(pacientes))
    libre_or = {}
    libre_cirujano = {}
    for pos in range(n):
        i = indices[pos]
        p = pacientes[i]
        es = max(0.0, instance.surgeon_by_id[p.surgeon_id].shift_start)
        predecesores = [r for r in (libre_or.get(p.or_id), libre_cirujano.get(p.surgeon_id)) if r is not None]
        if predecesores:
            es = max(es, max(predecesores) + p.setup)
        u = rng.random() if rng is not None else 0.0
        inicio = es + max(0.0, u * (lc[pos] - es - p.tau))
        starts[i] = inicio
        liberacion = inicio + p.tau + p.cleanup
        libre_or[p.or_id] = max(libre_or.get(p.or_id, -math.inf), liberacion)
        libre_cirujano[p.surgeon_id] = max(libre_cirujano.get(p.surgeon_id, -math.inf), liberacion)

    return Schedule.from_starts(instance, starts)


def swap_neighbor(sequence: Sequence, rng: np.random.Generator) -> tuple:
    """Intercambia dos posiciones distintas elegidas uniformemente."""
    vecino = list(sequence)
    if len(vecino) < 2:
        return tuple(vecino)
    i, j = rng.choice(len(vecino), size=2, replace=False)
    vecino[i], vecino[j] = vecino[j], vecino[i]
    return tuple(vecino)


def baseline_schedule(instance: Instance) -> Schedule:
    """Empaquetado al inicio más temprano (u = 0) en el orden de entrada."""
    return construct_schedule(instance, input_sequence(instance), None)


def simulated_annealing(instance: Instance, config: SAConfig) -> SolveReport:
    """
    Recocido Simulado desde la programación base en el orden de entrada.

    Acepta si delta <= 0 y, si no, con probabilidad exp(-delta / T). Un único
    generador, sembrado con config.seed, alimenta los intercambios y las
    colocaciones aleatorias.
    """
    config.validate()
    inicio_reloj = time.perf_counter()
    rng = np.random.default_rng(config.seed)

    secuencia = input_sequence(instance)
    actual = baseline_schedule(instance)
    actual_meo = meo(instance, actual, config.grid_step)
    mejor, mejor_secuencia, mejor_meo = actual, secuencia, actual_meo
    initial_meo = actual_meo

    n_iter = config.iterations
    meo_trace = np.empty(n_iter)
    best_trace = np.empty(n_iter)
    deltas = np.empty(n_iter)
    temperatures = np.empty(n_iter)
    accepted = np.zeros(n_iter, dtype=bool)

    logger.info(f"Recocido simulado: {len(instance.patients)} pacientes, {n_iter} iteraciones, semilla {config.seed}")
    for it in range(n_iter):
        temperatura = temperature_at(config, it)
        candidata_secuencia = swap_neighbor(secuencia, rng)
        candidata = construct_schedule(instance, candidata_secuencia, rng)
        candidata_meo = meo(instance, candidata, config.grid_step)

        delta = candidata_meo - actual_meo
        if delta <= 0:
            aceptar = True
        else:
            aceptar = bool(rng.random() < math.exp(-delta / temperatura))
        if aceptar:
            secuencia, actual, actual_meo = candidata_secuencia, candidata, candidata_meo
            if actual_meo < mejor_meo:
                mejor, mejor_secuencia, mejor_meo = actual, secuencia, actual_meo

        meo_trace[it] = actual_meo
        best_trace[it] = mejor_meo
        deltas[it] = delta
        temperatures[it] = temperatura
        accepted[it] = aceptar

        if (it + 1) % config.cooling_period == 0:
            logger.debug(f"  Iteración {it + 1}/{n_iter}: T={temperatura:.4f}, MEO actual {actual_meo:.4f}, mejor {mejor_meo:.4f}")

    duracion = time.perf_counter() - inicio_reloj
    logger.info(f"MEO {initial_meo:.4f} → {mejor_meo:.4f} en {duracion:.2f} s")
    return SolveReport(
        best_schedule=mejor,
        best_sequence=mejor_secuencia,
        best_meo=mejor_meo,
        initial_meo=initial_meo,
        seed=config.seed,
        meo_trace=meo_trace,
        best_trace=best_trace,
        deltas=deltas,
        temperatures=temperatures,
        accepted=accepted,
        duration_seconds=duracion,
    )


def run_replicas(instance: Instance, config: SAConfig, replicas: int = 1, n_jobs: int = 1) -> tuple:
    """
    Réplicas independientes con semillas seed, seed+1, ...

    Devuelve (informes, índice del mejor). El resultado no depende de n_jobs;
    en empate gana la réplica de menor índice.
    """
    if replicas < 1:
        raise ValueError(f"replicas debe ser >= 1 (recibido {replicas})")
    if config.seed + replicas - 1 >= 2**64:
        raise ValueError(f"La semilla de la última réplica ({config.seed} + {replicas - 1}) excede 2^64 - 1")
    configs = [replace(config, seed=config.seed + r) for r in range(replicas)]
    if n_jobs == 1 or replicas == 1:
        informes = [simulated_annealing(instance, c) for c in configs]
    else:
        informes = Parallel(n_jobs=n_jobs)(delayed(simulated_annealing)(instance, c) for c in configs)
    mejor = min(range(replicas), key=lambda r: (informes[r].best_meo, r))
    return informes, mejor
