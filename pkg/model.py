"""
Modelo de datos del problema de secuenciación de casos quirúrgicos (SCSP):
cirujanos, pacientes, instancia, programación, comprobación de
factibilidad de las restricciones (2)-(14), horas extra y objetivo MEO.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Optional

import numpy as np

from distributions import LognormalParams, ParameterError, moment_match_sum
from forecast import RecoveryKernel, time_grid

logger = logging.getLogger(__name__)

FEASIBILITY_EPS = 1e-9
DAY_HOURS = 24.0


class InstanceError(ValueError):
    """Instancia o especificación de generación mal formada."""


class ScheduleError(ValueError):
    """Programación estructuralmente incompatible con la instancia."""


@dataclass(frozen=True)
class Surgeon:
    id: str
    shift_start: float
    shift_end: float
    # beta_h: no interviene en ninguna restricción
    new_or_setup: float = 0.0

    def validate(self, day_hours: float):
        if not (0 <= self.shift_start < self.shift_end <= day_hours):
            raise InstanceError(
                f"Turno inválido para el cirujano {self.id}: [{self.shift_start}, {self.shift_end}] fuera de [0, {day_hours}]"
            )


@dataclass(frozen=True)
class Patient:
    id: str
    surgeon_id: str
    or_id: int
    needs_recovery: bool
    surgery: LognormalParams
    recovery: LognormalParams
    setup: float = 0.0
    cleanup: float = 0.0
    expected_duration: Optional[float] = None
    combined: Optional[LognormalParams] = None

    def __post_init__(self):
        if self.expected_duration is None:
            object.__setattr__(self, "expected_duration", self.surgery.mean())
        try:
            matched = moment_match_sum(self.surgery, self.recovery)
        except ParameterError as e:
            raise InstanceError(f"Paciente {self.id}: {e}") from e
        if self.combined is None:
            object.__setattr__(self, "combined", matched)
        elif not (
            math.isclose(self.combined.mu, matched.mu, rel_tol=1e-9, abs_tol=1e-12)
            and math.isclose(self.combined.sigma2, matched.sigma2, rel_tol=1e-9, abs_tol=1e-12)
        ):
            raise InstanceError(f"Paciente {self.id}: parámetros combinados {self.combined} no coinciden con {matched}")
        if not (self.expected_duration > 0 and math.isfinite(self.expected_duration)):
            raise InstanceError(f"Paciente {self.id}: duración esperada no positiva ({self.expected_duration})")
        if not all(math.isfinite(x) and x >= 0 for x in (self.setup, self.cleanup)):
            raise InstanceError(f"Paciente {self.id}: preparación/limpieza negativas o no finitas")

    @property
    def tau(self) -> float:
        return self.expected_duration


@dataclass(frozen=True)
class Instance:
    surgeons: tuple
    patients: tuple
    or_count: int
    or_open_hours: float
    day_hours: float = DAY_HOURS

    def __post_init__(self):
        object.__setattr__(self, "surgeons", tuple(self.surgeons))
        object.__setattr__(self, "patients", tuple(self.patients))
        if not (0 < self.or_open_hours <= self.day_hours):
            raise InstanceError(f"Se requiere 0 < lambda <= lambda* (lambda={self.or_open_hours}, lambda*={self.day_hours})")
        if self.or_count < 0:
            raise InstanceError(f"Número de quirófanos negativo: {self.or_count}")

        ids_cirujanos = [s.id for s in self.surgeons]
        if len(set(ids_cirujanos)) != len(ids_cirujanos):
            raise InstanceError("Identificadores de cirujano duplicados")
        for s in self.surgeons:
            s.validate(self.day_hours)

        ids_pacientes = [p.id for p in self.patients]
        if len(set(ids_pacientes)) != len(ids_pacientes):
            raise InstanceError("Identificadores de paciente duplicados")
        conocidos = set(ids_cirujanos)
        for p in self.patients:
            if p.surgeon_id not in conocidos:
                raise InstanceError(f"Paciente {p.id}: cirujano desconocido {p.surgeon_id}")
            if not (1 <= p.or_id <= self.or_count):
                raise InstanceError(f"Paciente {p.id}: quirófano {p.or_id} fuera de 1..{self.or_count}")

    @cached_property
    def surgeon_by_id(self) -> dict:
        return {s.id: s for s in self.surgeons}

    @cached_property
    def patient_index(self) -> dict:
        return {p.id: i for i, p in enumerate(self.patients)}

    @cached_property
    def patients_by_surgeon(self) -> dict:
        """P_h: índices de pacientes por cirujano."""
        grupos = {s.id: [] for s in self.surgeons}
        for i, p in enumerate(self.patients):
            grupos[p.surgeon_id].append(i)
        return {h: tuple(v) for h, v in grupos.items()}

    @cached_property
    def patients_by_or(self) -> dict:
        """P_r: índices de pacientes por quirófano."""
        grupos = {r: [] for r in range(1, self.or_count + 1)}
        for i, p in enumerate(self.patients):
            grupos[p.or_id].append(i)
        return {r: tuple(v) for r, v in grupos.items()}

    @cached_property
    def kernel(self) -> RecoveryKernel:
        return RecoveryKernel(self.patients)

    @cached_property
    def tau(self) -> np.ndarray:
        return np.array([p.tau for p in self.patients], dtype=float)

    @property
    def recovery_count(self) -> int:
        return sum(1 for p in self.patients if p.needs_recovery)

    def overtime_cap(self, surgeon_id: str) -> float:
        """Cota de (4): sum_{p in P_h}(tau + T+ + T-) - rho_h + rho_h*."""
        s = self.surgeon_by_id[surgeon_id]
        carga = sum(
            self.patients[i].tau + self.patients[i].setup + self.patients[i].cleanup
            for i in self.patients_by_surgeon[surgeon_id]
        )
        return carga - s.shift_start + s.shift_end

    def summary(self) -> dict:
        return {
            "patients": len(self.patients),
            "recovery_patients": self.recovery_count,
            "surgeons": len(self.surgeons),
            "ors": self.or_count,
            "or_open_hours": self.or_open_hours,
            "day_hours": self.day_hours,
        }


@dataclass(frozen=True, eq=False)
class Schedule:
    """
    Variables de decisión: inicios Z_p alineados con instance.patients,
    fines Z_p* = Z_p + tau_p y horas extra O_h derivadas.
    """
    patient_ids: tuple
    starts: np.ndarray
    ends: np.ndarray
    overtime: dict = field(default_factory=dict)

    @property
    def overtime_flag(self) -> dict:
        return {h: o > 0 for h, o in self.overtime.items()}

    @classmethod
    def from_starts(cls, instance: Instance, starts) -> "Schedule":
        """Construye la programación desde un vector alineado o un dict id -> inicio."""
        if isinstance(starts, Mapping):
            faltan = [p.id for p in instance.patients if p.id not in starts]
            if faltan:
                raise ScheduleError(f"La programación no incluye al paciente {faltan[0]}")
            sobran = set(starts) - set(instance.patient_index)
            if sobran:
                raise ScheduleError(f"La programación incluye pacientes desconocidos: {sorted(sobran)}")
            starts = [starts[p.id] for p in instance.patients]
        z = np.asarray(starts, dtype=float).reshape(-1)
        if z.shape != (len(instance.patients),):
            raise ScheduleError(f"Se esperaban {len(instance.patients)} inicios, recibidos {z.size}")
        if not np.all(np.isfinite(z)):
            raise ScheduleError("Inicios no finitos en la programación")
        ends = z + instance.tau if z.size else z.copy()
        return cls(
            patient_ids=tuple(p.id for p in instance.patients),
            starts=z,
            ends=ends,
            overtime=_overtime_from_ends(instance, ends),
        )

    def start_of(self, patient_id: str) -> float:
        return float(self.starts[self.patient_ids.index(patient_id)])

    def aligned_starts(self, instance: Instance) -> np.ndarray:
        """Inicios en el orden de instance.patients."""
        if self.patient_ids == tuple(p.id for p in instance.patients):
            return self.starts
        posicion = {pid: i for i, pid in enumerate(self.patient_ids)}
        faltan = [p.id for p in instance.patients if p.id not in posicion]
        if faltan:
            raise ScheduleError(f"La programación no incluye al paciente {faltan[0]}")
        if len(posicion) != len(instance.patients):
            raise ScheduleError("La programación incluye pacientes ajenos a la instancia")
        return self.starts[[posicion[p.id] for p in instance.patients]]


@dataclass(frozen=True)
class Violation:
    constraint_id: int
    magnitude: float
    patients: tuple = ()
    surgeon_id: Optional[str] = None
    or_id: Optional[int] = None

    def __str__(self):
        partes = [f"restricción ({self.constraint_id})", f"magnitud {self.magnitude:.6g} h"]
        if self.patients:
            partes.append("pacientes " + ", ".join(self.patients))
        if self.surgeon_id is not None:
            partes.append(f"cirujano {self.surgeon_id}")
        if self.or_id is not None:
            partes.append(f"quirófano {self.or_id}")
        return "; ".join(partes)


def _overtime_from_ends(instance: Instance, ends: np.ndarray) -> dict:
    overtime = {}
    for s in instance.surgeons:
        indices = instance.patients_by_surgeon[s.id]
        exceso = max((ends[i] - s.shift_end for i in indices), default=0.0)
        overtime[s.id] = max(0.0, float(exceso))
    return overtime


def compute_overtime(instance: Instance, schedule: Schedule) -> dict:
    """O_h = max(0, max_{p in P_h}(Z_p + tau_p - rho_h*))."""
    starts = schedule.aligned_starts(instance)
    return _overtime_from_ends(instance, starts + instance.tau if starts.size else starts)


def derive_pairwise(schedule: Schedule, instance: Instance, eps: float = FEASIBILITY_EPS):
    """
    U[p, q] = 1 si Z_q* > Z_p (q termina después de que p empiece);
    V = U y U^T (los intervalos se solapan estrictamente). Diagonal a 0.
    """
    z = schedule.aligned_starts(instance)
    z_end = z + instance.tau if z.size else z
    u = z_end[None, :] > z[:, None] + eps
    np.fill_diagonal(u, False)
    v = u & u.T
    return u.astype(int), v.astype(int)


def check_feasibility(instance: Instance, schedule: Schedule, eps: float = FEASIBILITY_EPS) -> list:
    """
    Lista de violaciones de las restricciones (2)-(4), (9)-(10), (12)-(14).
    Vacía si la programación es factible dentro de la tolerancia eps.
    """
    z = schedule.aligned_starts(instance)
    faltan = [s.id for s in instance.surgeons if s.id not in schedule.overtime]
    if faltan:
        raise ScheduleError(f"La programación no incluye horas extra del cirujano {faltan[0]}")
    z_end = z + instance.tau if z.size else z
    pacientes = instance.patients
    violaciones = []

    for s in instance.surgeons:
        o_h = schedule.overtime[s.id]
        for i in instance.patients_by_surgeon[s.id]:
            # (2) inicio tras el comienzo del turno
            if s.shift_start - z[i] > eps:
                violaciones.append(Violation(2, s.shift_start - z[i], (pacientes[i].id,), surgeon_id=s.id))
            # (3) fin antes del final del turno más horas extra
            residuo = z_end[i] - (s.shift_end + o_h)
            if residuo > eps:
                violaciones.append(Violation(3, residuo, (pacientes[i].id,), surgeon_id=s.id))
        # (4) horas extra limitadas
        flag = 1.0 if o_h > 0 else 0.0
        residuo = o_h - flag * instance.overtime_cap(s.id)
        if residuo > eps:
            violaciones.append(Violation(4, residuo, surgeon_id=s.id))
        # (14) horas extra no negativas
        if o_h < -eps:
            violaciones.append(Violation(14, -o_h, surgeon_id=s.id))

    if len(pacientes) > 1:
        _, v = derive_pairwise(schedule, instance, eps)
        grupos = [(9, 12, "surgeon_id", h, idx) for h, idx in instance.patients_by_surgeon.items()]
        grupos += [(10, 13, "or_id", r, idx) for r, idx in instance.patients_by_or.items()]
        for id_solape, id_separacion, campo, clave, indices in grupos:
            if len(indices) < 2:
                continue
            # (9)/(10): ningún par del mismo recurso se solapa
            for a_pos, a in enumerate(indices):
                for b in indices[a_pos + 1:]:
                    if v[a, b]:
                        solape = min(z_end[a], z_end[b]) - max(z[a], z[b])
                        violaciones.append(
                            Violation(id_solape, float(solape), (pacientes[a].id, pacientes[b].id), **{campo: clave})
                        )
            # (12)/(13): limpieza + preparación entre casos consecutivos
            ordenados = sorted(indices, key=lambda i: (z[i], i))
            for p, q in zip(ordenados, ordenados[1:]):
                residuo = z_end[p] + pacientes[q].setup + pacientes[p].cleanup - z[q]
                if residuo > eps:
                    violaciones.append(
                        Violation(id_separacion, float(residuo), (pacientes[p].id, pacientes[q].id), **{campo: clave})
                    )

    if violaciones:
        logger.debug(f"{len(violaciones)} violaciones de factibilidad")
    return violaciones


def meo(instance: Instance, schedule: Schedule, grid_step: float = 0.1) -> float:
    """Máximo sobre t en {0, dt, ..., lambda*} de E[N(t)] (objetivo (1))."""
    if len(instance.kernel) == 0:
        return 0.0
    times = time_grid(grid_step, instance.day_hours)
    prob = instance.kernel.probabilities(schedule.aligned_starts(instance), times)
    return float(prob.sum(axis=0).max())
