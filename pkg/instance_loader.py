"""
Carga y escritura de los ficheros JSON de instancia y de programación.
"""

import json
import logging
import os

from distributions import LognormalParams, ParameterError
from model import Instance, InstanceError, Patient, Schedule, ScheduleError, Surgeon

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


def _leer_json(path, error_cls):
    if not os.path.exists(path):
        raise error_cls(f"No se encontró el fichero {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        logger.error(f"Error al decodificar JSON en {path}: {e}")
        raise error_cls(f"Error al decodificar JSON en {path}: {e}") from e


def escribir_json(data, path):
    directorio = os.path.dirname(path)
    if directorio:
        os.makedirs(directorio, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, ensure_ascii=False, indent=2)
        f.write("\n")


def _comprobar_version(data, path, error_cls):
    version = data.get("format_version")
    if version != FORMAT_VERSION:
        raise error_cls(f"{path}: format_version {version!r} no soportado (se espera {FORMAT_VERSION})")


def instance_to_dict(instance: Instance) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "or_count": instance.or_count,
        "or_open_hours": instance.or_open_hours,
        "day_hours": instance.day_hours,
        "surgeons": [
            {"id": s.id, "shift_start": s.shift_start, "shift_end": s.shift_end, "new_or_setup": s.new_or_setup}
            for s in instance.surgeons
        ],
        "patients": [
            {
                "id": p.id,
                "surgeon_id": p.surgeon_id,
                "or_id": p.or_id,
                "needs_recovery": p.needs_recovery,
                "surgery": p.surgery.to_dict(),
                "recovery": p.recovery.to_dict(),
                "combined": p.combined.to_dict(),
                "expected_duration": p.expected_duration,
                "setup": p.setup,
                "cleanup": p.cleanup,
            }
            for p in instance.patients
        ],
    }


def instance_from_dict(data: dict, source: str = "<memoria>") -> Instance:
    _comprobar_version(data, source, InstanceError)
    try:
        surgeons = [
            Surgeon(
                id=str(s["id"]),
                shift_start=float(s["shift_start"]),
                shift_end=float(s["shift_end"]),
                new_or_setup=float(s.get("new_or_setup", 0.0)),
            )
            for s in data.get("surgeons", [])
        ]
        patients = []
        for p in data.get("patients", []):
            duracion = p.get("expected_duration")
            combinado = p.get("combined")
            patients.append(
                Patient(
                    id=str(p["id"]),
                    surgeon_id=str(p["surgeon_id"]),
                    or_id=int(p["or_id"]),
                    needs_recovery=bool(p["needs_recovery"]),
                    surgery=LognormalParams.from_dict(p["surgery"]),
                    recovery=LognormalParams.from_dict(p["recovery"]),
                    setup=float(p.get("setup", 0.0)),
                    cleanup=float(p.get("cleanup", 0.0)),
                    expected_duration=None if duracion is None else float(duracion),
                    combined=None if combinado is None else LognormalParams.from_dict(combinado),
                )
            )
        return Instance(
            surgeons=surgeons,
            patients=patients,
            or_count=int(data["or_count"]),
            or_open_hours=float(data["or_open_hours"]),
            day_hours=float(data.get("day_hours", 24.0)),
        )
    except (KeyError, TypeError) as e:
        raise InstanceError(f"{source}: campo ausente o mal tipado: {e}") from e
    except ParameterError as e:
        raise InstanceError(f"{source}: {e}") from e


def load_instance(path: str) -> Instance:
    data = _leer_json(path, InstanceError)
    instance = instance_from_dict(data, path)
    logger.info(f"Instancia cargada desde {path}: {len(instance.patients)} pacientes")
    return instance


def save_instance(instance: Instance, path: str):
    escribir_json(instance_to_dict(instance), path)
    logger.info(f"Instancia guardada en {path}")


def schedule_to_dict(schedule: Schedule, instance: Instance, sequence=None, extra=None) -> dict:
    starts = schedule.aligned_starts(instance)
    data = {
        "format_version": FORMAT_VERSION,
        "starts": [
            {"patient_id": p.id, "start": float(starts[i]), "end": float(starts[i] + p.tau)}
            for i, p in enumerate(instance.patients)
        ],
        "overtime": {h: float(o) for h, o in schedule.overtime.items()},
    }
    if sequence is not None:
        data["sequence"] = list(sequence)
    if extra:
        data.update(extra)
    return data


def schedule_from_dict(data: dict, instance: Instance, source: str = "<memoria>") -> Schedule:
    _comprobar_version(data, source, ScheduleError)
    try:
        starts = {}
        for entrada in data["starts"]:
            pid = str(entrada["patient_id"])
            if pid in starts:
                raise ScheduleError(f"{source}: paciente {pid} duplicado")
            starts[pid] = float(entrada["start"])
    except (KeyError, TypeError) as e:
        raise ScheduleError(f"{source}: campo ausente o mal tipado: {e}") from e
    return Schedule.from_starts(instance, starts)


def load_schedule(path: str, instance: Instance) -> Schedule:
    data = _leer_json(path, ScheduleError)
    schedule = schedule_from_dict(data, instance, path)
    logger.info(f"Programación cargada desde {path}")
    return schedule


def save_schedule(schedule: Schedule, instance: Instance, path: str, sequence=None, extra=None):
    escribir_json(schedule_to_dict(schedule, instance, sequence, extra), path)
    logger.info(f"Programación guardada en {path}")
