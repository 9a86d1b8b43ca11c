#!/usr/bin/env python3
"""
Línea de comandos de RecuperAI.

    python cli.py generate  --out instancia.json
    python cli.py forecast  instancia.json programacion.json --out ocupacion.csv
    python cli.py optimize  instancia.json --out programacion.json
    python cli.py validate  instancia.json programacion.json --samples 100000 --mode matched
    python cli.py sweep     directorio_instancias/ --out barrido.csv
    python cli.py throughput --patients-grid 40 50 61 --out capacidad.csv

Códigos de salida: 0 éxito, 2 error de validación de la entrada, 1 error interno.
Cada orden deja junto a su salida principal un manifiesto <salida>.manifest.json.
"""

import argparse
import glob
import itertools
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from config import Settings, load_settings, override
from forecast import curve_to_frame, occupancy_curve
from instance_loader import escribir_json, load_instance, load_schedule, save_instance, save_schedule
from model import Instance, InstanceError, meo
from simulation import SamplingMode, coverage_stats, generate_instance, monte_carlo_curve, throughput_study
from solver import SAConfig, baseline_schedule, run_replicas, simulated_annealing

logger = logging.getLogger(__name__)

__version__ = "1.0.0"

SWEEP_ITERATIONS = (1000, 2000, 3000)
SWEEP_FACTORS = (0.85, 0.90, 0.95)
SWEEP_PERIODS = (50, 100, 200)


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: Optional[int]
    inputs: list
    outputs: list
    duration_seconds: float
    version: str = __version__
    argv: list = field(default_factory=list)


def _base(path: str) -> str:
    return os.path.splitext(path)[0]


def manifest_path(out: str) -> str:
    return f"{_base(out)}.manifest.json"


def _escribir_manifiesto(args, config: dict, seed, inputs, outputs, inicio: float):
    manifiesto = RunManifest(
        command=args.command,
        config=config,
        seed=seed,
        inputs=list(inputs),
        outputs=list(outputs),
        duration_seconds=time.perf_counter() - inicio,
        argv=list(args.argv),
    )
    escribir_json(asdict(manifiesto), manifest_path(args.out))
    logger.debug(f"Manifiesto escrito en {manifest_path(args.out)}")


def _semilla(valor: str) -> int:
    try:
        semilla = int(valor)
    except ValueError:
        raise argparse.ArgumentTypeError(f"semilla no entera: {valor}")
    if not (0 <= semilla < 2**64):
        raise argparse.ArgumentTypeError(f"la semilla debe ser un entero de 64 bits sin signo: {valor}")
    return semilla


def _solver_config(args, settings: Settings) -> SAConfig:
    return override(
        settings.solver,
        iterations=getattr(args, "iterations", None),
        cooling_factor=getattr(args, "cooling_factor", None),
        cooling_period=getattr(args, "cooling_period", None),
        initial_temperature=getattr(args, "initial_temperature", None),
        grid_step=args.grid_step,
        seed=args.seed,
    ).validate()


# ─── Órdenes ────────────────────────────────────────────────────────────────


def cmd_generate(args, settings: Settings) -> int:
    inicio = time.perf_counter()
    spec = override(
        settings.generator,
        patient_count=args.patients,
        surgeon_count=args.surgeons,
        or_count=args.ors,
        recovery_fraction=args.recovery_fraction,
        or_open_hours=args.or_open_hours,
        day_hours=args.day_hours,
        seed=args.seed,
    ).validate()
    instance = generate_instance(spec)
    save_instance(instance, args.out)

    resumen = instance.summary()
    print(
        f"✅ Instancia escrita en {args.out}: {resumen['patients']} pacientes "
        f"({resumen['recovery_patients']} con recuperación), {resumen['surgeons']} cirujanos, "
        f"{resumen['ors']} quirófanos, lambda={resumen['or_open_hours']} h, lambda*={resumen['day_hours']} h"
    )
    _escribir_manifiesto(args, {"generator": asdict(spec)}, spec.seed, [], [args.out], inicio)
    return 0


def cmd_forecast(args, settings: Settings) -> int:
    inicio = time.perf_counter()
    instance = load_instance(args.instance)
    schedule = load_schedule(args.schedule, instance)
    fc = override(settings.forecast, grid_step=args.grid_step, horizon=instance.day_hours).validate()

    curva = occupancy_curve(instance.patients, schedule.aligned_starts(instance), fc.grid_step, fc.horizon, fc.z)
    directorio = os.path.dirname(args.out)
    if directorio:
        os.makedirs(directorio, exist_ok=True)
    curve_to_frame(curva).to_csv(args.out, index=False)

    print(f"✅ Pronóstico escrito en {args.out}: {len(curva)} puntos, MEO {curva.peak:.4f}")
    _escribir_manifiesto(args, {"forecast": asdict(fc)}, None, [args.instance, args.schedule], [args.out], inicio)
    return 0


def _informe_optimizacion(instance: Instance, informes: list, mejor: int, baseline_meo: float) -> dict:
    best = informes[mejor]
    reduccion = (baseline_meo - best.best_meo) / baseline_meo if baseline_meo > 0 else 0.0
    return {
        "patients": len(instance.patients),
        "seed": best.seed,
        "replicas": len(informes),
        "best_replica": mejor,
        "baseline_meo": baseline_meo,
        "initial_meo": best.initial_meo,
        "best_meo": best.best_meo,
        "reduction_pct": 100.0 * reduccion,
        "accepted": best.accepted_count,
        "rejected": best.rejected_count,
        "duration_seconds": sum(r.duration_seconds for r in informes),
        "meo_trace": best.meo_trace.tolist(),
        "best_trace": best.best_trace.tolist(),
        "replica_summary": [
            {"seed": r.seed, "initial_meo": r.initial_meo, "best_meo": r.best_meo, "accepted": r.accepted_count}
            for r in informes
        ],
    }


def cmd_optimize(args, settings: Settings) -> int:
    inicio = time.perf_counter()
    instance = load_instance(args.instance)
    sa = _solver_config(args, settings)
    if args.replicas < 1:
        raise ValueError(f"--replicas debe ser >= 1 (recibido {args.replicas})")

    baseline_meo = meo(instance, baseline_schedule(instance), sa.grid_step)
    informes, mejor = run_replicas(instance, sa, args.replicas, args.jobs)
    best = informes[mejor]

    extra = {"meo": best.best_meo, "grid_step": sa.grid_step, "seed": best.seed}
    save_schedule(best.best_schedule, instance, args.out, sequence=best.best_sequence, extra=extra)
    salidas = [args.out]
    if args.replicas > 1:
        for r, informe in enumerate(informes):
            ruta = f"{_base(args.out)}.replica{r}.json"
            save_schedule(
                informe.best_schedule,
                instance,
                ruta,
                sequence=informe.best_sequence,
                extra={"meo": informe.best_meo, "grid_step": sa.grid_step, "seed": informe.seed},
            )
            salidas.append(ruta)

    informe = _informe_optimizacion(instance, informes, mejor, baseline_meo)
    ruta_informe = args.report or f"{_base(args.out)}.report.json"
    escribir_json(informe, ruta_informe)
    salidas.append(ruta_informe)

    print(
        f"✅ Programación escrita en {args.out}: MEO {baseline_meo:.4f} → {best.best_meo:.4f} "
        f"({informe['reduction_pct']:.1f}% menos), {best.accepted_count} aceptados / {best.rejected_count} rechazados"
    )
    _escribir_manifiesto(args, {"solver": asdict(sa), "replicas": args.replicas}, sa.seed, [args.instance], salidas, inicio)
    return 0


def cmd_validate(args, settings: Settings) -> int:
    inicio = time.perf_counter()
    if args.samples < 1:
        raise ValueError(f"--samples debe ser >= 1 (recibido {args.samples})")
    if args.samples == 1:
        print("⚠️ Con una sola muestra la varianza y el error típico son degenerados (0)")
        logger.warning("Validación con una única muestra: estadísticas degeneradas")

    instance = load_instance(args.instance)
    schedule = load_schedule(args.schedule, instance)
    fc = override(settings.forecast, grid_step=args.grid_step, horizon=instance.day_hours).validate()
    seed = args.seed if args.seed is not None else 0
    modo = SamplingMode(args.mode)

    empirica = monte_carlo_curve(
        instance,
        schedule,
        args.samples,
        grid_step=fc.grid_step,
        rng=np.random.default_rng(seed),
        mode=modo,
        z=fc.z,
    )
    resumen = coverage_stats(empirica)

    informe = {
        "mode": modo.value,
        "seed": seed,
        "grid_step": fc.grid_step,
        "meo": empirica.analytic.peak,
        "degenerate": args.samples == 1,
        **resumen.to_dict(),
    }
    escribir_json(informe, args.out)

    print(
        f"✅ Validación ({modo.value}, {args.samples} muestras): dentro de la banda {resumen.inside:.4f}, "
        f"por encima {resumen.above:.4f}, por debajo {resumen.below:.4f}, error medio {resumen.mean_abs_error:.4f}, "
        f"puntos a menos de 3 errores típicos {resumen.within_3se:.4f}"
    )
    _escribir_manifiesto(
        args,
        {"forecast": asdict(fc), "samples": args.samples, "mode": modo.value},
        seed,
        [args.instance, args.schedule],
        [args.out],
        inicio,
    )
    return 0


def _ficheros_instancia(directorio: str) -> list:
    if not os.path.isdir(directorio):
        raise InstanceError(f"No existe el directorio de instancias {directorio}")
    rutas = sorted(glob.glob(os.path.join(directorio, "*.json")))
    return [r for r in rutas if not r.endswith((".manifest.json", ".report.json")) and ".replica" not in os.path.basename(r)]


def _mejor_meo(instance: Instance, config: SAConfig) -> float:
    return simulated_annealing(instance, config).best_meo


def cmd_sweep(args, settings: Settings) -> int:
    inicio = time.perf_counter()
    rutas = _ficheros_instancia(args.instance_dir)
    if not rutas:
        raise InstanceError(f"El directorio {args.instance_dir} no contiene instancias")
    if args.reps < 1:
        raise ValueError(f"--reps debe ser >= 1 (recibido {args.reps})")
    instancias = [load_instance(r) for r in rutas]
    base = _solver_config(args, settings)

    celdas = list(itertools.product(args.iterations_grid, args.factor_grid, args.period_grid))
    tareas = []
    for it, factor, periodo in celdas:
        for rep in range(args.reps):
            config = replace(base, iterations=it, cooling_factor=factor, cooling_period=periodo, seed=base.seed + rep).validate()
            tareas += [(instance, config) for instance in instancias]
    logger.info(f"Barrido: {len(celdas)} celdas × {args.reps} repeticiones × {len(instancias)} instancias")

    resultados = Parallel(n_jobs=args.jobs)(delayed(_mejor_meo)(i, c) for i, c in tareas)

    por_celda = np.asarray(resultados).reshape(len(celdas), args.reps, len(instancias)).sum(axis=2)
    medias = por_celda.mean(axis=1)
    mejor = int(np.argmin(medias))

    tabla = pd.DataFrame(
        {
            "iterations": [c[0] for c in celdas],
            "cooling_factor": [c[1] for c in celdas],
            "cooling_period": [c[2] for c in celdas],
            "reps": args.reps,
            "instances": len(instancias),
            "mean_sum_best_meo": medias,
            "std_sum_best_meo": por_celda.std(axis=1),
            "best": [k == mejor for k in range(len(celdas))],
        }
    )
    directorio = os.path.dirname(args.out)
    if directorio:
        os.makedirs(directorio, exist_ok=True)
    tabla.to_csv(args.out, index=False)

    it, factor, periodo = celdas[mejor]
    print(
        f"✅ Barrido de {len(celdas)} celdas escrito en {args.out}. Mejor celda: {it} iteraciones, "
        f"factor {factor}, periodo {periodo} (suma media de MEO {medias[mejor]:.4f})"
    )
    _escribir_manifiesto(
        args,
        {
            "solver": asdict(base),
            "iterations_grid": list(args.iterations_grid),
            "factor_grid": list(args.factor_grid),
            "period_grid": list(args.period_grid),
            "reps": args.reps,
        },
        base.seed,
        rutas,
        [args.out],
        inicio,
    )
    return 0


def cmd_throughput(args, settings: Settings) -> int:
    inicio = time.perf_counter()
    sa = _solver_config(args, settings)
    spec = override(settings.generator, seed=args.instance_seed).validate()
    if args.instances < 1:
        raise ValueError(f"--instances debe ser >= 1 (recibido {args.instances})")
    tabla = throughput_study(args.patients_grid, spec, sa, args.instances)

    directorio = os.path.dirname(args.out)
    if directorio:
        os.makedirs(directorio, exist_ok=True)
    tabla.to_csv(args.out, index=False)
    medias = tabla.groupby("patients")[["baseline_meo", "best_meo"]].mean()
    for n, fila in medias.iterrows():
        print(f"   {n} pacientes: MEO base {fila['baseline_meo']:.4f}, optimizado {fila['best_meo']:.4f}")
    print(f"✅ Estudio de capacidad escrito en {args.out}")
    _escribir_manifiesto(
        args,
        {"solver": asdict(sa), "generator": asdict(spec), "patients_grid": list(args.patients_grid), "instances": args.instances},
        sa.seed,
        [],
        [args.out],
        inicio,
    )
    return 0


# ─── Parser ─────────────────────────────────────────────────────────────────


def _opciones_solver(p: argparse.ArgumentParser):
    p.add_argument("--iterations", type=int, help="Iteraciones del recocido (por defecto 2500)")
    p.add_argument("--cooling-factor", type=float, help="Factor de enfriamiento (por defecto 0.95)")
    p.add_argument("--cooling-period", type=int, help="Iteraciones entre enfriamientos (por defecto 200)")
    p.add_argument("--initial-temperature", type=float, help="Temperatura inicial (por defecto 1.0)")


def build_parser() -> argparse.ArgumentParser:
    comunes = argparse.ArgumentParser(add_help=False)
    comunes.add_argument("--seed", type=_semilla, help="Semilla (entero de 64 bits sin signo)")
    comunes.add_argument("--grid-step", type=float, help="Paso de la rejilla temporal en horas (por defecto 0.1)")
    comunes.add_argument("--config", help="Fichero TOML con secciones [forecast], [solver] y [generator]")
    verbosidad = comunes.add_mutually_exclusive_group()
    verbosidad.add_argument("-v", "--verbose", action="store_true", help="Registro DEBUG")
    verbosidad.add_argument("-q", "--quiet", action="store_true", help="Solo avisos y errores")

    parser = argparse.ArgumentParser(
        prog="recuperai",
        description="Pronóstico de ocupación de la sala de recuperación y secuenciación de cirugías",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[comunes], help="Genera una instancia sintética")
    p.add_argument("--out", default="instance.json")
    p.add_argument("--patients", type=int)
    p.add_argument("--surgeons", type=int)
    p.add_argument("--ors", type=int)
    p.add_argument("--recovery-fraction", type=float)
    p.add_argument("--or-open-hours", type=float)
    p.add_argument("--day-hours", type=float)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("forecast", parents=[comunes], help="Curva de ocupación esperada con banda del 95%")
    p.add_argument("instance")
    p.add_argument("schedule")
    p.add_argument("--out", default="occupancy.csv")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("optimize", parents=[comunes], help="Recocido simulado sobre la secuencia de cirugías")
    p.add_argument("instance")
    p.add_argument("--out", default="schedule.json")
    p.add_argument("--report", help="Informe JSON (por defecto <out>.report.json)")
    p.add_argument("--replicas", type=int, default=1, help="Réplicas con semillas seed, seed+1, ...")
    p.add_argument("--jobs", type=int, default=1, help="Procesos paralelos para las réplicas")
    _opciones_solver(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("validate", parents=[comunes], help="Contrasta el pronóstico con Monte Carlo")
    p.add_argument("instance")
    p.add_argument("schedule")
    p.add_argument("--out", default="validation.json")
    p.add_argument("--samples", type=int, default=10000)
    p.add_argument("--mode", choices=[m.value for m in SamplingMode], default=SamplingMode.TRUE.value)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("sweep", parents=[comunes], help="Barrido de parámetros del recocido")
    p.add_argument("instance_dir")
    p.add_argument("--out", default="sweep.csv")
    p.add_argument("--iterations-grid", type=int, nargs="+", default=list(SWEEP_ITERATIONS))
    p.add_argument("--factor-grid", type=float, nargs="+", default=list(SWEEP_FACTORS))
    p.add_argument("--period-grid", type=int, nargs="+", default=list(SWEEP_PERIODS))
    p.add_argument("--reps", type=int, default=10, help="Repeticiones por celda e instancia")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("throughput", parents=[comunes], help="MEO base y optimizado según el número de pacientes")
    p.add_argument("--out", default="throughput.csv")
    p.add_argument("--patients-grid", type=int, nargs="+", default=[41, 51, 61])
    p.add_argument("--instances", type=int, default=5, help="Instancias generadas por tamaño")
    p.add_argument("--instance-seed", type=_semilla, help="Semilla de la primera instancia")
    _opciones_solver(p)
    p.set_defaults(func=cmd_throughput)

    return parser


def _configurar_logging(args):
    nivel = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=nivel, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    args.argv = argv
    _configurar_logging(args)

    try:
        settings = load_settings(args.config)
        return args.func(args, settings)
    except ValueError as e:
        logger.error(f"Entrada no válida: {e}")
        print(f"❌ {e}", file=sys.stderr)
        return 2
    except Exception as e:
        logger.exception(f"Error interno en '{args.command}'")
        print(f"❌ Error interno: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
