"""
Configuración desde un fichero TOML con secciones [forecast], [solver] y
[generator]. Prioridad: valores por defecto < fichero < opciones de línea
de comandos.
"""

import logging
import os
try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field, fields, replace
from typing import Optional

from forecast import ForecastConfig
from simulation import GenSpec
from solver import SAConfig

logger = logging.getLogger(__name__)

_SECCIONES = {"forecast": ForecastConfig, "solver": SAConfig, "generator": GenSpec}


@dataclass(frozen=True)
class Settings:
    forecast: ForecastConfig = field(default_factory=ForecastConfig)
    solver: SAConfig = field(default_factory=SAConfig)
    generator: GenSpec = field(default_factory=GenSpec)


def _aplicar(base, valores: dict, seccion: str):
    validos = {f.name: f for f in fields(base)}
    cambios = {}
    for clave, valor in valores.items():
        if clave not in validos:
            raise ValueError(f"Clave desconocida en [{seccion}]: {clave}")
        if isinstance(valor, list):
            valor = tuple(valor)
        cambios[clave] = valor
    return replace(base, **cambios)


def load_settings(path: Optional[str] = None) -> Settings:
    """Lee el fichero TOML (si existe) sobre los valores por defecto."""
    settings = Settings()
    if path is None:
        return settings
    if not os.path.exists(path):
        raise ValueError(f"No se encontró el fichero de configuración {path}")
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
        raise ValueError(f"Error al decodificar TOML en {path}: {e}") from e

    desconocidas = set(data) - set(_SECCIONES)
    if desconocidas:
        raise ValueError(f"Secciones desconocidas en {path}: {sorted(desconocidas)}")
    cambios = {nombre: _aplicar(getattr(settings, nombre), data.get(nombre, {}), nombre) for nombre in _SECCIONES}
    logger.info(f"Configuración cargada desde {path}")
    return replace(settings, **cambios)


def override(base, **valores):
    """Aplica las opciones de línea de comandos que no sean None."""
    cambios = {k: v for k, v in valores.items() if v is not None}
    return replace(base, **cambios) if cambios else base
