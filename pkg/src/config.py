import logging
from pathlib import Path

import psutil
from dotenv import load_dotenv
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

env_path = Path(__file__).resolve().parent.parent / ".env"
load_dotenv(env_path)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def _default_threads() -> int:
    # Núcleos físicos, con tope de 8 (los ajustes internos son pequeños)
    cores = psutil.cpu_count(logical=False) or 1
    return max(1, min(cores, 8))


class RuntimeSettings(BaseSettings):
    """
    Ajustes de ejecución leídos de variables TDESIGN_* o del fichero .env.
    Los flags de la CLI tienen prioridad.
    """
    model_config = SettingsConfigDict(env_prefix="TDESIGN_", env_file=env_path, extra="ignore")

    threads: int = Field(default_factory=_default_threads, ge=1)
    log_level: str = "INFO"
    seed: int = 20240601
    output_dir: Path = Path("out")


def configure_logging(level: str = "INFO") -> None:
    """Installs a single stream handler on the root logger."""
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    root.setLevel(level.upper())
