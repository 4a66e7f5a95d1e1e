from pathlib import Path

DEFAULT_OUT_DIR = Path("distgp-out")

CONFIG_DIR = Path.home() / ".config" / "distgp"
DEFAULT_CONFIG_FILE = CONFIG_DIR / "experiment.toml"


def ensure_dir(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path
