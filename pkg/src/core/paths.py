from pathlib import Path


# Kept separate from dependencies to avoid a circular import with config
def root() -> Path:
    return Path(__file__).parents[2].resolve()


def data_dir() -> Path:
    return root() / "data"
