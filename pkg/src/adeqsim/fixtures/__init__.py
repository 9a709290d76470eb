"""Bundled example systems (regenerate with scripts/make_fixtures.py)."""

from pathlib import Path

_HERE = Path(__file__).parent

FIXTURES = ("smoke-1bus", "cong-2bus", "fault-3bus", "ves-3bus", "rts24")


def fixture_path(name: str) -> Path:
    """Absolute path of a bundled fixture config by short name."""
    stem = name.removesuffix(".json")
    path = _HERE / f"{stem}.json"
    if not path.exists():
        raise FileNotFoundError(
            f"unknown fixture {name!r}; available: {', '.join(FIXTURES)}")
    return path


def load_fixture(name: str):
    from ..system import load_system_config_path

    return load_system_config_path(fixture_path(name))
