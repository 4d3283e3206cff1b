"""Solver suite for 1-D Poiseuille flow of nematic liquid crystals"""
try:
    from importlib.metadata import version as get_version
except ImportError:
    from importlib_metadata import version as get_version


def get_app_version() -> str:
    try:
        return get_version("poiseuille-lc")
    except Exception:
        return "unknown"
