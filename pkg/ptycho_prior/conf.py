"""App settings read from ``settings.PTYCHO_CONFIG`` with package defaults."""
from __future__ import annotations

from typing import Any

from django.conf import settings

DEFAULTS: dict[str, Any] = {
    "threads": 1,
    "wavelength": 1.24e-10,
    "pixel_pitch": 1e-8,
    "defocus": 2e-3,
    "log_every": 10,
}


def get_setting(name: str) -> Any:  # noqa: ANN401
    """Get an app setting.

    Args:
        name (str): Key in ``PTYCHO_CONFIG``.

    Returns:
        Any: The configured value, or the package default.

    Raises:
        KeyError: If the name is not a known setting.

    """
    if name not in DEFAULTS:
        msg = f"Unknown ptycho_prior setting: {name}"
        raise KeyError(msg)
    return getattr(settings, "PTYCHO_CONFIG", {}).get(name, DEFAULTS[name])
