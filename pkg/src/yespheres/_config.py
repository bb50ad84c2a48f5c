"""Runtime switches read from the environment.

``YESPHERES_BACKEND``
    ``numba`` (default) or ``numpy``. Selects the implementation of the hot
    integration kernels. Falls back to ``numpy`` when numba cannot be imported.
``YESPHERES_CACHE_DIR``
    Directory for cached quadrature grids and harmonic bases. Caching is
    disabled when unset.
"""
from __future__ import annotations

import os
from pathlib import Path

_VALID_BACKENDS = ("numba", "numpy")


def backend() -> str:
    """Return the active kernel backend name."""
    name = os.environ.get("YESPHERES_BACKEND", "numba").strip().lower()
    if name not in _VALID_BACKENDS:
        raise ValueError(
            f"YESPHERES_BACKEND must be one of {_VALID_BACKENDS}, got {name!r}"
        )
    if name == "numba":
        try:
            import numba  # noqa: F401
        except ImportError:  # pragma: no cover - numba is a declared dependency
            return "numpy"
    return name


def cache_dir() -> Path | None:
    """Return the cache directory, creating it if needed, or None."""
    raw = os.environ.get("YESPHERES_CACHE_DIR")
    if not raw:
        return None
    path = Path(raw).expanduser()
    path.mkdir(parents=True, exist_ok=True)
    return path
