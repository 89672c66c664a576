"""Kernel backend selection.

The compiled extension is preferred when importable; the numpy implementation
is the fallback. ``FEDFORGET_KERNELS=python|cython`` forces a choice (useful
for the benchmark and for debugging kernel discrepancies).
"""

from __future__ import annotations

import os

from ..errors import ConfigError
from . import _kernels_py

_FORCED = os.environ.get("FEDFORGET_KERNELS", "").strip().lower()

if _FORCED not in ("", "python", "cython"):
    raise ConfigError(
        f'FEDFORGET_KERNELS: must be "python" or "cython", got {_FORCED!r}'
    )

if _FORCED == "python":
    kernels = _kernels_py
    KERNEL_BACKEND = "python"
else:
    try:
        from . import _kernels_cy as _cy  # type: ignore[attr-defined]

        kernels = _cy
        KERNEL_BACKEND = "cython"
    except ImportError:
        if _FORCED == "cython":
            raise
        kernels = _kernels_py
        KERNEL_BACKEND = "python"


def get_kernels(name: str | None = None):
    """Kernel module by name ("python"/"cython"), or the active one."""
    if name in (None, KERNEL_BACKEND):
        return kernels
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _kernels_cy  # type: ignore[attr-defined]

        return _kernels_cy
    raise ValueError(f"unknown kernel backend {name!r}")
