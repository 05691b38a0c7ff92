"""Kernel backend selection: compiled extension if available, NumPy otherwise.

Set ``EBMFIT_PURE_PYTHON=1`` to force the NumPy backend (used by the
benchmark and by tests that compare the two implementations).
"""

from __future__ import annotations

import os

from . import _kernel_py

_force_python = os.environ.get("EBMFIT_PURE_PYTHON", "").lower() not in ("", "0", "false")

if not _force_python:
    try:
        from . import _kernel_cy as _impl

        BACKEND = "compiled"
    except ImportError:
        _impl = _kernel_py
        BACKEND = "python"
else:
    _impl = _kernel_py
    BACKEND = "python"

kernel_loglik = _impl.kernel_loglik
kernel_simulate_states = _impl.kernel_simulate_states


def backend_name() -> str:
    """Name of the kernel backend in use ('compiled' or 'python')."""
    return BACKEND


def compiled_available() -> bool:
    """Whether the compiled extension can be imported at all."""
    try:
        from . import _kernel_cy  # noqa: F401
    except ImportError:
        return False
    return True
