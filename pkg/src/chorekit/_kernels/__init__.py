"""Kernel backend selection.

The compiled extension is preferred when importable; the numpy fallback is
always available. Set CHOREKIT_FORCE_FALLBACK=1 to skip the extension (used
by the backend-agreement tests and the benchmark).
"""

from __future__ import annotations

import os

import numpy as np

from . import _ref

if os.environ.get("CHOREKIT_FORCE_FALLBACK") == "1":
    _impl = _ref
    BACKEND = "fallback"
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        _impl = _ref
        BACKEND = "fallback"


def _c64(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float64)


def ssm_scan(abar, bx, c) -> np.ndarray:
    """Diagonal SSM scan; see _ref.ssm_scan for the recurrence. Returns (T, D)."""
    return _impl.ssm_scan(_c64(abar), _c64(bx), _c64(c))


def jacobi_eigh(a, max_sweeps: int = 100, tol: float = 1e-12):
    """Symmetric eigendecomposition, eigenvalues ascending."""
    return _impl.jacobi_eigh(_c64(a), max_sweeps, tol)
