"""Scheduling-kernel backend selection.

The hot per-TTI loop exists twice: a Cython extension built at install
time and a pure-Python reference with identical arithmetic.  Import the
compiled one when available; set ``SLICELAB_FORCE_PY=1`` to pin the
Python fallback (the parity tests and benchmark do this).
"""
import os

if os.environ.get("SLICELAB_FORCE_PY", "") == "1":
    from ._kernel_py import run_interval

    KERNEL_BACKEND = "python"
else:
    try:
        from ._kernel_cy import run_interval  # type: ignore[no-redef]

        KERNEL_BACKEND = "cython"
    except ImportError:
        from ._kernel_py import run_interval  # type: ignore[no-redef]

        KERNEL_BACKEND = "python"

__all__ = ["run_interval", "KERNEL_BACKEND"]
