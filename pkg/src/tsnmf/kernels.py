"""Backend selection for the random block kernels.

The compiled extension is preferred when importable; the numpy fallback is
value-compatible. Override with TSNMF_BACKEND=compiled|python.
"""

from __future__ import annotations

import os

from . import _kernels_py

_choice = os.environ.get("TSNMF_BACKEND", "auto")

if _choice == "python":
    _impl = _kernels_py
elif _choice == "compiled":
    from . import _kernels as _impl  # type: ignore[no-redef]
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _kernels_py

uniform_block = _impl.uniform_block
normal_block = _impl.normal_block


def get_backend() -> str:
    """Name of the active kernel backend ("compiled" or "python")."""
    return _impl.BACKEND
