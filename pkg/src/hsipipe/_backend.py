"""Kernel backend selection.

Prefers the compiled extension (`hsipipe._kernels`) and falls back to the
pure-NumPy module. Set HSIPIPE_BACKEND=python or =compiled to force one;
forcing `compiled` raises if the extension is not built.
"""

from __future__ import annotations

import os

_requested = os.environ.get("HSIPIPE_BACKEND", "").strip().lower()

if _requested == "python":
    from . import _kernels_np as kernels
elif _requested == "compiled":
    from . import _kernels as kernels  # type: ignore[no-redef]
elif _requested in ("", "auto"):
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]
    except ImportError:
        from . import _kernels_np as kernels  # type: ignore[no-redef]
else:
    raise RuntimeError(
        f"HSIPIPE_BACKEND={_requested!r} not recognized (use 'python' or 'compiled')"
    )

backend_name: str = kernels.BACKEND_NAME

__all__ = ["kernels", "backend_name"]
