"""Physics kernel backend selection.

The compiled extension is preferred when importable; the pure-Python
reference is the fallback and the ground truth for its behavior. Set
``SACLO_KERNEL=py`` or ``SACLO_KERNEL=fast`` to force a backend.
"""
from __future__ import annotations

import os

from . import layout  # noqa: F401  (re-exported for callers)
from . import reference

_forced = os.environ.get("SACLO_KERNEL", "").strip().lower()

if _forced == "py":
    kernel_step = reference.kernel_step
    BACKEND = "py"
else:
    try:
        from . import _fast

        kernel_step = _fast.kernel_step
        BACKEND = "fast"
    except ImportError:
        if _forced == "fast":
            raise ImportError(
                "SACLO_KERNEL=fast requested but the compiled kernel is not built; "
                "run `python setup.py build_ext --inplace` or reinstall the package"
            )
        kernel_step = reference.kernel_step
        BACKEND = "py"
