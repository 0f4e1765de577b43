"""Selection of the kernel core implementation.

The compiled extension ``_ccore`` is used when it imports; otherwise the
pure-Python ``_pycore`` takes over with a warning.  Setting the environment
variable ``SEMICLASSICAL_BACKEND=python`` forces the fallback, which is how
the benchmark and the parity tests exercise both paths.
"""

from __future__ import annotations

import os
import warnings

from . import _pycore

try:  # pragma: no cover - depends on the build
    from . import _ccore
except ImportError as exc:  # pragma: no cover - depends on the build
    _ccore = None
    _import_error = exc
else:
    _import_error = None

if os.environ.get("SEMICLASSICAL_BACKEND", "").lower() == "python":
    core = _pycore
elif _ccore is not None:
    core = _ccore
else:  # pragma: no cover - depends on the build
    warnings.warn(
        f"compiled kernel core unavailable ({_import_error}); using the pure-Python core",
        RuntimeWarning,
        stacklevel=2,
    )
    core = _pycore

BACKEND = "compiled" if core is not _pycore else "python"


def core_for(kind: int):
    """Core module able to handle a profile of the given kind.

    Callable profiles have no compiled counterpart and always use the
    pure-Python core.
    """
    if kind == _pycore.CALLABLE:
        return _pycore
    return core
