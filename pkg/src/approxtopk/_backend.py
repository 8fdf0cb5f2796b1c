"""Kernel backend selection.

The compiled Cython module is used when it imports; otherwise the numpy
fallback. ``ATK_BACKEND=python`` forces the fallback, ``ATK_BACKEND=compiled``
makes a missing extension an import error.
"""

import logging
import os
from types import ModuleType

from . import _fallback

logger = logging.getLogger(__name__)

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

BACKENDS: dict[str, ModuleType] = {"python": _fallback}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled


def _select() -> str:
    wanted = os.environ.get("ATK_BACKEND", "auto").lower()
    if wanted == "auto":
        return "compiled" if _compiled is not None else "python"
    if wanted not in ("compiled", "python"):
        raise ImportError(f"ATK_BACKEND must be auto, compiled or python, got {wanted!r}")
    if wanted not in BACKENDS:
        raise ImportError("ATK_BACKEND=compiled but approxtopk._kernels is not built")
    return wanted


BACKEND_NAME = _select()
if BACKEND_NAME == "python" and _compiled is None:
    logger.debug("compiled kernels unavailable, using numpy fallback")


def get(name: str | None = None) -> ModuleType:
    """Kernel module by name; ``None`` means the import-time selection."""
    if name is None:
        name = BACKEND_NAME
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown or unavailable backend {name!r}") from None


def default_threads() -> int:
    env = os.environ.get("ATK_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"ATK_THREADS must be an integer, got {env!r}") from None
    return 1
