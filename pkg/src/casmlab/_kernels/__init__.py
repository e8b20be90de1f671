"""Hot-loop kernels with a compiled backend and a pure fallback.

The compiled extension is used when it imports and ``CASMLAB_PURE`` is not
set to a truthy value.  ``BACKEND`` names the active choice.
"""

import importlib
import os

from . import pure


def _load_compiled():
    try:
        return importlib.import_module(__name__ + "._fast")
    except ImportError:  # extension not built
        return None


_fast = None
if os.environ.get("CASMLAB_PURE", "").lower() not in ("1", "true", "yes"):
    _fast = _load_compiled()

_active = _fast if _fast is not None else pure
BACKEND = "compiled" if _fast is not None else "pure"

im2col = _active.im2col
col2im = _active.col2im
label_components = _active.label_components
telea_inpaint = _active.telea_inpaint


def backends():
    """Return ``{name: module}`` for every backend importable in this process."""
    found = {"pure": pure}
    fast = _fast if _fast is not None else _load_compiled()
    if fast is not None:
        found["compiled"] = fast
    return found
