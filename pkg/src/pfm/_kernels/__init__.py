"""Hot loops, compiled when the Cython extension is built.

Set ``PFM_PURE_PYTHON=1`` to force the pure-Python fallback. ``BACKEND``
reports which implementation was loaded.
"""

import os

from . import _fallback as fallback

compiled = None
if os.environ.get("PFM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _core as compiled
    except ImportError:
        compiled = None

_impl = compiled if compiled is not None else fallback
BACKEND = "cython" if compiled is not None else "python"

dijkstra_all_pairs = _impl.dijkstra_all_pairs
levenshtein_matrix = _impl.levenshtein_matrix
nearest_other = _impl.nearest_other
_levenshtein = _impl.levenshtein

__all__ = ["BACKEND", "dijkstra_all_pairs", "levenshtein_matrix", "nearest_other", "compiled", "fallback"]
