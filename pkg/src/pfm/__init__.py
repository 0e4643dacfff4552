"""Flow matching on learned pullback geometries.

Submodules: ``numerics`` (autodiff, MLPs, Adam), ``diffeo`` (the neural ODE
diffeomorphism), ``geometry``, ``manifold_metrics``, ``isometry``, ``flows``,
``datasets``, ``evaluation``, ``io``, ``config`` and ``cli``. Importing the
package itself is cheap; submodules load on first use.
"""

import importlib

__version__ = "0.1.0"

_SUBMODULES = {
    "numerics", "diffeo", "geometry", "manifold_metrics", "isometry",
    "flows", "datasets", "evaluation", "io", "config", "cli",
}


def __getattr__(name):
    if name in _SUBMODULES:
        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module 'pfm' has no attribute {name!r}")
