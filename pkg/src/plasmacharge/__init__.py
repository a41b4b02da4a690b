"""Plasma coupled to point charges in convex planar domains.

Domain geometry, Green functions (closed forms and a Nystrom solver),
point-charge dynamics, a particle method for the plasma, diagnostics,
the blob desingularization study and the ``sim`` command line tool.

Top-level names are loaded on first access, so that importing the
package (as the ``sim`` entry point does) does not start numba before
its thread count is configured.
"""

import importlib

__version__ = "0.1.0"

_EXPORTS = {
    "ChargeState": "charges",
    "RunConfig": "config",
    "load_config": "config",
    "parse_config": "config",
    "ConvexDomain": "geometry",
    "ellipse": "geometry",
    "fourier_domain": "geometry",
    "unit_disk": "geometry",
    "BoundaryDensity": "greens",
    "BoundaryFlavor": "greens",
    "GreenEvaluator": "greens",
    "BoundaryRule": "plasma",
    "CoupledStepper": "plasma",
    "FieldModel": "plasma",
    "ParticleEnsemble": "plasma",
}

__all__ = sorted(_EXPORTS)


def __getattr__(name):
    if name in _EXPORTS:
        module = importlib.import_module(f".{_EXPORTS[name]}", __name__)
        return getattr(module, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
