"""Transport on the circle: diffeomorphism flows, tangent projections,
parallel translation (deterministic and stochastic), energy functionals and
their intrinsic Ito calculus.  Thin re-export of the compiled core."""

try:
    from ._wtransport import *  # noqa: F401,F403  (installed package layout)
    from . import _wtransport as _core
except ImportError:  # build-tree layout: compiled module sits on PYTHONPATH
    from _wtransport import *  # noqa: F401,F403
    import _wtransport as _core

__doc__ = _core.__doc__
__all__ = [name for name in dir(_core) if not name.startswith("_")]
