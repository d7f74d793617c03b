"""Hot kernels, dispatched to numba loops or vectorized numpy.

The active implementation is chosen by ``PREFOPT_BACKEND`` (see
:mod:`prefopt._jit`). Both implementations stay importable as
``kernels.loops`` and ``kernels.vectorized`` for cross-checking and the
benchmark script.
"""

from .. import _jit
from . import _loops as loops
from . import _vectorized as vectorized

BACKEND = _jit.BACKEND
_impl = loops if BACKEND == "numba" else vectorized

sample_tours = _impl.sample_tours
score_tours = _impl.score_tours
grad_weighted = _impl.grad_weighted
two_opt = _impl.two_opt
held_karp = _impl.held_karp
exhaustive = _impl.exhaustive

IMPROVE_TOL = loops.IMPROVE_TOL

__all__ = [
    "BACKEND",
    "IMPROVE_TOL",
    "exhaustive",
    "grad_weighted",
    "held_karp",
    "loops",
    "sample_tours",
    "score_tours",
    "two_opt",
    "vectorized",
]
