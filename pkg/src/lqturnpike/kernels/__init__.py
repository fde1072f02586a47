"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba backend is used when numba imports cleanly, unless the
environment variable ``LQTURNPIKE_DISABLE_NUMBA`` is set to a truthy value.
Both backends expose ``project_rows`` and ``make_lq_solver``.
"""
import os
from contextlib import contextmanager

from . import _numpy

BOX, HALFSPACE, SOC, FULL = 0, 1, 2, 3

_DISABLED = os.environ.get("LQTURNPIKE_DISABLE_NUMBA", "").strip().lower() in {
    "1", "true", "yes", "on"}

if _DISABLED:
    backend = _numpy
else:
    try:
        from . import _numba
        backend = _numba
    except ImportError:  # pragma: no cover - numba is a declared dependency
        backend = _numpy

BACKEND = backend.NAME


def get_backend(name=None):
    """Return a backend module by name (``"numba"`` or ``"numpy"``)."""
    if name is None:
        return backend
    if name == "numpy":
        return _numpy
    if name == "numba":
        from . import _numba
        return _numba
    raise ValueError(f"unknown backend {name!r}")


@contextmanager
def use_backend(name):
    """Temporarily route all kernel calls to the named backend."""
    global backend, BACKEND
    saved = backend, BACKEND
    backend = get_backend(name)
    BACKEND = backend.NAME
    try:
        yield backend
    finally:
        backend, BACKEND = saved


def project_rows(Y, kinds, idx, nidx, lo, hi, aa, bb, tol, maxit):
    return backend.project_rows(Y, kinds, idx, nidx, lo, hi, aa, bb, tol, maxit)


def make_lq_solver(A, B, H, rho, N):
    return backend.make_lq_solver(A, B, H, rho, N)
