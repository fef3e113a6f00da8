"""numba switch.

Kernels are written once as plain Python over numpy arrays. When numba is
importable and JSQLAB_DISABLE_NUMBA is unset (or "0"), they are compiled with
``njit``; otherwise the same functions run interpreted.
"""
import os

_flag = os.environ.get("JSQLAB_DISABLE_NUMBA", "").strip().lower()
DISABLED = _flag not in ("", "0", "false", "no")

try:
    if DISABLED:
        raise ImportError
    import numba as _numba

    HAVE_NUMBA = True
except ImportError:
    _numba = None
    HAVE_NUMBA = False


def maybe_njit(*args, **kwargs):
    """``numba.njit`` when enabled, identity otherwise."""
    if args and callable(args[0]) and len(args) == 1 and not kwargs:
        fn = args[0]
        return _numba.njit(cache=True, nogil=True)(fn) if HAVE_NUMBA else fn
    opts = {"cache": True, "nogil": True}
    opts.update(kwargs)

    def wrap(fn):
        return _numba.njit(**opts)(fn) if HAVE_NUMBA else fn

    return wrap


def backend_name():
    return "numba" if HAVE_NUMBA else "python"
