"""Backend selection for the inner loops.

The compiled extension is used when it imports; otherwise the numpy twins
take over. Set ``CROSSEXT_PURE_PYTHON=1`` to force the fallback.
"""

import os

if os.environ.get("CROSSEXT_PURE_PYTHON", "") not in ("", "0"):
    from . import _pykernels as _impl
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        from . import _pykernels as _impl

BACKEND = _impl.BACKEND
sor_solve = _impl.sor_solve
wos_disk = _impl.wos_disk
wos_polyline = _impl.wos_polyline
jacobi_eigh = _impl.jacobi_eigh
counter_uniform = _impl.counter_uniform


def backends():
    """Return the importable kernel modules keyed by name."""
    from . import _pykernels

    found = {"python": _pykernels}
    try:
        from . import _ckernels

        found["cython"] = _ckernels
    except ImportError:
        pass
    return found
