"""Backend selection for the hot loops.

The Cython extension ``rwtree._core`` is used when importable; otherwise
(or when the environment variable ``RWTREE_PURE`` is set to ``1``) the
pure-Python twin in ``rwtree._purecore`` takes over.  Both expose
``expand_nodes``, ``draw_children_batch`` and ``walk`` with identical
semantics and bit-identical results.
"""

import os

from . import _purecore

pure = _purecore

if os.environ.get("RWTREE_PURE", "0") == "1":
    core = _purecore
else:
    try:
        from . import _core as core
    except ImportError:  # extension not built
        core = _purecore

BACKEND = core.BACKEND


def get_backend(name=None):
    """Return a backend module by name (``"cython"``/``"python"``) or the active one."""
    if name is None:
        return core
    if name == "python":
        return _purecore
    if name == "cython":
        from . import _core

        return _core
    raise ValueError(f"unknown backend {name!r}")
