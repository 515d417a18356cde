"""Tree-kernel backend selection.

The compiled extension is used when built; set COMPASS_PURE_PYTHON=1 to force
the numpy fallback. Both expose the same functions with the same semantics.
"""

import os

if os.environ.get("COMPASS_PURE_PYTHON"):
    from . import _pykern as _impl
else:
    try:
        from . import _ckern as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _pykern as _impl

BACKEND = _impl.BACKEND
build_tree = _impl.build_tree
apply_tree = _impl.apply_tree

__all__ = ["BACKEND", "build_tree", "apply_tree"]
