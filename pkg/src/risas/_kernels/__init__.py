"""Kernel backend selection.

The hot per-pixel normal-estimation loop ships as a Cython extension with a
pure-numpy fallback. The compiled module wins when importable; set
RISAS_BACKEND=numpy to force the fallback (useful for benchmarking).
"""

import os

from . import _normals_np

_FORCED = os.environ.get("RISAS_BACKEND", "").strip().lower()

if _FORCED not in ("", "numpy", "cython"):
    raise ValueError(f"RISAS_BACKEND must be 'numpy' or 'cython', got {_FORCED!r}")

try:
    from . import _normals as _normals_cy
except ImportError:
    _normals_cy = None

if _FORCED == "cython" and _normals_cy is None:
    raise ImportError("RISAS_BACKEND=cython but the compiled kernel is not built")

if _FORCED == "numpy" or _normals_cy is None:
    BACKEND = "numpy"
    estimate_normals_field = _normals_np.estimate_normals_field
else:
    BACKEND = "cython"
    estimate_normals_field = _normals_cy.estimate_normals_field


def available_backends() -> dict:
    """Importable kernel implementations keyed by backend name."""
    out = {"numpy": _normals_np.estimate_normals_field}
    if _normals_cy is not None:
        out["cython"] = _normals_cy.estimate_normals_field
    return out
