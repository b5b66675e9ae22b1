"""Backend selection for the per-frequency kernels.

The compiled extension is used when importable; set ``MACDETECT_BACKEND=python``
to force the numpy implementation.
"""
import os

from . import _kernels_py

_forced = os.environ.get("MACDETECT_BACKEND", "").lower()

if _forced == "python":
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        if _forced == "compiled":
            raise
        _impl = _kernels_py
        BACKEND = "python"

cubic_roots = _impl.cubic_roots
oep_entry = _impl.oep_entry
oep_allocate = _impl.oep_allocate

# scalar helpers stay in numpy; they are cheap and vectorized already
oep_coefficients = _kernels_py.oep_coefficients
snr_gain = _kernels_py.snr_gain
info_density = _kernels_py.info_density
marginal_gain = _kernels_py.marginal_gain
peak_allocation = _kernels_py.peak_allocation


def backends():
    """Available backend modules keyed by name (for tests and benchmarks)."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels

        out["compiled"] = _kernels
    except ImportError:
        pass
    return out
