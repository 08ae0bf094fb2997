"""Correlation kernels with a compiled core and a pure-numpy fallback.

The compiled extension is preferred when importable.  Set
``GENKBC_KERNELS=python`` to force the fallback, or
``GENKBC_KERNELS=compiled`` to require the extension (ImportError if it
was not built).  ``BACKEND`` names the backend in use.
"""

from __future__ import annotations

import os

from . import _pykernels

fft_circular_correlation = _pykernels.fft_circular_correlation
fft_circular_convolution = _pykernels.fft_circular_convolution

_FORCE = os.environ.get("GENKBC_KERNELS", "").strip().lower()

if _FORCE in {"py", "python"}:
    _impl = _pykernels
    BACKEND = "python"
elif _FORCE in {"c", "compiled", "cython"}:
    from . import _ckernels as _impl  # type: ignore[no-redef]

    BACKEND = "compiled"
elif _FORCE:
    raise ValueError(
        f"GENKBC_KERNELS={_FORCE!r} not recognized; use 'python' or 'compiled'"
    )
else:
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

circular_correlation = _impl.circular_correlation
circular_convolution = _impl.circular_convolution
score_and_grads = _impl.score_and_grads

__all__ = [
    "BACKEND",
    "circular_correlation",
    "circular_convolution",
    "score_and_grads",
    "fft_circular_correlation",
    "fft_circular_convolution",
]
