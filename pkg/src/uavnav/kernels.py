"""Backend selection for the hot kernels.

The compiled ``_kernels`` extension is used when it imports; otherwise, or when
``UAVNAV_PURE_PYTHON=1`` is set, the numpy fallback in ``_kernels_py`` is used.
Both expose ``received_power``, ``lookahead_features`` and ``orca_velocity``.
"""
import os

from . import _kernels_py

python_backend = _kernels_py
compiled_backend = None

if os.environ.get("UAVNAV_PURE_PYTHON") != "1":
    try:
        from . import _kernels as compiled_backend
    except ImportError:  # extension not built
        compiled_backend = None

_impl = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "cython" if _impl is compiled_backend else "python"

received_power = _impl.received_power
lookahead_features = _impl.lookahead_features
orca_velocity = _impl.orca_velocity
