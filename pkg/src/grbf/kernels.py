"""Backend selection for the hot kernels.

The compiled extension is used when it imports; setting the environment
variable ``GRBF_PURE_PYTHON=1`` forces the numpy fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("GRBF_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py

cross_mass_stiffness = _impl.cross_mass_stiffness
density_matrix = _impl.density_matrix
density_rows = _impl.density_rows
