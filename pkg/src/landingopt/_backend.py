"""Pick the compiled kernels when available, else the numpy fallback."""

import os

BACKEND = "python"

if os.environ.get("LANDINGOPT_PURE", "") not in ("1", "true", "yes"):
    try:
        from landingopt._kernels import (  # noqa: F401
            LandingWorkspace,
            householder_qr,
            jacobi_eigh,
        )

        BACKEND = "cython"
    except ImportError:
        pass

if BACKEND == "python":
    from landingopt._pykernels import (  # noqa: F401
        LandingWorkspace,
        householder_qr,
        jacobi_eigh,
    )
