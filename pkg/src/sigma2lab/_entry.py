"""Console-script shim: pin BLAS thread counts before numpy loads.

SIGMA2LAB_THREADS, when set, caps OMP/OpenBLAS/MKL threads for the whole
run; unset, the libraries keep their default (available parallelism).
"""

from __future__ import annotations

import os
import sys


def main() -> None:
    n = os.environ.get("SIGMA2LAB_THREADS")
    if n:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, n)
    from .cli import main as cli_main

    sys.exit(cli_main())
