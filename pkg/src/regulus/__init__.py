"""Piecewise-regular approximation of smooth maps into uniformly rational varieties."""
import os as _os

# REGULUS_THREADS caps BLAS threads; it must be set before numpy is first imported.
# Every computation is deterministic, so results do not depend on it.
if _os.environ.get("REGULUS_THREADS"):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _os.environ["REGULUS_THREADS"])

__version__ = "0.1.0"
