"""Linearized Boltzmann dynamics with soft potentials in bounded domains."""
import os as _os

# SOFTBOLT_NUM_THREADS caps both the OpenMP kernels and the BLAS pool; it only
# takes effect if set before numpy is first imported.
_threads = _os.environ.get("SOFTBOLT_NUM_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ[_var] = _threads

__version__ = "0.1.0"
