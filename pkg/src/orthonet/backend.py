"""Kernel backend selection: numba-accelerated loops vs pure numpy.

The hot kernels (empirical gradients, pairwise moment sums, sign-pattern
enumeration) have twin implementations. ``ORTHONET_BACKEND`` picks one:

    auto   -> numba when importable, else numpy (default)
    numba  -> require numba, error if missing
    numpy  -> pure numpy fallback

Selection is re-read per call so tests and benchmarks can flip the env var
at runtime. Both backends are deterministic run-to-run for a fixed backend;
they agree to floating-point reduction order (~1e-15 relative).
"""

from __future__ import annotations

import os

ENV_VAR = "ORTHONET_BACKEND"

try:
    import numba  # noqa: F401

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - environment dependent
    HAS_NUMBA = False


def resolve_backend(name: str | None = None) -> str:
    """Return the backend name to use, either 'numba' or 'numpy'.

    ``name=None`` reads the ORTHONET_BACKEND environment variable.
    """
    if name is None:
        name = os.environ.get(ENV_VAR, "auto")
    name = name.strip().lower()
    if name in ("", "auto"):
        return "numba" if HAS_NUMBA else "numpy"
    if name == "numba":
        if not HAS_NUMBA:
            raise RuntimeError(
                "ORTHONET_BACKEND=numba requested but numba is not importable"
            )
        return "numba"
    if name == "numpy":
        return "numpy"
    raise ValueError(
        f"unknown backend {name!r}: expected 'numba', 'numpy', or 'auto'"
    )
