"""Backend dispatch for the hot numeric kernels.

Every public function takes an optional ``backend`` keyword ("numba",
"numpy", or None to honor the ORTHONET_BACKEND environment variable) and
forwards to the matching implementation module.
"""

from __future__ import annotations

import importlib

from ..backend import resolve_backend

_impls: dict[str, object] = {}


def get_impl(backend: str | None = None):
    """Return the implementation module for the resolved backend."""
    name = resolve_backend(backend)
    mod = _impls.get(name)
    if mod is None:
        mod = importlib.import_module(f".{name}_impl", __package__)
        _impls[name] = mod
    return mod


def empirical_loss_grad_parts(X, y, W, norms, use_abs, backend=None):
    return get_impl(backend).empirical_loss_grad_parts(X, y, W, norms, use_abs)


def predict_parts(X, W, norms, use_abs, backend=None):
    return get_impl(backend).predict_parts(X, W, norms, use_abs)


def pairwise_power_sums(U, beta, V, a, orders, backend=None):
    return get_impl(backend).pairwise_power_sums(U, beta, V, a, orders)


def pairwise_grad_accum(U, beta, V, a, orders, cA_s, cA_t, cB_s, cB_t, backend=None):
    return get_impl(backend).pairwise_grad_accum(
        U, beta, V, a, orders, cA_s, cA_t, cB_s, cB_t
    )


def parity_weighted_mean(P, q, backend=None):
    return get_impl(backend).parity_weighted_mean(P, q)
