"""Shared test utilities: the finite-difference gradient oracle.

The oracle only ever calls the forward pass, so it stays independent of the
analytic backward rules it is used to check.
"""

import numpy as np


def finite_difference_grads(fn, leaves, h=1e-5):
    """Central-difference gradient of the scalar ``fn()`` w.r.t. each leaf.

    ``fn`` must re-run the forward computation from the leaves' current
    ``data`` and return a float. Entries are perturbed in place.
    """
    grads = []
    for leaf in leaves:
        grad = np.zeros_like(leaf.data)
        flat = leaf.data.ravel()
        grad_flat = grad.ravel()
        for k in range(flat.size):
            original = flat[k]
            flat[k] = original + h
            f_plus = fn()
            flat[k] = original - h
            f_minus = fn()
            flat[k] = original
            grad_flat[k] = (f_plus - f_minus) / (2.0 * h)
        grads.append(grad)
    return grads


def max_relative_error(analytic, numeric, floor=1e-4):
    """max |a - n| / max(|a|, |n|, floor); the floor keeps near-zero
    gradients from amplifying finite-difference noise."""
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def check_gradients(fn, leaves, tol, h=1e-5, floor=1e-4):
    """Assert every leaf's accumulated gradient matches the FD oracle."""
    numeric = finite_difference_grads(fn, leaves, h=h)
    for leaf, num in zip(leaves, numeric):
        assert leaf.grad is not None, "leaf received no gradient"
        err = max_relative_error(leaf.grad, num, floor=floor)
        assert err <= tol, f"gradient mismatch: max relative error {err:g} > {tol:g}"
