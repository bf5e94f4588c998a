"""Finite-difference gradient verification."""

from __future__ import annotations

import numpy as np


def max_rel_grad_error(params, analytic, loss_fn, epsilon=1e-5,
                       sample_per_param=None, rng=None) -> float:
    """Compare analytic gradients to central finite differences.

    ``loss_fn`` must recompute the scalar loss from the current (mutated)
    parameter arrays.  Every element of every parameter is checked unless
    ``sample_per_param`` caps the number of elements probed per tensor
    (large models; the probed set is drawn from ``rng``).  The relative
    error of a pair (a, n) is |a - n| / max(|a|, |n|, 1e-6); the floor keeps
    the finite-difference noise floor (~1e-11 absolute at double precision)
    from dominating near-zero gradient elements.
    """
    if sample_per_param is not None and rng is None:
        rng = np.random.default_rng(0)
    worst = 0.0
    for name in sorted(params):
        flat = params[name].reshape(-1)
        grad = analytic[name].reshape(-1)
        if sample_per_param is None or flat.size <= sample_per_param:
            indices = range(flat.size)
        else:
            indices = rng.choice(flat.size, size=sample_per_param, replace=False)
        for i in indices:
            orig = flat[i]
            flat[i] = orig + epsilon
            up = loss_fn()
            flat[i] = orig - epsilon
            down = loss_fn()
            flat[i] = orig
            numeric = (up - down) / (2.0 * epsilon)
            a = grad[i]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
            worst = max(worst, err)
    return worst


def gradient_check(network, x, labels, epsilon=1e-5, sample_per_param=None, rng=None) -> float:
    """Max relative error between a network's backward pass and finite differences."""
    _, grads = network.loss_and_grads(x, labels, train=False)
    analytic = {name: g.copy() for name, g in grads.items()}
    return max_rel_grad_error(
        network.parameters(), analytic,
        lambda: network.loss(x, labels, train=False),
        epsilon=epsilon, sample_per_param=sample_per_param, rng=rng,
    )
