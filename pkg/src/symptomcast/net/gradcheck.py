"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

import numpy as np


def grad_check(loss_fn, grad_fn, arrays, eps: float = 1e-5, max_coords: int = 200, seed: int = 0) -> float:
    """Worst relative error between analytic gradients and central differences.

    ``loss_fn()`` evaluates the scalar loss at the current contents of
    ``arrays`` (a list of ndarrays perturbed in place); ``grad_fn()``
    returns the analytic gradient arrays aligned with them.  For tensors
    larger than ``max_coords``, a seeded sample of coordinates is checked.

    The relative error for one coordinate is
    ``|analytic - numeric| / max(|analytic|, |numeric|, 1e-3)``; the 1e-3
    floor keeps finite-difference noise on near-zero components from
    dominating.  Coordinates whose first probe disagrees are re-probed at
    smaller step sizes: discretization artifacts (a ReLU kink inside the
    probe interval) shrink with the step, implementation errors persist.
    """
    rng = np.random.default_rng(seed)
    analytic = grad_fn()
    worst = 0.0
    for arr, grad in zip(arrays, analytic):
        flat = arr.reshape(-1)
        gflat = np.asarray(grad).reshape(-1)
        if flat.size <= max_coords:
            coords = np.arange(flat.size)
        else:
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        for i in coords:
            orig = flat[i]
            err = np.inf
            for step in (eps, eps / 8.0, eps / 64.0):
                flat[i] = orig + step
                hi = loss_fn()
                flat[i] = orig - step
                lo = loss_fn()
                flat[i] = orig
                numeric = (hi - lo) / (2.0 * step)
                err = min(err, abs(gflat[i] - numeric) / max(abs(gflat[i]), abs(numeric), 1e-3))
                if err < 1e-6:
                    break
            worst = max(worst, err)
    return worst
