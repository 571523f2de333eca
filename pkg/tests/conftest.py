import numpy as np
import pytest

from groupdance.skeleton import default_skeleton


@pytest.fixture
def skel():
    return default_skeleton()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def fd_grad(f, x, h=1e-6):
    """Dense central finite-difference gradient of scalar f at array x."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gf = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * h)
    return g


def rel_err(analytic, numeric, floor=1e-8):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), floor)
    return np.abs(analytic - numeric).max() / denom


def check_param_gradients(loss_fn, params, rng, n_params=5, h=1e-6, tol=1e-3):
    """Spot-check analytic gradients of named parameters against central FD.

    loss_fn() rebuilds the loss from current parameter data and returns a
    Tensor; params is a list of (name, Tensor). Checks one random entry in
    each of n_params randomly chosen parameters.
    """
    from groupdance.autodiff import backward

    loss = loss_fn()
    for _, p in params:
        p.grad = None
    backward(loss)
    grads = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
             for name, p in params}
    chosen = rng.choice(len(params), size=min(n_params, len(params)), replace=False)
    failures = []
    for ci in chosen:
        name, p = params[ci]
        flat = p.data.reshape(-1)
        idx = int(rng.integers(flat.size))
        orig = flat[idx]
        flat[idx] = orig + h
        fp = loss_fn().item()
        flat[idx] = orig - h
        fm = loss_fn().item()
        flat[idx] = orig
        numeric = (fp - fm) / (2.0 * h)
        analytic = grads[name].reshape(-1)[idx]
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6)
        if err >= tol:
            failures.append((name, idx, analytic, numeric, err))
    assert not failures, f"gradient mismatches: {failures}"
