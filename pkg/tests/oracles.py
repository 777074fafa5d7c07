"""Independent numerical oracles used by the tests.

Nothing here touches the reverse-mode engine: gradients and Jacobians are
estimated by central differences on plain numpy evaluations.
"""
import numpy as np


def central_gradient(f, x, step=1e-5):
    """d f / d x for scalar ``f`` by central differences (``x`` is perturbed in place)."""
    grad = np.zeros_like(x, dtype=float)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = f()
        flat[i] = orig - step
        fm = f()
        flat[i] = orig
        g[i] = (fp - fm) / (2 * step)
    return grad


def central_jacobian(f, x, step=1e-5):
    """Jacobian of vector ``f`` at vector ``x``."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        cols.append((f(x + e) - f(x - e)) / (2 * step))
    return np.stack(cols, axis=1)


def log_abs_det(jac):
    sign, logdet = np.linalg.slogdet(jac)
    assert sign != 0
    return logdet


def rel_err(a, b, floor=1e-8):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def randomize(model, rng, scale=0.5):
    """Give every parameter (including zero-initialised heads) random values."""
    for p in model.parameters():
        p.data[...] = scale * rng.standard_normal(p.shape)
    return model


def lecun_randomize(model, rng, bias_scale=0.1):
    """Random but well-conditioned model: every weight LeCun-normal, heads included."""
    for p in model.parameters():
        shape = p.data.shape
        if len(shape) >= 2:
            fan_in = int(np.prod(shape[1:])) if len(shape) == 4 else shape[0]
            p.data[...] = rng.standard_normal(shape) / np.sqrt(fan_in)
        else:
            p.data[...] = bias_scale * rng.standard_normal(shape)
    return model
