"""Independent reference computations used across the test suite."""
import numpy as np


def central_difference(fn, flat, h=1e-5):
    """Gradient of scalar ``fn()`` w.r.t. the array ``flat`` (perturbed in place)."""
    grad = np.empty_like(flat)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        up = fn()
        flat[i] = keep - h
        down = fn()
        flat[i] = keep
        grad[i] = (up - down) / (2 * h)
    return grad


def max_rel_error(analytic, reference):
    """``max |a - r| / max(1, |a|)`` over all entries."""
    analytic = np.asarray(analytic)
    return float(np.max(np.abs(analytic - reference) / np.maximum(1.0, np.abs(analytic))))


def brute_force_loss(step, batch, r_in):
    """Recurrent loss with an independent composition restarted for every ``r``."""
    batch = np.asarray(batch)
    n, length, _ = batch.shape
    total = 0.0
    for m in range(n):
        for r in range(1, length):
            x = batch[m, 0].copy()
            for _ in range(r * r_in):
                x = step(x)
            total += float(np.sum((batch[m, r] - x) ** 2))
    return total / n


def loop_mlp(weights, biases, x, activation=np.tanh):
    """Scalar-loop forward pass of a dense network (no matrix products)."""
    a = list(map(float, x))
    for layer, (w, b) in enumerate(zip(weights, biases)):
        z = [sum(w[i][j] * a[j] for j in range(len(a))) + b[i] for i in range(len(b))]
        a = z if layer == len(weights) - 1 else [activation(v) for v in z]
    return np.array(a)
