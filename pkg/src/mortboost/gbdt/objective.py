import numpy as np

MARGIN_CLIP = 700.0
HESSIAN_FLOOR = 1e-16


def sigmoid(margin):
    m = np.clip(np.asarray(margin, dtype=np.float64), -MARGIN_CLIP, MARGIN_CLIP)
    return 1.0 / (1.0 + np.exp(-m))


def logistic_grad_hess(margin, label):
    """Gradient and hessian of the log-loss with respect to the margin."""
    p = sigmoid(margin)
    grad = p - np.asarray(label, dtype=np.float64)
    hess = np.maximum(p * (1.0 - p), HESSIAN_FLOOR)
    if np.ndim(grad) == 0:
        return float(grad), float(hess)
    return grad, hess


def log_loss(margin, label) -> float:
    """Mean binary cross-entropy computed stably from margins."""
    m = np.asarray(margin, dtype=np.float64)
    y = np.asarray(label, dtype=np.float64)
    # log(1 + exp(m)) - y*m
    return float(np.mean(np.logaddexp(0.0, m) - y * m))
