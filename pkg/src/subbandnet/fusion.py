"""Equal-weight averaging of two softmax outputs."""
import numpy as np

from .errors import InvalidDistribution

TOLERANCE = 1e-5


def _check(s, name):
    s = np.asarray(s, dtype=np.float64)
    if s.shape[-1] != 10:
        raise InvalidDistribution(f"{name}: expected 10 class probabilities, got shape {s.shape}")
    if np.any(s < -TOLERANCE) or np.any(s > 1 + TOLERANCE) or np.any(np.abs(s.sum(axis=-1) - 1) > TOLERANCE):
        raise InvalidDistribution(f"{name} is not a probability vector within {TOLERANCE}")
    return s


def fuse(s1, s2):
    """0.5 * (s1 + s2). Works on single vectors or ``(N, 10)`` stacks."""
    a, b = _check(s1, "s1"), _check(s2, "s2")
    if a.shape != b.shape:
        raise InvalidDistribution(f"shape mismatch {a.shape} vs {b.shape}")
    return 0.5 * (a + b)


def predict_fused(s1, s2):
    """Argmax of the fused vector(s); ties go to the lowest class index."""
    fused = fuse(s1, s2)
    out = np.argmax(fused, axis=-1)
    return int(out) if out.ndim == 0 else out
