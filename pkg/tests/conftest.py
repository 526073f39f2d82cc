import numpy as np
import pytest

from urban_acoustics import synth


def rel_err(a, b):
    """Elementwise relative error with denominator max(|a|, |b|, 1e-8)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
    return np.abs(a - b) / denom


def fd_grad(fn, x, h=1e-5):
    """Central finite differences of scalar fn() w.r.t. array x, in place."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = fn()
        flat[i] = orig - h
        fm = fn()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """3 classes x 4 clips: enough to exercise training without the wait."""
    root = tmp_path_factory.mktemp("synth_small")
    manifest = synth.make_synthetic_corpus(root, num_classes=3, per_class=4, seed=11)
    return manifest
