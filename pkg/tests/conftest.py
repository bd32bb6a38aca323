import numpy as np
import pytest

from pcbrisk import autodiff as ad


def assert_grads_close(analytic: dict, numeric: dict, rtol=1e-4, atol=1e-7):
    """Elementwise |a - n| <= atol + rtol * max(|a|, |n|)."""
    for name, n in numeric.items():
        a = analytic[name]
        assert a.shape == n.shape, f"{name}: shape {a.shape} != {n.shape}"
        bound = atol + rtol * np.maximum(np.abs(a), np.abs(n))
        worst = np.max(np.abs(a - n) - bound)
        assert worst <= 0, f"{name}: max excess {worst:.3e}"


def gradcheck(loss_fn, tape: ad.Tape, rtol=1e-4, atol=1e-7, h=1e-5):
    """Backward vs central finite differences for every registered param."""
    tape.zero_grad()
    analytic = tape.backward(loss_fn())
    numeric = ad.numeric_gradients(loss_fn, tape.parameters(), h=h)
    assert_grads_close(analytic, numeric, rtol=rtol, atol=atol)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
