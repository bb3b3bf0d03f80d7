import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special, stats

from aclnet.errors import ShapeError
from aclnet.mixup import LabeledExample, MixupConfig, mixup_arrays, mixup_batch, mixup_pair, one_hot, sample_beta


def ex(x, target, k=10):
    return LabeledExample(np.asarray(x, dtype=float), one_hot(target, k))


@pytest.mark.parametrize("alpha", [0.1, 0.4, 1.0, 3.0])
def test_beta_mean(alpha):
    lam = sample_beta(alpha, np.random.default_rng(0), size=100_000)
    assert abs(lam.mean() - 0.5) < 0.01
    assert lam.min() >= 0 and lam.max() <= 1


def test_beta_one_is_uniform():
    lam = sample_beta(1.0, np.random.default_rng(1), size=100_000)
    assert stats.kstest(lam, "uniform").statistic < 0.02


def test_beta_small_alpha_is_u_shaped():
    lam = sample_beta(0.1, np.random.default_rng(2), size=100_000)
    outside = np.mean((lam <= 0.1) | (lam >= 0.9))
    expect = 1 - (special.betainc(0.1, 0.1, 0.9) - special.betainc(0.1, 0.1, 0.1))
    assert expect >= 0.8
    assert outside >= 0.8
    assert abs(outside - expect) < 0.01


def test_beta_matches_reference_cdf():
    lam = sample_beta(0.4, np.random.default_rng(3), size=50_000)
    assert stats.kstest(lam, stats.beta(0.4, 0.4).cdf).statistic < 0.02


def test_beta_scalar_and_tiny_alpha():
    assert isinstance(sample_beta(0.1, np.random.default_rng(0)), float)
    lam = sample_beta(1e-3, np.random.default_rng(0), size=1000)
    assert np.all(np.isfinite(lam)) and np.all((lam >= 0) & (lam <= 1))
    with pytest.raises(ValueError):
        sample_beta(0, np.random.default_rng(0))


def test_pair_examples():
    a, b = ex([2, 0], 2), ex([0, 2], 7)
    assert mixup_pair(a, b, 1.0) is a
    np.testing.assert_array_equal(mixup_pair(a, b, 0.25).x, [0.5, 1.5])
    y = mixup_pair(a, b, 0.5).y
    assert y[2] == y[7] == 0.5 and y.sum() == 1.0
    with pytest.raises(ShapeError):
        mixup_pair(a, ex([1, 2, 3], 0), 0.5)
    with pytest.raises(ShapeError):
        mixup_pair(a, ex([1, 2], 0, k=5), 0.5)


@given(st.floats(0, 1), st.lists(st.floats(-10, 10), min_size=4, max_size=4), st.integers(0, 9), st.integers(0, 9))
def test_pair_symmetry_and_distribution(lam, xs, ta, tb):
    a, b = ex(xs[:2], ta), ex(xs[2:], tb)
    m1, m2 = mixup_pair(a, b, lam), mixup_pair(b, a, 1 - lam)
    np.testing.assert_allclose(m1.x, m2.x, atol=1e-12)
    np.testing.assert_allclose(m1.y, m2.y, atol=1e-12)
    assert abs(m1.y.sum() - 1) <= 1e-6 and np.all(m1.y >= 0)


def test_batch_warmup_identity_and_no_rng_use():
    batch = [ex([1, 2], 0), ex([3, 4], 1)]
    rng = np.random.default_rng(0)
    state = rng.bit_generator.state
    assert mixup_batch(batch, MixupConfig(warmup_epochs=100), 0, rng) is batch
    assert rng.bit_generator.state == state


def test_batch_of_one_is_identity():
    batch = [ex([1.5, -2.0], 3)]
    out = mixup_batch(batch, MixupConfig(alpha=1.0, warmup_epochs=0), 5, np.random.default_rng(0))
    np.testing.assert_allclose(out[0].x, batch[0].x)
    np.testing.assert_allclose(out[0].y, batch[0].y)


def test_batch_outputs_are_distributions():
    rng = np.random.default_rng(4)
    batch = [ex(rng.standard_normal(8), int(rng.integers(10))) for _ in range(16)]
    out = mixup_batch(batch, MixupConfig(alpha=0.5, warmup_epochs=0), 0, rng)
    assert len(out) == 16
    for o in out:
        assert abs(o.y.sum() - 1) < 1e-6 and np.all(o.y >= 0)
    with pytest.raises(ValueError):
        mixup_batch([], MixupConfig(), 0, rng)


def test_arrays_match_batch_form():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((6, 8))
    y = np.stack([one_hot(i % 3, 3) for i in range(6)])
    cfg = MixupConfig(alpha=0.3, warmup_epochs=0)
    mx, my = mixup_arrays(x, y, cfg, 0, np.random.default_rng(9))
    ref = mixup_batch([LabeledExample(a, b) for a, b in zip(x, y)], cfg, 0, np.random.default_rng(9))
    np.testing.assert_allclose(mx, np.stack([r.x for r in ref]), atol=1e-12)
    np.testing.assert_allclose(my, np.stack([r.y for r in ref]), atol=1e-12)
    wx, wy = mixup_arrays(x, y, MixupConfig(), 50, rng)
    assert wx is x and wy is y


def test_config_validation():
    with pytest.raises(ValueError):
        MixupConfig(alpha=0)
    with pytest.raises(ValueError):
        MixupConfig(alpha=6)
    with pytest.raises(ValueError):
        MixupConfig(warmup_epochs=-1)
