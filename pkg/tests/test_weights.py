from __future__ import annotations

import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpexplain.weights import (
    EXP_LOCAL_MIN_C,
    WeightSpec,
    alpha_exponential,
    alpha_stable,
    envelope,
    family_check,
    radius_r,
)

positive_c = st.floats(min_value=1e-3, max_value=1e3, allow_nan=False)


def test_alpha_stable_examples():
    r = radius_r(1.0)
    assert alpha_stable(0.0, 1.0) == 1.0
    assert alpha_stable(r, 1.0) == 1.0
    assert 1 - 1e-6 <= alpha_stable(r + 1e-9, 1.0) <= 1.0
    assert alpha_stable(1.0, 1.0) == pytest.approx(0.25, abs=1e-15)


def test_alpha_stable_rejects_negative_distance():
    with pytest.raises(ValueError):
        alpha_stable(-0.1, 1.0)


def test_alpha_stable_vectorized():
    d = np.array([0.0, 0.2, 1.0, 3.0])
    out = alpha_stable(d, 1.0)
    assert out.shape == d.shape
    assert out[2] == pytest.approx(0.25)
    assert out[3] == pytest.approx(1 / 24)


def test_radius_examples():
    assert radius_r(1.0) == pytest.approx(0.3660254037844386, abs=1e-15)
    assert radius_r(4.0) == pytest.approx(1.0, abs=1e-15)
    # positive root of 2 r^2 + 2 r - 0.75 = 0
    root = max(mp.polyroots([2, 2, -0.75]))
    assert radius_r(0.75) == pytest.approx(float(root), abs=1e-15)
    assert radius_r(0.75) == pytest.approx(0.2906, abs=1e-4)


@given(positive_c)
def test_radius_identity(c):
    r = radius_r(c)
    assert abs(2 * r * (1 + r) - c) <= 1e-12 * max(1.0, c)


@pytest.mark.parametrize("c", [0.0, -1.0])
def test_radius_rejects_nonpositive(c):
    with pytest.raises(ValueError):
        radius_r(c)


@given(positive_c, st.floats(min_value=0.0, max_value=1e3))
def test_stable_weight_bounded_and_on_envelope(c, d):
    a = alpha_stable(d, c)
    assert 0 < a <= 1
    r = radius_r(c)
    if d > r:
        assert a == pytest.approx(c / (2 * d * (d + 1)), rel=1e-12)
    if d > 0:
        assert a <= envelope(d, c) * (1 + 1e-12)


@given(positive_c, st.floats(0, 100), st.floats(0, 100))
def test_stable_weight_non_increasing(c, d1, d2):
    lo, hi = sorted((d1, d2))
    assert alpha_stable(hi, c) <= alpha_stable(lo, c)


def test_family_check_stable():
    assert family_check(WeightSpec(1.0))
    assert family_check(WeightSpec(3.0))


def test_exponential_weight_needs_larger_c():
    # exp(-1) = 0.368 exceeds the c = 1 envelope value 0.25 at d = 1
    assert alpha_exponential(1.0) > envelope(1.0, 1.0)
    assert not family_check(alpha_exponential, c=1.0)
    assert family_check(alpha_exponential, c=1.6)
    with pytest.raises(ValueError):
        WeightSpec(1.0, "exponential_local")
    assert WeightSpec(1.6, "exponential_local")(0.0) == 1.0


def test_exponential_threshold_constant():
    # smallest c with exp(-d^2) <= c / (2 d (d + 1)) is the max of 2 d (d + 1) exp(-d^2)
    h = lambda d: 2 * d * (d + 1) * mp.exp(-(d**2))  # noqa: E731
    d_star = mp.findroot(lambda d: mp.diff(h, d), 0.85)
    assert float(d_star) == pytest.approx(0.8546, abs=1e-4)
    assert EXP_LOCAL_MIN_C == pytest.approx(float(h(d_star)), rel=1e-12)
    assert family_check(alpha_exponential, c=EXP_LOCAL_MIN_C * (1 + 1e-9))


def test_inverse_distance_rejected():
    for c in (0.5, 1.0, 10.0, 1e3):
        assert not family_check(lambda d: 1.0 / d, c=c)


def test_increasing_weight_rejected():
    assert not family_check(lambda d: 0.1 * np.minimum(d, 0.5), c=1.0)


def test_custom_envelope():
    d = (0.0, 0.3, 0.6, 1.0, 2.0)
    w = WeightSpec(1.0, "custom_envelope", d, (1.0, 1.0, 0.4, 0.2, 0.05))
    assert w(0.1) == 1.0
    assert w(5.0) == 0.0
    assert w(1.5) == pytest.approx(0.125)
    with pytest.raises(ValueError):
        WeightSpec(1.0, "custom_envelope", d, (1.0, 1.0, 0.4, 0.3, 0.05))  # 0.3 > 0.25 at d = 1
    with pytest.raises(ValueError):
        WeightSpec(1.0, "custom_envelope", (0.0, 1.0, 0.5), (1.0, 0.1, 0.1))
    with pytest.raises(ValueError):
        WeightSpec(1.0, "custom_envelope")


def test_unknown_kind():
    with pytest.raises(ValueError):
        WeightSpec(1.0, "gaussian")


def stability_bound(d, r, c):
    return 1 + max((d * d + 2 * r * d) / r**2, 2 * (d * d + 2 * r * d + d) / c)


@settings(max_examples=300)
@given(
    c=st.floats(0.05, 20.0),
    frac=st.floats(0.0, 0.1),
    seed=st.integers(0, 2**32 - 1),
)
def test_stability_ratio(c, frac, seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 8))
    r = radius_r(c)
    d = frac * r
    z = rng.normal(size=n)
    step = rng.normal(size=n)
    v = z + step / np.linalg.norm(step) * d * rng.random()
    x = z + rng.normal(size=n) * rng.choice([0.1 * r, r, 5 * r])
    ratio = alpha_stable(np.linalg.norm(x - v), c) / alpha_stable(np.linalg.norm(x - z), c)
    assert ratio <= stability_bound(d, r, c) + 1e-9
