import numpy as np
import pytest

from delphos.transforms import BOXCOX, LINEAR, LOG1P, apply_transform, transform_dlambda


def test_linear_identity():
    assert apply_transform(LINEAR, 2.5) == 2.5


def test_boxcox_lambda_one_is_shift():
    x = np.array([0.3, 1.0, 4.2])
    assert np.allclose(apply_transform(BOXCOX, x, 1.0), x - 1.0)


def test_boxcox_analytic_limit():
    assert apply_transform(BOXCOX, np.e, 1e-12) == pytest.approx(1.0, abs=1e-12)


def test_log1p_value():
    assert apply_transform(LOG1P, 1.0) == pytest.approx(0.6931471805599453, abs=1e-12)


def test_boxcox_domain_error():
    with pytest.raises(ValueError):
        apply_transform(BOXCOX, 0.0, 0.5)
    with pytest.raises(ValueError):
        apply_transform(BOXCOX, -1.0, 0.5)


def test_log1p_domain_error():
    with pytest.raises(ValueError):
        apply_transform(LOG1P, -0.5)


def test_unknown_kind():
    with pytest.raises(ValueError):
        apply_transform("sqrt", 1.0)


def test_dlambda_at_x_one_is_zero():
    for lam in (-1.0, 0.0, 0.7, 2.0):
        assert transform_dlambda(1.0, lam) == 0.0


def test_dlambda_limit():
    assert transform_dlambda(np.e, 1e-12) == pytest.approx(0.5, abs=1e-10)


def test_dlambda_matches_finite_difference():
    h = 1e-6
    for x in (0.5, 2.0, 4.4):
        for lam in (-0.8, -0.01, 0.2, 0.5, 1.3):
            fd = (apply_transform(BOXCOX, x, lam + h) - apply_transform(BOXCOX, x, lam - h)) / (2 * h)
            assert transform_dlambda(x, lam) == pytest.approx(fd, abs=1e-7)


def test_dlambda_stable_near_zero_lambda():
    # the raw formula cancels catastrophically here; the series must not
    x = 2.0
    exact = np.log(x) ** 2 / 2
    for lam in (1e-7, 1e-6, 1e-5):
        val = transform_dlambda(x, lam)
        assert val == pytest.approx(exact, rel=1e-5)
