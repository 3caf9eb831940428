import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pplinknet.losses import LossConfig, bce, dice, focal, loss_on_logits
from pplinknet.losses import focal_per_pixel
from pplinknet.nn.functional import ShapeMismatch
from pplinknet.nn.gradcheck import check_losses, numeric_grad, rel_error


def fixture(seed, shape=(2, 1, 6, 6)):
    rng = np.random.default_rng(seed)
    return rng.uniform(0.01, 0.99, shape), (rng.random(shape) < 0.4).astype(np.float64)


def scalar_bce(p, g):
    total = 0.0
    for pi, gi in zip(p.ravel(), g.ravel()):
        pi = min(max(pi, 1e-7), 1 - 1e-7)
        total += -(gi * math.log(pi) + (1 - gi) * math.log(1 - pi))
    return total / p.size


def test_bce_perfect_prediction():
    g = (np.random.default_rng(0).random((1, 1, 8, 8)) < 0.5).astype(float)
    loss, _ = bce(g, g)
    assert 0 < loss < 1e-6


def test_bce_half_is_ln2():
    assert bce(np.full((3, 3), 0.5), np.eye(3))[0] == pytest.approx(math.log(2), abs=1e-12)


def test_bce_matches_scalar_oracle():
    p, g = fixture(1)
    assert bce(p, g)[0] == pytest.approx(scalar_bce(p, g), abs=1e-12)


def test_focal_reduces_to_bce_on_100_fixtures():
    for seed in range(100):
        p, g = fixture(seed, (1, 1, 5, 5))
        assert abs(focal(p, g, alpha=1.0, gamma=0.0)[0] - bce(p, g)[0]) <= 1e-12


def test_focal_single_pixel_value():
    # (0.4)^0.5 * -ln 0.6 * 0.5 evaluated with 40-digit decimals
    from decimal import Decimal, getcontext
    getcontext().prec = 40
    expect = Decimal("0.5") * Decimal("0.4").sqrt() * -Decimal("0.6").ln()
    loss, _ = focal(np.array([0.6]), np.array([1.0]), alpha=0.5, gamma=0.5)
    assert loss == pytest.approx(float(expect), abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (4, 4), elements=st.floats(0.0, 1.0)), arrays(np.bool_, (4, 4)),
       st.floats(0.01, 1.0), st.floats(0.01, 4.0))
def test_focal_below_weighted_bce_per_pixel(p, g, alpha, gamma):
    g = g.astype(float)
    fl = focal_per_pixel(p, g, alpha, gamma)
    pc = np.clip(p, 1e-7, 1 - 1e-7)
    b = -(g * np.log(pc) + (1 - g) * np.log(1 - pc))
    assert np.all(fl <= alpha * b + 1e-15)


def test_focal_monotone_in_pt():
    pts = np.linspace(0.05, 0.999, 50)
    vals = focal_per_pixel(pts, np.ones_like(pts))
    assert np.all(np.diff(vals) < 0) and vals[-1] < 1e-3


def test_dice_identities():
    rng = np.random.default_rng(3)
    g = (rng.random((2, 1, 6, 6)) < 0.5).astype(float)
    assert dice(g, g)[0] == 0.0
    z = np.zeros((1, 1, 4, 4))
    assert dice(z, z)[0] == 0.0


def test_dice_scalar_oracle_exact():
    rng = np.random.default_rng(4)
    p = rng.random((1, 1, 4, 4))
    g = (rng.random((1, 1, 4, 4)) < 0.5).astype(float)
    pf = [Fraction(v) for v in p.ravel()]
    gf = [Fraction(v) for v in g.ravel()]
    num = 2 * sum(a * b for a, b in zip(pf, gf)) + 1
    den = sum(a * a for a in pf) + sum(b * b for b in gf) + 1
    assert dice(p, g)[0] == pytest.approx(float(1 - num / den), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_dice_range_and_permutation(seed):
    rng = np.random.default_rng(seed)
    p = rng.random(30)
    g = (rng.random(30) < 0.5).astype(float)
    loss = dice(p, g)[0]
    assert 0.0 <= loss < 1.0
    perm = rng.permutation(30)
    assert dice(p[perm], g[perm])[0] == pytest.approx(loss, abs=1e-15)


def test_logits_zero_gives_ln2():
    g = np.zeros((1, 1, 4, 4))
    assert loss_on_logits(np.zeros_like(g), g, LossConfig("bce"))[0] == pytest.approx(math.log(2), abs=1e-12)


@pytest.mark.parametrize("kind", ["bce", "focal", "dice", "bce_plus_dice"])
def test_logit_gradients(kind):
    rng = np.random.default_rng(5)
    z = rng.standard_normal((2, 1, 6, 6)) * 2
    g = (rng.random(z.shape) < 0.4).astype(float)
    cfg = LossConfig(kind)
    _, dz = loss_on_logits(z, g, cfg)
    num = numeric_grad(lambda: loss_on_logits(z, g, cfg)[0], z)
    assert rel_error(dz, num) < 1e-6


def test_bce_plus_dice_is_sum():
    p_z = np.random.default_rng(6).standard_normal((1, 1, 5, 5))
    g = (p_z > 0.3).astype(float)
    total = loss_on_logits(p_z, g, LossConfig("bce_plus_dice"))[0]
    parts = loss_on_logits(p_z, g, LossConfig("bce"))[0] + loss_on_logits(p_z, g, LossConfig("dice"))[0]
    assert total == pytest.approx(parts, abs=1e-15)


def test_focal_logit_path_equals_bce():
    z = np.random.default_rng(7).standard_normal((1, 1, 6, 6))
    g = (z > 0).astype(float)
    a = loss_on_logits(z, g, LossConfig("focal", alpha=1.0, gamma=0.0))
    b = loss_on_logits(z, g, LossConfig("bce"))
    assert abs(a[0] - b[0]) <= 1e-12 and np.abs(a[1] - b[1]).max() <= 1e-12


def test_suite_certifies_losses():
    assert all(r.ok for r in check_losses(seed=1))


def test_errors():
    with pytest.raises(ShapeMismatch):
        bce(np.zeros(3), np.zeros(4))
    with pytest.raises(ShapeMismatch):
        loss_on_logits(np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 2, 3)))
    for bad in (dict(kind="mse"), dict(alpha=0.0), dict(alpha=1.5), dict(gamma=-1), dict(eps=0)):
        with pytest.raises(ValueError):
            LossConfig(**bad)
