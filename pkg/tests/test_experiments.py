import math

import numpy as np
import pytest
from scipy.optimize import brentq

from pnormlab.channels import (
    AffineQubitMap,
    MapError,
    amplitude_damping_affine,
    depolarizing,
    diagonal_form,
    identity,
    image_radius,
    map_from_affine,
    random_cp,
    transpose,
)
from pnormlab.experiments import (
    SpecialFormMap,
    channel_block_sampler,
    instance_rng,
    lemma1_chain,
    multiplicativity_gap,
    random_pair,
    random_special_form,
    random_state,
    special_form,
    transpose_demo,
    wh_crossing,
    wh_entangled_output,
    wh_gap,
)
from pnormlab.blockineq import theorem2_check
from pnormlab.matcore import schatten_norm
from pnormlab.pnorm import OptimizerConfig

FAST = OptimizerConfig(restarts=32)


def test_special_form_coefficients():
    rng = np.random.default_rng(0)
    for _ in range(300):
        s = random_special_form(rng)
        assert s.coefficients_nonnegative()
        assert image_radius(s.as_affine())[0] <= 1.0
        assert s.c_pp + s.c_pm + s.c_mp + s.c_mm == pytest.approx(2.0)
    with pytest.raises(ValueError):
        SpecialFormMap(-0.1, 0.2, 0.3, 0.0)
    assert SpecialFormMap(0.2, 0.5, 0.0, 0.0).z == 1j


def test_special_form_canonicalization():
    s = special_form(amplitude_damping_affine(0.36))
    assert (s.lambda1, s.lambda2) == pytest.approx((0.8, 0.8))
    assert s.lambda3 == pytest.approx(0.64) and abs(s.v3) == pytest.approx(0.36)
    # translation along x is rolled into the third slot
    s = special_form(AffineQubitMap(np.diag([0.3, -0.2, 0.1]), [0.25, 0, 0]))
    assert s.v3 != 0 and s.lambda1 >= 0 and s.lambda2 >= 0
    lam = np.sort(np.abs(diagonal_form(AffineQubitMap(np.diag([0.3, -0.2, 0.1]), [0.25, 0, 0])).lambdas))
    np.testing.assert_allclose(np.sort(np.abs([s.lambda1, s.lambda2, s.lambda3])), lam, atol=1e-12)
    with pytest.raises(MapError):
        special_form(AffineQubitMap(np.diag([0.3, 0.2, 0.1]), [0.2, 0.2, 0]))


def test_multiplicativity_examples():
    rep = multiplicativity_gap(AffineQubitMap(np.eye(3), np.zeros(3)), identity(3), 4, FAST)
    assert rep.ratio == pytest.approx(1.0, abs=1e-6) and rep.verdict == "consistent"
    rep = multiplicativity_gap(amplitude_damping_affine(0.5), depolarizing(0.7), 4, FAST)
    assert rep.ratio == pytest.approx(1.0, abs=1e-6)
    assert rep.product == pytest.approx(rep.nu_phi * rep.nu_omega)


def test_multiplicativity_random_pairs():
    for i in range(8):
        phi, omega = random_pair(instance_rng(21, i))
        for p in (2, 4, 6):
            rep = multiplicativity_gap(phi, omega, p, FAST)
            assert abs(rep.ratio - 1) <= 1e-6, rep


def test_multiplicativity_modes():
    phi = amplitude_damping_affine(0.5)
    with pytest.raises(ValueError):
        multiplicativity_gap(phi, depolarizing(0.5), 3, FAST)
    with pytest.raises(MapError):
        multiplicativity_gap(phi, transpose(2), 4, FAST)
    rep = multiplicativity_gap(phi, depolarizing(0.5), 3, FAST, mode="explore")
    assert rep.ratio == pytest.approx(1.0, abs=1e-6)


def test_lemma1_chain_tight_on_identity():
    phi = SpecialFormMap(1.0, 1.0, 1.0, 0.0)
    psi = np.kron([1, 0], [0, 1])
    rho = np.outer(psi, psi).astype(complex)
    for p in (2, 4, 6):
        steps = lemma1_chain(phi, identity(2), rho, p, nu_omega=1.0)
        assert all(s.holds for s in steps)
        last = steps[-1]
        assert last.name == "final" and abs(last.slack) <= 1e-9


def test_lemma1_chain_random():
    rng = np.random.default_rng(1)
    for _ in range(15):
        phi = random_special_form(rng)
        d = int(rng.integers(1, 4))
        omega = random_cp(d, int(rng.integers(1, d * d + 1)), rng)
        rho = random_state(2 * d, rng, rank=int(rng.integers(1, 2 * d + 1)))
        for p in (2, 4, 6):
            steps = lemma1_chain(phi, omega, rho, p, cfg=FAST)
            bad = [s for s in steps if not s.holds]
            assert not bad, bad
            # the final bound against an independent evaluation of the output norm
            out = schatten_norm((map_from_affine(phi.as_affine()) @ omega)(rho), p)
            assert out == pytest.approx(steps[-1].lhs, rel=1e-12)


def test_lemma1_chain_p2_names():
    rng = np.random.default_rng(2)
    steps = lemma1_chain(random_special_form(rng), identity(2), random_state(4, rng), 2, nu_omega=1.0)
    assert [s.name for s in steps][:3] == ["block-form", "quadratic-expansion", "expanded-bound"]


def test_lemma1_chain_rejects_bad_input():
    phi = SpecialFormMap(0.5, 0.5, 0.5, 0.0)
    with pytest.raises(ValueError):
        lemma1_chain(phi, identity(2), np.diag([1.0, -0.5, 0.5, 0.0]), 4, nu_omega=1.0)
    with pytest.raises(ValueError):
        lemma1_chain(phi, identity(2), np.eye(4), 4, nu_omega=1.0)
    with pytest.raises(ValueError):
        lemma1_chain(phi, identity(2), np.eye(6) / 6, 4, nu_omega=1.0)
    with pytest.raises(ValueError):
        lemma1_chain(phi, identity(2), np.eye(4) / 4, 3, nu_omega=1.0)


def test_transpose_demo():
    demo = transpose_demo(1.5, FAST)
    assert demo.ratio >= 2 ** (1 / 3) - 1e-6
    assert demo.exact == pytest.approx(2 ** (1 / 3))
    assert transpose_demo(2, FAST).ratio == pytest.approx(1.0, abs=1e-6)


def test_wh_witness_spectrum():
    spectrum = np.sort(np.linalg.eigvalsh(wh_entangled_output(3)))
    np.testing.assert_allclose(spectrum, [1 / 12] * 8 + [1 / 3], atol=1e-12)
    for p in (4, 4.5, 5, 6.5):
        closed = 3.0**-p + 8 * 12.0**-p
        assert np.sum(spectrum**p) == pytest.approx(closed, rel=1e-9)
        assert wh_gap(p) == pytest.approx(closed ** (1 / p) - 4 ** ((1 - p) / p), abs=1e-12)


def test_wh_crossing():
    assert wh_gap(4) < 0 < wh_gap(5)
    assert wh_gap(5) + 4 ** (-4 / 5) == pytest.approx(0.33385, abs=1e-5)
    assert 4 ** (-4 / 5) == pytest.approx(0.32988, abs=1e-5)
    c = wh_crossing()
    assert 4.775 <= c.p_star <= 4.795 and c.hi - c.lo <= 0.005
    fine = wh_crossing(tol=0.0025)
    assert abs(fine.p_star - c.p_star) <= 0.005
    # root of (4/3)^p + 8/3^p = 4 found independently
    root = brentq(lambda p: (4 / 3) ** p + 8 / 3**p - 4, 4, 5.5, xtol=1e-12)
    assert abs(c.p_star - root) <= 0.005
    with pytest.raises(ValueError):
        wh_crossing(bracket=(5.0, 5.5))


def test_channel_block_sampler_positive_blocks():
    sample = channel_block_sampler()
    for i in range(50):
        b = sample(instance_rng(5, i))
        for p in (4, 8):
            assert theorem2_check(b, p).holds
        assert abs(theorem2_check(b, 2).slack) <= 1e-10


def test_instance_rng_independent_of_order():
    a = instance_rng(3, 7).standard_normal(4)
    instance_rng(3, 6).standard_normal(100)
    assert np.array_equal(a, instance_rng(3, 7).standard_normal(4))
    assert not math.isclose(a[0], instance_rng(3, 8).standard_normal(4)[0])
