import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pnormlab.blockineq import (
    Theorem2Instance,
    blocks_from_json,
    blocks_to_json,
    gaussian_sampler,
    norm_2x2,
    norm_matrix,
    p_sweep,
    proof_chain_thm2,
    psd_block_check,
    psd_sampler,
    replay,
    shrink_violation,
    singular_values_2x2,
    theorem2_check,
    trial_rng,
)
from pnormlab.matcore import Block2x2, MatrixError, block_assemble, random_complex, schatten_norm

I2 = np.eye(2, dtype=complex)
Z2 = np.zeros((2, 2), dtype=complex)
S1 = np.array([[0, 1], [1, 0]], dtype=complex)


def test_norm_matrix_examples():
    np.testing.assert_allclose(norm_matrix(Block2x2(I2, Z2, Z2, I2), 2), [[2**0.5, 0], [0, 2**0.5]])
    np.testing.assert_allclose(norm_matrix(Block2x2(S1, S1, S1, S1), 4), np.full((2, 2), 2**0.25))
    b = Block2x2(np.diag([3.0, 4.0]), Z2, Z2, np.diag([1.0, 0.0]))
    np.testing.assert_allclose(norm_matrix(b, 1), [[7, 0], [0, 1]])


def test_closed_form_2x2():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = random_complex((2, 2), rng) * rng.uniform(0.01, 100)
        np.testing.assert_allclose(singular_values_2x2(n), np.linalg.svd(n, compute_uv=False), rtol=1e-12,
                                   atol=1e-12 * np.abs(n).max())
        for p in (1, 2.5, 4, "inf"):
            assert norm_2x2(n, p) == pytest.approx(schatten_norm(n, p), rel=1e-12)
    # rank one and zero
    assert norm_2x2(np.ones((2, 2)), 3) == pytest.approx(2.0)
    assert norm_2x2(np.zeros((2, 2)), 3) == 0.0


def test_block_diagonal_is_tight():
    rng = np.random.default_rng(1)
    a, d = random_complex((3, 3), rng), random_complex((3, 3), rng)
    b = Block2x2(a, np.zeros((3, 3)), np.zeros((3, 3)), d)
    for p in (2, 4, 7):
        rep = theorem2_check(b, p)
        want = (schatten_norm(a, p) ** p + schatten_norm(d, p) ** p) ** (1 / p)
        assert rep.lhs == pytest.approx(want, rel=1e-12) and abs(rep.slack) < 1e-12
        steps = proof_chain_thm2(b, max(p, 4))
        assert all(s.slack >= -1e-12 for s in steps) and abs(steps[-1].slack) < 1e-12


def test_p2_equality_and_p4_holds():
    rng = np.random.default_rng(2)
    for _ in range(200):
        b = Block2x2(*(random_complex((3, 3), rng) for _ in range(4)))
        assert abs(theorem2_check(b, 2).slack) <= 1e-10
        assert theorem2_check(b, 4).holds


def test_modes():
    b = gaussian_sampler((2, 2))(np.random.default_rng(3))
    with pytest.raises(ValueError):
        theorem2_check(b, 3)
    assert theorem2_check(b, 3, mode="explore").slack > -1e-9
    with pytest.raises(ValueError):
        theorem2_check(b, 4, mode="maybe")
    with pytest.raises(ValueError):
        proof_chain_thm2(b, 3)


def test_psd_block_check():
    rng = np.random.default_rng(4)
    m = random_complex((4, 4), rng)
    assert psd_block_check(m.conj().T @ m, 2).holds
    rep = psd_block_check(np.eye(4), 3)
    assert rep.lhs == pytest.approx(4 ** (1 / 3)) and rep.rhs == pytest.approx(4 ** (1 / 3))
    for _ in range(300):
        d = int(rng.integers(1, 5))
        g = random_complex((int(rng.integers(1, 2 * d + 1)), 2 * d), rng)
        for q in (2, 2.5, 4):
            assert psd_block_check(g.conj().T @ g, q).holds
    with pytest.raises(MatrixError):
        psd_block_check(np.diag([1.0, -1.0]), 2)
    with pytest.raises(ValueError):
        psd_block_check(np.eye(2), 1.5)


def test_proof_chain_structured():
    rng = np.random.default_rng(5)
    for _ in range(50):
        a, bb, d = (random_complex((3, 3), rng) for _ in range(3))
        a, d = a + a.conj().T, d + d.conj().T
        for p in (4, 6):
            steps = proof_chain_thm2(Block2x2(a, bb, bb.conj().T, d), p)
            assert [s.name for s in steps] == ["q-bound", "m11", "m12", "m22", "monotone", "final"]
            assert all(s.holds for s in steps)


def test_psd_off_diagonal_bound():
    # ||B|| <= ||A||^{1/2} ||C||^{1/2} for [[A, B], [B*, C]] >= 0, and the induced 2x2 is PSD for any phase
    rng = np.random.default_rng(6)
    for _ in range(200):
        b = psd_sampler((1, 4))(rng)
        for p in (1, 2, 3, 4, "inf"):
            na, nb, nc = (schatten_norm(x, p) for x in (b.a, b.b, b.d))
            assert nb <= math.sqrt(na * nc) + 1e-9
            z = np.exp(1j * rng.uniform(0, 2 * np.pi))
            small = np.array([[na, z * nb], [np.conj(z) * nb, nc]])
            assert np.linalg.eigvalsh(small)[0] >= -1e-9


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 5), st.floats(0, 5), st.floats(0, 5), st.floats(0, 2 * math.pi), st.sampled_from([1, 1.5, 2, 4, 9]))
def test_phase_invariance(a, b, d, theta, p):
    z = complex(math.cos(theta), math.sin(theta))
    base = norm_2x2(np.array([[a, b], [b, d]]), p)
    assert norm_2x2(np.array([[a, z * b], [np.conj(z) * b, d]]), p) == pytest.approx(base, rel=1e-12, abs=1e-12)


def test_entrywise_monotone():
    rng = np.random.default_rng(7)
    for _ in range(300):
        a, d = rng.uniform(0, 2, 2)
        b = rng.uniform(0, 1) * math.sqrt(a * d)
        m = np.array([[a, b], [b, d]])
        da, dd = rng.uniform(0, 1, 2)
        bigger = m + np.diag([da, dd])
        # raise b as far as positivity allows
        bmax = math.sqrt(bigger[0, 0] * bigger[1, 1])
        bigger[0, 1] = bigger[1, 0] = b + rng.uniform(0, 1) * (bmax - b)
        for q in (1, 1.5, 2, 3, "inf"):
            assert norm_2x2(bigger, q) >= norm_2x2(m, q) - 1e-12


def test_sweep_directions():
    stats = p_sweep(gaussian_sampler((1, 4)), [1, 1.5, 2, 4, 8, "inf"], 300, seed=11)
    by_p = {s.p.p: s for s in stats}
    assert by_p[2.0].direct_violations == 0 and by_p[2.0].reverse_violations == 0
    for p in (4.0, 8.0, math.inf):
        assert by_p[p].direct_violations == 0
    # below 2 the direct inequality fails on generic Gaussian blocks
    assert by_p[1.0].direct_violations > 0
    for p in (1.0, 1.5):
        assert by_p[p].reverse_violations == 0


def test_violation_record_replay_and_shrink():
    stats = p_sweep(gaussian_sampler((1, 3)), [1.25], 50, seed=3)
    worst = stats[0].worst
    assert worst is not None and worst["slack"] < -1e-9
    text = json.dumps(worst)
    rep = replay(json.loads(text))
    assert rep.slack == pytest.approx(worst["slack"], abs=1e-12)
    b = trial_rng(3, worst["trial"])
    orig = gaussian_sampler((1, 3))(b)
    shrunk, t = shrink_violation(orig, 1.25)
    assert 0 < t <= 1
    assert not theorem2_check(shrunk, 1.25, mode="explore").holds
    smaller = Block2x2(orig.a, 0.9 * t * orig.b, 0.9 * t * orig.c, orig.d)
    assert theorem2_check(smaller, 1.25, mode="explore").slack > theorem2_check(shrunk, 1.25, mode="explore").slack


def test_blocks_json_round_trip():
    b = gaussian_sampler((2, 3))(np.random.default_rng(8))
    back = blocks_from_json(json.loads(json.dumps(blocks_to_json(b))))
    assert np.array_equal(block_assemble(back), block_assemble(b))


def test_instance_reuse():
    b = psd_sampler()(np.random.default_rng(9))
    inst = Theorem2Instance(b)
    for p in (2, 4, "inf"):
        assert inst.report(p).slack == theorem2_check(b, p).slack
