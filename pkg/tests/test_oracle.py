import math

import numpy as np

from qrnet import oracle
from qrnet.physics import (
    decay_factor,
    purified_fidelity,
    purify_success_prob,
    swapped_w,
)

TOLERANCE = 1e-9


def test_suite_agrees_with_closed_forms():
    report = dict(oracle.run_suite())
    pairs = report.pop("pairs")
    assert pairs >= 100
    worst = max(report.values())
    assert worst <= TOLERANCE, report


def test_purify_oracle_matches_formulas():
    rng = np.random.default_rng(7)
    for f_a, f_b in rng.uniform(0.3, 1.0, size=(100, 2)):
        p_ref, f_ref = oracle.purify_oracle(f_a, f_b)
        assert abs(p_ref - purify_success_prob(f_a, f_b)) <= TOLERANCE
        assert abs(f_ref - purified_fidelity(f_a, f_b)) <= TOLERANCE


def _oracle_swap_w(w_l, w_r, eps=0.0):
    rho, probs = oracle.swap_oracle(w_l, w_r, eps)
    assert abs(sum(probs) - 1.0) <= 1e-12
    return (4 * oracle.fidelity_to_target(rho) - 1) / 3


def test_swap_oracle_matches_formula():
    rng = np.random.default_rng(8)
    for w_l, w_r, eps in zip(
        rng.uniform(0, 1, 100), rng.uniform(0, 1, 100), rng.uniform(0, 0.2, 100)
    ):
        assert abs(_oracle_swap_w(w_l, w_r, eps) - swapped_w(w_l, w_r, eps)) <= TOLERANCE


def test_decohere_oracle_matches_formula():
    rng = np.random.default_rng(9)
    for w, dt, t_coh in zip(
        rng.uniform(0, 1, 100), rng.uniform(0, 5, 100), rng.uniform(0.1, 10, 100)
    ):
        ref = oracle.decohere_oracle(w, dt, t_coh)
        assert abs(ref - w * decay_factor(dt, t_coh)) <= TOLERANCE


def test_werner_density_is_a_state():
    for w in (0.0, 0.37, 1.0):
        rho = oracle.werner_density(w)
        assert rho.shape == (4, 4)
        assert abs(np.trace(rho).real - 1.0) <= 1e-12
        eigs = np.linalg.eigvalsh(rho)
        assert eigs.min() >= -1e-12
        assert abs(oracle.fidelity_to_target(rho) - (1 + 3 * w) / 4) <= 1e-12


def test_frozen_fractions_via_density_matrices():
    p, f = oracle.purify_oracle(0.8, 0.8)
    assert abs(p - 173.0 / 225.0) <= TOLERANCE
    assert abs(f - 145.0 / 173.0) <= TOLERANCE
    w_ref = _oracle_swap_w((4 * 0.9 - 1) / 3, (4 * 0.9 - 1) / 3)
    assert abs(w_ref - 169.0 / 225.0) <= TOLERANCE
    assert abs(oracle.decohere_oracle(0.9, 1.0, 1.0) - 0.9 / math.e) <= TOLERANCE
