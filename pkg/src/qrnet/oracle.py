"""Brute-force density-matrix check of the closed-form pair operations.

The analytic maps in :mod:`qrnet.physics` update a single Werner parameter.
Here the same operations are carried out the slow way, as circuits on
explicit 4x4 and 16x16 density matrices:

    purification  bilateral CNOT, measure the sacrificial pair in Z,
                  keep on matching outcomes, trace out, renormalize
    swapping      project the two middle qubits onto the Bell basis,
                  apply the outcome's Pauli fix-up on the far qubit,
                  average over outcomes
    decay         two-qubit depolarizing channel with p = exp(-dt/t_coh)

Nothing in this module consults the analytic formulas, so agreement is a
real cross-check and not bookkeeping.
"""

from __future__ import annotations

import numpy as np

_SQ2 = 1.0 / np.sqrt(2.0)

# target pair state on |00>,|01>,|10>,|11>
TARGET = np.array([_SQ2, 0.0, 0.0, _SQ2])

# full measurement basis for the swap: the plus/minus partners of the
# target and the two cross states
BELL_BASIS = [
    np.array([_SQ2, 0.0, 0.0, _SQ2]),    # kept as-is
    np.array([_SQ2, 0.0, 0.0, -_SQ2]),   # fixed by Z
    np.array([0.0, _SQ2, _SQ2, 0.0]),    # fixed by X
    np.array([0.0, _SQ2, -_SQ2, 0.0]),   # fixed by Z then X
]

_I2 = np.eye(2)
_X = np.array([[0.0, 1.0], [1.0, 0.0]])
_Z = np.array([[1.0, 0.0], [0.0, -1.0]])

# outcome index -> correction on the far qubit, same order as BELL_BASIS
_CORRECTIONS = [_I2, _Z, _X, _Z @ _X]


def werner_density(w: float) -> np.ndarray:
    """4x4 Werner state: target pair mixed with white noise."""
    pure = np.outer(TARGET, TARGET)
    return w * pure + (1.0 - w) / 4.0 * np.eye(4)


def fidelity_to_target(rho: np.ndarray) -> float:
    return float(TARGET @ rho @ TARGET)


def depolarize(rho: np.ndarray, p_keep: float) -> np.ndarray:
    """Two-qubit depolarizing channel keeping the state with prob p_keep."""
    dim = rho.shape[0]
    return p_keep * rho + (1.0 - p_keep) * np.trace(rho) * np.eye(dim) / dim


def _cnot(control: int, target: int, n_qubits: int) -> np.ndarray:
    """CNOT as a permutation matrix; qubit 0 is the most significant bit."""
    dim = 2 ** n_qubits
    mat = np.zeros((dim, dim))
    for i in range(dim):
        c_bit = (i >> (n_qubits - 1 - control)) & 1
        j = i ^ (c_bit << (n_qubits - 1 - target))
        mat[j, i] = 1.0
    return mat


def purify_oracle(f_a: float, f_b: float) -> tuple[float, float]:
    """(success probability, output fidelity) of one purification round.

    Pair a sits on qubits (0, 1), the sacrificial pair b on (2, 3).  Both
    stations apply CNOT from their half of a onto their half of b, measure
    the b qubits in Z, and keep pair a when the outcomes agree.
    """
    w_a = (4.0 * f_a - 1.0) / 3.0
    w_b = (4.0 * f_b - 1.0) / 3.0
    rho = np.kron(werner_density(w_a), werner_density(w_b))

    circuit = _cnot(1, 3, 4) @ _cnot(0, 2, 4)
    rho = circuit @ rho @ circuit.T

    # diagonal projector onto equal Z outcomes of qubits 2 and 3
    keep = np.zeros(16)
    for i in range(16):
        bit2 = (i >> 1) & 1
        bit3 = i & 1
        if bit2 == bit3:
            keep[i] = 1.0
    rho_kept = keep[:, None] * rho * keep[None, :]

    p_success = float(np.trace(rho_kept).real)
    reduced = np.einsum("ikjk->ij", rho_kept.reshape(4, 4, 4, 4))
    return p_success, fidelity_to_target(reduced) / p_success


def swap_oracle(w_left: float, w_right: float, eps: float = 0.0):
    """Entanglement swap carried out as an explicit Bell measurement.

    The left pair spans qubits (0, 1), the right pair (2, 3); qubits 1 and 2
    sit at the swapping node.  Each Bell outcome is projected, the matching
    Pauli correction is applied to qubit 3, and the four branches are
    averaged.  A nonzero eps adds a depolarizing step for the residual
    operation error.

    Returns (output Werner density on qubits (0, 3), outcome probabilities).
    """
    rho = np.kron(werner_density(w_left), werner_density(w_right))

    out = np.zeros((4, 4))
    probs = []
    for bell, fix in zip(BELL_BASIS, _CORRECTIONS):
        # contraction <bell|_{qubits 1,2} rho |bell>_{qubits 1,2}
        tensor = rho.reshape(2, 4, 2, 2, 4, 2)
        branch = np.einsum("k,akbcld,l->abcd", bell, tensor, bell).reshape(4, 4)
        correction = np.kron(_I2, fix)
        branch = correction @ branch @ correction.T
        probs.append(float(np.trace(branch).real))
        out += branch

    out = depolarize(out, 1.0 - eps)
    return out, probs


def decohere_oracle(w: float, dt: float, t_coh: float) -> float:
    """Werner parameter after depolarizing storage noise on the matrix."""
    p_keep = np.exp(-dt / t_coh) if np.isfinite(t_coh) else 1.0
    rho = depolarize(werner_density(w), p_keep)
    # recover w from the target fidelity of the resulting matrix
    return (4.0 * fidelity_to_target(rho) - 1.0) / 3.0


def run_suite(n_pairs: int = 200, seed: int = 20240901) -> dict[str, float]:
    """Compare the analytic maps against the matrix circuits.

    Draws random fidelity pairs, runs both routes, and reports the largest
    absolute deviations.  Used by the command line ``oracle`` check and by
    the test suite.
    """
    from . import physics

    rng = np.random.default_rng(seed)
    dev_p = dev_f = dev_swap = dev_decay = 0.0

    for _ in range(n_pairs):
        f_a, f_b = rng.uniform(0.25, 1.0, size=2)
        p_ana = physics.purify_success_prob(f_a, f_b)
        f_ana = physics.purified_fidelity(f_a, f_b)
        p_mat, f_mat = purify_oracle(f_a, f_b)
        dev_p = max(dev_p, abs(p_ana - p_mat))
        dev_f = max(dev_f, abs(f_ana - f_mat))

        w_l, w_r = rng.uniform(0.0, 1.0, size=2)
        eps = rng.uniform(0.0, 0.2)
        rho_out, _ = swap_oracle(w_l, w_r, eps)
        f_swap = fidelity_to_target(rho_out)
        w_ana = physics.swapped_w(w_l, w_r, eps)
        dev_swap = max(dev_swap, abs((1.0 + 3.0 * w_ana) / 4.0 - f_swap))

        w = rng.uniform(0.0, 1.0)
        dt = rng.uniform(0.0, 3.0)
        t_coh = rng.uniform(0.1, 5.0)
        w_mat = decohere_oracle(w, dt, t_coh)
        dev_decay = max(dev_decay, abs(w * np.exp(-dt / t_coh) - w_mat))

    return {
        "pairs": float(n_pairs),
        "purify_success_prob": dev_p,
        "purify_fidelity": dev_f,
        "swap_fidelity": dev_swap,
        "decay": dev_decay,
    }
