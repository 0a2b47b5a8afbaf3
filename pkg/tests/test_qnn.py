import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hetqfl.qnn import (
    GradientSample,
    PqcModel,
    TrainerState,
    adam_step,
    batch_loss,
    build_pqc,
    decode,
    expectation_jacobian,
    expectations,
    forward,
    grad_parameter_shift,
    load_checkpoint,
    local_update_spqfl,
    loss_ce,
    prune_gates,
    save_checkpoint,
)
from hetqfl.qsim import NOISELESS, NoiseConfig, QuantumState

from .oracle import central_fd, pqc_expectations, pqc_loss, random_pure


def ry_only(theta):
    """q=1, L=1 model with only RY active and a head that reads raw <Z>."""
    active = np.array([[[False, True, False]]])
    return PqcModel(1, 1, [[[0.0, theta, 0.0]]], [[1.0]], [0.0], active)


# ---------------------------------------------------------------------------
# Construction and forward pass
# ---------------------------------------------------------------------------


def test_build_is_seeded():
    a, b = build_pqc(3, 2, seed=4), build_pqc(3, 2, seed=4)
    assert np.array_equal(a.to_vector(), b.to_vector())
    assert np.all(np.abs(a.angles) <= math.pi)
    assert np.all(a.weights == 0) and np.all(a.bias == 0)


def test_single_qubit_has_no_cnots():
    m = build_pqc(1, 3, seed=0)
    assert m.entangler == []
    assert all(g.kind != "CNOT" for g in m.circuit())


def test_angle_tensor_shape():
    m = build_pqc(4, 3, seed=0)
    assert m.angles.shape == (3, 4, 3) and m.num_angles == 36
    assert m.entangler == [(0, 1), (1, 2), (2, 3), (3, 0)]


def test_identity_circuit_reads_plus_one():
    m = PqcModel(3, 2, np.zeros((2, 3, 3)), np.zeros((2, 3)), np.zeros(2))
    assert np.allclose(forward(m, QuantumState.zero(3)), 1.0)


def test_ry_pi_flips():
    assert forward(ry_only(math.pi), QuantumState.zero(1))[0] == pytest.approx(-1)


def test_full_damping_returns_ground():
    m = build_pqc(1, 2, seed=3)
    noise = NoiseConfig(gamma_ad=1.0, enabled=True)
    assert forward(m, QuantumState(1, [0, 1]), noise)[0] == pytest.approx(1.0, abs=1e-12)


def test_forward_qubit_mismatch():
    with pytest.raises(ValueError):
        forward(build_pqc(2, 1, 0), QuantumState.zero(3))


def test_noiseless_paths_agree():
    rng = np.random.default_rng(1)
    m = build_pqc(3, 2, seed=1)
    psi = np.stack([random_pure(3, rng) for _ in range(4)])
    rho = np.einsum("bi,bj->bij", psi, psi.conj())
    assert np.allclose(expectations(m, psi), expectations(m, rho), atol=1e-12)


@pytest.mark.parametrize("noise", [None, (0.07, 0.11, 50.0, 70.0, 50.0, 300.0)])
def test_forward_matches_kron_oracle(noise):
    rng = np.random.default_rng(2)
    m = build_pqc(3, 2, seed=2)
    psi = random_pure(3, rng)
    cfg = NOISELESS if noise is None else NoiseConfig(noise[0], noise[1], enabled=True)
    got = forward(m, QuantumState(3, psi), cfg)
    want = pqc_expectations(m.angles, 3, 2, np.outer(psi, psi.conj()), noise)
    assert np.allclose(got, want, atol=1e-12)


def test_forward_deterministic():
    m = build_pqc(3, 2, seed=5)
    s = QuantumState(3, random_pure(3, np.random.default_rng(5)))
    noise = NoiseConfig(0.1, 0.1, enabled=True)
    assert np.array_equal(forward(m, s, noise), forward(m, s, noise))


# ---------------------------------------------------------------------------
# Decode and loss
# ---------------------------------------------------------------------------


def test_decode_examples():
    m = PqcModel(2, 1, np.zeros((1, 2, 3)), [[1, -1]], [0.5])
    assert decode(np.array([1.0, -1.0]), m)[0] == pytest.approx(2.5)
    m0 = PqcModel(2, 1, np.zeros((1, 2, 3)), np.zeros((2, 2)), np.zeros(2))
    assert np.all(decode(np.array([0.3, 0.2]), m0) == 0)
    eye = PqcModel(2, 1, np.zeros((1, 2, 3)), np.eye(2), np.zeros(2))
    assert np.allclose(decode(np.array([0.3, -0.2]), eye), [0.3, -0.2])
    with pytest.raises(ValueError):
        decode(np.ones(3), m)


def test_loss_ce_examples():
    assert loss_ce([0, 0], 0) == pytest.approx(math.log(2), abs=1e-5)
    assert loss_ce([100, 0], 0) == pytest.approx(0, abs=1e-12)
    assert loss_ce(np.full(7, 0.3), 4) == pytest.approx(math.log(7))
    with pytest.raises(ValueError):
        loss_ce([0, 0], 2)


# ---------------------------------------------------------------------------
# Gradients
# ---------------------------------------------------------------------------


def test_shift_rule_cosine():
    s = np.array([[1.0, 0.0]])
    _, jac0 = expectation_jacobian(ry_only(0.0), s)
    _, jac1 = expectation_jacobian(ry_only(math.pi / 2), s)
    assert jac0[0, 0, 1] == pytest.approx(0, abs=1e-12)
    assert jac1[0, 0, 1] == pytest.approx(-1, abs=1e-12)
    assert jac0[0, 0, 0] == 0 and jac0[0, 0, 2] == 0  # elided gates


def test_empty_batch_rejected():
    with pytest.raises(ValueError):
        grad_parameter_shift(build_pqc(1, 1, 0), [])


def _random_case(seed, noisy=False):
    rng = np.random.default_rng(seed)
    q, layers, classes = int(rng.integers(1, 4)), int(rng.integers(1, 3)), int(rng.integers(2, 4))
    m = build_pqc(q, layers, seed, classes)
    m = m.with_vector(np.concatenate([m.angles.ravel(), rng.normal(size=m.weights.size + m.bias.size)]))
    b = int(rng.integers(1, 5))
    states = np.stack([random_pure(q, rng) for _ in range(b)])
    labels = rng.integers(0, classes, size=b)
    return m, states, labels, q, layers, classes


@pytest.mark.parametrize("seed", range(6))
def test_gradient_matches_oracle_finite_differences(seed):
    m, states, labels, q, layers, classes = _random_case(seed)
    g = grad_parameter_shift(m, (states, labels)).grad
    fd = central_fd(lambda v: pqc_loss(v, q, layers, classes, states, labels), m.to_vector())
    assert np.max(np.abs(g - fd)) < 1e-5


@pytest.mark.parametrize("seed", range(3))
def test_noisy_gradient_matches_oracle_finite_differences(seed):
    m, states, labels, q, layers, classes = _random_case(100 + seed)
    noise = NoiseConfig(0.08, 0.05, enabled=True)
    tup = (noise.gamma_ad, noise.p_pd, noise.t1_us, noise.t2_us, noise.gate_time_1q_ns, noise.gate_time_2q_ns)
    g = grad_parameter_shift(m, (states, labels), noise).grad
    fd = central_fd(lambda v: pqc_loss(v, q, layers, classes, states, labels, tup), m.to_vector())
    assert np.max(np.abs(g - fd)) < 1e-5


def test_backends_agree_on_jacobian():
    m, states, *_ = _random_case(7)
    e1, j1 = expectation_jacobian(m, states, statevector=True)
    e2, j2 = expectation_jacobian(m, states, statevector=False)
    assert np.allclose(e1, e2, atol=1e-12) and np.allclose(j1, j2, atol=1e-12)


def test_statevector_backend_refuses_noise():
    m, states, *_ = _random_case(8)
    with pytest.raises(ValueError):
        expectation_jacobian(m, states, NoiseConfig(0.1, enabled=True), statevector=True)


def test_list_and_array_batches_agree():
    m, states, labels, q, *_ = _random_case(9)
    pairs = [(QuantumState(q, s), int(y)) for s, y in zip(states, labels)]
    assert np.array_equal(grad_parameter_shift(m, pairs).grad, grad_parameter_shift(m, (states, labels)).grad)


def test_noise_weight_from_surrogate():
    m, states, labels, *_ = _random_case(10)
    noise = NoiseConfig(0.05, 0.15, enabled=True)
    g = grad_parameter_shift(m, (states, labels), noise, gamma_ns=2.0)
    assert g.xi_norm == pytest.approx(0.2)
    assert abs(g.weight - math.exp(-2.0 * g.xi_norm)) < 1e-12


def test_shot_mode_noise_estimate():
    m, states, labels, *_ = _random_case(11)
    noise = NoiseConfig(enabled=True, shots=200)
    a = grad_parameter_shift(m, (states, labels), noise, 1.0, np.random.default_rng(3))
    b = grad_parameter_shift(m, (states, labels), noise, 1.0, np.random.default_rng(3))
    assert a.xi_norm > 0 and np.array_equal(a.grad, b.grad)
    assert abs(a.weight - math.exp(-a.xi_norm)) < 1e-12


def test_sgd_reduces_loss_on_one_sample():
    m, states, labels, *_ = _random_case(12)
    states, labels = states[:1], labels[:1]
    trainer = TrainerState(eta=0.05)
    start = batch_loss(m, states, labels)
    omega = m.to_vector()
    for _ in range(200):
        g = grad_parameter_shift(m.with_vector(omega), (states, labels))
        omega = local_update_spqfl(omega, g, omega, trainer)
    assert batch_loss(m.with_vector(omega), states, labels) < start


# ---------------------------------------------------------------------------
# Update rules
# ---------------------------------------------------------------------------


def test_scalar_personalized_update():
    trainer = TrainerState(eta=0.1, lam=0.1)
    out = local_update_spqfl(np.array([1.0]), GradientSample(np.array([0.5]), 0.0, 1.0), np.array([0.0]), trainer)
    assert out[0] == pytest.approx(0.94, abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.floats(-10, 10), min_size=1, max_size=6),
    st.floats(1e-4, 1.0),
)
def test_update_degenerates_to_sgd(vals, eta):
    w = np.array(vals)
    g = np.sin(w)
    out = local_update_spqfl(w, GradientSample(g, 0.0, 1.0), np.zeros_like(w), TrainerState(eta=eta))
    assert np.array_equal(out, w - eta * g)


def test_update_fixed_point_and_shape_error():
    w = np.array([0.3, -0.2])
    t = TrainerState(eta=0.1, lam=0.5)
    assert np.array_equal(local_update_spqfl(w, GradientSample(np.zeros(2), 0, 1), w, t), w)
    with pytest.raises(ValueError):
        local_update_spqfl(w, GradientSample(np.zeros(3), 0, 1), w, t)


def test_adam_zero_gradient_is_noop():
    w = np.array([0.2, -1.0])
    assert np.array_equal(adam_step(w, np.zeros(2), TrainerState(optimizer="adam")), w)


def test_adam_first_step_magnitude():
    t = TrainerState(eta=1e-3, optimizer="adam")
    w = np.zeros(4)
    out = adam_step(w, np.array([3.0, -0.01, 1e-3, 50.0]), t)
    assert np.all(np.abs(out - w) <= 1e-3 * (1 + 1e-8))
    assert np.allclose(np.abs(out - w), 1e-3, rtol=1e-4)


def test_lr_decays_every_ten_rounds():
    r9, r10 = TrainerState(eta=1e-3, round_index=9), TrainerState(eta=1e-3, round_index=10)
    r0 = TrainerState(eta=1e-3, round_index=0)
    assert abs(r10.lr() / r9.lr() - 0.9) < 1e-12
    assert abs(r10.lr() - 0.9 * r0.lr()) < 1e-12


def test_trainer_validation():
    with pytest.raises(ValueError):
        TrainerState(eta=0)
    with pytest.raises(ValueError):
        TrainerState(lam=-1)


# ---------------------------------------------------------------------------
# Pruning and checkpoints
# ---------------------------------------------------------------------------


def test_prune_zero_is_identity():
    m = build_pqc(2, 2, 0)
    p = prune_gates(m, 0.0)
    assert np.array_equal(p.angles, m.angles) and p.active.all()


def test_prune_thresholds():
    m = PqcModel(1, 1, [[[0.001, 1.0, -0.005]]], np.zeros((2, 1)), np.zeros(2))
    p = prune_gates(m, 0.01)
    assert np.array_equal(p.angles.ravel(), [0.0, 1.0, 0.0])
    assert p.active.ravel().tolist() == [False, True, False]


def test_prune_everything_leaves_cnot_ring():
    m = build_pqc(3, 2, 0)
    p = prune_gates(m, 10.0)
    assert all(g.kind == "CNOT" for g in p.circuit())
    assert np.allclose(forward(p, QuantumState.zero(3)), 1.0)


def test_pruned_gates_get_zero_gradient():
    m, states, labels, *_ = _random_case(13)
    p = prune_gates(m, 1.0)
    g = grad_parameter_shift(p, (states, labels)).grad[: p.num_angles]
    assert np.all(g[~p.active.ravel()] == 0)


def test_pruning_small_epsilon_changes_output_little():
    rng = np.random.default_rng(14)
    for seed in range(5):
        m = build_pqc(3, 2, seed)
        a = m.angles.copy()
        a[rng.random(a.shape) < 0.3] = rng.uniform(-5e-4, 5e-4)
        m = PqcModel(3, 2, a, m.weights, m.bias)
        s = QuantumState(3, random_pure(3, rng))
        assert np.max(np.abs(forward(prune_gates(m, 1e-3), s) - forward(m, s))) < 1e-2


def test_checkpoint_roundtrip(tmp_path):
    m = prune_gates(build_pqc(3, 2, 1, num_classes=4), 0.5)
    m = m.with_vector(m.to_vector() + np.linspace(0, 1, m.to_vector().size))
    path = tmp_path / "model.bin"
    save_checkpoint(m, path)
    back = load_checkpoint(path)
    assert np.array_equal(back.to_vector(), m.to_vector())
    assert np.array_equal(back.active, m.active)
    blob = path.read_bytes()
    assert blob[:4] == b"HQFL" and int.from_bytes(blob[8:12], "little") == 3


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"nope" + bytes(40))
    with pytest.raises(ValueError):
        load_checkpoint(path)
