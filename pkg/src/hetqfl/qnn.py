"""Layered PQC classifier with a linear read-out head.

Circuit layout, per layer: RX, RY, RZ on every qubit (qubit-major), then a
ring of CNOTs ``i -> (i + 1) % q`` (no CNOTs for a single qubit). When noise
is enabled, the per-gate composite channel from `NoiseConfig.channel` follows
every gate on each qubit it touched.

The flat parameter vector of a model is ``angles.ravel()`` followed by
``weights.ravel()`` and ``bias``.
"""
from __future__ import annotations

import functools
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .qsim import (
    NOISELESS,
    Gate,
    NoiseConfig,
    QuantumState,
    apply_1q_batch,
    apply_ptm_batch,
    cnot_pauli_map,
    cnot_permutation,
    expectations_batch,
    pauli_coords,
    permute_batch,
    ptm_from_kraus,
    rotation_matrix,
    sample_expectations,
    z_pauli_index,
    z_signs,
)

AXES = ("RX", "RY", "RZ")
SHIFT = math.pi / 2

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
ADAM_LR = 1e-3


@dataclass
class PqcModel:
    num_qubits: int
    num_layers: int
    angles: np.ndarray
    weights: np.ndarray
    bias: np.ndarray
    active: np.ndarray = None

    def __post_init__(self):
        if self.num_qubits < 1 or self.num_layers < 1:
            raise ValueError("a PQC needs at least one qubit and one layer")
        self.angles = np.array(self.angles, dtype=float).reshape(self.num_layers, self.num_qubits, 3)
        self.weights = np.atleast_2d(np.array(self.weights, dtype=float))
        self.bias = np.array(self.bias, dtype=float).ravel()
        if self.active is None:
            self.active = np.ones(self.angles.shape, dtype=bool)
        self.active = np.array(self.active, dtype=bool).reshape(self.angles.shape)
        if self.weights.shape != (len(self.bias), self.num_qubits):
            raise ValueError(
                f"decode head {self.weights.shape} / {self.bias.shape} inconsistent with {self.num_qubits} qubits"
            )
        if not np.all(np.isfinite(self.angles)):
            raise ValueError("angles must be finite")

    @property
    def num_classes(self) -> int:
        return len(self.bias)

    @property
    def num_angles(self) -> int:
        return self.angles.size

    @property
    def entangler(self) -> list[tuple[int, int]]:
        q = self.num_qubits
        return [] if q == 1 else [(i, (i + 1) % q) for i in range(q)]

    def copy(self) -> "PqcModel":
        return PqcModel(
            self.num_qubits, self.num_layers, self.angles.copy(), self.weights.copy(), self.bias.copy(), self.active.copy()
        )

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.angles.ravel(), self.weights.ravel(), self.bias])

    def with_vector(self, vec: np.ndarray) -> "PqcModel":
        vec = np.asarray(vec, dtype=float)
        n_a, n_w = self.angles.size, self.weights.size
        if vec.shape != (n_a + n_w + self.bias.size,):
            raise ValueError(f"parameter vector of shape {vec.shape} does not match model")
        return PqcModel(
            self.num_qubits,
            self.num_layers,
            vec[:n_a].reshape(self.angles.shape),
            vec[n_a : n_a + n_w].reshape(self.weights.shape),
            vec[n_a + n_w :],
            self.active.copy(),
        )

    def circuit(self) -> list[Gate]:
        """Gate list in execution order; elided (pruned) rotations are skipped."""
        gates = []
        for layer in range(self.num_layers):
            for qubit in range(self.num_qubits):
                for a, kind in enumerate(AXES):
                    if self.active[layer, qubit, a]:
                        gates.append(Gate(kind, (qubit,), float(self.angles[layer, qubit, a])))
            gates.extend(Gate("CNOT", pair) for pair in self.entangler)
        return gates


def build_pqc(num_qubits: int, num_layers: int, seed: int, num_classes: int = 2) -> PqcModel:
    if num_qubits < 1 or num_layers < 1:
        raise ValueError("a PQC needs at least one qubit and one layer")
    rng = np.random.default_rng(seed)
    angles = rng.uniform(-np.pi, np.pi, size=(num_layers, num_qubits, 3))
    return PqcModel(
        num_qubits,
        num_layers,
        angles,
        np.zeros((num_classes, num_qubits)),
        np.zeros(num_classes),
    )


def prune_gates(model: PqcModel, epsilon: float) -> PqcModel:
    """Zero and elide every rotation whose |angle| is below `epsilon`."""
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    out = model.copy()
    small = np.abs(out.angles) < epsilon
    out.angles[small] = 0.0
    out.active &= ~small
    return out


# ---------------------------------------------------------------------------
# Circuit execution
# ---------------------------------------------------------------------------
#
# Two backends. Noiseless forward passes on pure inputs use the statevector:
# states are (B, 2**q) complex and Z observables (q, D, D) matrices. Noisy or
# mixed runs, and Jacobians up to PTM_JACOBIAN_MAX_QUBITS, use Pauli-transfer
# form: states are real (B, 4**q) vectors, observables real (q, 4**q)
# vectors, and each rotation is fused with the channel that follows it.

_ROT_PLANE = {"RX": (2, 3), "RY": (3, 1), "RZ": (1, 2)}

# Above this width the (B, 4**q) transfer vectors cost more than statevector
# Jacobians with (q, D, D) observables.
PTM_JACOBIAN_MAX_QUBITS = 6


def rotation_ptm(kind: str, angle: float) -> np.ndarray:
    a, b = _ROT_PLANE[kind]
    c, s = math.cos(angle), math.sin(angle)
    out = np.eye(4)
    out[a, a] = out[b, b] = c
    out[b, a] = s
    out[a, b] = -s
    return out


@functools.lru_cache(maxsize=64)
def _noise_ptms(noise: NoiseConfig) -> tuple[np.ndarray, np.ndarray]:
    return ptm_from_kraus(noise.channel(False).operators), ptm_from_kraus(noise.channel(True).operators)


@functools.lru_cache(maxsize=256)
def _cnot_tables(control: int, target: int, q: int):
    return cnot_permutation(control, target, q), cnot_pauli_map(control, target, q)


def _rotations(model: PqcModel):
    """(angle_index, kind, qubit, angle) for each executed rotation, in order, per layer."""
    q = model.num_qubits
    for layer in range(model.num_layers):
        rots = []
        for qubit in range(q):
            for a, kind in enumerate(AXES):
                if model.active[layer, qubit, a]:
                    rots.append(((layer * q + qubit) * 3 + a, kind, qubit, float(model.angles[layer, qubit, a])))
        yield rots


def _pure_ops(model: PqcModel) -> list[tuple]:
    q = model.num_qubits
    ops = []
    for rots in _rotations(model):
        for idx, kind, qubit, theta in rots:
            ops.append(("u", qubit, idx, kind, theta, rotation_matrix(kind, theta)))
        for c, t in model.entangler:
            ops.append(("p", _cnot_tables(c, t, q)[0]))
    return ops


def _ptm_ops(model: PqcModel, noise: NoiseConfig) -> list[tuple]:
    q = model.num_qubits
    n1, n2 = _noise_ptms(noise) if noise.enabled else (None, None)
    ops = []
    for rots in _rotations(model):
        for idx, kind, qubit, theta in rots:
            u = rotation_ptm(kind, theta)
            ops.append(("u", qubit, idx, kind, theta, u if n1 is None else n1 @ u, n1))
        for c, t in model.entangler:
            perm, sign = _cnot_tables(c, t, q)[1]
            ops.append(("p", perm, sign, c, t, n2))
    return ops


def _signed_permute(r: np.ndarray, perm: np.ndarray, sign: np.ndarray) -> np.ndarray:
    out = np.empty_like(r)
    out[:, perm] = r * sign
    return out


def _ptm_forward(r: np.ndarray, op: tuple, q: int) -> np.ndarray:
    if op[0] == "u":
        return apply_ptm_batch(r, op[5], op[1], q)
    _, perm, sign, c, t, n2 = op
    r = _signed_permute(r, perm, sign)
    if n2 is not None:
        r = apply_ptm_batch(apply_ptm_batch(r, n2, c, q), n2, t, q)
    return r


def _ptm_backward(o: np.ndarray, op: tuple, q: int) -> np.ndarray:
    if op[0] == "u":
        return apply_ptm_batch(o, op[5].T, op[1], q)
    _, perm, sign, c, t, n2 = op
    if n2 is not None:
        o = apply_ptm_batch(apply_ptm_batch(o, n2.T, t, q), n2.T, c, q)
    # CNOT conjugation is an involution, so its signed permutation is self-adjoint.
    return _signed_permute(o, perm, sign)


def _pure_forward(psi: np.ndarray, op: tuple, q: int) -> np.ndarray:
    if op[0] == "u":
        return apply_1q_batch(psi, op[5], op[1], q)
    return permute_batch(psi, op[1])


def _pure_backward(obs: np.ndarray, op: tuple, q: int) -> np.ndarray:
    if op[0] == "u":
        return apply_1q_batch(obs, op[5].conj().T, op[1], q)
    return permute_batch(obs, op[1])


def _use_statevector(states: np.ndarray, noise: NoiseConfig) -> bool:
    return not noise.enabled and states.ndim == 2


def _prepare(states, model: PqcModel) -> np.ndarray:
    states = np.asarray(states, dtype=complex)
    if states.ndim == 1:
        states = states[None]
    dim = 2**model.num_qubits
    if states.shape[-1] != dim:
        raise ValueError(f"input states of dimension {states.shape[-1]} do not match {model.num_qubits} qubits")
    return states


def _exact_expectations(model: PqcModel, states: np.ndarray, noise: NoiseConfig) -> np.ndarray:
    q = model.num_qubits
    if _use_statevector(states, noise):
        psi = states
        for op in _pure_ops(model):
            psi = _pure_forward(psi, op, q)
        return expectations_batch(psi, q)
    r = pauli_coords(states, q)
    for op in _ptm_ops(model, noise):
        r = _ptm_forward(r, op, q)
    return r[:, [z_pauli_index(k, q) for k in range(q)]]


def expectations(
    model: PqcModel,
    states: np.ndarray,
    noise: NoiseConfig = NOISELESS,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Per-qubit <Z> after the circuit for a batch of encoded inputs, shape (B, q).

    `states` is (B, D) for pure inputs or (B, D, D) for density matrices.
    Exact unless `noise.shots` is set, in which case `rng` drives sampling.
    """
    out = _exact_expectations(model, _prepare(states, model), noise)
    if noise.shots is not None:
        out = sample_expectations(out, noise.shots, rng if rng is not None else np.random.default_rng(0))
    return out


def forward(model: PqcModel, state: QuantumState, noise: NoiseConfig = NOISELESS) -> np.ndarray:
    if state.num_qubits != model.num_qubits:
        raise ValueError(f"input has {state.num_qubits} qubits, model expects {model.num_qubits}")
    return expectations(model, state.data[None], noise)[0]


def _shifted_pairs(model, states, noise, statevector):
    """Yield (angle_index, f_plus, f_minus) with f_pm the (B, q) expectations of
    the circuit whose rotation `angle_index` is shifted by +/- pi/2; the final
    item is (None, expectations, None).

    The Z observables are pulled back through every op after a rotation, the
    inputs are pushed forward to just before it, and only the shifted rotation
    itself is evaluated per shift.
    """
    q = model.num_qubits
    if statevector:
        ops = _pure_ops(model)
        signs = z_signs(q)
        obs = np.zeros((q, 2**q, 2**q), dtype=complex)
        for k in range(q):
            np.fill_diagonal(obs[k], signs[k])
        after = {}
        for op in reversed(ops):
            if op[0] == "u":
                after[op[2]] = obs
            obs = _pure_backward(obs, op, q)
        psi = states
        for op in ops:
            if op[0] == "u":
                _, qubit, idx, kind, theta, _ = op
                vals = []
                for s in (SHIFT, -SHIFT):
                    shifted = apply_1q_batch(psi, rotation_matrix(kind, theta + s), qubit, q)
                    vals.append(np.einsum("bm,kmn,bn->bk", shifted.conj(), after[idx], shifted).real)
                yield idx, vals[0], vals[1]
            psi = _pure_forward(psi, op, q)
        yield None, expectations_batch(psi, q), None
        return

    ops = _ptm_ops(model, noise)
    zidx = [z_pauli_index(k, q) for k in range(q)]
    obs = np.zeros((q, 4**q))
    obs[np.arange(q), zidx] = 1.0
    after = {}
    for op in reversed(ops):
        if op[0] == "u":
            noise_ptm = op[6]
            after[op[2]] = obs if noise_ptm is None else apply_ptm_batch(obs, noise_ptm.T, op[1], q)
        obs = _ptm_backward(obs, op, q)
    r = pauli_coords(states, q)
    for op in ops:
        if op[0] == "u":
            _, qubit, idx, kind, theta = op[:5]
            plus = apply_ptm_batch(r, rotation_ptm(kind, theta + SHIFT), qubit, q) @ after[idx].T
            minus = apply_ptm_batch(r, rotation_ptm(kind, theta - SHIFT), qubit, q) @ after[idx].T
            yield idx, plus, minus
        r = _ptm_forward(r, op, q)
    yield None, r[:, zidx], None


def expectation_jacobian(
    model: PqcModel,
    states: np.ndarray,
    noise: NoiseConfig = NOISELESS,
    rng: np.random.Generator | None = None,
    statevector: bool | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Expectations (B, q) and their shift-rule angle Jacobian (B, q, n_angles).

    Entry j is ``[f(theta_j + pi/2) - f(theta_j - pi/2)] / 2`` with both
    shifted circuits evaluated exactly (or each sampled independently when
    `noise.shots` is set). Elided rotations get a zero column.
    """
    states = _prepare(states, model)
    if statevector is None:
        statevector = _use_statevector(states, noise) and model.num_qubits > PTM_JACOBIAN_MAX_QUBITS
    elif statevector and not _use_statevector(states, noise):
        raise ValueError("the statevector backend needs pure inputs and no noise")
    jac = np.zeros((states.shape[0], model.num_qubits, model.num_angles))
    shots = noise.shots
    if shots is not None and rng is None:
        rng = np.random.default_rng(0)
    exp = None
    for idx, plus, minus in _shifted_pairs(model, states, noise, statevector):
        if idx is None:
            exp = plus
            break
        if shots is not None:
            plus = sample_expectations(plus, shots, rng)
            minus = sample_expectations(minus, shots, rng)
        jac[:, :, idx] = (plus - minus) / 2
    if shots is not None:
        exp = sample_expectations(exp, shots, rng)
    return exp, jac


# ---------------------------------------------------------------------------
# Read-out and loss
# ---------------------------------------------------------------------------


def decode(expectations: np.ndarray, model: PqcModel) -> np.ndarray:
    e = np.asarray(expectations, dtype=float)
    if e.shape[-1] != model.num_qubits:
        raise ValueError(f"expected {model.num_qubits} expectation values, got {e.shape[-1]}")
    return e @ model.weights.T + model.bias


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def loss_ce(logits, label: int) -> float:
    logits = np.asarray(logits, dtype=float)
    if not 0 <= label < logits.shape[-1]:
        raise ValueError(f"label {label} outside 0..{logits.shape[-1] - 1}")
    return float(-_log_softmax(logits)[label])


def batch_loss(model: PqcModel, states: np.ndarray, labels: np.ndarray, noise: NoiseConfig = NOISELESS) -> float:
    logits = decode(expectations(model, states, noise), model)
    labels = np.asarray(labels, dtype=int)
    return float(-_log_softmax(logits)[np.arange(len(labels)), labels].mean())


def evaluate(
    model: PqcModel,
    states: np.ndarray,
    labels: np.ndarray,
    noise: NoiseConfig = NOISELESS,
    rng: np.random.Generator | None = None,
) -> tuple[float, float]:
    """(mean cross-entropy, accuracy) of `model` on a labelled batch."""
    labels = np.asarray(labels, dtype=int)
    if len(labels) == 0:
        return float("nan"), float("nan")
    logits = decode(expectations(model, states, noise, rng), model)
    loss = float(-_log_softmax(logits)[np.arange(len(labels)), labels].mean())
    acc = float(np.mean(np.argmax(logits, axis=1) == labels))
    return loss, acc


# ---------------------------------------------------------------------------
# Gradients
# ---------------------------------------------------------------------------


@dataclass
class GradientSample:
    grad: np.ndarray
    xi_norm: float
    weight: float
    loss: float = float("nan")


def noise_surrogate(noise: NoiseConfig, scale: float = 1.0) -> float:
    """Configured gradient-noise magnitude for exact simulation: c * (gamma_ad + p_pd)."""
    return scale * (noise.gamma_ad + noise.p_pd) if noise.enabled else 0.0


def loss_gradient(
    model: PqcModel,
    states: np.ndarray,
    labels: np.ndarray,
    noise: NoiseConfig = NOISELESS,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, float]:
    """Batch-mean cross-entropy gradient (flat, model order) and loss."""
    labels = np.asarray(labels, dtype=int)
    exp, jac = expectation_jacobian(model, states, noise, rng)
    logits = decode(exp, model)
    logp = _log_softmax(logits)
    n = len(labels)
    loss = float(-logp[np.arange(n), labels].mean())
    delta = np.exp(logp)
    delta[np.arange(n), labels] -= 1.0
    delta /= n
    g_w = delta.T @ exp
    g_b = delta.sum(axis=0)
    g_e = delta @ model.weights
    g_angles = np.einsum("bk,bkj->j", g_e, jac)
    return np.concatenate([g_angles, g_w.ravel(), g_b]), loss


def grad_parameter_shift(
    model: PqcModel,
    batch,
    noise: NoiseConfig = NOISELESS,
    gamma_ns: float = 0.0,
    rng: np.random.Generator | None = None,
    xi_scale: float = 1.0,
) -> GradientSample:
    """Shift-rule gradient of the batch loss with a noise estimate attached.

    `batch` is a list of ``(QuantumState, label)`` pairs or a tuple
    ``(states_array, labels_array)``. With finite shots two independent
    gradient evaluations are averaged and the norm of their difference is the
    noise estimate; in exact mode the estimate is `noise_surrogate`.
    """
    states, labels = _unpack_batch(batch)
    if len(labels) == 0:
        raise ValueError("empty batch")
    if noise.shots is not None:
        rng = rng if rng is not None else np.random.default_rng(0)
        g1, l1 = loss_gradient(model, states, labels, noise, rng)
        g2, l2 = loss_gradient(model, states, labels, noise, rng)
        grad, loss = (g1 + g2) / 2, (l1 + l2) / 2
        xi = float(np.linalg.norm(g1 - g2))
    else:
        grad, loss = loss_gradient(model, states, labels, noise)
        xi = noise_surrogate(noise, xi_scale)
    return GradientSample(grad, xi, float(np.exp(-gamma_ns * xi)), loss)


def _unpack_batch(batch):
    if isinstance(batch, tuple) and len(batch) == 2 and isinstance(batch[0], np.ndarray):
        return batch[0], np.asarray(batch[1], dtype=int)
    batch = list(batch)
    if not batch:
        return np.zeros((0, 1)), np.zeros(0, dtype=int)
    return np.stack([s.data for s, _ in batch]), np.array([y for _, y in batch], dtype=int)


# ---------------------------------------------------------------------------
# Optimizers
# ---------------------------------------------------------------------------


@dataclass
class TrainerState:
    """Local optimizer settings plus Adam moments for one client round.

    The learning rate is ``eta * lr_decay ** (round_index // decay_every)``.
    """

    eta: float = ADAM_LR
    lam: float = 0.0
    gamma_ns: float = 0.0
    optimizer: str = "sgd"
    round_index: int = 0
    lr_decay: float = 0.9
    decay_every: int = 10
    step: int = 0
    m: np.ndarray | None = field(default=None, repr=False)
    v: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be > 0")
        if self.lam < 0 or self.gamma_ns < 0:
            raise ValueError("lambda and gamma_ns must be >= 0")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def lr(self) -> float:
        return self.eta * self.lr_decay ** (self.round_index // self.decay_every)

    def fresh(self, round_index: int) -> "TrainerState":
        return replace(self, round_index=round_index, step=0, m=None, v=None)


def local_update_spqfl(omega, grad: GradientSample, omega_global, trainer: TrainerState) -> np.ndarray:
    """One personalized step scaled by the noise-aware weight:
    ``omega - lr * x * (g + lam * (omega - omega_global))``."""
    omega = np.asarray(omega, dtype=float)
    omega_global = np.asarray(omega_global, dtype=float)
    g = np.asarray(grad.grad, dtype=float)
    if omega.shape != g.shape or omega.shape != omega_global.shape:
        raise ValueError(f"shape mismatch: {omega.shape}, {g.shape}, {omega_global.shape}")
    return omega - trainer.lr() * grad.weight * (g + trainer.lam * (omega - omega_global))


def adam_step(omega, grad, trainer: TrainerState, omega_global=None, weight: float = 1.0) -> np.ndarray:
    """Adam update; mutates the moment buffers held by `trainer`.

    The personalization pull ``lam * (omega - omega_global)`` is added to the
    gradient before the moments are updated, and `weight` scales the step.
    """
    omega = np.asarray(omega, dtype=float)
    g = np.asarray(grad.grad if isinstance(grad, GradientSample) else grad, dtype=float)
    if g.shape != omega.shape:
        raise ValueError(f"shape mismatch: {omega.shape} vs {g.shape}")
    if omega_global is not None and trainer.lam:
        omega_global = np.asarray(omega_global, dtype=float)
        if omega_global.shape != omega.shape:
            raise ValueError("global parameters have the wrong shape")
        g = g + trainer.lam * (omega - omega_global)
    if trainer.m is None:
        trainer.m = np.zeros_like(omega)
        trainer.v = np.zeros_like(omega)
    trainer.step += 1
    trainer.m = ADAM_BETA1 * trainer.m + (1 - ADAM_BETA1) * g
    trainer.v = ADAM_BETA2 * trainer.v + (1 - ADAM_BETA2) * g * g
    m_hat = trainer.m / (1 - ADAM_BETA1**trainer.step)
    v_hat = trainer.v / (1 - ADAM_BETA2**trainer.step)
    return omega - weight * trainer.lr() * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

CHECKPOINT_MAGIC = b"HQFL"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<4sIIII")


def save_checkpoint(model: PqcModel, path) -> None:
    """Little-endian binary: magic, version, q, L, classes (uint32), then
    angles (float64, row-major L x q x 3), active mask (uint8, same order),
    weights (float64, classes x q) and bias (float64)."""
    blob = _HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, model.num_qubits, model.num_layers, model.num_classes)
    blob += model.angles.astype("<f8").tobytes()
    blob += model.active.astype(np.uint8).tobytes()
    blob += model.weights.astype("<f8").tobytes()
    blob += model.bias.astype("<f8").tobytes()
    Path(path).write_bytes(blob)


def load_checkpoint(path) -> PqcModel:
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise ValueError("checkpoint truncated")
    magic, version, q, layers, classes = _HEADER.unpack_from(blob)
    if magic != CHECKPOINT_MAGIC or version != CHECKPOINT_VERSION:
        raise ValueError("not a version-1 model checkpoint")
    n_a = layers * q * 3
    sizes = [n_a * 8, n_a, classes * q * 8, classes * 8]
    if len(blob) != _HEADER.size + sum(sizes):
        raise ValueError("checkpoint size does not match its header")
    pos = _HEADER.size
    parts = []
    for size, dtype in zip(sizes, ("<f8", np.uint8, "<f8", "<f8")):
        parts.append(np.frombuffer(blob, dtype=dtype, count=size // np.dtype(dtype).itemsize, offset=pos))
        pos += size
    angles, active, weights, bias = parts
    return PqcModel(q, layers, angles, weights.reshape(classes, q), bias, active.astype(bool))
