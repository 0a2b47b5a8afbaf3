"""Small statevector / density-matrix engine with single-qubit Kraus noise.

Qubit 0 is the most significant bit of the computational-basis index.
States are immutable in spirit: every operation returns a new state.

Two layers live here. The `QuantumState` / `Gate` / `KrausChannel` API is the
readable, checked interface. The underscore-free batch helpers
(`apply_1q_batch`, `apply_kraus_batch`, `permute_batch`) operate on raw
arrays of shape ``(B, D)`` (pure) or ``(B, D, D)`` (mixed) and are what the
circuit model uses in its hot loop.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

STATE_TOL = 1e-9
CPTP_TOL = 1e-10
UNITARY_TOL = 1e-12

GATE_KINDS = ("X", "H", "RX", "RY", "RZ", "CNOT")
ROTATIONS = ("RX", "RY", "RZ")
CHANNEL_LABELS = ("amplitude_damping", "phase_damping", "thermal_relaxation", "identity", "composite")

_I2 = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)


class QuantumError(ValueError):
    """Raised for malformed states, gates, or channels."""


def rotation_matrix(kind: str, angle: float) -> np.ndarray:
    c, s = math.cos(angle / 2), math.sin(angle / 2)
    if kind == "RX":
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)
    if kind == "RY":
        return np.array([[c, -s], [s, c]], dtype=complex)
    if kind == "RZ":
        return np.array([[c - 1j * s, 0], [0, c + 1j * s]], dtype=complex)
    raise QuantumError(f"not a rotation gate: {kind}")


def rotation_matrices(kind: str, angles: np.ndarray) -> np.ndarray:
    """Stack of rotation matrices, shape ``angles.shape + (2, 2)``."""
    angles = np.asarray(angles, dtype=float)
    c, s = np.cos(angles / 2), np.sin(angles / 2)
    out = np.zeros(angles.shape + (2, 2), dtype=complex)
    if kind == "RX":
        out[..., 0, 0] = c
        out[..., 1, 1] = c
        out[..., 0, 1] = -1j * s
        out[..., 1, 0] = -1j * s
    elif kind == "RY":
        out[..., 0, 0] = c
        out[..., 1, 1] = c
        out[..., 0, 1] = -s
        out[..., 1, 0] = s
    elif kind == "RZ":
        out[..., 0, 0] = c - 1j * s
        out[..., 1, 1] = c + 1j * s
    else:
        raise QuantumError(f"not a rotation gate: {kind}")
    return out


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuantumState:
    """Pure (vector of length 2**q) or mixed (2**q x 2**q matrix) state."""

    num_qubits: int
    data: np.ndarray

    def __post_init__(self):
        if self.num_qubits < 1:
            raise QuantumError("num_qubits must be >= 1")
        dim = 2**self.num_qubits
        data = np.asarray(self.data, dtype=complex)
        if data.shape not in ((dim,), (dim, dim)):
            raise QuantumError(f"data shape {data.shape} does not fit {self.num_qubits} qubits")
        object.__setattr__(self, "data", data)

    @property
    def is_pure(self) -> bool:
        return self.data.ndim == 1

    @property
    def dim(self) -> int:
        return 2**self.num_qubits

    @classmethod
    def zero(cls, num_qubits: int, mixed: bool = False) -> "QuantumState":
        vec = np.zeros(2**num_qubits, dtype=complex)
        vec[0] = 1.0
        state = cls(num_qubits, vec)
        return to_density(state) if mixed else state

    def validate(self, tol: float = STATE_TOL) -> None:
        """Raise `QuantumError` if normalization / positivity invariants fail."""
        if self.is_pure:
            norm = float(np.vdot(self.data, self.data).real)
            if abs(norm - 1) > tol:
                raise QuantumError(f"state norm {norm} != 1")
            return
        rho = self.data
        if abs(np.trace(rho).real - 1) > tol or abs(np.trace(rho).imag) > tol:
            raise QuantumError(f"trace {np.trace(rho)} != 1")
        if np.max(np.abs(rho - rho.conj().T)) > tol:
            raise QuantumError("density matrix is not Hermitian")
        if np.linalg.eigvalsh(rho).min() < -tol:
            raise QuantumError("density matrix has negative eigenvalues")


@dataclass(frozen=True)
class Gate:
    kind: str
    targets: tuple[int, ...]
    angle: float | None = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise QuantumError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        if self.kind in ROTATIONS:
            if self.angle is None or not math.isfinite(self.angle):
                raise QuantumError(f"{self.kind} needs a finite angle")
        elif self.angle is not None:
            raise QuantumError(f"{self.kind} takes no angle")
        want = 2 if self.kind == "CNOT" else 1
        if len(self.targets) != want:
            raise QuantumError(f"{self.kind} needs {want} target(s), got {self.targets}")
        if want == 2 and self.targets[0] == self.targets[1]:
            raise QuantumError("CNOT control and target must differ")
        if any(t < 0 for t in self.targets):
            raise QuantumError("negative qubit index")

    def matrix(self) -> np.ndarray:
        """2x2 unitary (single-qubit gates) or 4x4 (CNOT, control first)."""
        if self.kind == "X":
            return _X.copy()
        if self.kind == "H":
            return _H.copy()
        if self.kind == "CNOT":
            return np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
        return rotation_matrix(self.kind, self.angle)


@dataclass(frozen=True)
class KrausChannel:
    operators: tuple[np.ndarray, ...]
    label: str = "composite"

    def __post_init__(self):
        ops = tuple(np.asarray(k, dtype=complex) for k in self.operators)
        if not ops or any(k.shape != (2, 2) for k in ops):
            raise QuantumError("a single-qubit channel needs one or more 2x2 operators")
        if self.label not in CHANNEL_LABELS:
            raise QuantumError(f"unknown channel label {self.label!r}")
        object.__setattr__(self, "operators", ops)
        err = completeness_error(ops)
        if err > CPTP_TOL:
            raise QuantumError(f"channel {self.label} is not trace preserving (error {err:.3g})")

    def stacked(self) -> np.ndarray:
        return np.stack(self.operators)


def completeness_error(operators: Sequence[np.ndarray]) -> float:
    """max-norm of sum_k K^dagger K - I."""
    total = sum(k.conj().T @ k for k in operators)
    return float(np.max(np.abs(total - _I2)))


@dataclass(frozen=True)
class NoiseConfig:
    """Per-device noise. Rates apply once per touched qubit per gate."""

    gamma_ad: float = 0.0
    p_pd: float = 0.0
    t1_us: float = 50.0
    t2_us: float = 70.0
    gate_time_1q_ns: float = 50.0
    gate_time_2q_ns: float = 300.0
    enabled: bool = False
    shots: int | None = None

    def __post_init__(self):
        for name in ("gamma_ad", "p_pd"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise QuantumError(f"{name}={v} outside [0, 1]")
        for name in ("t1_us", "t2_us", "gate_time_1q_ns", "gate_time_2q_ns"):
            if not getattr(self, name) > 0:
                raise QuantumError(f"{name} must be > 0")
        if self.t2_us > 2 * self.t1_us:
            raise QuantumError(f"t2_us={self.t2_us} > 2*t1_us={2 * self.t1_us} is unphysical")
        if self.shots is not None and self.shots < 1:
            raise QuantumError("shots must be positive")

    def channel(self, two_qubit: bool = False) -> KrausChannel:
        """Composite per-gate channel: damping, dephasing, then thermal relaxation."""
        t = self.gate_time_2q_ns if two_qubit else self.gate_time_1q_ns
        return compose_channels(
            amplitude_damping(self.gamma_ad),
            phase_damping(self.p_pd),
            thermal_relaxation(self.t1_us, self.t2_us, t),
        )


NOISELESS = NoiseConfig()


# ---------------------------------------------------------------------------
# Channel constructors
# ---------------------------------------------------------------------------


def _check_prob(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise QuantumError(f"{name}={value} outside [0, 1]")


def amplitude_damping(gamma: float) -> KrausChannel:
    _check_prob("gamma", gamma)
    k0 = np.array([[1, 0], [0, math.sqrt(1 - gamma)]], dtype=complex)
    k1 = np.array([[0, math.sqrt(gamma)], [0, 0]], dtype=complex)
    return KrausChannel((k0, k1), "amplitude_damping")


def phase_damping(p: float) -> KrausChannel:
    _check_prob("p", p)
    k0 = np.array([[1, 0], [0, math.sqrt(1 - p)]], dtype=complex)
    k1 = np.array([[0, 0], [0, math.sqrt(p)]], dtype=complex)
    return KrausChannel((k0, k1), "phase_damping")


def identity_channel() -> KrausChannel:
    return KrausChannel((_I2.copy(),), "identity")


def thermal_relaxation(t1_us: float, t2_us: float, gate_time_ns: float) -> KrausChannel:
    """Zero-temperature T1/T2 relaxation over one gate duration.

    Energy relaxation is amplitude damping with ``p_reset = 1 - exp(-t/T1)``,
    which already shrinks coherences by ``exp(-t/2T1)``. The remaining decay
    down to ``exp(-t/T2)`` is supplied by phase damping with
    ``p = 1 - exp(-2t/T2) / exp(-t/T1)``; it is a probability only when
    ``T2 <= 2 T1``.
    """
    if not (t1_us > 0 and t2_us > 0):
        raise QuantumError("relaxation times must be positive")
    if t2_us > 2 * t1_us:
        raise QuantumError(f"T2={t2_us} > 2*T1={2 * t1_us} is unphysical")
    if not gate_time_ns >= 0:
        raise QuantumError("gate time must be non-negative")
    t = gate_time_ns * 1e-3
    p_reset = -math.expm1(-t / t1_us)
    coef = 1.0 / t1_us - 2.0 / t2_us  # <= 0 by the physicality check
    p_dephase = 0.0 if coef == 0 or t == 0 else -math.expm1(t * coef)
    ch = compose_channels(amplitude_damping(p_reset), phase_damping(min(p_dephase, 1.0)))
    return KrausChannel(ch.operators, "thermal_relaxation")


def compose_channels(*channels: KrausChannel) -> KrausChannel:
    """Sequential composition (first argument acts first); zero operators dropped."""
    ops = [_I2.copy()]
    for ch in channels:
        ops = [k @ prev for k in ch.operators for prev in ops]
        ops = [k for k in ops if np.max(np.abs(k)) > 0]
    return KrausChannel(tuple(ops), "composite")


# ---------------------------------------------------------------------------
# Batched array kernels
# ---------------------------------------------------------------------------


def _split(qubit: int, num_qubits: int) -> tuple[int, int]:
    return 2**qubit, 2 ** (num_qubits - qubit - 1)


def apply_1q_batch(data: np.ndarray, mat: np.ndarray, qubit: int, num_qubits: int) -> np.ndarray:
    """Apply a 2x2 unitary (or a stack of B of them) to a batch of states.

    ``data`` is (B, D) for pure states or (B, D, D) for density matrices.
    ``mat`` is (2, 2) or (B, 2, 2).
    """
    a, c = _split(qubit, num_qubits)
    b = data.shape[0]
    per_item = mat.ndim == 3
    if data.ndim == 2:
        v = data.reshape(b, a, 2, c)
        if per_item:
            v = np.einsum("bij,bajc->baic", mat, v)
        else:
            v = np.einsum("ij,bajc->baic", mat, v)
        return v.reshape(b, -1)
    d = data.shape[1]
    r = data.reshape(b, a, 2, c * d)
    if per_item:
        r = np.einsum("bij,bajx->baix", mat, r)
    else:
        r = np.einsum("ij,bajx->baix", mat, r)
    r = r.reshape(b, d, a, 2, c)
    mc = mat.conj()
    if per_item:
        r = np.einsum("bij,byajc->byaic", mc, r)
    else:
        r = np.einsum("ij,byajc->byaic", mc, r)
    return r.reshape(b, d, d)


def apply_kraus_batch(rho: np.ndarray, ops: np.ndarray, qubit: int, num_qubits: int) -> np.ndarray:
    """sum_k K rho K^dagger on one qubit of a batch of density matrices."""
    out = None
    for k in ops:
        term = apply_1q_batch(rho, k, qubit, num_qubits)
        out = term if out is None else out + term
    return out


def cnot_permutation(control: int, target: int, num_qubits: int) -> np.ndarray:
    idx = np.arange(2**num_qubits)
    cbit = (idx >> (num_qubits - 1 - control)) & 1
    return idx ^ (cbit << (num_qubits - 1 - target))


def permute_batch(data: np.ndarray, perm: np.ndarray) -> np.ndarray:
    """Apply a basis permutation P (P|i> = |perm[i]>; perm is an involution here)."""
    if data.ndim == 2:
        return data[:, perm]
    return data[:, perm][:, :, perm]


def z_signs(num_qubits: int) -> np.ndarray:
    """(q, D) table of Z eigenvalues, +1 for bit 0 and -1 for bit 1."""
    idx = np.arange(2**num_qubits)
    bits = (idx[None, :] >> (num_qubits - 1 - np.arange(num_qubits)[:, None])) & 1
    return 1.0 - 2.0 * bits


def probabilities_batch(data: np.ndarray) -> np.ndarray:
    if data.ndim == 2:
        return np.abs(data) ** 2
    return np.real(np.einsum("bii->bi", data))


def expectations_batch(data: np.ndarray, num_qubits: int) -> np.ndarray:
    """(B, q) array of exact per-qubit <Z>."""
    return probabilities_batch(data) @ z_signs(num_qubits).T


def sample_expectations(exact: np.ndarray, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Finite-shot estimate of <Z> values: binomial counts of outcome 1."""
    p1 = np.clip((1.0 - exact) / 2.0, 0.0, 1.0)
    ones = rng.binomial(shots, p1)
    return 1.0 - 2.0 * ones / shots


# ---------------------------------------------------------------------------
# Public state-level operations
# ---------------------------------------------------------------------------


def _check_targets(state: QuantumState, targets: Sequence[int]) -> None:
    for t in targets:
        if not 0 <= t < state.num_qubits:
            raise QuantumError(f"qubit {t} out of range for {state.num_qubits} qubits")


def apply_gate(state: QuantumState, gate: Gate) -> QuantumState:
    _check_targets(state, gate.targets)
    q = state.num_qubits
    data = state.data[None]
    if gate.kind == "CNOT":
        out = permute_batch(data, cnot_permutation(gate.targets[0], gate.targets[1], q))
    else:
        out = apply_1q_batch(data, gate.matrix(), gate.targets[0], q)
    return QuantumState(q, out[0])


def apply_channel(rho: QuantumState, ch: KrausChannel, target: int) -> QuantumState:
    if rho.is_pure:
        raise QuantumError("channels act on density matrices; call to_density first")
    if not isinstance(ch, KrausChannel):
        raise QuantumError("expected a KrausChannel")
    if completeness_error(ch.operators) > CPTP_TOL:
        raise QuantumError("channel is not CPTP")
    _check_targets(rho, [target])
    out = apply_kraus_batch(rho.data[None], ch.stacked(), target, rho.num_qubits)
    return QuantumState(rho.num_qubits, out[0])


def to_density(state: QuantumState) -> QuantumState:
    if not state.is_pure:
        return state
    return QuantumState(state.num_qubits, np.outer(state.data, state.data.conj()))


def expectation_z(
    state: QuantumState,
    qubit: int,
    shots: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    _check_targets(state, [qubit])
    exact = float(expectations_batch(state.data[None], state.num_qubits)[0, qubit])
    if shots is None:
        return exact
    rng = rng if rng is not None else np.random.default_rng()
    return float(sample_expectations(np.array(exact), shots, rng))


def trace_distance(a: QuantumState, b: QuantumState) -> float:
    if a.dim != b.dim:
        raise QuantumError(f"dimension mismatch: {a.dim} vs {b.dim}")
    diff = to_density(a).data - to_density(b).data
    eig = np.linalg.eigvalsh((diff + diff.conj().T) / 2)
    return float(min(1.0, 0.5 * np.abs(eig).sum()))


def partial_trace_tail(rho: QuantumState, keep: int) -> QuantumState:
    """Trace out every qubit with index >= `keep` (the least-significant ones)."""
    if not 1 <= keep <= rho.num_qubits:
        raise QuantumError("keep must be within 1..num_qubits")
    r = to_density(rho).data
    a, c = 2**keep, 2 ** (rho.num_qubits - keep)
    r = r.reshape(a, c, a, c)
    return QuantumState(keep, np.einsum("icjc->ij", r))


# ---------------------------------------------------------------------------
# Pauli transfer matrix (PTM) kernels
#
# A q-qubit density matrix is stored as the real vector r_P = tr(P rho) over
# Pauli strings P, indexed by base-4 digits (I, X, Y, Z) = (0, 1, 2, 3) with
# qubit 0 as the most significant digit. Single-qubit channels become real
# 4x4 matrices acting on one digit; CNOT becomes a signed permutation.
# ---------------------------------------------------------------------------

PAULIS = np.array(
    [[[1, 0], [0, 1]], [[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]],
    dtype=complex,
)
# pauli_coords(rho)[a] = sum_{r,c} PAULIS[a][c, r] * rho[r, c]
_TO_PAULI = np.stack([p.T.reshape(4) for p in PAULIS])


def ptm_from_kraus(operators: Sequence[np.ndarray]) -> np.ndarray:
    """R[a, b] = tr(P_a Phi(P_b)) / 2 for Phi(rho) = sum_k K rho K^dagger."""
    out = np.zeros((4, 4))
    for b, pb in enumerate(PAULIS):
        image = sum(k @ pb @ k.conj().T for k in operators)
        for a, pa in enumerate(PAULIS):
            out[a, b] = 0.5 * np.trace(pa @ image).real
    return out


def apply_ptm_batch(r: np.ndarray, mat: np.ndarray, qubit: int, num_qubits: int) -> np.ndarray:
    """Apply a 4x4 real matrix to the Pauli digit of `qubit` for a (B, 4**q) batch."""
    b = r.shape[0]
    a, c = 4**qubit, 4 ** (num_qubits - qubit - 1)
    if c == 1:
        return (r.reshape(-1, 4) @ mat.T).reshape(b, -1)
    if c >= 4:
        return (mat @ r.reshape(b, a, 4, c)).reshape(b, -1)
    x = np.moveaxis(r.reshape(b, a, 4, c), 2, 0).reshape(4, -1)
    return np.moveaxis((mat @ x).reshape(4, b, a, c), 0, 2).reshape(b, -1)


def pauli_coords(data: np.ndarray, num_qubits: int) -> np.ndarray:
    """Batch of pure (B, D) or mixed (B, D, D) states to PTM vectors (B, 4**q)."""
    data = np.asarray(data, dtype=complex)
    if data.ndim == 2:
        data = np.einsum("bi,bj->bij", data, data.conj())
    b, q = data.shape[0], num_qubits
    r = data.reshape((b,) + (2,) * (2 * q))
    order = [0] + [ax for k in range(q) for ax in (1 + k, 1 + q + k)]
    r = r.transpose(order).reshape(b, 4**q)
    for k in range(q):
        r = apply_ptm_batch(r, _TO_PAULI, k, q)
    return r.real.copy()


def cnot_pauli_map(control: int, target: int, num_qubits: int) -> tuple[np.ndarray, np.ndarray]:
    """(perm, sign) with CNOT P CNOT = sign[P] * P_{perm[P]} over all Pauli strings.

    Under conjugation by CNOT, r'[perm[P]] = sign[P] * r[P].
    """
    cnot = Gate("CNOT", (0, 1)).matrix()
    pair = {}
    for a in range(4):
        for b in range(4):
            img = cnot @ np.kron(PAULIS[a], PAULIS[b]) @ cnot
            for a2 in range(4):
                for b2 in range(4):
                    coef = np.trace(np.kron(PAULIS[a2], PAULIS[b2]) @ img).real / 4
                    if abs(coef) > 0.5:
                        pair[(a, b)] = (a2, b2, coef)
    n = 4**num_qubits
    idx = np.arange(n)
    shift_c = 2 * (num_qubits - 1 - control)
    shift_t = 2 * (num_qubits - 1 - target)
    dc, dt = (idx >> shift_c) & 3, (idx >> shift_t) & 3
    perm = np.empty(n, dtype=np.int64)
    sign = np.empty(n)
    for a in range(4):
        for b in range(4):
            a2, b2, s = pair[(a, b)]
            sel = (dc == a) & (dt == b)
            base = idx[sel] & ~((3 << shift_c) | (3 << shift_t))
            perm[sel] = base | (a2 << shift_c) | (b2 << shift_t)
            sign[sel] = s
    return perm, sign


def z_pauli_index(qubit: int, num_qubits: int) -> int:
    return 3 * 4 ** (num_qubits - 1 - qubit)
