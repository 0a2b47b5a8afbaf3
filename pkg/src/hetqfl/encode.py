"""Classical-to-quantum encoders, input standardization and qubit padding."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qsim import Gate, QuantumError, QuantumState, to_density

ENCODER_KINDS = ("basis", "amplitude", "angle")


def standardize(features: np.ndarray, reference: np.ndarray | None = None) -> np.ndarray:
    """Zero-mean, unit-variance columns (population std).

    Statistics come from `reference` when given, otherwise from `features`
    itself; this lets a test split be scaled with training statistics.
    Zero-variance columns map to zeros.
    """
    x = np.asarray(features, dtype=float)
    ref = x if reference is None else np.asarray(reference, dtype=float)
    if x.size == 0 or ref.shape[0] == 0:
        raise ValueError("cannot standardize an empty dataset")
    mean = ref.mean(axis=0)
    std = ref.std(axis=0)
    # exact test: rounding can leave a tiny nonzero std on a constant column
    constant = (np.ptp(ref, axis=0) == 0) | (std == 0)
    out = (x - mean) / np.where(constant, 1.0, std)
    out[:, constant] = 0.0
    return out


def amplitude_vectors(x: np.ndarray, num_qubits: int) -> np.ndarray:
    """Row-wise amplitude encoding of a feature matrix, shape (n, 2**q).

    Rows wider than 2**q are rejected; narrower rows are zero-padded.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    dim = 2**num_qubits
    if x.shape[1] > dim:
        raise QuantumError(f"{x.shape[1]} features do not fit {num_qubits} qubits")
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms == 0) or not np.all(np.isfinite(norms)):
        raise QuantumError("amplitude encoding needs a non-zero finite vector")
    out = np.zeros((x.shape[0], dim), dtype=complex)
    out[:, : x.shape[1]] = x / norms[:, None]
    return out


def amplitude_encode(x, num_qubits: int) -> QuantumState:
    return QuantumState(num_qubits, amplitude_vectors(np.asarray(x, dtype=float)[None], num_qubits)[0])


def basis_encode(bits) -> QuantumState:
    bits = [int(b) for b in bits] if not isinstance(bits, np.ndarray) else bits.tolist()
    if not bits or any(b not in (0, 1) for b in bits):
        raise QuantumError("basis encoding needs a non-empty 0/1 vector")
    index = int("".join(str(b) for b in bits), 2)
    vec = np.zeros(2 ** len(bits), dtype=complex)
    vec[index] = 1.0
    return QuantumState(len(bits), vec)


def angle_encode(x, num_qubits: int) -> list[Gate]:
    """One RY(x_j) on qubit j; applied to |0...0> gives (cos x_j/2, sin x_j/2)."""
    x = np.asarray(x, dtype=float).ravel()
    if len(x) > num_qubits:
        raise QuantumError(f"{len(x)} angles do not fit {num_qubits} qubits")
    return [Gate("RY", (j,), float(v)) for j, v in enumerate(x)]


def angle_vectors(x: np.ndarray, num_qubits: int) -> np.ndarray:
    """Product states produced by `angle_encode`, one row per sample."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] > num_qubits:
        raise QuantumError(f"{x.shape[1]} angles do not fit {num_qubits} qubits")
    out = np.ones((x.shape[0], 1), dtype=complex)
    for j in range(num_qubits):
        theta = x[:, j] if j < x.shape[1] else np.zeros(x.shape[0])
        qubit = np.stack([np.cos(theta / 2), np.sin(theta / 2)], axis=1)
        out = np.einsum("na,nb->nab", out, qubit).reshape(x.shape[0], -1)
    return out


def pad_to_qubits(state: QuantumState, q_global: int) -> QuantumState:
    """Embed into `q_global` qubits by appending |0> ancillas as low-order qubits."""
    extra = q_global - state.num_qubits
    if extra < 0:
        raise QuantumError(f"cannot pad {state.num_qubits} qubits down to {q_global}")
    if extra == 0:
        return state
    anc = np.zeros(2**extra, dtype=complex)
    anc[0] = 1.0
    if state.is_pure:
        return QuantumState(q_global, np.kron(state.data, anc))
    return QuantumState(q_global, np.kron(state.data, np.outer(anc, anc)))


@dataclass(frozen=True)
class Encoder:
    kind: str
    num_qubits: int
    normalization: str = "l2"

    def __post_init__(self):
        if self.kind not in ENCODER_KINDS:
            raise ValueError(f"unknown encoder kind {self.kind!r}")
        if self.normalization not in ("l2", "zscore_then_l2"):
            raise ValueError(f"unknown normalization {self.normalization!r}")
        if self.num_qubits < 1:
            raise ValueError("num_qubits must be >= 1")

    def capacity(self) -> int:
        return 2**self.num_qubits if self.kind == "amplitude" else self.num_qubits

    def fit_features(self, x: np.ndarray) -> np.ndarray:
        """Keep the leading features that fit this encoder's register."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return x[:, : self.capacity()]

    def vectors(self, x: np.ndarray) -> np.ndarray:
        """Encoded pure states for each row of `x`, shape (n, 2**q)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.normalization == "zscore_then_l2":
            x = standardize(x)
        if self.kind == "amplitude":
            return amplitude_vectors(x, self.num_qubits)
        if self.kind == "angle":
            return angle_vectors(x, self.num_qubits)
        return np.stack([basis_encode((row > 0.5).astype(int)).data for row in x])

    def encode(self, x) -> QuantumState:
        return QuantumState(self.num_qubits, self.vectors(np.asarray(x, dtype=float)[None])[0])


def mixture(vectors: np.ndarray) -> np.ndarray:
    """Uniform mixture of pure states given row-wise."""
    v = np.asarray(vectors, dtype=complex)
    return np.einsum("ni,nj->ij", v, v.conj()) / v.shape[0]


def client_state_summary(shard: np.ndarray, enc: Encoder, sample_cap: int = 64) -> QuantumState:
    """Uniform mixture of the first `sample_cap` encoded samples of a shard."""
    shard = np.atleast_2d(np.asarray(shard, dtype=float))
    if shard.shape[0] == 0 or shard.size == 0:
        raise ValueError("empty shard")
    vecs = enc.vectors(shard[:sample_cap])
    return QuantumState(enc.num_qubits, mixture(vecs))


def reference_state(rhos: list[QuantumState]) -> QuantumState:
    """Server-side reference: uniform mixture of (padded) client summaries."""
    if not rhos:
        raise ValueError("no client states")
    q = max(r.num_qubits for r in rhos)
    mats = [to_density(pad_to_qubits(r, q)).data for r in rhos]
    return QuantumState(q, sum(mats) / len(mats))
