"""Federated round loop, participation gating and aggregation strategies."""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .encode import pad_to_qubits, reference_state
from .qnn import (
    PqcModel,
    TrainerState,
    adam_step,
    evaluate,
    grad_parameter_shift,
    local_update_spqfl,
)
from .qsim import NOISELESS, NoiseConfig, QuantumState, trace_distance

STRATEGIES = ("uniform", "layerwise", "noise_aware", "fairness", "encoding_aware")
TAU_FLOOR, TAU_CEIL = 0.2, 0.9


# ---------------------------------------------------------------------------
# Aggregation primitives
# ---------------------------------------------------------------------------


def _stack(params: Sequence) -> np.ndarray:
    if len(params) == 0:
        raise ValueError("nothing to aggregate")
    arrays = [np.asarray(p, dtype=float) for p in params]
    shape = arrays[0].shape
    if any(a.shape != shape for a in arrays):
        raise ValueError(f"shape mismatch among client parameters: {[a.shape for a in arrays]}")
    return np.stack(arrays)


def fedavg(params: Sequence) -> np.ndarray:
    """Elementwise arithmetic mean of client parameters."""
    return _stack(params).mean(axis=0)


def weighted_average(params: Sequence, weights) -> np.ndarray:
    stacked = _stack(params)
    w = np.asarray(weights, dtype=float)
    if w.shape != (stacked.shape[0],):
        raise ValueError("one weight per client expected")
    return np.tensordot(w, stacked, axes=1)


def layerwise_aggregate(models: Sequence[tuple[np.ndarray, int]]) -> np.ndarray:
    """Average layer l over the clients whose depth reaches l.

    Each entry is ``(layers, depth)`` with ``layers[:depth]`` holding that
    client's per-layer parameter blocks. The result has ``max(depth)`` layers.
    """
    if not models:
        raise ValueError("nothing to aggregate")
    depth = max(d for _, d in models)
    out = []
    for layer in range(depth):
        owners = [np.asarray(p, dtype=float)[layer] for p, d in models if d > layer]
        out.append(fedavg(owners))
    return np.stack(out)


def pad_params(params, target_shape: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
    """Zero-pad every axis up to `target_shape`; the mask marks real entries.

    For a (L_i, q_i, 3) angle block the padded rows are identity rotations.
    """
    p = np.asarray(params, dtype=float)
    if p.ndim != len(target_shape) or any(s > t for s, t in zip(p.shape, target_shape)):
        raise ValueError(f"cannot pad shape {p.shape} to {target_shape}")
    out = np.zeros(target_shape)
    mask = np.zeros(target_shape, dtype=bool)
    region = tuple(slice(0, s) for s in p.shape)
    out[region] = p
    mask[region] = True
    return out, mask


def masked_average(params: Sequence, masks: Sequence, weights, fallback) -> np.ndarray:
    """Per entry: sum_i w_i m_i p_i / sum_i w_i m_i, or `fallback` where nobody contributes."""
    p = _stack(params)
    m = np.stack([np.asarray(x, dtype=float) for x in masks])
    w = np.asarray(weights, dtype=float).reshape((-1,) + (1,) * (p.ndim - 1))
    num = (w * m * p).sum(axis=0)
    den = (w * m).sum(axis=0)
    fallback = np.asarray(fallback, dtype=float)
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), fallback)


# ---------------------------------------------------------------------------
# Client weighting schemes
# ---------------------------------------------------------------------------


def encoding_aware_weights(rhos: Sequence[QuantumState], rho_g: QuantumState, alpha: float) -> np.ndarray:
    """Softmax of -alpha * trace_distance(rho_i, rho_g)."""
    if not alpha > 0:
        raise ValueError("alpha must be > 0")
    d = np.array([trace_distance(r, rho_g) for r in rhos])
    logits = -alpha * d
    e = np.exp(logits - logits.max())
    return e / e.sum()


def fairness_weights(clients: Sequence[tuple[float, float]]) -> np.ndarray:
    """Weights proportional to qubit count times gate fidelity."""
    cap = np.array([q * phi for q, phi in clients], dtype=float)
    if np.any(cap < 0) or cap.sum() <= 0:
        raise ValueError("total client capacity q*phi must be positive")
    return cap / cap.sum()


def noise_aware_weights(sigma_sq) -> np.ndarray:
    """Inverse-variance weights. Zero-variance (exact) clients take all the
    weight, shared equally among them."""
    s = np.asarray(sigma_sq, dtype=float)
    if s.ndim != 1 or len(s) == 0 or np.any(s < 0):
        raise ValueError("sigma_sq must be a non-empty list of non-negative variances")
    exact = s == 0
    if exact.any():
        return exact / exact.sum()
    inv = 1.0 / s
    return inv / inv.sum()


def noise_aware_aggregate(params: Sequence, sigma_sq) -> np.ndarray:
    return weighted_average(params, noise_aware_weights(sigma_sq))


def sporadic_select(accuracies, tau: float) -> list[int]:
    """Indices of clients whose local validation accuracy reaches `tau`."""
    return [i for i, a in enumerate(accuracies) if a >= tau]


def adaptive_tau(previous: Sequence[float] | None) -> float:
    """Half the mean of last round's accuracies, clamped to [0.2, 0.9]."""
    if not previous:
        return TAU_FLOOR
    return float(min(TAU_CEIL, max(TAU_FLOOR, 0.5 * float(np.mean(previous)))))


# ---------------------------------------------------------------------------
# Clients and server
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClientProfile:
    id: int
    q_i: int
    L_i: int
    phi_i: float = 1.0
    noise: NoiseConfig = NOISELESS
    shard_id: int | None = None
    sigma_sq: float | None = None

    def __post_init__(self):
        if self.q_i < 1 or self.L_i < 1:
            raise ValueError("clients need at least one qubit and one layer")
        if not 0.0 <= self.phi_i <= 1.0:
            raise ValueError(f"gate fidelity {self.phi_i} outside [0, 1]")
        if self.sigma_sq is not None and self.sigma_sq < 0:
            raise ValueError("sigma_sq must be >= 0")

    @property
    def variance(self) -> float:
        """Configured sigma^2, else max(1e-6, 1 - phi)."""
        return self.sigma_sq if self.sigma_sq is not None else max(1e-6, 1.0 - self.phi_i)


@dataclass
class ClientData:
    """Encoded local shard: pure input states (m, 2**q_i) and labels."""

    train_states: np.ndarray
    train_labels: np.ndarray
    val_states: np.ndarray
    val_labels: np.ndarray
    summary: QuantumState | None = None


@dataclass
class TrainingSettings:
    local_steps: int = 5
    batch_size: int = 32
    eta: float = 1e-3
    lam: float = 0.0
    gamma_ns: float = 0.0
    optimizer: str = "sgd"
    lr_decay: float = 0.9
    decay_every: int = 10
    xi_scale: float = 1.0

    def trainer(self, round_index: int) -> TrainerState:
        return TrainerState(
            eta=self.eta,
            lam=self.lam,
            gamma_ns=self.gamma_ns,
            optimizer=self.optimizer,
            round_index=round_index,
            lr_decay=self.lr_decay,
            decay_every=self.decay_every,
        )


@dataclass
class ServerState:
    model: PqcModel
    round: int = 0
    tau: float | str | None = None
    strategy: str = "uniform"
    alpha: float = 1.0
    seed: int = 0
    previous_accuracies: list[float] | None = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if isinstance(self.tau, str):
            if self.tau not in ("adaptive", "disabled"):
                raise ValueError(f"tau must be a number, 'adaptive' or 'disabled', got {self.tau!r}")
        elif self.tau is not None and not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau={self.tau} outside [0, 1]")
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")

    def threshold(self) -> float | None:
        if self.tau is None or self.tau == "disabled":
            return None
        if self.tau == "adaptive":
            return adaptive_tau(self.previous_accuracies)
        return float(self.tau)


@dataclass
class RoundRecord:
    round: int
    train_loss: list[float]
    val_acc: list[float]
    participated: list[bool]
    weights: list[float]
    tau: float | None
    test_acc: float
    test_loss: float
    wall_time: float = 0.0
    noise_weight: list[float] = field(default_factory=list)

    @property
    def num_participants(self) -> int:
        return int(sum(self.participated))


def client_view(model: PqcModel, q_i: int, L_i: int) -> PqcModel:
    """Slice the global model down to a client's register and depth."""
    if q_i > model.num_qubits or L_i > model.num_layers:
        raise ValueError("client is larger than the global model")
    return PqcModel(
        q_i,
        L_i,
        model.angles[:L_i, :q_i].copy(),
        model.weights[:, :q_i].copy(),
        model.bias.copy(),
        model.active[:L_i, :q_i].copy(),
    )


def client_seed(seed: int, client_id: int, round_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, client_id, round_index])


@dataclass
class LocalResult:
    model: PqcModel
    train_loss: float
    val_acc: float
    mean_weight: float


def local_train(
    start: PqcModel,
    data: ClientData,
    noise: NoiseConfig,
    settings: TrainingSettings,
    round_index: int,
    rng: np.random.Generator,
) -> LocalResult:
    """T local steps from the broadcast model, anchored to it, then validate."""
    trainer = settings.trainer(round_index)
    anchor = start.to_vector()
    omega = anchor.copy()
    model = start
    n = len(data.train_labels)
    losses, weights = [], []
    for _ in range(settings.local_steps):
        size = min(settings.batch_size, n)
        pick = np.sort(rng.choice(n, size=size, replace=False))
        batch = (data.train_states[pick], data.train_labels[pick])
        sample = grad_parameter_shift(model, batch, noise, trainer.gamma_ns, rng, settings.xi_scale)
        if trainer.optimizer == "adam":
            omega = adam_step(omega, sample.grad, trainer, anchor, sample.weight)
        else:
            omega = local_update_spqfl(omega, sample, anchor, trainer)
        model = model.with_vector(omega)
        losses.append(sample.loss)
        weights.append(sample.weight)
    if len(data.val_labels):
        _, acc = evaluate(model, data.val_states, data.val_labels, noise, rng)
    else:
        _, acc = evaluate(model, data.train_states, data.train_labels, noise, rng)
    return LocalResult(
        model,
        float(np.mean(losses)) if losses else float("nan"),
        acc,
        float(np.mean(weights)) if weights else 1.0,
    )


def strategy_weights(
    strategy: str,
    clients: Sequence[ClientProfile],
    summaries: Sequence[QuantumState | None],
    alpha: float,
) -> np.ndarray:
    """Aggregation weights over the given (participating) clients."""
    n = len(clients)
    if strategy in ("uniform", "layerwise"):
        return np.full(n, 1.0 / n)
    if strategy == "fairness":
        return fairness_weights([(c.q_i, c.phi_i) for c in clients])
    if strategy == "noise_aware":
        return noise_aware_weights([c.variance for c in clients])
    if strategy == "encoding_aware":
        if any(s is None for s in summaries):
            raise ValueError("encoding-aware weighting needs every client's state summary")
        q = max(s.num_qubits for s in summaries)
        padded = [pad_to_qubits(s, q) for s in summaries]
        return encoding_aware_weights(padded, reference_state(padded), alpha)
    raise ValueError(f"unknown strategy {strategy!r}")


def aggregate_models(
    global_model: PqcModel,
    client_models: Sequence[PqcModel],
    weights,
    strategy: str,
) -> PqcModel:
    """Combine client models into a new global model.

    Client blocks are zero-padded to the global shape. The ``uniform``
    strategy averages the padded blocks as they are, so absent entries count
    as zeros. Every other strategy masks absent layers and qubits out, which
    for uniform weights is layer-wise averaging.
    """
    angle_shape = global_model.angles.shape
    head_shape = global_model.weights.shape
    angles, amasks, heads, hmasks = [], [], [], []
    for m in client_models:
        a, am = pad_params(m.angles, angle_shape)
        h, hm = pad_params(m.weights, head_shape)
        angles.append(a)
        heads.append(h)
        amasks.append(am)
        hmasks.append(hm)
    if strategy == "uniform":
        amasks = [np.ones(angle_shape, dtype=bool)] * len(angles)
        hmasks = [np.ones(head_shape, dtype=bool)] * len(heads)
    new_angles = masked_average(angles, amasks, weights, global_model.angles)
    new_heads = masked_average(heads, hmasks, weights, global_model.weights)
    new_bias = weighted_average([m.bias for m in client_models], weights)
    return PqcModel(
        global_model.num_qubits,
        global_model.num_layers,
        new_angles,
        new_heads,
        new_bias,
        global_model.active.copy(),
    )


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("HETQFL_THREADS", "1")))
    except ValueError:
        return 1


def run_round(
    server: ServerState,
    clients: Sequence[ClientProfile],
    data: Sequence[ClientData],
    settings: TrainingSettings,
    test: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[ServerState, RoundRecord]:
    """One global round: broadcast, local training, gating, aggregation, test."""
    if not clients:
        raise ValueError("a round needs at least one client")
    if len(data) != len(clients):
        raise ValueError("one data shard per client expected")
    start = time.perf_counter()
    k = server.round

    def train(i: int) -> LocalResult:
        c = clients[i]
        rng = np.random.default_rng(client_seed(server.seed, c.id, k))
        return local_train(client_view(server.model, c.q_i, c.L_i), data[i], c.noise, settings, k, rng)

    workers = min(_threads(), len(clients))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(train, range(len(clients))))
    else:
        results = [train(i) for i in range(len(clients))]

    accs = [r.val_acc for r in results]
    tau = server.threshold()
    chosen = list(range(len(clients))) if tau is None else sporadic_select(accs, tau)
    weights = np.zeros(len(clients))
    model = server.model
    if chosen:
        w = strategy_weights(
            server.strategy,
            [clients[i] for i in chosen],
            [data[i].summary for i in chosen],
            server.alpha,
        )
        weights[chosen] = w
        model = aggregate_models(server.model, [results[i].model for i in chosen], w, server.strategy)

    test_loss = test_acc = float("nan")
    if test is not None:
        test_loss, test_acc = evaluate(model, test[0], test[1])
    record = RoundRecord(
        round=k,
        train_loss=[r.train_loss for r in results],
        val_acc=accs,
        participated=[i in chosen for i in range(len(clients))],
        weights=weights.tolist(),
        tau=tau,
        test_acc=test_acc,
        test_loss=test_loss,
        wall_time=time.perf_counter() - start,
        noise_weight=[r.mean_weight for r in results],
    )
    new_server = replace(server, model=model, round=k + 1, previous_accuracies=accs)
    return new_server, record


def summarize(finals: Sequence[float]) -> tuple[float, float]:
    """(mean, population std) across runs; NaN for no runs."""
    if not finals:
        return math.nan, math.nan
    arr = np.asarray(finals, dtype=float)
    return float(arr.mean()), float(arr.std())
