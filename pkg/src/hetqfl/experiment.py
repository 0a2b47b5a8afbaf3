"""End-to-end experiment assembly: data pipeline, client fleet, round loop."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .config import ExperimentConfig
from .data import (
    Dataset,
    holdout_split,
    load_csv,
    load_idx,
    partition_noniid,
    reduce_dims,
    split_train_test,
    subsample,
    synth_blobs,
)
from .encode import Encoder, client_state_summary, standardize
from .fed import (
    ClientData,
    ClientProfile,
    RoundRecord,
    ServerState,
    TrainingSettings,
    run_round,
    summarize,
)
from .qnn import PqcModel, build_pqc
from .qsim import NoiseConfig

log = logging.getLogger(__name__)

VALIDATION_FRACTION = 0.2

# algorithm -> (personalized, noise-aware scaling, gating, default strategy)
PRESETS = {
    "qfl_fedavg": (False, False, False, "uniform"),
    "pqfl": (True, False, False, "uniform"),
    "wpqfl": (True, False, False, "fairness"),
    "spqfl": (True, True, True, "uniform"),
    "qnn_central": (False, False, False, "uniform"),
}


@dataclass
class Federation:
    """Everything one (algorithm, seed) run needs, built once."""

    clients: list[ClientProfile]
    data: list[ClientData]
    test: tuple[np.ndarray, np.ndarray]
    num_qubits: int
    num_layers: int
    num_classes: int


@dataclass
class RunResult:
    algo: str
    seed: int
    records: list[RoundRecord]
    model: PqcModel


@dataclass
class ExperimentResult:
    runs: list[RunResult] = field(default_factory=list)

    def by_algo(self, algo: str) -> list[RunResult]:
        return [r for r in self.runs if r.algo == algo]

    @property
    def records(self) -> list[RoundRecord]:
        return [rec for run in self.runs for rec in run.records]

    def final_accuracy(self, algo: str) -> tuple[float, float]:
        finals = [r.records[-1].test_acc for r in self.by_algo(algo) if r.records]
        return summarize(finals)

    def final_loss(self, algo: str) -> tuple[float, float]:
        finals = [r.records[-1].test_loss for r in self.by_algo(algo) if r.records]
        return summarize(finals)


def load_dataset(config: ExperimentConfig) -> Dataset:
    spec = config.dataset
    if spec.kind == "blobs":
        ds = synth_blobs(spec.n, spec.num_classes, spec.dim, spec.spread, spec.seed)
    elif spec.kind == "idx":
        ds = load_idx(spec.images, spec.labels)
    else:
        ds = load_csv(spec.path)
    if spec.subsample is not None:
        ds = subsample(ds, spec.subsample, spec.seed)
    if spec.reduce == "avgpool":
        ds = reduce_dims(ds, spec.out_dim, "avgpool")
    return ds


def _round_robin(value, i: int):
    if isinstance(value, (list, tuple)):
        return value[i % len(value)]
    return value


def client_profiles(config: ExperimentConfig, num_clients: int) -> list[ClientProfile]:
    het = config.heterogeneity
    ns = het.noise
    out = []
    for i in range(num_clients):
        noise = NoiseConfig(
            gamma_ad=float(_round_robin(ns.gamma_ad, i)),
            p_pd=float(_round_robin(ns.p_pd, i)),
            t1_us=ns.t1_us,
            t2_us=ns.t2_us,
            gate_time_1q_ns=ns.gate_time_1q_ns,
            gate_time_2q_ns=ns.gate_time_2q_ns,
            enabled=ns.enabled,
            shots=ns.shots,
        )
        if het.fidelity is not None:
            phi = float(_round_robin(het.fidelity, i))
        else:
            phi = max(0.0, 1.0 - noise.gamma_ad - noise.p_pd) if noise.enabled else 1.0
        sigma = None if het.sigma_sq is None else float(_round_robin(het.sigma_sq, i))
        out.append(
            ClientProfile(
                id=i,
                q_i=int(_round_robin(het.qubits, i)),
                L_i=int(_round_robin(het.depths, i)),
                phi_i=phi,
                noise=noise,
                shard_id=i,
                sigma_sq=sigma,
            )
        )
    return out


def build_federation(config: ExperimentConfig, seed: int, central: bool = False) -> Federation:
    """Split, scale, partition and encode the data for one run seed.

    With ``central=True`` a single noiseless client holding the whole
    training split stands in for the federation.
    """
    ds = load_dataset(config)
    train, test = split_train_test(ds, config.train_fraction, seed)
    if config.dataset.reduce == "pca":
        test = reduce_dims(test, config.dataset.out_dim, "pca", reference=train)
        train = reduce_dims(train, config.dataset.out_dim, "pca")
    test = test.with_features(standardize(test.features, reference=train.features), "std")
    train = train.with_features(standardize(train.features), "std")

    if central:
        het = config.heterogeneity
        q = max(_listify_int(het.qubits))
        depth = max(_listify_int(het.depths))
        profiles = [ClientProfile(id=0, q_i=q, L_i=depth, shard_id=0)]
        shards = [np.arange(len(train))]
    else:
        profiles = client_profiles(config, config.clients)
        plan = partition_noniid(train, config.clients, config.classes_per_client, seed)
        shards = plan.assignment

    data = []
    for profile, shard in zip(profiles, shards):
        enc = Encoder("amplitude", profile.q_i)
        feats = enc.fit_features(train.features[shard])
        labels = train.labels[shard]
        keep, held = holdout_split(len(shard), VALIDATION_FRACTION, np.random.SeedSequence([seed, profile.id, 7919]))
        states = enc.vectors(feats)
        data.append(
            ClientData(
                train_states=states[keep],
                train_labels=labels[keep],
                val_states=states[held],
                val_labels=labels[held],
                summary=client_state_summary(feats[keep], enc, config.sample_cap),
            )
        )
    q_g = max(p.q_i for p in profiles)
    l_g = max(p.L_i for p in profiles)
    server_enc = Encoder("amplitude", q_g)
    test_states = server_enc.vectors(server_enc.fit_features(test.features))
    return Federation(profiles, data, (test_states, test.labels), q_g, l_g, ds.num_classes)


def _listify_int(v) -> list[int]:
    return [int(x) for x in v] if isinstance(v, (list, tuple)) else [int(v)]


def settings_for(config: ExperimentConfig, algo: str) -> tuple[TrainingSettings, object, str]:
    personalized, noise_scaled, gated, strategy = PRESETS[algo]
    settings = TrainingSettings(
        local_steps=config.local_steps,
        batch_size=config.batch_size,
        eta=config.lr,
        lam=config.lam if personalized else 0.0,
        gamma_ns=config.gamma_ns if noise_scaled else 0.0,
        optimizer=config.optimizer,
        lr_decay=config.lr_decay,
        decay_every=config.decay_every,
        xi_scale=config.xi_scale,
    )
    tau = config.tau if gated else "disabled"
    return settings, tau, config.strategy or strategy


def run_single(config: ExperimentConfig, algo: str, seed: int, on_round=None) -> RunResult:
    fed = build_federation(config, seed, central=algo == "qnn_central")
    settings, tau, strategy = settings_for(config, algo)
    model = build_pqc(fed.num_qubits, fed.num_layers, seed, fed.num_classes)
    server = ServerState(model=model, tau=tau, strategy=strategy, alpha=config.alpha, seed=seed)
    records = []
    for _ in range(config.rounds):
        server, record = run_round(server, fed.clients, fed.data, settings, fed.test)
        records.append(record)
        if on_round is not None:
            on_round(algo, seed, record, fed.clients)
        log.debug("%s seed=%d round=%d acc=%.4f", algo, seed, record.round, record.test_acc)
    return RunResult(algo, seed, records, server.model)


def run_experiment(config: ExperimentConfig, on_round=None) -> ExperimentResult:
    """Run every configured algorithm for every seed, `config.rounds` rounds each."""
    config.validate()
    result = ExperimentResult()
    for algo in config.algorithms:
        for seed in config.seeds:
            result.runs.append(run_single(config, algo, seed, on_round))
    return result
