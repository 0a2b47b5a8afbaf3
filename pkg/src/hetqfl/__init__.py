"""Heterogeneous quantum federated learning on a small numpy simulator."""
from .config import ConfigError, ExperimentConfig, from_dict, parse_config
from .data import Dataset, partition_noniid, split_train_test, synth_blobs
from .encode import Encoder, amplitude_encode, pad_to_qubits, standardize
from .experiment import ExperimentResult, run_experiment
from .fed import (
    ClientProfile,
    RoundRecord,
    ServerState,
    encoding_aware_weights,
    fairness_weights,
    fedavg,
    layerwise_aggregate,
    noise_aware_aggregate,
    run_round,
    sporadic_select,
)
from .qnn import (
    GradientSample,
    PqcModel,
    TrainerState,
    adam_step,
    build_pqc,
    grad_parameter_shift,
    local_update_spqfl,
    prune_gates,
)
from .qsim import (
    Gate,
    KrausChannel,
    NoiseConfig,
    QuantumState,
    amplitude_damping,
    apply_channel,
    apply_gate,
    expectation_z,
    phase_damping,
    thermal_relaxation,
)

__version__ = "0.1.0"
