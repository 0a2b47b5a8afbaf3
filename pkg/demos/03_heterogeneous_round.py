"""A few federated rounds with clients of different width, depth and noise.

Narrow or shallow clients train a slice of the global circuit. Aggregation
zero-pads their parameters and masks absent layers/qubits. Each strategy
weights the participants differently.
"""
import numpy as np

from hetqfl.data import partition_noniid, split_train_test, synth_blobs
from hetqfl.encode import Encoder, client_state_summary, standardize
from hetqfl.fed import ClientData, ClientProfile, ServerState, TrainingSettings, run_round
from hetqfl.qnn import build_pqc
from hetqfl.qsim import NoiseConfig

ds = synth_blobs(600, 4, 16, spread=1.0, seed=0)
train, test = split_train_test(ds, 0.8, seed=0)
feats = standardize(train.features)
plan = partition_noniid(train, 4, 2, seed=0)

clients = [
    ClientProfile(0, q_i=4, L_i=2, phi_i=0.99),
    ClientProfile(1, q_i=3, L_i=2, phi_i=0.95, noise=NoiseConfig(gamma_ad=0.05, enabled=True)),
    ClientProfile(2, q_i=4, L_i=1, phi_i=0.85, noise=NoiseConfig(gamma_ad=0.15, enabled=True)),
    ClientProfile(3, q_i=2, L_i=2, phi_i=0.99),
]
data = []
for c, idx in zip(clients, plan.assignment):
    enc = Encoder("amplitude", c.q_i)
    x = enc.fit_features(feats[idx])
    v, y = enc.vectors(x), train.labels[idx]
    k = int(0.8 * len(y))
    data.append(ClientData(v[:k], y[:k], v[k:], y[k:], client_state_summary(x[:k], enc)))
enc = Encoder("amplitude", 4)
test_set = (enc.vectors(standardize(test.features, reference=train.features)), test.labels)
settings = TrainingSettings(local_steps=5, eta=0.05, lam=0.1, gamma_ns=1.0, optimizer="adam")

for strategy in ("uniform", "layerwise", "fairness", "noise_aware", "encoding_aware"):
    server = ServerState(model=build_pqc(4, 2, seed=0, num_classes=4), tau="adaptive", strategy=strategy)
    for _ in range(5):
        server, rec = run_round(server, clients, data, settings, test_set)
    print(f"{strategy:>15}: test acc {rec.test_acc:.3f}  participants {rec.num_participants}  "
          f"weights {np.round(rec.weights, 3).tolist()}")
