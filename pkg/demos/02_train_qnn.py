"""Train one parameterized circuit on a 2-class toy task, noiseless and noisy.

The circuit is RX/RY/RZ on every qubit followed by a CNOT ring, repeated per
layer, read out as per-qubit <Z> through a linear head. Gradients come from
the parameter-shift rule.
"""
import numpy as np

from hetqfl.data import split_train_test, synth_blobs
from hetqfl.encode import Encoder, standardize
from hetqfl.qnn import TrainerState, adam_step, build_pqc, evaluate, grad_parameter_shift
from hetqfl.qsim import NOISELESS, NoiseConfig

ds = synth_blobs(400, 2, 4, spread=0.6, seed=0)
train, test = split_train_test(ds, 0.8, seed=0)
# angle encoding: amplitude encoding maps x and -x to the same state, which
# would merge two blobs placed symmetrically about the origin
enc = Encoder("angle", 2)
xtr = enc.vectors(enc.fit_features(standardize(train.features)))
xte = enc.vectors(enc.fit_features(standardize(test.features, reference=train.features)))

for label, noise in (("noiseless", NOISELESS), ("gamma_ad=0.15", NoiseConfig(gamma_ad=0.15, enabled=True))):
    model = build_pqc(2, 2, seed=1, num_classes=2)
    trainer = TrainerState(eta=0.05, optimizer="adam")
    rng = np.random.default_rng(0)
    omega = model.to_vector()
    for step in range(150):
        pick = rng.choice(len(xtr), 32, replace=False)
        g = grad_parameter_shift(model.with_vector(omega), (xtr[pick], train.labels[pick]), noise)
        omega = adam_step(omega, g.grad, trainer)
        if step % 50 == 0:
            loss, acc = evaluate(model.with_vector(omega), xtr, train.labels, noise)
            print(f"[{label}] step {step:3d}  train loss {loss:.4f}  acc {acc:.3f}")
    loss, acc = evaluate(model.with_vector(omega), xte, test.labels)
    print(f"[{label}] noiseless test accuracy {acc:.3f}\n")
