"""Noise channels on a single qubit.

Prepare |1>, let it relax, and watch populations and coherences decay under
amplitude damping, phase damping and T1/T2 thermal relaxation.
"""
import math

import numpy as np

from hetqfl.qsim import (
    Gate,
    NoiseConfig,
    QuantumState,
    amplitude_damping,
    apply_channel,
    apply_gate,
    phase_damping,
    thermal_relaxation,
    to_density,
)

excited = to_density(QuantumState(1, [0, 1]))
plus = to_density(apply_gate(QuantumState.zero(1), Gate("H", (0,))))

# %% Amplitude damping: the excited population shrinks by (1 - gamma) per use.
rho = excited
for n in range(1, 6):
    rho = apply_channel(rho, amplitude_damping(0.2), 0)
    print(f"AD step {n}: P(1) = {rho.data[1, 1].real:.5f}   (0.8^{n} = {0.8**n:.5f})")

# %% Phase damping leaves populations alone and scales coherence by sqrt(1 - p).
rho = apply_channel(plus, phase_damping(0.19), 0)
print("\nPD(0.19) on |+>: diag", np.round(np.diag(rho.data).real, 5), " off-diag", round(rho.data[0, 1].real, 5))

# %% Thermal relaxation with T1 = 50 us, T2 = 70 us.
print("\nthermal relaxation, T1=50us T2=70us")
for t_us in (0.05, 5, 50, 200):
    ch = thermal_relaxation(50, 70, t_us * 1e3)
    pop = apply_channel(excited, ch, 0).data[1, 1].real
    coh = abs(apply_channel(plus, ch, 0).data[0, 1])
    print(f"  t={t_us:>6} us  P(1)={pop:.5f} (e^-t/T1={math.exp(-t_us / 50):.5f})  "
          f"|rho01|={coh:.5f} (0.5 e^-t/T2={0.5 * math.exp(-t_us / 70):.5f})")

# %% The per-gate composite channel used during training.
noise = NoiseConfig(gamma_ad=0.05, p_pd=0.02, enabled=True)
for two in (False, True):
    ch = noise.channel(two_qubit=two)
    out = apply_channel(excited, ch, 0)
    print(f"\ncomposite channel after a {'2q' if two else '1q'} gate: {len(ch.operators)} Kraus ops, P(1) = {out.data[1, 1].real:.5f}")
