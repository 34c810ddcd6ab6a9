"""Build a feeder and inspect the linearized voltage model.

Walks through the basic objects: a synthetic multi-phase radial feeder,
common-path impedance queries, the dense sensitivity matrices, and the
affine squared-voltage model they define.
"""

import numpy as np

from mlopf import (
    FeederSpec,
    build_sensitivity,
    dv_dp_entry,
    generate,
    voltage_linear,
)

feeder = generate(FeederSpec(n_buses=40, seed=7))
net = feeder.net
print(f"feeder: {net.n_buses - 1} buses + substation, {net.n_flat} (bus, phase) indices")

# Every sensitivity entry reduces to the impedance both buses share on the
# way back to the substation. Pick the deepest (bus, phase) slot.
some_bus, ph = net.flat_labels()[-1]
print(f"path to bus {some_bus}:", net.path_to_root(some_bus))
z = net.common_path_impedance(some_bus, some_bus, ph, ph)
print(f"cumulative self-impedance at bus {some_bus}, phase {ph}: {z:.5f}")
print(
    f"d v({some_bus},{ph}) / d p({some_bus},{ph}) =",
    f"{dv_dp_entry(net, some_bus, ph, some_bus, ph):.5f}  (= 2 Re of the above)",
)

sens = build_sensitivity(net)
print(f"\nR and X are dense {sens.n} x {sens.n}; v_tilde is the no-load profile.")

# Inject 0.1 p.u. at one index and watch the voltage rise ripple through
# the subtree that shares its path.
p = np.zeros(sens.n)
q = np.zeros(sens.n)
idx = net.flat_index(some_bus, ph)
p[idx] = 0.1
v = voltage_linear(sens, p, q)
rise = v - sens.v_tilde
print(f"\ninjecting 0.1 p.u. at bus {some_bus} phase {ph}:")
print(f"  own squared-voltage rise : {rise[idx]:.6f}")
print(f"  indices that feel it     : {np.sum(rise > 1e-9)} of {sens.n}")
print(f"  largest foreign rise     : {np.max(np.delete(rise, idx)):.6f}")
