"""Seeded synthetic multi-phase radial feeders with devices and loads.

Stands in for proprietary-scale test systems: grows a random tree with a
three-phase trunk and probabilistic phase drops, draws per-segment
impedances in ranges that put a few-hundred-bus feeder at a realistic 3-8%
voltage drop under unit load scale, sprinkles controllable devices, and
fills the rest with background loads. Identical spec and seed reproduce
the same feeder byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .network import Bus, Line, Network, PHASE_NAME
from .opf import Device
from .partition import PartitionHierarchy, auto_partition


@dataclass(frozen=True)
class FeederSpec:
    n_buses: int                       # non-substation bus count
    root_degree: int = 3               # main feeders leaving the substation
    child_weights: tuple[float, ...] = (0.25, 0.45, 0.22, 0.08)  # P(0..3 children)
    trunk_depth: int = 4               # levels forced three-phase
    phase_drop: float = 0.25           # per-phase drop probability past the trunk
    r_range: tuple[float, float] = (0.003, 0.015)   # p.u. per segment
    x_range: tuple[float, float] = (0.006, 0.03)
    mutual_fraction: float = 0.3       # mutual entries vs self-impedance magnitude
    device_density: float = 0.3        # fraction of (bus, phase) slots with a device
    device_span: float = 0.5           # device box half-width around preference
    load_scale: float = 1.0            # background load multiplier
    seed: int = 0

    def __post_init__(self):
        if self.n_buses < 1:
            raise ValueError("need at least one bus besides the substation")
        if self.root_degree < 1:
            raise ValueError("the substation needs at least one feeder")
        if not np.isclose(sum(self.child_weights), 1.0):
            raise ValueError("child count weights must sum to one")
        if not (0.0 <= self.phase_drop <= 1.0 and 0.0 <= self.device_density <= 1.0):
            raise ValueError("probabilities must lie in [0, 1]")
        for lo, hi in (self.r_range, self.x_range):
            if not (0 < lo <= hi):
                raise ValueError("impedance ranges must be positive")
        if self.trunk_depth < 0 or self.load_scale < 0 or self.device_span <= 0:
            raise ValueError("trunk depth, load scale, and device span must be sensible")


@dataclass(frozen=True)
class GeneratedFeeder:
    net: Network
    devices: tuple[Device, ...]
    background: dict[tuple[int, str], tuple[float, float]]
    partition: PartitionHierarchy
    v_min: float
    v_max: float


def generate(
    spec: FeederSpec,
    target_area_size: Optional[int] = None,
    target_subarea_size: Optional[int] = None,
    v_min: float = 0.95,
    v_max: float = 1.05,
) -> GeneratedFeeder:
    """Generate a feeder, its devices and loads, and a suggested partition."""
    rng = np.random.default_rng(spec.seed)

    # Topology: fixed substation degree (the main feeders), then BFS growth
    # with a seeded child-count draw per frontier bus.
    parent = {0: None}
    depth = {0: 0}
    frontier = []
    next_id = 1
    for _ in range(min(spec.root_degree, spec.n_buses)):
        parent[next_id] = 0
        depth[next_id] = 1
        frontier.append(next_id)
        next_id += 1
    counts = np.arange(len(spec.child_weights))
    while next_id <= spec.n_buses:
        if not frontier:
            raise ValueError("feeder growth stalled; widen child_weights")
        bus = frontier.pop(0)
        n_children = int(rng.choice(counts, p=spec.child_weights))
        if not frontier and n_children == 0:
            n_children = 1  # keep growth alive until the target is met
        for _ in range(n_children):
            if next_id > spec.n_buses:
                break
            parent[next_id] = bus
            depth[next_id] = depth[bus] + 1
            frontier.append(next_id)
            next_id += 1

    # Phases: full trunk, then per-phase drops (never below one phase).
    phases: dict[int, tuple[str, ...]] = {0: ("a", "b", "c")}
    for bid in range(1, spec.n_buses + 1):
        inherited = phases[parent[bid]]
        if depth[bid] <= spec.trunk_depth or len(inherited) == 1:
            phases[bid] = inherited
            continue
        kept = [ph for ph in inherited if rng.random() >= spec.phase_drop]
        if not kept:
            kept = [inherited[int(rng.integers(len(inherited)))]]
        phases[bid] = tuple(kept)

    # Per-segment impedances: symmetric matrices with scaled mutual terms.
    buses = [Bus(id=0, phases=("a", "b", "c"), parent=None)]
    lines = []
    for bid in range(1, spec.n_buses + 1):
        buses.append(Bus(id=bid, phases=phases[bid], parent=parent[bid]))
        z = np.zeros((3, 3), dtype=np.complex128)
        codes = [("abc".index(ph)) for ph in phases[bid]]
        selfz = {}
        for c in codes:
            r = rng.uniform(*spec.r_range)
            x = rng.uniform(*spec.x_range)
            selfz[c] = complex(r, x)
            z[c, c] = selfz[c]
        for i, ci in enumerate(codes):
            for cj in codes[i + 1:]:
                mutual = spec.mutual_fraction * 0.5 * (selfz[ci] + selfz[cj])
                z[ci, cj] = mutual
                z[cj, ci] = mutual
        lines.append(Line(from_bus=parent[bid], to_bus=bid, z=z))
    net = Network(buses, lines)

    # Devices on a seeded subset of slots, background loads on the rest.
    devices = []
    background: dict[tuple[int, str], tuple[float, float]] = {}
    span = spec.device_span
    for k, c in zip(net.flat_bus_pos, net.flat_phase):
        bid = net.buses[int(k)].id
        ph = PHASE_NAME[int(c)]
        if rng.random() < spec.device_density:
            devices.append(
                Device(
                    bus=bid, phase=ph, p0=0.0, q0=0.0,
                    p_min=-span, p_max=span, q_min=-span, q_max=span,
                )
            )
        else:
            pl = -spec.load_scale * rng.uniform(0.002, 0.006)
            ql = pl * rng.uniform(0.2, 0.5)
            background[(bid, ph)] = (pl, ql)

    if target_area_size is None:
        target_area_size = max(2, spec.n_buses // 4)
    if target_subarea_size is None:
        target_subarea_size = max(2, target_area_size // 3)
    part = auto_partition(net, target_area_size, target_subarea_size)

    return GeneratedFeeder(
        net=net,
        devices=tuple(devices),
        background=background,
        partition=part,
        v_min=v_min,
        v_max=v_max,
    )


def feeder_documents(feeder: GeneratedFeeder) -> tuple[dict, dict, dict]:
    """The three JSON documents (network, devices, partition) for a feeder."""
    from .network import network_to_document
    from .partition import partition_to_document

    devices_doc = {
        "devices": [
            {
                "bus": d.bus, "phase": d.phase, "p0": d.p0, "q0": d.q0,
                "pmin": d.p_min, "pmax": d.p_max, "qmin": d.q_min, "qmax": d.q_max,
                "wp": d.w_p, "wq": d.w_q,
            }
            for d in feeder.devices
        ],
        "background": [
            {"bus": bus, "phase": ph, "p": pv, "q": qv}
            for (bus, ph), (pv, qv) in sorted(feeder.background.items())
        ],
        "vmin": feeder.v_min,
        "vmax": feeder.v_max,
    }
    return (
        network_to_document(feeder.net),
        devices_doc,
        partition_to_document(feeder.partition),
    )
