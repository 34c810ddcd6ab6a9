"""Two-level subtree clustering of a radial feeder.

Areas are full subtrees (a root bus plus every descendant); each area may
be subdivided into disjoint full subtrees (subareas) plus a remainder.
Buses outside every area form the unclustered set. Full-subtree closure is
what licenses the multilevel coupling engines: any two buses in disjoint
subtrees share the common path of the subtree roots, and a bus outside a
subtree shares the root's common path with every bus inside it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .network import Network, NetworkError, PHASE_CODE

PartitionScope = tuple  # ("area", k) | ("subarea", k, m) | ("unclustered",)


@dataclass(frozen=True)
class Subarea:
    index: int                 # position within the parent area
    root: int                  # bus id
    members: frozenset[int]    # bus ids, root included


@dataclass(frozen=True)
class Area:
    index: int
    root: int
    members: frozenset[int]
    subareas: tuple[Subarea, ...]
    remainder: frozenset[int]  # members not covered by any subarea


@dataclass(frozen=True)
class PartitionHierarchy:
    areas: tuple[Area, ...]
    unclustered: frozenset[int]

    @property
    def n_areas(self) -> int:
        return len(self.areas)


def _subtree_ids(net: Network, root: int) -> frozenset[int]:
    ids = {root}
    ids.update(net.buses[k].id for k in net.descendants_pos(root))
    return frozenset(ids)


def validate_partition(net: Network, part: PartitionHierarchy) -> list[str]:
    """Check subtree closure, disjointness, coverage, and root-phase coverage.

    Returns a list of violation descriptions; empty means the partition is
    valid for every coupling engine.
    """
    problems: list[str] = []
    all_ids = {b.id for b in net.buses if b.id != 0}

    def check_ids(ids, what):
        unknown = sorted(i for i in ids if i not in all_ids and i != 0)
        if unknown:
            problems.append(f"{what}: unknown or substation bus ids {unknown}")
            return False
        return True

    claimed: dict[int, int] = {}
    for area in part.areas:
        tag = f"area {area.index}"
        if area.root == 0:
            problems.append(f"{tag}: the substation cannot root an area")
            continue
        if not check_ids(area.members | {area.root}, tag):
            continue
        closure = _subtree_ids(net, area.root)
        if area.members != closure:
            missing = sorted(closure - area.members)
            extra = sorted(area.members - closure)
            problems.append(
                f"{tag}: subtree closure violated at root {area.root}"
                f" (missing {missing}, extra {extra})"
            )
        for bid in area.members:
            if bid in claimed:
                problems.append(
                    f"{tag}: bus {bid} already belongs to area {claimed[bid]}"
                )
            claimed[bid] = area.index

        root_phases = set(net.bus(area.root).phases)
        for bid in area.members:
            if bid in all_ids and not set(net.bus(bid).phases) <= root_phases:
                problems.append(
                    f"{tag}: root {area.root} lacks a phase carried by member {bid}"
                )

        sub_claimed: dict[int, int] = {}
        for sub in area.subareas:
            stag = f"{tag} subarea {sub.index}"
            if not check_ids(sub.members | {sub.root}, stag):
                continue
            if sub.root not in area.members:
                problems.append(f"{stag}: root {sub.root} is outside the area")
                continue
            closure = _subtree_ids(net, sub.root)
            if sub.members != closure:
                problems.append(f"{stag}: subtree closure violated at root {sub.root}")
            if not sub.members <= area.members:
                problems.append(f"{stag}: members leak outside the area")
            for bid in sub.members:
                if bid in sub_claimed:
                    problems.append(
                        f"{stag}: bus {bid} already in subarea {sub_claimed[bid]}"
                    )
                sub_claimed[bid] = sub.index
            sroot_phases = set(net.bus(sub.root).phases)
            for bid in sub.members:
                if bid in all_ids and not set(net.bus(bid).phases) <= sroot_phases:
                    problems.append(
                        f"{stag}: root {sub.root} lacks a phase carried by member {bid}"
                    )
        expected_rem = area.members - set(sub_claimed)
        if area.remainder != expected_rem:
            problems.append(f"{tag}: remainder is not members minus subarea members")

    if check_ids(part.unclustered, "unclustered set"):
        overlap = sorted(set(part.unclustered) & set(claimed))
        if overlap:
            problems.append(f"unclustered set overlaps areas at buses {overlap}")
        covered = set(claimed) | set(part.unclustered)
        if covered != all_ids:
            missing = sorted(all_ids - covered)
            if missing:
                problems.append(f"buses {missing} belong to no area and are not unclustered")
    return problems


def auto_partition(
    net: Network, target_area_size: int, target_subarea_size: int = 0
) -> PartitionHierarchy:
    """Deterministic greedy clustering into full-subtree areas.

    Walks the tree in post order (children in ascending bus-id order) and
    cuts a bus as an area root the first time its subtree size reaches the
    target, provided the subtree is intact (no descendant already cut) and
    not larger than twice the target. Ancestors of a cut are never cut, so
    every area is a full subtree of the original tree. The same rule runs
    inside each area with the subarea target when one is given.
    """
    if target_area_size < 1 or target_subarea_size < 0:
        raise ValueError("size targets must be positive")

    root_pos = net.bus_pos(0)
    area_root_pos = _greedy_cuts(net, root_pos, target_area_size, forbid={root_pos})

    areas = []
    clustered: set[int] = set()
    for k, rp in enumerate(area_root_pos):
        root_id = net.buses[rp].id
        members = _subtree_ids(net, root_id)
        clustered |= members
        subareas = []
        if target_subarea_size >= 1:
            sub_roots = _greedy_cuts(net, rp, target_subarea_size, forbid=set())
            for m, srp in enumerate(sub_roots):
                sid = net.buses[srp].id
                subareas.append(Subarea(index=m, root=sid, members=_subtree_ids(net, sid)))
        covered = set().union(*(s.members for s in subareas)) if subareas else set()
        areas.append(
            Area(
                index=k,
                root=root_id,
                members=members,
                subareas=tuple(subareas),
                remainder=frozenset(members - covered),
            )
        )
    all_ids = {b.id for b in net.buses if b.id != 0}
    return PartitionHierarchy(areas=tuple(areas), unclustered=frozenset(all_ids - clustered))


def _greedy_cuts(net: Network, scope_root_pos: int, target: int, forbid: set[int]) -> list[int]:
    """Positions of cut subtree roots under the greedy size rule.

    Post-order over the subtree at scope_root_pos; a node is cut when its
    intact subtree size lands in [target, 2 * target]. Cutting marks every
    ancestor as blocked. Among the ascending sizes on a root path the rule
    fires at the deepest qualifying node, and post-order with id-sorted
    children makes the outcome independent of dict/update order.
    """
    # Iterative post-order.
    post: list[int] = []
    stack = [scope_root_pos]
    while stack:
        k = stack.pop()
        post.append(k)
        stack.extend(net.children_pos[k])
    post.reverse()

    size = {k: 1 for k in post}
    broken = {k: False for k in post}  # a descendant was cut
    cuts: list[int] = []
    for k in post:
        for c in net.children_pos[k]:
            size[k] += size[c]
            broken[k] = broken[k] or broken[c]
        if k in forbid or broken[k]:
            continue
        if target <= size[k] <= 2 * target:
            cuts.append(k)
            broken[k] = True
    cuts.sort(key=lambda k: net.buses[k].id)
    return cuts


@dataclass(frozen=True)
class DualAggregates:
    """Per-phase sums of dual differences for each area and subarea."""

    areas: np.ndarray                       # shape (K, 3)
    subareas: dict[tuple[int, int], np.ndarray]  # (area, subarea) -> shape (3,)


def area_dual_aggregates(
    net: Network, part: PartitionHierarchy, mu_upper: np.ndarray, mu_lower: np.ndarray
) -> DualAggregates:
    """Aggregate mu_upper - mu_lower per area (and subarea) and phase.

    These sums are the only per-area information the inter-area coupling
    term consumes; per-bus duals never leave their scope.
    """
    mu_upper = np.asarray(mu_upper, dtype=np.float64)
    mu_lower = np.asarray(mu_lower, dtype=np.float64)
    if mu_upper.shape != (net.n_flat,) or mu_lower.shape != (net.n_flat,):
        raise ValueError(f"dual vectors must have shape ({net.n_flat},)")
    d = mu_upper - mu_lower
    areas = np.zeros((len(part.areas), 3), dtype=np.float64)
    subs: dict[tuple[int, int], np.ndarray] = {}
    for area in part.areas:
        areas[area.index] = _scope_sums(net, area.members, d)
        for sub in area.subareas:
            subs[(area.index, sub.index)] = _scope_sums(net, sub.members, d)
    return DualAggregates(areas=areas, subareas=subs)


def _scope_sums(net: Network, members, d: np.ndarray) -> np.ndarray:
    out = np.zeros(3, dtype=np.float64)
    for bid in sorted(members):
        k = net.bus_pos(bid)
        for ph in net.buses[k].phases:
            out[PHASE_CODE[ph]] += d[net.index_of[k, PHASE_CODE[ph]]]
    return out


# -- document I/O ---------------------------------------------------------

def load_partition(document: dict | str | Path, net: Network) -> PartitionHierarchy:
    """Build a partition from its document; members derive from the roots."""
    if isinstance(document, (str, Path)):
        try:
            document = json.loads(Path(document).read_text())
        except json.JSONDecodeError as exc:
            raise NetworkError(f"partition document is not valid JSON: {exc}") from exc
    areas = []
    claimed: set[int] = set()
    for k, entry in enumerate(document.get("areas", [])):
        root = int(entry["root"])
        members = _subtree_ids(net, root)
        subareas = []
        covered: set[int] = set()
        for m, sentry in enumerate(entry.get("subareas", [])):
            sroot = int(sentry["root"])
            smembers = _subtree_ids(net, sroot)
            subareas.append(Subarea(index=m, root=sroot, members=smembers))
            covered |= smembers
        areas.append(
            Area(
                index=k,
                root=root,
                members=members,
                subareas=tuple(subareas),
                remainder=frozenset(members - covered),
            )
        )
        claimed |= members
    all_ids = {b.id for b in net.buses if b.id != 0}
    return PartitionHierarchy(areas=tuple(areas), unclustered=frozenset(all_ids - claimed))


def partition_to_document(part: PartitionHierarchy) -> dict:
    return {
        "areas": [
            {
                "root": area.root,
                "subareas": [{"root": sub.root} for sub in area.subareas],
            }
            for area in part.areas
        ]
    }


def save_partition(part: PartitionHierarchy, path: str | Path) -> None:
    Path(path).write_text(json.dumps(partition_to_document(part), indent=2) + "\n")
