"""Rooted multi-phase radial network model.

The network is a tree rooted at the substation (bus 0). Everything the
linearized voltage model needs reduces to common-path impedance queries:
the per-phase-pair impedance summed over the shared portion of two buses'
paths back to the substation. That shared portion is the root path of the
buses' lowest common ancestor, so this module owns the topology, the
per-unit impedance data, the flat (bus, phase) index space, and fast LCA
machinery for those queries.

Networks are immutable after construction and safe for concurrent reads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

PHASES = ("a", "b", "c")
PHASE_CODE = {"a": 0, "b": 1, "c": 2}
PHASE_NAME = {0: "a", 1: "b", 2: "c"}


class NetworkError(ValueError):
    """Malformed document or violated radial-network invariant."""


def phase_code(phase: str | int) -> int:
    """Numeric code of a phase: a, b, c map to 0, 1, 2."""
    if isinstance(phase, str):
        try:
            return PHASE_CODE[phase]
        except KeyError:
            raise NetworkError(f"unknown phase {phase!r}") from None
    if phase not in (0, 1, 2):
        raise NetworkError(f"unknown phase code {phase!r}")
    return int(phase)


@dataclass(frozen=True)
class Bus:
    id: int
    phases: tuple[str, ...]     # sorted, nonempty subset of ("a", "b", "c")
    parent: int | None          # None only for the substation (bus 0)


@dataclass(frozen=True)
class Line:
    from_bus: int               # parent side
    to_bus: int                 # child side
    z: np.ndarray               # 3x3 complex p.u., zero outside the line's phase pairs

    def phase_pairs(self) -> dict[str, complex]:
        """Nonzero impedance entries keyed by two-character phase-pair strings."""
        out = {}
        for i in range(3):
            for j in range(3):
                if self.z[i, j] != 0:
                    out[PHASE_NAME[i] + PHASE_NAME[j]] = complex(self.z[i, j])
        return out


class Network:
    """Radial multi-phase network with a flat (bus, phase) index space.

    Flat indices cover every phase of every non-substation bus, ordered
    bus-id-major with phases a < b < c within a bus. The substation carries
    no flat indices; its voltage is the reference.
    """

    def __init__(self, buses: list[Bus], lines: list[Line], base_v_squared: float = 1.0):
        if base_v_squared <= 0:
            raise NetworkError("base_v_squared must be positive")
        self.base_v_squared = float(base_v_squared)
        self.buses = sorted(buses, key=lambda b: b.id)
        self.lines = list(lines)
        self._validate_and_build()

    # -- construction ----------------------------------------------------

    def _validate_and_build(self) -> None:
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise NetworkError(f"duplicate bus ids: {dupes}")
        if any(i < 0 for i in ids):
            raise NetworkError("bus ids must be nonnegative")
        self._pos = {bid: k for k, bid in enumerate(ids)}
        if 0 not in self._pos:
            raise NetworkError("substation bus 0 is missing")
        n = len(self.buses)

        for b in self.buses:
            if not b.phases:
                raise NetworkError(f"bus {b.id} has no phases")
            if tuple(sorted(b.phases, key=phase_code)) != tuple(b.phases):
                raise NetworkError(f"bus {b.id} phases must be sorted a<b<c")
            if any(ph not in PHASE_CODE for ph in b.phases):
                raise NetworkError(f"bus {b.id} has an unknown phase")
        sub = self.buses[self._pos[0]]
        if sub.parent is not None:
            raise NetworkError("substation bus 0 must not have a parent")
        if sub.phases != PHASES:
            raise NetworkError("substation bus 0 must carry phases a, b, c")

        self.parent_pos = np.full(n, -1, dtype=np.int64)
        for b in self.buses:
            if b.id == 0:
                continue
            if b.parent is None:
                raise NetworkError(f"bus {b.id} has no parent")
            if b.parent not in self._pos:
                raise NetworkError(f"bus {b.id} references unknown parent {b.parent}")
            if b.parent == b.id:
                raise NetworkError(f"not a tree: bus {b.id} is its own parent")
            self.parent_pos[self._pos[b.id]] = self._pos[b.parent]

        # Exactly one line per non-root bus, endpoints agreeing with parents.
        if len(self.lines) != n - 1:
            raise NetworkError(
                f"not a tree: {len(self.lines)} lines for {n} buses (need {n - 1})"
            )
        self._line_by_child = {}
        for ln in self.lines:
            if ln.to_bus not in self._pos or ln.from_bus not in self._pos:
                raise NetworkError(f"line ({ln.from_bus},{ln.to_bus}) references unknown bus")
            if ln.to_bus in self._line_by_child:
                raise NetworkError(f"not a tree: bus {ln.to_bus} has two incoming lines")
            child = self.buses[self._pos[ln.to_bus]]
            if child.parent != ln.from_bus:
                raise NetworkError(
                    f"line ({ln.from_bus},{ln.to_bus}) disagrees with bus {ln.to_bus}'s "
                    f"parent {child.parent}"
                )
            if np.any(ln.z.diagonal().real < 0):
                raise NetworkError(
                    f"line ({ln.from_bus},{ln.to_bus}) has negative series resistance"
                )
            self._line_by_child[ln.to_bus] = ln

        # Reachability from the substation: anything unreached sits on a cycle
        # (parent pointers all resolve, so no dangling ends are possible).
        self.children_pos: list[list[int]] = [[] for _ in range(n)]
        for k in range(n):
            pp = self.parent_pos[k]
            if pp >= 0:
                self.children_pos[pp].append(k)
        for ch in self.children_pos:
            ch.sort(key=lambda k: self.buses[k].id)
        self.depth = np.full(n, -1, dtype=np.int64)
        self.depth[self._pos[0]] = 0
        order = [self._pos[0]]
        stack = [self._pos[0]]
        while stack:
            k = stack.pop()
            for c in self.children_pos[k]:
                self.depth[c] = self.depth[k] + 1
                order.append(c)
                stack.append(c)
        if len(order) != n:
            missing = sorted(self.buses[k].id for k in range(n) if self.depth[k] < 0)
            raise NetworkError(f"not a tree: buses {missing} are not reachable from bus 0")
        self._preorder = np.array(order, dtype=np.int64)

        # Phases may only drop moving away from the substation.
        self.phase_mask = np.zeros((n, 3), dtype=bool)
        for b in self.buses:
            for ph in b.phases:
                self.phase_mask[self._pos[b.id], PHASE_CODE[ph]] = True
        for b in self.buses:
            if b.id == 0:
                continue
            pmask = self.phase_mask[self._pos[b.parent]]
            for ph in b.phases:
                if not pmask[PHASE_CODE[ph]]:
                    raise NetworkError(
                        f"bus {b.id}: phase {ph} not present on parent bus {b.parent}"
                    )

        # Line phase set must equal the child's phase set.
        for ln in self.lines:
            cmask = self.phase_mask[self._pos[ln.to_bus]]
            touched = (ln.z != 0).any(axis=1) | (ln.z != 0).any(axis=0)
            for c in range(3):
                if touched[c] and not cmask[c]:
                    raise NetworkError(
                        f"line ({ln.from_bus},{ln.to_bus}) has impedance on phase "
                        f"{PHASE_NAME[c]} absent from bus {ln.to_bus}"
                    )

        # Zero-padded per-child line impedances and root-path prefix sums.
        self.z_line = np.zeros((n, 3, 3), dtype=np.complex128)
        for ln in self.lines:
            self.z_line[self._pos[ln.to_bus]] = ln.z
        self.z_prefix = np.zeros((n, 3, 3), dtype=np.complex128)
        for k in self._preorder:
            pp = self.parent_pos[k]
            if pp >= 0:
                self.z_prefix[k] = self.z_prefix[pp] + self.z_line[k]

        # Flat (bus, phase) index space, bus-id-major, phase-minor.
        flat_bus_pos: list[int] = []
        flat_phase: list[int] = []
        self.index_of = np.full((n, 3), -1, dtype=np.int64)
        for b in self.buses:
            if b.id == 0:
                continue
            k = self._pos[b.id]
            for ph in b.phases:
                self.index_of[k, PHASE_CODE[ph]] = len(flat_bus_pos)
                flat_bus_pos.append(k)
                flat_phase.append(PHASE_CODE[ph])
        self.flat_bus_pos = np.array(flat_bus_pos, dtype=np.int64)
        self.flat_phase = np.array(flat_phase, dtype=np.int64)
        self.n_flat = len(flat_bus_pos)

    # -- basic lookups ---------------------------------------------------

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    def bus_pos(self, bus_id: int) -> int:
        try:
            return self._pos[bus_id]
        except KeyError:
            raise NetworkError(f"unknown bus id {bus_id}") from None

    def bus(self, bus_id: int) -> Bus:
        return self.buses[self.bus_pos(bus_id)]

    def line_to(self, bus_id: int) -> Line:
        self.bus_pos(bus_id)
        try:
            return self._line_by_child[bus_id]
        except KeyError:
            raise NetworkError(f"bus {bus_id} has no incoming line") from None

    def flat_index(self, bus_id: int, phase: str | int) -> int:
        idx = self.index_of[self.bus_pos(bus_id), phase_code(phase)]
        if idx < 0:
            raise NetworkError(f"bus {bus_id} does not carry phase {phase}")
        return int(idx)

    def flat_labels(self) -> list[tuple[int, str]]:
        """(bus id, phase) per flat index, in index order."""
        return [
            (self.buses[k].id, PHASE_NAME[c])
            for k, c in zip(self.flat_bus_pos, self.flat_phase)
        ]

    def descendants_pos(self, bus_id: int) -> list[int]:
        """Positions of all descendants of a bus (the bus itself excluded)."""
        start = self.bus_pos(bus_id)
        out: list[int] = []
        stack = list(self.children_pos[start])
        while stack:
            k = stack.pop()
            out.append(k)
            stack.extend(self.children_pos[k])
        return out

    # -- path and impedance queries ---------------------------------------

    def path_to_root(self, bus_id: int) -> list[tuple[int, int]]:
        """Lines on the unique substation-to-bus path, ordered outward."""
        k = self.bus_pos(bus_id)
        rev = []
        while self.parent_pos[k] >= 0:
            p = self.parent_pos[k]
            rev.append((self.buses[p].id, self.buses[k].id))
            k = p
        rev.reverse()
        return rev

    @cached_property
    def _euler(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, list[np.ndarray]]:
        """Euler tour + sparse-table RMQ over depths for O(1) LCA queries."""
        n = self.n_buses
        tour: list[int] = []
        first = np.full(n, -1, dtype=np.int64)
        # Iterative DFS; feeders can be path-shaped, so no recursion.
        stack: list[tuple[int, int]] = [(self._pos[0], 0)]
        while stack:
            k, ci = stack.pop()
            if ci == 0:
                first[k] = len(tour)
            tour.append(k)  # nodes reappear on every resume: the Euler tour
            if ci < len(self.children_pos[k]):
                stack.append((k, ci + 1))
                stack.append((self.children_pos[k][ci], 0))
        e = np.array(tour, dtype=np.int64)
        de = self.depth[e]
        m = len(e)
        levels = max(1, int(np.log2(m)) + 1)
        table = [np.arange(m, dtype=np.int64)]
        for lv in range(1, levels):
            half = 1 << (lv - 1)
            if half >= m:
                break
            prev = table[-1]
            a = prev[: m - 2 * half + 1]
            b = prev[half: m - half + 1]
            table.append(np.where(de[a] <= de[b], a, b))
        return e, de, first, table

    def lca_pos(self, rows_pos: np.ndarray, cols_pos: np.ndarray) -> np.ndarray:
        """Vectorized lowest-common-ancestor positions; broadcasts its inputs."""
        e, de, first, table = self._euler
        fi = first[np.asarray(rows_pos)]
        fj = first[np.asarray(cols_pos)]
        lo = np.minimum(fi, fj)
        hi = np.maximum(fi, fj)
        span = hi - lo + 1
        k = np.frexp(span.astype(np.float64))[1] - 1  # floor(log2(span))
        k = np.minimum(k, len(table) - 1)
        a = table_take(table, k, lo)
        b = table_take(table, k, hi - (1 << k.astype(np.int64)) + 1)
        pick = np.where(de[a] <= de[b], a, b)
        return e[pick]

    def lca(self, i: int, j: int) -> int:
        """Lowest common ancestor bus id of two buses."""
        out = self.lca_pos(
            np.array([self.bus_pos(i)]), np.array([self.bus_pos(j)])
        )
        return self.buses[int(out[0])].id

    def common_path_impedance(
        self, i: int, j: int, phi: str | int, psi: str | int
    ) -> complex:
        """Summed (mutual) impedance over the shared root paths of buses i and j.

        Lines lacking either phase contribute zero; disjoint paths give zero.
        """
        a, b = phase_code(phi), phase_code(psi)
        lca = self.lca_pos(
            np.array([self.bus_pos(i)]), np.array([self.bus_pos(j)])
        )[0]
        return complex(self.z_prefix[lca, a, b])

    def common_path_matrix(self, i: int, j: int) -> np.ndarray:
        """All nine phase-pair common-path impedances of buses i and j."""
        lca = self.lca_pos(
            np.array([self.bus_pos(i)]), np.array([self.bus_pos(j)])
        )[0]
        return self.z_prefix[lca].copy()


def table_take(table: list[np.ndarray], k: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Gather sparse-table argmin entries at per-query levels k."""
    out = np.empty(idx.shape, dtype=np.int64)
    for lv in range(len(table)):
        sel = k == lv
        if np.any(sel):
            out[sel] = table[lv][idx[sel]]
    return out


def validate_radial(net: Network) -> list[str]:
    """Re-check structural invariants on a built network; empty means valid."""
    problems: list[str] = []
    n = net.n_buses
    if len(net.lines) != n - 1:
        problems.append("line count does not match bus count minus one")
    if net.buses[net.bus_pos(0)].phases != PHASES:
        problems.append("substation does not carry all three phases")
    for b in net.buses:
        if b.id == 0:
            continue
        pmask = net.phase_mask[net.bus_pos(b.parent)]
        for ph in b.phases:
            if not pmask[PHASE_CODE[ph]]:
                problems.append(f"bus {b.id}: phase {ph} not present on parent")
    seen = np.zeros(n, dtype=bool)
    seen[net.bus_pos(0)] = True
    seen[[net.bus_pos(ln.to_bus) for ln in net.lines]] = True
    if not seen.all():
        problems.append("some buses have no incoming line")
    counts = (net.index_of >= 0).sum()
    if counts != net.n_flat:
        problems.append("flat index map is not a bijection")
    return problems


# -- document I/O ---------------------------------------------------------

def _parse_z(entry: dict, from_bus: int, to_bus: int) -> np.ndarray:
    z = np.zeros((3, 3), dtype=np.complex128)
    for key, val in entry.items():
        if len(key) != 2 or key[0] not in PHASE_CODE or key[1] not in PHASE_CODE:
            raise NetworkError(
                f"line ({from_bus},{to_bus}): bad impedance key {key!r}"
            )
        if not (isinstance(val, (list, tuple)) and len(val) == 2):
            raise NetworkError(
                f"line ({from_bus},{to_bus}): impedance {key!r} must be [re, im]"
            )
        z[PHASE_CODE[key[0]], PHASE_CODE[key[1]]] = complex(val[0], val[1])
    return z


def load_network(document: dict | str | Path) -> Network:
    """Build a validated Network from a JSON document, path, or parsed dict."""
    if isinstance(document, (str, Path)):
        try:
            document = json.loads(Path(document).read_text())
        except json.JSONDecodeError as exc:
            raise NetworkError(f"network document is not valid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise NetworkError("network document must be a JSON object")
    try:
        bus_entries = document["buses"]
        line_entries = document["lines"]
    except KeyError as exc:
        raise NetworkError(f"network document lacks key {exc}") from exc

    buses = []
    for be in bus_entries:
        try:
            phases = tuple(sorted(be["phases"], key=phase_code))
            buses.append(Bus(id=int(be["id"]), phases=phases, parent=(
                None if be.get("parent") is None else int(be["parent"])
            )))
        except (KeyError, TypeError, ValueError) as exc:
            raise NetworkError(f"malformed bus entry {be!r}: {exc}") from exc
    lines = []
    for le in line_entries:
        try:
            frm, to = int(le["from"]), int(le["to"])
            lines.append(Line(from_bus=frm, to_bus=to, z=_parse_z(le.get("z", {}), frm, to)))
        except (KeyError, TypeError, ValueError) as exc:
            raise NetworkError(f"malformed line entry {le!r}: {exc}") from exc
    return Network(buses, lines, base_v_squared=float(document.get("base_v_squared", 1.0)))


def network_to_document(net: Network) -> dict:
    """Serializable form of a network; inverse of load_network."""
    return {
        "base_v_squared": net.base_v_squared,
        "buses": [
            {"id": b.id, "phases": list(b.phases), "parent": b.parent}
            for b in net.buses
        ],
        "lines": [
            {
                "from": ln.from_bus,
                "to": ln.to_bus,
                "z": {k: [v.real, v.imag] for k, v in sorted(ln.phase_pairs().items())},
            }
            for ln in sorted(net.lines, key=lambda ln: ln.to_bus)
        ],
    }


def save_network(net: Network, path: str | Path) -> None:
    Path(path).write_text(json.dumps(network_to_document(net), indent=2) + "\n")
