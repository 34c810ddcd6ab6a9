"""Dual-weighted sensitivity sums by three interchangeable engines.

The primal gradient of the voltage-regulation Lagrangian needs, at every
flat index (i, phi),

    g_p(i, phi) = sum over (j, psi) of dv(j,psi)/dp(i,phi) * (mu_up - mu_lo)(j, psi)
    g_q(i, phi) = likewise with dv/dq,

which is R^T d and X^T d for d = mu_up - mu_lo. The flat engine computes
exactly that with dense products. The bi-level engine splits the sum per
subtree area: pairs inside an area are summed exactly, pairs across two
areas collapse to a single root-to-root impedance times the foreign area's
per-phase dual aggregate, and unclustered buses couple to an area through
the area root alone. The tri-level engine applies the same split once more
inside every area using its subareas. All three are algebraically equal;
the multilevel ones replace almost all of the N^2 pairwise work with
aggregate exchanges, which is also what keeps per-bus duals and interior
topology inside their scope.

Operation counts follow a declared cost model (complex multiply-accumulate,
rotation, and real/imaginary extraction each count one; the flat engine
counts 2 N^2 real multiply-adds per output vector), so measured complexity
is reproducible across machines.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .network import Network
from .partition import PartitionHierarchy, validate_partition
from .sensitivity import OMEGA_POW, SensitivityMatrices


class EngineError(ValueError):
    """Invalid partition or mismatched dimensions for a coupling engine."""


@dataclass
class CouplingResult:
    g_p: np.ndarray
    g_q: np.ndarray
    op_count: int
    messages: tuple["AggregateMessage", ...] = ()


@dataclass(frozen=True)
class AggregateMessage:
    """The only cross-scope payload: per-phase dual sums plus the root id."""

    scope: tuple          # ("area", k) or ("subarea", k, m)
    root: int
    sums: tuple[float, float, float]


# -- information-flow recording ---------------------------------------------

@dataclass(frozen=True)
class DualRead:
    scope: tuple
    basis: str            # "members" (own per-bus duals) | "exterior" (public set)
    indices: tuple[int, ...]


@dataclass(frozen=True)
class ZAccess:
    scope: tuple
    kind: str             # "intra" | "root_root" | "exterior_root"
    row_buses: tuple[int, ...]
    col_buses: tuple[int, ...]


@dataclass(frozen=True)
class AggregateExchange:
    producer: tuple
    consumer: tuple


@dataclass(frozen=True)
class GlobalAccess:
    note: str


@dataclass
class FlowRecord:
    """Structural record of what data each scope consumed.

    Engines touch the same index sets on every apply, so access patterns are
    recorded once at construction; applies only bump a counter and refresh
    the latest aggregate messages.
    """

    engine: str = ""
    events: list = field(default_factory=list)
    applies: int = 0
    last_messages: tuple[AggregateMessage, ...] = ()

    def dual_read(self, scope, basis, indices):
        self.events.append(DualRead(scope, basis, tuple(int(i) for i in indices)))

    def z_access(self, scope, kind, row_buses, col_buses):
        self.events.append(
            ZAccess(scope, kind, tuple(sorted(set(map(int, row_buses)))),
                    tuple(sorted(set(map(int, col_buses)))))
        )

    def exchange(self, producer, consumer):
        self.events.append(AggregateExchange(producer, consumer))

    def global_access(self, note):
        self.events.append(GlobalAccess(note))

    def apply(self, messages):
        self.applies += 1
        self.last_messages = messages


class PathOracle:
    """Vectorized common-path impedance blocks, memoized on the tree prefix.

    Every engine query reduces to gathering the conjugated root-path prefix
    impedance at pairwise lowest common ancestors and rotating by the phase
    difference; the dense R/X matrices are never touched.
    """

    def __init__(self, net: Network):
        self.net = net
        self._zc = np.conj(net.z_prefix)

    def block(self, row_bus_pos, row_phase, col_bus_pos, col_phase) -> np.ndarray:
        """Complex block with entry[(i,phi),(j,psi)] = conj(Z^(psi,phi)_(j,i)) omega^(psi-phi)."""
        row_bus_pos = np.asarray(row_bus_pos)
        col_bus_pos = np.asarray(col_bus_pos)
        row_phase = np.asarray(row_phase)
        col_phase = np.asarray(col_phase)
        if row_bus_pos.size == 0 or col_bus_pos.size == 0:
            return np.zeros((row_bus_pos.size, col_bus_pos.size), dtype=np.complex128)
        lca = self.net.lca_pos(row_bus_pos[:, None], col_bus_pos[None, :])
        return (
            self._zc[lca, col_phase[None, :], row_phase[:, None]]
            * OMEGA_POW[col_phase[None, :] - row_phase[:, None] + 2]
        )


def _flat_indices(net: Network, bus_ids) -> np.ndarray:
    pos = [net.bus_pos(b) for b in sorted(bus_ids)]
    if not pos:
        return np.zeros(0, dtype=np.int64)
    idx = net.index_of[pos].ravel()
    return np.sort(idx[idx >= 0])


def _level_op_count(intra_ops: list[int], cluster_sizes: list[int], rem: int) -> int:
    """Declared per-apply cost of one clustering level.

    Exact pairwise blocks cost size^2 accumulates plus 5 per target (three
    rotations, two extractions). Each cluster then pays the root-to-root
    combine against the other clusters, the per-bus sums over the exterior
    set, and one add per member and output vector to broadcast the shared
    value. Exterior targets mirror the same structure.
    """
    c = len(cluster_sizes)
    ops = sum(intra_ops) + sum(cluster_sizes)
    for a in cluster_sizes:
        if c > 1:
            ops += 9 * (c - 1) + 15
        if rem > 0:
            ops += 3 * rem + 15
        ops += 2 * a
    if rem > 0:
        ops += rem * rem + 5 * rem
        if c > 0:
            ops += rem * (3 * c + 5)
    return ops


def _exact_block_ops(size: int) -> int:
    return size * size + 5 * size


class FlatEngine:
    """Direct dense products R^T d and X^T d."""

    name = "flat"

    def __init__(self, sens: SensitivityMatrices, record: FlowRecord | None = None):
        self.sens = sens
        self.n = sens.n
        self.record = record
        self.op_count_per_apply = 4 * self.n * self.n  # 2 N^2 per output vector
        if record is not None:
            record.engine = self.name
            record.global_access(
                "dense engine reads every dual and every sensitivity entry"
            )

    def compute(self, mu_upper: np.ndarray, mu_lower: np.ndarray) -> CouplingResult:
        d = _check_duals(mu_upper, mu_lower, self.n)
        g_p = self.sens.r.T @ d
        g_q = self.sens.x.T @ d
        if self.record is not None:
            self.record.apply(())
        return CouplingResult(g_p=g_p, g_q=g_q, op_count=self.op_count_per_apply)


def _check_duals(mu_upper, mu_lower, n) -> np.ndarray:
    mu_upper = np.asarray(mu_upper, dtype=np.float64)
    mu_lower = np.asarray(mu_lower, dtype=np.float64)
    if mu_upper.shape != (n,) or mu_lower.shape != (n,):
        raise EngineError(f"dual vectors must have shape ({n},)")
    return mu_upper - mu_lower


class _ClusterLevel:
    """Shared index bookkeeping and matrices for one clustering level."""

    def __init__(self, net, oracle, clusters, exterior_ids):
        # clusters: list of (scope, root_bus_id, member_bus_ids)
        self.scopes = [c[0] for c in clusters]
        self.roots = [c[1] for c in clusters]
        self.c = len(clusters)
        root_pos = np.array([net.bus_pos(r) for r in self.roots], dtype=np.int64)
        self.slot_bus_pos = np.repeat(root_pos, 3)
        self.slot_phase = np.tile(np.arange(3, dtype=np.int64), self.c)
        self.member_idx = [_flat_indices(net, c[2]) for c in clusters]
        self.cat_members = (
            np.concatenate(self.member_idx) if self.c else np.zeros(0, dtype=np.int64)
        )
        self.member_slot = (
            np.concatenate(
                [3 * k + net.flat_phase[idx] for k, idx in enumerate(self.member_idx)]
            )
            if self.c
            else np.zeros(0, dtype=np.int64)
        )
        self.ext_idx = _flat_indices(net, exterior_ids)
        ext_bus = net.flat_bus_pos[self.ext_idx]
        ext_phase = net.flat_phase[self.ext_idx]

        self.intra_blocks = [
            oracle.block(
                net.flat_bus_pos[idx], net.flat_phase[idx],
                net.flat_bus_pos[idx], net.flat_phase[idx],
            )
            for idx in self.member_idx
        ]
        self.z_roots = oracle.block(
            self.slot_bus_pos, self.slot_phase, self.slot_bus_pos, self.slot_phase
        )
        for k in range(self.c):
            self.z_roots[3 * k: 3 * k + 3, 3 * k: 3 * k + 3] = 0.0
        self.w_exterior = oracle.block(
            self.slot_bus_pos, self.slot_phase, ext_bus, ext_phase
        )
        self.w_to_exterior = oracle.block(
            ext_bus, ext_phase, self.slot_bus_pos, self.slot_phase
        )
        self.w_ext_intra = oracle.block(ext_bus, ext_phase, ext_bus, ext_phase)
        self.sizes = [len(idx) for idx in self.member_idx]

    def sums(self, d: np.ndarray) -> np.ndarray:
        """Per-cluster, per-phase dual-difference sums over the slot space."""
        if self.c == 0:
            return np.zeros(0)
        return np.bincount(
            self.member_slot, weights=d[self.cat_members], minlength=3 * self.c
        )

    def combine(self, t, d, sums, threads=1):
        """Add this level's terms into the complex accumulator t."""
        if self.c:
            if threads > 1:
                t[self.cat_members] += _threaded_blocks(
                    self.intra_blocks, self.member_idx, d, threads
                )
            else:
                for idx, blk in zip(self.member_idx, self.intra_blocks):
                    t[idx] += blk @ d[idx]
            vals = self.z_roots @ sums
            if len(self.ext_idx):
                vals = vals + self.w_exterior @ d[self.ext_idx]
            t[self.cat_members] += vals[self.member_slot]
        if len(self.ext_idx):
            tu = self.w_ext_intra @ d[self.ext_idx]
            if self.c:
                tu = tu + self.w_to_exterior @ sums
            t[self.ext_idx] += tu


def _threaded_blocks(blocks, index_lists, d, threads):
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda bi: bi[0] @ d[bi[1]], zip(blocks, index_lists)))
    return (
        np.concatenate(parts) if parts else np.zeros(0, dtype=np.complex128)
    )


class BilevelEngine:
    """Area-level split: exact inside each area, aggregated across areas."""

    name = "bilevel"

    def __init__(
        self,
        net: Network,
        part: PartitionHierarchy,
        oracle: PathOracle | None = None,
        record: FlowRecord | None = None,
        threads: int = 1,
    ):
        problems = validate_partition(net, part)
        if problems:
            raise EngineError("invalid partition: " + "; ".join(problems[:3]))
        self.net = net
        self.part = part
        self.n = net.n_flat
        self.record = record
        self.threads = max(1, int(threads))
        oracle = oracle or PathOracle(net)
        areas = sorted(part.areas, key=lambda a: a.index)
        self.level = _ClusterLevel(
            net,
            oracle,
            [(("area", a.index), a.root, a.members) for a in areas],
            part.unclustered,
        )
        self.op_count_per_apply = _level_op_count(
            [_exact_block_ops(s) for s in self.level.sizes],
            self.level.sizes,
            len(self.level.ext_idx),
        )
        if record is not None:
            record.engine = self.name
            self._record_flows(areas)

    def _record_flows(self, areas):
        rec = self.record
        unc_ids = sorted(self.part.unclustered)
        roots = [a.root for a in areas]
        for k, area in enumerate(areas):
            scope = ("area", area.index)
            members = sorted(area.members)
            rec.dual_read(scope, "members", self.level.member_idx[k])
            rec.z_access(scope, "intra", members, members)
            if unc_ids:
                rec.dual_read(scope, "exterior", self.level.ext_idx)
                rec.z_access(scope, "exterior_root", unc_ids, [area.root])
            if len(areas) > 1:
                rec.z_access(scope, "root_root", roots, [area.root])
                for other in areas:
                    if other.index != area.index:
                        rec.exchange(("area", other.index), scope)
        if unc_ids:
            scope = ("unclustered",)
            rec.dual_read(scope, "members", self.level.ext_idx)
            rec.z_access(scope, "intra", unc_ids, unc_ids)
            if areas:
                rec.z_access(scope, "exterior_root", unc_ids, roots)
                for area in areas:
                    rec.exchange(("area", area.index), scope)

    def _messages(self, sums) -> tuple[AggregateMessage, ...]:
        return tuple(
            AggregateMessage(
                scope=self.level.scopes[k],
                root=self.level.roots[k],
                sums=tuple(float(v) for v in sums[3 * k: 3 * k + 3]),
            )
            for k in range(self.level.c)
        )

    def compute(self, mu_upper: np.ndarray, mu_lower: np.ndarray) -> CouplingResult:
        d = _check_duals(mu_upper, mu_lower, self.n)
        t = np.zeros(self.n, dtype=np.complex128)
        sums = self.level.sums(d)
        self.level.combine(t, d, sums, threads=self.threads)
        messages = self._messages(sums)
        if self.record is not None:
            self.record.apply(messages)
        return CouplingResult(
            g_p=2.0 * t.real,
            g_q=-2.0 * t.imag,
            op_count=self.op_count_per_apply,
            messages=messages,
        )


class TrilevelEngine:
    """Bi-level split at the top, applied again inside every area."""

    name = "trilevel"

    def __init__(
        self,
        net: Network,
        part: PartitionHierarchy,
        oracle: PathOracle | None = None,
        record: FlowRecord | None = None,
        threads: int = 1,
    ):
        problems = validate_partition(net, part)
        if problems:
            raise EngineError("invalid partition: " + "; ".join(problems[:3]))
        self.net = net
        self.part = part
        self.n = net.n_flat
        self.record = record
        self.threads = max(1, int(threads))
        oracle = oracle or PathOracle(net)
        areas = sorted(part.areas, key=lambda a: a.index)
        self.top = _ClusterLevel(
            net,
            oracle,
            [(("area", a.index), a.root, a.members) for a in areas],
            part.unclustered,
        )
        # One inner level per area: subareas cluster, area remainder exterior.
        self.inner = [
            _ClusterLevel(
                net,
                oracle,
                [
                    (("subarea", a.index, s.index), s.root, s.members)
                    for s in sorted(a.subareas, key=lambda s: s.index)
                ],
                a.remainder,
            )
            for a in areas
        ]
        intra_ops = []
        for lvl in self.inner:
            intra_ops.append(
                _level_op_count(
                    [_exact_block_ops(s) for s in lvl.sizes],
                    lvl.sizes,
                    len(lvl.ext_idx),
                )
            )
        self.op_count_per_apply = _level_op_count(
            intra_ops, self.top.sizes, len(self.top.ext_idx)
        )
        if record is not None:
            record.engine = self.name
            self._record_flows(areas)

    def _record_flows(self, areas):
        rec = self.record
        unc_ids = sorted(self.part.unclustered)
        roots = [a.root for a in areas]
        for k, area in enumerate(areas):
            scope = ("area", area.index)
            lvl = self.inner[k]
            rem_ids = sorted(area.remainder)
            sub_roots = [s.root for s in area.subareas]
            for m, sub in enumerate(sorted(area.subareas, key=lambda s: s.index)):
                sscope = ("subarea", area.index, sub.index)
                smembers = sorted(sub.members)
                rec.dual_read(sscope, "members", lvl.member_idx[m])
                rec.z_access(sscope, "intra", smembers, smembers)
                if rem_ids:
                    rec.dual_read(sscope, "exterior", lvl.ext_idx)
                    rec.z_access(sscope, "exterior_root", rem_ids, [sub.root])
                if len(sub_roots) > 1:
                    rec.z_access(sscope, "root_root", sub_roots, [sub.root])
                    for other in area.subareas:
                        if other.index != sub.index:
                            rec.exchange(("subarea", area.index, other.index), sscope)
                rec.exchange(sscope, scope)
            if rem_ids:
                rec.dual_read(scope, "members", lvl.ext_idx)
                rec.z_access(scope, "intra", rem_ids, rem_ids)
                if sub_roots:
                    rec.z_access(scope, "exterior_root", rem_ids, sub_roots)
            if unc_ids:
                rec.dual_read(scope, "exterior", self.top.ext_idx)
                rec.z_access(scope, "exterior_root", unc_ids, [area.root])
            if len(areas) > 1:
                rec.z_access(scope, "root_root", roots, [area.root])
                for other in areas:
                    if other.index != area.index:
                        rec.exchange(("area", other.index), scope)
        if unc_ids:
            scope = ("unclustered",)
            rec.dual_read(scope, "members", self.top.ext_idx)
            rec.z_access(scope, "intra", unc_ids, unc_ids)
            if areas:
                rec.z_access(scope, "exterior_root", unc_ids, roots)
                for area in areas:
                    rec.exchange(("area", area.index), scope)

    def compute(self, mu_upper: np.ndarray, mu_lower: np.ndarray) -> CouplingResult:
        d = _check_duals(mu_upper, mu_lower, self.n)
        t = np.zeros(self.n, dtype=np.complex128)
        messages: list[AggregateMessage] = []
        # Area aggregates assemble from subarea messages plus remainder sums,
        # mirroring the recorded information flow.
        top_sums = np.zeros(3 * self.top.c)
        for k, lvl in enumerate(self.inner):
            sub_sums = lvl.sums(d)
            lvl.combine(t, d, sub_sums, threads=self.threads)
            area_sum = sub_sums.reshape(-1, 3).sum(axis=0) if lvl.c else np.zeros(3)
            if len(lvl.ext_idx):
                area_sum = area_sum + np.bincount(
                    self.net.flat_phase[lvl.ext_idx],
                    weights=d[lvl.ext_idx],
                    minlength=3,
                )
            top_sums[3 * k: 3 * k + 3] = area_sum
            for m in range(lvl.c):
                messages.append(
                    AggregateMessage(
                        scope=lvl.scopes[m],
                        root=lvl.roots[m],
                        sums=tuple(float(v) for v in sub_sums[3 * m: 3 * m + 3]),
                    )
                )
        # Top level: exact intra terms were handled inside each area, so only
        # the cross-area and unclustered parts of the top split apply here.
        if self.top.c:
            vals = self.top.z_roots @ top_sums
            if len(self.top.ext_idx):
                vals = vals + self.top.w_exterior @ d[self.top.ext_idx]
            t[self.top.cat_members] += vals[self.top.member_slot]
        if len(self.top.ext_idx):
            tu = self.top.w_ext_intra @ d[self.top.ext_idx]
            if self.top.c:
                tu = tu + self.top.w_to_exterior @ top_sums
            t[self.top.ext_idx] += tu
        for k in range(self.top.c):
            messages.append(
                AggregateMessage(
                    scope=self.top.scopes[k],
                    root=self.top.roots[k],
                    sums=tuple(float(v) for v in top_sums[3 * k: 3 * k + 3]),
                )
            )
        out = tuple(messages)
        if self.record is not None:
            self.record.apply(out)
        return CouplingResult(
            g_p=2.0 * t.real,
            g_q=-2.0 * t.imag,
            op_count=self.op_count_per_apply,
            messages=out,
        )


def make_engine(
    kind: str,
    sens: SensitivityMatrices | None = None,
    net: Network | None = None,
    part: PartitionHierarchy | None = None,
    record: FlowRecord | None = None,
    threads: int = 1,
):
    """Engine factory keyed by the flat | bilevel | trilevel selector."""
    if kind == "flat":
        if sens is None:
            raise EngineError("flat engine needs sensitivity matrices")
        return FlatEngine(sens, record=record)
    if kind == "bilevel":
        if net is None or part is None:
            raise EngineError("bilevel engine needs a network and partition")
        return BilevelEngine(net, part, record=record, threads=threads)
    if kind == "trilevel":
        if net is None or part is None:
            raise EngineError("trilevel engine needs a network and partition")
        return TrilevelEngine(net, part, record=record, threads=threads)
    raise EngineError(f"unknown engine {kind!r}")


def coupling_flat(
    sens: SensitivityMatrices,
    mu_upper: np.ndarray,
    mu_lower: np.ndarray,
    record: FlowRecord | None = None,
) -> CouplingResult:
    return FlatEngine(sens, record=record).compute(mu_upper, mu_lower)


def coupling_bilevel(
    net: Network,
    part: PartitionHierarchy,
    oracle: PathOracle | None,
    mu_upper: np.ndarray,
    mu_lower: np.ndarray,
    record: FlowRecord | None = None,
) -> CouplingResult:
    return BilevelEngine(net, part, oracle=oracle, record=record).compute(
        mu_upper, mu_lower
    )


def coupling_trilevel(
    net: Network,
    part: PartitionHierarchy,
    oracle: PathOracle | None,
    mu_upper: np.ndarray,
    mu_lower: np.ndarray,
    record: FlowRecord | None = None,
) -> CouplingResult:
    return TrilevelEngine(net, part, oracle=oracle, record=record).compute(
        mu_upper, mu_lower
    )


# -- privacy audit ----------------------------------------------------------

@dataclass
class PrivacyReport:
    engine: str
    global_access: bool
    violations: list[str]
    events_checked: int

    @property
    def clean(self) -> bool:
        return not self.violations and not self.global_access


def privacy_audit(
    record: FlowRecord, net: Network, part: PartitionHierarchy
) -> PrivacyReport:
    """Check a flow record against the scope containment rules.

    Area scopes may read their own members' duals per bus plus the public
    unclustered set; subarea scopes their own members plus the parent area's
    remainder. Impedance queries may pair buses inside one scope, scope
    roots with each other, or exterior buses with a root. Anything else is a
    violation. Aggregate exchanges are never violations; they are the
    mechanism that keeps everything else inside its scope.
    """
    members_idx = {
        ("area", a.index): set(map(int, _flat_indices(net, a.members)))
        for a in part.areas
    }
    members_bus = {("area", a.index): set(a.members) for a in part.areas}
    rem_idx = {}
    rem_bus = {}
    for a in part.areas:
        rem_idx[a.index] = set(map(int, _flat_indices(net, a.remainder)))
        rem_bus[a.index] = set(a.remainder)
        for s in a.subareas:
            members_idx[("subarea", a.index, s.index)] = set(
                map(int, _flat_indices(net, s.members))
            )
            members_bus[("subarea", a.index, s.index)] = set(s.members)
    unc_idx = set(map(int, _flat_indices(net, part.unclustered)))
    unc_bus = set(part.unclustered)
    area_roots = {a.root for a in part.areas}
    sub_roots = {
        a.index: {s.root for s in a.subareas} for a in part.areas
    }

    violations: list[str] = []
    global_access = False
    checked = 0

    def own_indices(scope):
        if scope == ("unclustered",):
            return unc_idx
        return members_idx.get(scope)

    def exterior_indices(scope):
        if scope[0] == "area":
            return unc_idx
        if scope[0] == "subarea":
            return rem_idx.get(scope[1], set())
        return set()

    def own_buses(scope):
        if scope == ("unclustered",):
            return unc_bus
        return members_bus.get(scope)

    def root_pool(scope):
        if scope[0] == "subarea":
            return sub_roots.get(scope[1], set())
        return area_roots

    def exterior_buses(scope):
        if scope[0] == "area":
            return unc_bus
        if scope[0] == "subarea":
            return rem_bus.get(scope[1], set())
        if scope == ("unclustered",):
            return unc_bus
        return set()

    for ev in record.events:
        checked += 1
        if isinstance(ev, GlobalAccess):
            global_access = True
        elif isinstance(ev, DualRead):
            if ev.basis == "members":
                allowed = own_indices(ev.scope)
            else:
                allowed = exterior_indices(ev.scope)
            if allowed is None:
                violations.append(f"dual read from unknown scope {ev.scope}")
            else:
                leak = set(ev.indices) - allowed
                if leak:
                    violations.append(
                        f"scope {ev.scope} read per-bus duals at foreign flat "
                        f"indices {sorted(leak)[:5]}"
                    )
        elif isinstance(ev, ZAccess):
            if ev.kind == "intra":
                ob = own_buses(ev.scope)
                if ob is None:
                    violations.append(f"impedance access from unknown scope {ev.scope}")
                    continue
                leak = (set(ev.row_buses) | set(ev.col_buses)) - ob
                if leak:
                    violations.append(
                        f"scope {ev.scope} touched interior lines of foreign buses "
                        f"{sorted(leak)[:5]}"
                    )
            elif ev.kind == "root_root":
                pool = root_pool(ev.scope)
                leak = (set(ev.row_buses) | set(ev.col_buses)) - pool
                if leak:
                    violations.append(
                        f"scope {ev.scope} root-to-root access outside the root set: "
                        f"{sorted(leak)[:5]}"
                    )
            elif ev.kind == "exterior_root":
                pool = root_pool(ev.scope) | exterior_buses(ev.scope)
                if ev.scope[0] == "area":
                    # Anything inside the area is its own business: the
                    # remainder-versus-subarea-root coefficients live here.
                    pool |= members_bus.get(ev.scope, set())
                leak = (set(ev.row_buses) | set(ev.col_buses)) - pool
                if leak:
                    violations.append(
                        f"scope {ev.scope} exterior access beyond roots and public "
                        f"buses: {sorted(leak)[:5]}"
                    )
            else:
                violations.append(f"unknown impedance access kind {ev.kind!r}")
        elif isinstance(ev, AggregateExchange):
            pass
        else:
            violations.append(f"unknown event {ev!r}")
    return PrivacyReport(
        engine=record.engine,
        global_access=global_access,
        violations=violations,
        events_checked=checked,
    )
