"""Network model: loading, validation, paths, common-path impedance."""

from __future__ import annotations

import numpy as np
import pytest

from mlopf.network import (
    Bus,
    Line,
    NetworkError,
    load_network,
    network_to_document,
    validate_radial,
)

from conftest import (
    brute_force_common_path_impedance,
    brute_force_path,
    chain_doc,
    fig_feeder,
    random_network,
)


def test_smallest_valid_network_has_single_index():
    net = load_network(
        {
            "buses": [
                {"id": 0, "phases": ["a", "b", "c"], "parent": None},
                {"id": 1, "phases": ["a"], "parent": 0},
            ],
            "lines": [{"from": 0, "to": 1, "z": {"aa": [0.01, 0.02]}}],
        }
    )
    assert net.n_flat == 1
    assert net.flat_index(1, "a") == 0
    assert validate_radial(net) == []


def test_cycle_is_rejected_as_not_a_tree():
    doc = {
        "buses": [
            {"id": 0, "phases": ["a", "b", "c"], "parent": None},
            {"id": 1, "phases": ["a"], "parent": 2},
            {"id": 2, "phases": ["a"], "parent": 1},
        ],
        "lines": [
            {"from": 2, "to": 1, "z": {"aa": [0.01, 0.0]}},
            {"from": 1, "to": 2, "z": {"aa": [0.01, 0.0]}},
        ],
    }
    with pytest.raises(NetworkError, match="not a tree"):
        load_network(doc)


def test_phase_missing_on_parent_is_rejected():
    doc = {
        "buses": [
            {"id": 0, "phases": ["a", "b", "c"], "parent": None},
            {"id": 1, "phases": ["a"], "parent": 0},
            {"id": 2, "phases": ["b"], "parent": 1},
        ],
        "lines": [
            {"from": 0, "to": 1, "z": {"aa": [0.01, 0.0]}},
            {"from": 1, "to": 2, "z": {"bb": [0.01, 0.0]}},
        ],
    }
    with pytest.raises(NetworkError, match="phase b not present on parent"):
        load_network(doc)


def test_duplicate_bus_ids_rejected():
    doc = chain_doc()
    doc["buses"].append({"id": 1, "phases": ["a"], "parent": 0})
    with pytest.raises(NetworkError, match="duplicate"):
        load_network(doc)


def test_line_count_mismatch_rejected():
    doc = chain_doc()
    doc["lines"] = doc["lines"][:1]
    with pytest.raises(NetworkError, match="not a tree"):
        load_network(doc)


def test_path_to_root_on_chain(chain_net):
    assert chain_net.path_to_root(2) == [(0, 1), (1, 2)]
    assert chain_net.path_to_root(1) == [(0, 1)]


def test_path_to_root_of_substation_is_empty(chain_net):
    assert chain_net.path_to_root(0) == []


def test_path_to_root_unknown_bus(chain_net):
    with pytest.raises(NetworkError, match="unknown bus"):
        chain_net.path_to_root(99)


def test_cousin_branches_share_the_trunk():
    net = fig_feeder()
    shared = set(brute_force_path(net, 10)) & set(brute_force_path(net, 27))
    assert shared == {(0, 1), (1, 2), (2, 4)}
    # The substation link carries zero impedance, so the shared impedance is
    # exactly the sum over lines (1,2) and (2,4).
    expected = net.line_to(2).z[0, 0] + net.line_to(4).z[0, 0]
    assert net.common_path_impedance(10, 27, "a", "a") == pytest.approx(expected)


def test_common_path_impedance_chain_values(chain_net):
    assert chain_net.common_path_impedance(2, 2, "a", "a") == pytest.approx(
        0.015 + 0.03j
    )
    assert chain_net.common_path_impedance(1, 2, "a", "a") == pytest.approx(
        0.01 + 0.02j
    )
    assert chain_net.common_path_impedance(2, 1, "a", "a") == pytest.approx(
        0.01 + 0.02j
    )


def test_disjoint_subtrees_have_zero_common_impedance():
    net = load_network(
        {
            "buses": [
                {"id": 0, "phases": ["a", "b", "c"], "parent": None},
                {"id": 1, "phases": ["a"], "parent": 0},
                {"id": 2, "phases": ["a"], "parent": 0},
            ],
            "lines": [
                {"from": 0, "to": 1, "z": {"aa": [0.01, 0.02]}},
                {"from": 0, "to": 2, "z": {"aa": [0.03, 0.04]}},
            ],
        }
    )
    assert net.common_path_impedance(1, 2, "a", "a") == 0


def test_missing_phase_pair_keys_mean_zero():
    net = load_network(
        {
            "buses": [
                {"id": 0, "phases": ["a", "b", "c"], "parent": None},
                {"id": 1, "phases": ["a", "b"], "parent": 0},
            ],
            "lines": [{"from": 0, "to": 1, "z": {"aa": [0.01, 0.02]}}],
        }
    )
    assert net.common_path_impedance(1, 1, "b", "b") == 0
    assert net.common_path_impedance(1, 1, "a", "b") == 0


def test_impedance_key_outside_line_phases_rejected():
    with pytest.raises(NetworkError, match="absent from bus"):
        load_network(
            {
                "buses": [
                    {"id": 0, "phases": ["a", "b", "c"], "parent": None},
                    {"id": 1, "phases": ["a"], "parent": 0},
                ],
                "lines": [{"from": 0, "to": 1, "z": {"bb": [0.01, 0.02]}}],
            }
        )


def test_negative_resistance_rejected():
    with pytest.raises(NetworkError, match="negative series resistance"):
        load_network(
            {
                "buses": [
                    {"id": 0, "phases": ["a", "b", "c"], "parent": None},
                    {"id": 1, "phases": ["a"], "parent": 0},
                ],
                "lines": [{"from": 0, "to": 1, "z": {"aa": [-0.01, 0.02]}}],
            }
        )


@pytest.mark.parametrize("seed", range(6))
def test_common_path_symmetry_on_random_trees(seed):
    rng = np.random.default_rng(seed)
    net = random_network(rng, int(rng.integers(10, 50)))
    ids = [b.id for b in net.buses]
    for _ in range(40):
        i, j = rng.choice(ids, size=2)
        for phi in "ab":
            for psi in "ab":
                assert net.common_path_impedance(
                    int(i), int(j), phi, psi
                ) == net.common_path_impedance(int(j), int(i), phi, psi)


@pytest.mark.parametrize("seed", range(6))
def test_common_path_matches_brute_force_enumeration(seed):
    rng = np.random.default_rng(100 + seed)
    net = random_network(rng, int(rng.integers(10, 50)))
    ids = [b.id for b in net.buses]
    for _ in range(60):
        i, j = (int(v) for v in rng.choice(ids, size=2))
        phi = "abc"[int(rng.integers(3))]
        psi = "abc"[int(rng.integers(3))]
        assert net.common_path_impedance(
            i, j, phi, psi
        ) == brute_force_common_path_impedance(net, i, j, phi, psi)


@pytest.mark.parametrize("seed", range(4))
def test_ancestor_absorbs_the_descendant_path(seed):
    rng = np.random.default_rng(200 + seed)
    net = random_network(rng, 40)
    for bus in net.buses:
        if bus.id == 0:
            continue
        path = brute_force_path(net, bus.id)
        for (_, anc) in path:
            shared = set(brute_force_path(net, anc)) & set(path)
            assert shared == set(brute_force_path(net, anc))
            assert net.common_path_impedance(
                bus.id, anc, "a", "a"
            ) == brute_force_common_path_impedance(net, bus.id, anc, "a", "a")


@pytest.mark.parametrize("seed", range(4))
def test_disjoint_subtrees_collapse_to_root_pair(seed):
    # Any pair drawn from two disjoint subtrees shares exactly the subtree
    # roots' common path; this is what the multilevel engines rely on.
    rng = np.random.default_rng(300 + seed)
    net = random_network(rng, 45)
    by_id = {b.id: b for b in net.buses}

    def subtree(root):
        ids = {root}
        changed = True
        while changed:
            changed = False
            for b in net.buses:
                if b.id not in ids and b.parent in ids:
                    ids.add(b.id)
                    changed = True
        return ids

    roots = [b.id for b in net.buses if b.id != 0]
    found = 0
    for _ in range(200):
        r, s = (int(v) for v in rng.choice(roots, size=2))
        tr, ts = subtree(r), subtree(s)
        if tr & ts:
            continue
        found += 1
        i = int(rng.choice(sorted(tr)))
        j = int(rng.choice(sorted(ts)))
        for phi, psi in (("a", "a"), ("a", "b")):
            assert net.common_path_impedance(i, j, phi, psi) == \
                net.common_path_impedance(r, s, phi, psi)
        if found > 30:
            break
    assert found > 0
    del by_id


@pytest.mark.parametrize("seed", range(4))
def test_path_length_equals_depth_and_prefix_reconstruction(seed):
    rng = np.random.default_rng(400 + seed)
    net = random_network(rng, 35)
    for bus in net.buses:
        path = net.path_to_root(bus.id)
        assert len(path) == net.depth[net.bus_pos(bus.id)]
        assert path == brute_force_path(net, bus.id)
    ids = [b.id for b in net.buses]
    for _ in range(30):
        i, j = (int(v) for v in rng.choice(ids, size=2))
        pi, pj = net.path_to_root(i), net.path_to_root(j)
        prefix = []
        for a, b in zip(pi, pj):
            if a != b:
                break
            prefix.append(a)
        assert set(prefix) == set(pi) & set(pj)


def test_document_round_trip(fig_net):
    doc = network_to_document(fig_net)
    net2 = load_network(doc)
    assert network_to_document(net2) == doc
    assert net2.n_flat == fig_net.n_flat
    assert net2.flat_labels() == fig_net.flat_labels()


def test_lca_table_matches_scalar_queries(fig_net):
    ids = [b.id for b in fig_net.buses]
    rng = np.random.default_rng(7)
    for _ in range(50):
        i, j = (int(v) for v in rng.choice(ids, size=2))
        lca = fig_net.lca(i, j)
        pi = [0] + [child for (_, child) in fig_net.path_to_root(i)]
        pj = [0] + [child for (_, child) in fig_net.path_to_root(j)]
        common = [a for a, b in zip(pi, pj) if a == b]
        assert lca == common[-1]
