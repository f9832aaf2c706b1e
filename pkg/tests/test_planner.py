"""Lattice assembly model: placements, edges, sequencing, plan resolution."""

import random

import pytest

from assembly_engine.catalog import InventoryExhausted
from assembly_engine.planner import (
    AssemblyState,
    DisconnectedModel,
    EmptyModel,
    NoCompatibleConnection,
    Overlap,
    OverlappingPlacements,
    Placement,
    PlanComplete,
    UnknownBase,
    WouldDisconnect,
    all_edges,
    apply_placement,
    current_step,
    empty_state,
    load_model,
    model_to_dict,
    occupied_cells,
    placement_box,
    remove_placement,
    rotate_cell,
    sequence_graph,
    sequence_layered,
)

import oracles
from conftest import grow_random_state


def build(catalog, *placements):
    state = empty_state(catalog)
    for p in placements:
        state = apply_placement(state, p, catalog)
    return state


class TestPlacementGeometry:
    def test_rotate_cell_quarter_turns(self):
        assert rotate_cell((2, 1, 3), 0) == (2, 1, 3)
        assert rotate_cell((2, 1, 3), 90) == (-1, 2, 3)
        assert rotate_cell((2, 1, 3), 180) == (-2, -1, 3)
        assert rotate_cell((2, 1, 3), 270) == (1, -2, 3)

    def test_occupied_cells_rotated(self, unit_catalog):
        p = Placement(1, 2, (0, 0, 0), 90)  # 2x1 rotated to span -y? no: +y
        cells = occupied_cells(p, unit_catalog.type(2))
        assert cells == frozenset({(0, 0, 0), (0, 1, 0)})

    def test_placement_box_meters(self, unit_catalog):
        box = placement_box(Placement(1, 3, (1, 1, 0)), unit_catalog)
        assert box.center == pytest.approx((0.06, 0.06, 0.015))
        assert box.half_extents == pytest.approx((0.03, 0.03, 0.015))


class TestApplyRemove:
    def test_grounded_brick_accepted(self, unit_catalog):
        state = build(unit_catalog, Placement(1, 1, (0, 0, 0)))
        assert len(state.placements) == 1
        assert state.edges == ()

    def test_floating_brick_rejected(self, unit_catalog):
        with pytest.raises(NoCompatibleConnection):
            build(unit_catalog, Placement(1, 1, (0, 0, 2)))

    def test_stacked_brick_gets_edge(self, unit_catalog):
        state = build(
            unit_catalog, Placement(1, 1, (0, 0, 0)), Placement(2, 1, (0, 0, 1))
        )
        assert len(state.edges) == 1
        a, _, b, _ = state.edges[0]
        assert (a, b) == (1, 2)

    def test_overlap_rejected(self, unit_catalog):
        with pytest.raises(Overlap):
            build(unit_catalog, Placement(1, 3, (0, 0, 0)), Placement(2, 1, (1, 1, 0)))

    def test_inventory_exhausted(self, unit_catalog):
        from assembly_engine.catalog import load_catalog
        from conftest import unit_catalog_doc

        cat = load_catalog(unit_catalog_doc(inventory=1))
        state = build(cat, Placement(1, 1, (0, 0, 0)))
        with pytest.raises(InventoryExhausted):
            apply_placement(state, Placement(2, 1, (1, 0, 0)), cat)

    def test_remove_only_placement(self, unit_catalog):
        state = build(unit_catalog, Placement(1, 1, (0, 0, 0)))
        state = remove_placement(state, 1, unit_catalog)
        assert state.is_empty()
        assert state.inventory[1] == unit_catalog.initial_inventory[1]

    def test_remove_middle_disconnects(self, unit_catalog):
        state = build(
            unit_catalog,
            Placement(1, 1, (0, 0, 0)),
            Placement(2, 1, (0, 0, 1)),
            Placement(3, 1, (0, 0, 2)),
        )
        with pytest.raises(WouldDisconnect):
            remove_placement(state, 2, unit_catalog)

    def test_apply_remove_round_trip(self, unit_catalog):
        rng = random.Random(31)
        for _ in range(30):
            state = grow_random_state(rng, unit_catalog, rng.randint(1, 6))
            before = state
            options = [
                Placement(99, 1, (x, y, 0))
                for x in range(6, 9)
                for y in range(6, 9)
            ]
            p = rng.choice(options)
            after = apply_placement(state, p, unit_catalog)
            restored = remove_placement(after, 99, unit_catalog)
            assert restored == before

    def test_edges_match_all_pairs_scan(self, unit_catalog):
        rng = random.Random(77)
        for _ in range(40):
            state = grow_random_state(rng, unit_catalog, rng.randint(2, 8), connected=False)
            assert tuple(sorted(state.edges)) == all_edges(state.placements, unit_catalog)

    def test_inventory_conservation(self, unit_catalog):
        rng = random.Random(5)
        state = grow_random_state(rng, unit_catalog, 10, connected=False)
        for tid, start in unit_catalog.initial_inventory.items():
            placed = sum(1 for p in state.placements if p.type_id == tid)
            assert placed + state.inventory[tid] == start


class TestSequenceLayered:
    def test_two_brick_tower(self, unit_catalog):
        state = build(
            unit_catalog, Placement(5, 1, (0, 0, 0)), Placement(3, 1, (0, 0, 1))
        )
        plan = sequence_layered(state, unit_catalog)
        assert [s.instance_id for s in plan.steps] == [5, 3]
        assert plan.mode == "layer"

    def test_single_layer_lexicographic(self, unit_catalog):
        cells = [(2, 1, 0), (0, 0, 0), (1, 1, 0), (1, 0, 0)]
        state = build(
            unit_catalog,
            *[Placement(i + 1, 1, c) for i, c in enumerate(cells)],
        )
        plan = sequence_layered(state, unit_catalog)
        got = [p.placement.cell for p in plan.steps]
        assert got == [(0, 0, 0), (1, 0, 0), (1, 1, 0), (2, 1, 0)]

    def test_empty_model(self, unit_catalog):
        with pytest.raises(EmptyModel):
            sequence_layered(empty_state(unit_catalog), unit_catalog)

    def test_overlap_detected(self, unit_catalog):
        state = AssemblyState(
            placements=(Placement(1, 1, (0, 0, 0)), Placement(2, 1, (0, 0, 0))),
            edges=(),
            inventory=dict(unit_catalog.initial_inventory),
        )
        with pytest.raises(OverlappingPlacements):
            sequence_layered(state, unit_catalog)

    def test_z_monotone_on_random_models(self, unit_catalog):
        rng = random.Random(11)
        for _ in range(100):
            state = grow_random_state(rng, unit_catalog, rng.randint(2, 12), connected=False)
            plan = sequence_layered(state, unit_catalog)
            zs = [s.placement.cell[2] for s in plan.steps]
            assert zs == sorted(zs)


class TestSequenceGraph:
    def test_path_graph_order(self, unit_catalog):
        state = build(
            unit_catalog,
            Placement(1, 1, (0, 0, 0)),
            Placement(2, 1, (0, 0, 1)),
            Placement(3, 1, (0, 0, 2)),
        )
        plan = sequence_graph(state, unit_catalog, base=1)
        assert [s.instance_id for s in plan.steps] == [1, 2, 3]
        assert plan.mode == "graph"

    def test_star_ties_break_by_id(self, unit_catalog):
        # hub 2x2 at z=0, four units on top of it: leaves tie, lowest id first
        state = build(
            unit_catalog,
            Placement(10, 3, (0, 0, 0)),
            Placement(4, 1, (0, 0, 1)),
            Placement(2, 1, (1, 0, 1)),
            Placement(3, 1, (0, 1, 1)),
            Placement(5, 1, (1, 1, 1)),
        )
        plan = sequence_graph(state, unit_catalog, base=10)
        assert [s.instance_id for s in plan.steps] == [10, 2, 3, 4, 5]

    def test_unknown_base(self, unit_catalog):
        state = build(unit_catalog, Placement(1, 1, (0, 0, 0)))
        with pytest.raises(UnknownBase):
            sequence_graph(state, unit_catalog, base=9)

    def test_disconnected_model(self, unit_catalog):
        state = build(
            unit_catalog, Placement(1, 1, (0, 0, 0)), Placement(2, 1, (3, 3, 0))
        )
        with pytest.raises(DisconnectedModel):
            sequence_graph(state, unit_catalog, base=1)

    def test_prefix_connectivity_random_models(self, unit_catalog):
        rng = random.Random(23)
        for _ in range(100):
            state = grow_random_state(rng, unit_catalog, rng.randint(2, 10), connected=True)
            if len(state.placements) < 2:
                continue
            base = min(p.instance_id for p in state.placements if p.cell[2] == 0)
            plan = sequence_graph(state, unit_catalog, base=base)
            order = [s.instance_id for s in plan.steps]
            assert sorted(order) == sorted(p.instance_id for p in state.placements)
            assert oracles.prefix_connected(order, state.edges, base)

    def test_sequencing_is_permutation(self, unit_catalog):
        rng = random.Random(41)
        state = grow_random_state(rng, unit_catalog, 8, connected=True)
        plan = sequence_graph(state, unit_catalog)
        assert sorted(s.instance_id for s in plan.steps) == sorted(
            p.instance_id for p in state.placements
        )


class TestCurrentStep:
    def _twin_with_tracks(self, unit_catalog, *class_ids):
        from assembly_engine.twin import Track, TwinState

        tracks = tuple(
            Track(
                track_id=i + 1,
                class_id=cid,
                box=placement_box(Placement(0, cid, (10 + i, 10, 0)), unit_catalog),
                last_seen=0,
                hits=1,
                smoothed_center=(0.0, 0.0, 0.0),
            )
            for i, cid in enumerate(class_ids)
        )
        return TwinState(frame=0, tracks=tracks, next_track_id=len(tracks) + 1)

    def test_binds_matching_track(self, unit_catalog):
        state = build(unit_catalog, Placement(1, 1, (0, 0, 0)))
        plan = sequence_layered(state, unit_catalog)
        twin = self._twin_with_tracks(unit_catalog, 1)
        step = current_step(plan, twin)
        assert step.status == "active"
        assert step.bound_track_id == 1
        assert step.pick_region is not None

    def test_part_not_visible(self, unit_catalog):
        state = build(unit_catalog, Placement(1, 1, (0, 0, 0)))
        plan = sequence_layered(state, unit_catalog)
        twin = self._twin_with_tracks(unit_catalog, 2)
        step = current_step(plan, twin)
        assert step.status == "pending"
        assert step.part_not_visible

    def test_lowest_track_id_wins(self, unit_catalog):
        state = build(unit_catalog, Placement(1, 1, (0, 0, 0)))
        plan = sequence_layered(state, unit_catalog)
        twin = self._twin_with_tracks(unit_catalog, 1, 1, 1)
        step = current_step(plan, twin)
        assert step.bound_track_id == 1

    def test_plan_complete(self, unit_catalog):
        state = build(unit_catalog, Placement(1, 1, (0, 0, 0)))
        plan = sequence_layered(state, unit_catalog)
        plan.steps[0].status = "done"
        twin = self._twin_with_tracks(unit_catalog, 1)
        with pytest.raises(PlanComplete):
            current_step(plan, twin)


class TestModelDocuments:
    def test_round_trip(self, unit_catalog):
        rng = random.Random(3)
        state = grow_random_state(rng, unit_catalog, 6, connected=True)
        doc = model_to_dict(state)
        again = load_model(doc, unit_catalog)
        # a loaded model is a fresh design: structure matches, inventory is full
        assert again.placements == state.placements
        assert tuple(sorted(again.edges)) == tuple(sorted(state.edges))
        assert dict(again.inventory) == dict(unit_catalog.initial_inventory)

    def test_bad_documents(self, unit_catalog):
        from assembly_engine.errors import MalformedDocument

        with pytest.raises(MalformedDocument):
            load_model({"schema_version": 1, "placements": []}, unit_catalog)
        with pytest.raises(MalformedDocument):
            load_model({"schema_version": 2, "placements": [{}]}, unit_catalog)
