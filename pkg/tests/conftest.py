"""Shared fixtures and random-model builders."""

import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from assembly_engine.catalog import load_catalog
from assembly_engine.planner import (
    AssemblyState,
    Placement,
    YAWS,
    apply_placement,
    empty_state,
)


def unit_catalog_doc(inventory=100):
    def stud_brick(tid, name, dx, dy, dz, mass):
        ports = []
        for x in range(dx):
            for y in range(dy):
                ports.append(
                    {"local_offset": [x, y, dz - 1], "direction": "+z", "compatibility_class": "stud"}
                )
                ports.append(
                    {"local_offset": [x, y, 0], "direction": "-z", "compatibility_class": "socket"}
                )
        return {
            "type_id": tid,
            "name": name,
            "footprint": [dx, dy, dz],
            "mass": mass,
            "ports": ports,
        }

    return {
        "schema_version": 1,
        "cell_size": [0.03, 0.03, 0.03],
        "types": [
            stud_brick(1, "unit", 1, 1, 1, 0.01),
            stud_brick(2, "duo", 2, 1, 1, 0.02),
            stud_brick(3, "quad", 2, 2, 1, 0.04),
            stud_brick(4, "tall", 1, 1, 2, 0.02),
        ],
        "rules": [
            {"class_a": "stud", "class_b": "socket", "allowed": True},
            {"class_a": "socket", "class_b": "stud", "allowed": True},
        ],
        "inventory": {str(t): inventory for t in (1, 2, 3, 4)},
    }


@pytest.fixture(scope="session")
def unit_catalog():
    return load_catalog(unit_catalog_doc())


def legal_placements(state, catalog, bounds, type_ids=None, require_edges=False):
    """All legal placements inside bounds; optionally only connecting ones."""
    from assembly_engine.planner import occupancy, occupied_cells, world_ports

    (x0, x1), (y0, y1), zmax = bounds
    occ = occupancy(state, catalog)
    # port lookup: (cell, direction) -> compatibility classes offered there
    port_map = {}
    for placed in state.placements:
        for cell, d, cls, _ in world_ports(placed, catalog.type(placed.type_id)):
            port_map.setdefault((cell, d), []).append(cls)

    def connects(p, ctype):
        for cell, d, cls, _ in world_ports(p, ctype):
            target = ((cell[0] + d[0], cell[1] + d[1], cell[2] + d[2]),
                      (-d[0], -d[1], -d[2]))
            for other_cls in port_map.get(target, ()):
                if catalog.classes_allowed(cls, other_cls):
                    return True
        return False

    out = []
    for tid in sorted(type_ids or catalog.types):
        if state.inventory.get(tid, 0) <= 0:
            continue
        ctype = catalog.type(tid)
        for z in range(zmax):
            for y in range(y0, y1):
                for x in range(x0, x1):
                    for yaw in YAWS:
                        p = Placement(0, tid, (x, y, z), yaw)
                        if any(c in occ for c in occupied_cells(p, ctype)):
                            continue
                        linked = connects(p, ctype)
                        if not linked and (z > 0 or require_edges):
                            continue
                        out.append(p)
    return out


def grow_random_state(
    rng: random.Random,
    catalog,
    n_parts: int,
    bounds=((0, 4), (0, 4), 4),
    type_ids=None,
    connected=True,
    start_state: AssemblyState | None = None,
) -> AssemblyState:
    """Random legal structure grown placement by placement.

    With connected=True every placement after the first must engage a port,
    so the result is edge-connected and graph-sequenceable.
    """
    state = start_state if start_state is not None else empty_state(catalog)
    next_id = max((p.instance_id for p in state.placements), default=0) + 1
    for _ in range(n_parts):
        require_edges = connected and not state.is_empty()
        options = legal_placements(state, catalog, bounds, type_ids, require_edges)
        if not options:
            break
        choice = rng.choice(options)
        placement = Placement(next_id, choice.type_id, choice.cell, choice.yaw)
        state = apply_placement(state, placement, catalog)
        next_id += 1
    return state
