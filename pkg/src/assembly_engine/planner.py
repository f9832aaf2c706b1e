"""Assembly model on the lattice: placements, connections, step sequencing.

Placements live on an integer lattice with 90-degree yaw steps. A placement
is legal when it overlaps nothing and is either grounded (rests at z = 0,
the table is an implicit base) or engages at least one compatible port with
the existing structure. Connectivity is always measured against that
implicit base: grounded placements anchor the graph.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional

import json

from .catalog import Catalog, ComponentType, InventoryExhausted, UnknownType
from .errors import EngineError, MalformedDocument
from .geometry import FootprintBox3D

YAWS = (0, 90, 180, 270)

Cell = tuple[int, int, int]
# (instance_a, port_a, instance_b, port_b), normalized instance_a < instance_b
Edge = tuple[int, int, int, int]


class Overlap(EngineError):
    pass


class NoCompatibleConnection(EngineError):
    pass


class UnknownInstance(EngineError):
    pass


class WouldDisconnect(EngineError):
    pass


class EmptyModel(EngineError):
    pass


class OverlappingPlacements(EngineError):
    pass


class DisconnectedModel(EngineError):
    pass


class UnknownBase(EngineError):
    pass


class PlanComplete(EngineError):
    pass


def rotate_cell(c: Cell, yaw: int) -> Cell:
    x, y, z = c
    if yaw == 0:
        return (x, y, z)
    if yaw == 90:
        return (-y, x, z)
    if yaw == 180:
        return (-x, -y, z)
    if yaw == 270:
        return (y, -x, z)
    raise ValueError(f"yaw {yaw} not a quarter turn")


@dataclass(frozen=True)
class Placement:
    instance_id: int
    type_id: int
    cell: Cell
    yaw: int = 0

    def __post_init__(self) -> None:
        if self.yaw not in YAWS:
            raise ValueError(f"yaw {self.yaw} not in {YAWS}")

    def key(self) -> tuple[int, Cell, int]:
        """Physical identity: ignores the instance id."""
        return (self.type_id, self.cell, self.yaw)


def _rotated_cells(ctype: ComponentType, yaw: int) -> tuple[Cell, ...]:
    cached = ctype._cache.get(("cells", yaw))
    if cached is None:
        dx, dy, dz = ctype.footprint
        cached = tuple(
            rotate_cell((ox, oy, oz), yaw)
            for ox in range(dx)
            for oy in range(dy)
            for oz in range(dz)
        )
        ctype._cache[("cells", yaw)] = cached
    return cached


def _rotated_ports(ctype: ComponentType, yaw: int) -> tuple:
    cached = ctype._cache.get(("ports", yaw))
    if cached is None:
        cached = tuple(
            (rotate_cell(port.local_offset, yaw), rotate_cell(port.direction, yaw),
             port.compatibility_class, idx)
            for idx, port in enumerate(ctype.ports)
        )
        ctype._cache[("ports", yaw)] = cached
    return cached


def _canonical_yaws(ctype: ComponentType) -> tuple[int, ...]:
    """Yaws producing translation-distinct shapes.

    A yaw whose normalized (cells, ports) fingerprint repeats an earlier one
    only yields placements some other anchor already produces, so sweeping
    anchors over the canonical yaws enumerates each physical placement once.
    """
    cached = ctype._cache.get("canonical_yaws")
    if cached is None:
        seen = set()
        keep = []
        for yaw in YAWS:
            cells = _rotated_cells(ctype, yaw)
            mx = min(c[0] for c in cells)
            my = min(c[1] for c in cells)
            norm_cells = frozenset((c[0] - mx, c[1] - my, c[2]) for c in cells)
            norm_ports = frozenset(
                ((rc[0] - mx, rc[1] - my, rc[2]), d, cls)
                for rc, d, cls, _ in _rotated_ports(ctype, yaw)
            )
            fp = (norm_cells, norm_ports)
            if fp not in seen:
                seen.add(fp)
                keep.append(yaw)
        cached = tuple(keep)
        ctype._cache["canonical_yaws"] = cached
    return cached


def occupied_cells(p: Placement, ctype: ComponentType) -> frozenset[Cell]:
    x, y, z = p.cell
    return frozenset(
        (x + rx, y + ry, z + rz) for rx, ry, rz in _rotated_cells(ctype, p.yaw)
    )


def world_ports(p: Placement, ctype: ComponentType) -> tuple[tuple[Cell, Cell, str, int], ...]:
    """(world cell, world direction, compatibility class, port index) tuples."""
    x, y, z = p.cell
    return tuple(
        ((x + rc[0], y + rc[1], z + rc[2]), d, cls, idx)
        for rc, d, cls, idx in _rotated_ports(ctype, p.yaw)
    )


def placement_box(p: Placement, catalog: Catalog) -> FootprintBox3D:
    """World-space box covering a placement's occupied cells."""
    cells = occupied_cells(p, catalog.type(p.type_id))
    sx, sy, sz = catalog.cell_size
    xs = [c[0] for c in cells]
    ys = [c[1] for c in cells]
    zs = [c[2] for c in cells]
    lo = (min(xs) * sx, min(ys) * sy, min(zs) * sz)
    hi = ((max(xs) + 1) * sx, (max(ys) + 1) * sy, (max(zs) + 1) * sz)
    center = tuple((a + b) / 2.0 for a, b in zip(lo, hi))
    half = tuple((b - a) / 2.0 for a, b in zip(lo, hi))
    return FootprintBox3D(center, half, 0.0)


@dataclass(frozen=True)
class AssemblyState:
    """Placed component instances plus engaged port connections.

    Carries the remaining inventory so edit-search states are self-contained;
    the inventory of any state is derivable from the catalog's initial counts
    minus the placements. The private cache memoizes derived lookups
    (occupancy, port map); placements are immutable so it never invalidates.
    """

    placements: tuple[Placement, ...] = ()
    edges: tuple[Edge, ...] = ()
    inventory: Mapping[int, int] = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def placement_by_id(self, instance_id: int) -> Placement:
        for p in self.placements:
            if p.instance_id == instance_id:
                return p
        raise UnknownInstance(f"no placement with instance_id {instance_id}")

    def is_empty(self) -> bool:
        return not self.placements

    def canonical_key(self) -> tuple:
        """Physical-structure identity: instance numbering does not matter."""
        key = self._cache.get("ckey")
        if key is None:
            key = tuple(sorted(p.key() for p in self.placements))
            self._cache["ckey"] = key
        return key

    def max_height(self, catalog: Catalog) -> int:
        """Top of the tallest occupied cell column, in lattice units."""
        top = 0
        for p in self.placements:
            dz = catalog.type(p.type_id).footprint[2]
            top = max(top, p.cell[2] + dz)
        return top


def empty_state(catalog: Catalog) -> AssemblyState:
    return AssemblyState((), (), dict(catalog.initial_inventory))


def occupancy(state: AssemblyState, catalog: Catalog) -> dict[Cell, int]:
    """Cell -> instance map. Cached on the state; treat as read-only."""
    occ = state._cache.get("occ")
    if occ is None:
        occ = {}
        for p in state.placements:
            for c in occupied_cells(p, catalog.type(p.type_id)):
                occ[c] = p.instance_id
        state._cache["occ"] = occ
    return occ


def port_map(state: AssemblyState, catalog: Catalog) -> dict:
    """(cell, direction) -> [(class, instance, port idx)]. Cached, read-only."""
    pm = state._cache.get("ports")
    if pm is None:
        pm = {}
        for p in state.placements:
            for cell, d, cls, idx in world_ports(p, catalog.type(p.type_id)):
                pm.setdefault((cell, d), []).append((cls, p.instance_id, idx))
        state._cache["ports"] = pm
    return pm


def _connecting_ports(
    a: Placement, ta: ComponentType, b: Placement, tb: ComponentType, catalog: Catalog
) -> list[Edge]:
    """Edges between two placements: opposed adjacent ports with allowed classes."""
    out = []
    ports_b = world_ports(b, tb)
    for cell_a, dir_a, cls_a, ia in world_ports(a, ta):
        target = (cell_a[0] + dir_a[0], cell_a[1] + dir_a[1], cell_a[2] + dir_a[2])
        for cell_b, dir_b, cls_b, ib in ports_b:
            if cell_b != target:
                continue
            if any(x != -y for x, y in zip(dir_a, dir_b)):
                continue
            if not catalog.classes_allowed(cls_a, cls_b):
                continue
            if a.instance_id < b.instance_id:
                out.append((a.instance_id, ia, b.instance_id, ib))
            else:
                out.append((b.instance_id, ib, a.instance_id, ia))
    return out


def find_edges(state: AssemblyState, placement: Placement, catalog: Catalog) -> list[Edge]:
    """All connections a new placement would make with the current structure."""
    ctype = catalog.type(placement.type_id)
    pm = port_map(state, catalog)
    edges: list[Edge] = []
    for cell, d, cls, idx in world_ports(placement, ctype):
        target = ((cell[0] + d[0], cell[1] + d[1], cell[2] + d[2]), (-d[0], -d[1], -d[2]))
        for other_cls, other_id, other_idx in pm.get(target, ()):
            if not catalog.classes_allowed(cls, other_cls):
                continue
            if placement.instance_id < other_id:
                edges.append((placement.instance_id, idx, other_id, other_idx))
            else:
                edges.append((other_id, other_idx, placement.instance_id, idx))
    return edges


def all_edges(placements: Iterable[Placement], catalog: Catalog) -> tuple[Edge, ...]:
    """Brute all-pairs coincident-port scan (model loading, validation)."""
    ps = list(placements)
    edges: list[Edge] = []
    for i in range(len(ps)):
        for j in range(i + 1, len(ps)):
            edges.extend(
                _connecting_ports(
                    ps[i], catalog.type(ps[i].type_id), ps[j], catalog.type(ps[j].type_id), catalog
                )
            )
    return tuple(sorted(set(edges)))


def is_grounded(p: Placement) -> bool:
    return p.cell[2] == 0


def connected_to_base(placements: Iterable[Placement], edges: Iterable[Edge]) -> bool:
    """Every placement reachable from the implicit base via ground or edges."""
    ps = list(placements)
    if not ps:
        return True
    adj: dict[int, list[int]] = {p.instance_id: [] for p in ps}
    for a, _, b, _ in edges:
        if a in adj and b in adj:
            adj[a].append(b)
            adj[b].append(a)
    seen = {p.instance_id for p in ps if is_grounded(p)}
    queue = deque(seen)
    while queue:
        cur = queue.popleft()
        for nxt in adj[cur]:
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return len(seen) == len(ps)


def placement_legal(state: AssemblyState, placement: Placement, catalog: Catalog) -> bool:
    """Cheap legality probe mirroring apply_placement's checks."""
    try:
        check_placement(state, placement, catalog)
        return True
    except EngineError:
        return False


def check_placement(state: AssemblyState, placement: Placement, catalog: Catalog) -> list[Edge]:
    ctype = catalog.type(placement.type_id)
    if placement.cell[2] < 0:
        raise Overlap(f"placement {placement.instance_id} below the work plane")
    if state.inventory.get(placement.type_id, 0) <= 0:
        raise InventoryExhausted(f"no parts of type {placement.type_id} left")
    occ = occupancy(state, catalog)
    cells = occupied_cells(placement, ctype)
    for c in cells:
        if c in occ:
            raise Overlap(f"cell {c} already occupied by instance {occ[c]}")
    edges = find_edges(state, placement, catalog)
    if not edges and not is_grounded(placement):
        raise NoCompatibleConnection(
            f"placement {placement.instance_id} floats with no engaged port"
        )
    return edges


def apply_placement(
    state: AssemblyState, placement: Placement, catalog: Catalog
) -> AssemblyState:
    """Add a placement, its induced edges, and consume one inventory unit."""
    for p in state.placements:
        if p.instance_id == placement.instance_id:
            raise Overlap(f"instance_id {placement.instance_id} already placed")
    new_edges = check_placement(state, placement, catalog)
    inv = dict(state.inventory)
    inv[placement.type_id] = inv.get(placement.type_id, 0) - 1
    return AssemblyState(
        placements=state.placements + (placement,),
        edges=tuple(sorted(set(state.edges) | set(new_edges))),
        inventory=inv,
    )


def remove_placement(state: AssemblyState, instance_id: int, catalog: Catalog) -> AssemblyState:
    """Remove a placement; the rest must stay connected to the base."""
    target = state.placement_by_id(instance_id)
    remaining = tuple(p for p in state.placements if p.instance_id != instance_id)
    kept_edges = tuple(e for e in state.edges if instance_id not in (e[0], e[2]))
    if not connected_to_base(remaining, kept_edges):
        raise WouldDisconnect(f"removing instance {instance_id} strands the structure")
    inv = dict(state.inventory)
    inv[target.type_id] = inv.get(target.type_id, 0) + 1
    return AssemblyState(placements=remaining, edges=kept_edges, inventory=inv)


@dataclass(frozen=True)
class WorkArea:
    """Lattice bounds for placement enumeration: half-open x/y cell ranges."""

    x: tuple[int, int]
    y: tuple[int, int]
    z_max: int

    def __post_init__(self) -> None:
        if self.x[0] >= self.x[1] or self.y[0] >= self.y[1] or self.z_max < 1:
            raise ValueError(f"degenerate work area {self}")


def placement_signature(p: Placement, catalog: Catalog) -> tuple:
    """Physical footprint + port layout; placements that differ only in a
    symmetry-equivalent yaw share a signature."""
    ctype = catalog.type(p.type_id)
    ports = frozenset(
        (cell, d, cls) for cell, d, cls, _ in world_ports(p, ctype)
    )
    return (p.type_id, occupied_cells(p, ctype), ports)


def enumerate_placements(
    state: AssemblyState,
    catalog: Catalog,
    area: WorkArea,
    type_id: int,
    instance_id: int = -1,
) -> list[Placement]:
    """Every legal placement of a type inside the work area, each physical
    placement exactly once (symmetry-equivalent yaws collapse), ordered by
    (z, y, x, yaw). Grounded-or-connected semantics match apply_placement.
    """
    if state.inventory.get(type_id, 0) <= 0:
        return []
    ctype = catalog.type(type_id)
    occ = occupancy(state, catalog)
    pm = port_map(state, catalog)
    rules = catalog.rules

    per_yaw = []
    for yaw in _canonical_yaws(ctype):
        cells = _rotated_cells(ctype, yaw)
        ports = _rotated_ports(ctype, yaw)
        x_lo = area.x[0] - min(c[0] for c in cells)
        x_hi = area.x[1] - max(c[0] for c in cells)  # exclusive
        y_lo = area.y[0] - min(c[1] for c in cells)
        y_hi = area.y[1] - max(c[1] for c in cells)
        z_hi = area.z_max - max(c[2] for c in cells)
        per_yaw.append((yaw, cells, ports, x_lo, x_hi, y_lo, y_hi, z_hi))

    out: list[Placement] = []
    for z in range(area.z_max):
        for y in range(area.y[0], area.y[1]):
            for x in range(area.x[0], area.x[1]):
                for yaw, cells, ports, x_lo, x_hi, y_lo, y_hi, z_hi in per_yaw:
                    if not (x_lo <= x < x_hi and y_lo <= y < y_hi and z < z_hi):
                        continue
                    free = True
                    for rx, ry, rz in cells:
                        if (x + rx, y + ry, z + rz) in occ:
                            free = False
                            break
                    if not free:
                        continue
                    if z > 0:
                        linked = False
                        for rc, d, cls, _ in ports:
                            target = (
                                (x + rc[0] + d[0], y + rc[1] + d[1], z + rc[2] + d[2]),
                                (-d[0], -d[1], -d[2]),
                            )
                            for other_cls, _, _ in pm.get(target, ()):
                                if rules.get((cls, other_cls), False):
                                    linked = True
                                    break
                            if linked:
                                break
                        if not linked:
                            continue
                    out.append(Placement(instance_id, type_id, (x, y, z), yaw))
    return out


# --------------------------------------------------------------------------
# plans


@dataclass
class PlanStep:
    step_index: int
    placement: Placement
    action: str = "place"  # place | remove
    pick_region: Optional[FootprintBox3D] = None
    place_region: Optional[FootprintBox3D] = None
    status: str = "pending"  # pending | active | done | deviated
    part_not_visible: bool = False
    bound_track_id: Optional[int] = None

    @property
    def instance_id(self) -> int:
        return self.placement.instance_id

    @property
    def type_id(self) -> int:
        return self.placement.type_id


@dataclass
class Plan:
    steps: list[PlanStep]
    mode: str  # layer | graph

    def pending_steps(self) -> list[PlanStep]:
        return [s for s in self.steps if s.status in ("pending", "active")]

    def completed(self) -> bool:
        return not self.pending_steps()


def _validate_no_overlap(model: AssemblyState, catalog: Catalog) -> None:
    occ: dict[Cell, int] = {}
    for p in model.placements:
        for c in occupied_cells(p, catalog.type(p.type_id)):
            if c in occ:
                raise OverlappingPlacements(
                    f"instances {occ[c]} and {p.instance_id} both occupy {c}"
                )
            occ[c] = p.instance_id


def _steps_from(placements: list[Placement], catalog: Catalog) -> list[PlanStep]:
    return [
        PlanStep(step_index=i, placement=p, place_region=placement_box(p, catalog))
        for i, p in enumerate(placements)
    ]


def sequence_layered(model: AssemblyState, catalog: Catalog) -> Plan:
    """Layer-by-layer order: z ascending, then y, x, instance id."""
    if model.is_empty():
        raise EmptyModel("cannot sequence an empty model")
    _validate_no_overlap(model, catalog)
    ordered = sorted(
        model.placements,
        key=lambda p: (p.cell[2], p.cell[1], p.cell[0], p.instance_id),
    )
    return Plan(steps=_steps_from(ordered, catalog), mode="layer")


def default_base(model: AssemblyState) -> int:
    best = min(model.placements, key=lambda p: (p.cell[2], p.instance_id))
    return best.instance_id


def sequence_graph(model: AssemblyState, catalog: Catalog, base: Optional[int] = None) -> Plan:
    """Adjacency-first order: grow from the base, maximizing engaged edges.

    Each placed step must share at least one edge with the already-sequenced
    set, so every plan prefix stays connected. Frontier ties break on higher
    engaged-edge count, then lower instance id.
    """
    if model.is_empty():
        raise EmptyModel("cannot sequence an empty model")
    _validate_no_overlap(model, catalog)
    if base is None:
        base = default_base(model)
    ids = {p.instance_id for p in model.placements}
    if base not in ids:
        raise UnknownBase(f"base instance {base} not in model")

    neighbors: dict[int, set[int]] = {i: set() for i in ids}
    edge_count: dict[tuple[int, int], int] = {}
    for a, _, b, _ in model.edges:
        neighbors[a].add(b)
        neighbors[b].add(a)
        edge_count[(a, b)] = edge_count.get((a, b), 0) + 1
        edge_count[(b, a)] = edge_count.get((b, a), 0) + 1

    sequenced = [base]
    placed = {base}
    while len(sequenced) < len(ids):
        frontier = [
            i for i in ids - placed if any(n in placed for n in neighbors[i])
        ]
        if not frontier:
            raise DisconnectedModel("model is not edge-connected from the base")
        best = max(
            frontier,
            key=lambda i: (
                sum(edge_count.get((i, n), 0) for n in neighbors[i] if n in placed),
                -i,
            ),
        )
        sequenced.append(best)
        placed.add(best)

    by_id = {p.instance_id: p for p in model.placements}
    return Plan(steps=_steps_from([by_id[i] for i in sequenced], catalog), mode="graph")


def current_step(plan: Plan, twin_state) -> PlanStep:
    """Resolve the first pending step against live twin tracks.

    Binds the pick region to the lowest-id live track of the step's type.
    Without a matching track the step stays pending with part_not_visible
    set. Remove-steps pick from the structure itself and need no track.
    """
    step = None
    for s in plan.steps:
        if s.status in ("pending", "active"):
            step = s
            break
    if step is None:
        raise PlanComplete("all plan steps are done")

    if step.action == "remove":
        step.pick_region = step.place_region
        step.status = "active"
        step.part_not_visible = False
        return step

    tracks = [t for t in twin_state.tracks if t.class_id == step.type_id]
    if not tracks:
        step.status = "pending"
        step.part_not_visible = True
        step.pick_region = None
        step.bound_track_id = None
        return step
    chosen = min(tracks, key=lambda t: t.track_id)
    step.pick_region = chosen.box
    step.bound_track_id = chosen.track_id
    step.part_not_visible = False
    step.status = "active"
    return step


# --------------------------------------------------------------------------
# model documents

MODEL_SCHEMA_VERSION = 1


def load_model(source, catalog: Catalog) -> AssemblyState:
    """Load a target model document; edges are recomputed from scratch."""
    doc = _load_doc(source)
    if not isinstance(doc, dict):
        raise MalformedDocument("model document must be a JSON object")
    version = doc.get("schema_version")
    if version != MODEL_SCHEMA_VERSION:
        raise MalformedDocument(f"unsupported model schema_version {version!r}")
    raw = doc.get("placements")
    if not isinstance(raw, list) or not raw:
        raise MalformedDocument("model must list at least one placement")
    placements = []
    seen_ids = set()
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict):
            raise MalformedDocument(f"placements[{i}] must be an object")
        try:
            p = Placement(
                instance_id=int(entry["instance_id"]),
                type_id=int(entry["type_id"]),
                cell=tuple(int(c) for c in entry["cell"]),
                yaw=int(entry.get("yaw", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedDocument(f"placements[{i}]: {exc}") from exc
        if p.type_id not in catalog.types:
            raise UnknownType(f"placements[{i}] references unknown type {p.type_id}")
        if p.instance_id in seen_ids:
            raise MalformedDocument(f"duplicate instance_id {p.instance_id}")
        seen_ids.add(p.instance_id)
        placements.append(p)
    state = AssemblyState(
        placements=tuple(placements),
        edges=all_edges(placements, catalog),
        inventory=dict(catalog.initial_inventory),
    )
    _validate_no_overlap(state, catalog)
    return state


def model_to_dict(model: AssemblyState) -> dict:
    return {
        "schema_version": MODEL_SCHEMA_VERSION,
        "placements": [
            {
                "instance_id": p.instance_id,
                "type_id": p.type_id,
                "cell": list(p.cell),
                "yaw": p.yaw,
            }
            for p in model.placements
        ],
    }


def _load_doc(source):
    if isinstance(source, dict):
        return source
    if isinstance(source, Path):
        text = source.read_text(encoding="utf-8")
    elif isinstance(source, str):
        text = Path(source).read_text(encoding="utf-8") if source.lstrip()[:1] != "{" else source
    else:
        raise MalformedDocument(f"unsupported model source {type(source)!r}")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"invalid JSON: {exc}") from exc


def state_to_dict(state: AssemblyState) -> dict:
    """Canonical JSON-able view used for hashing and wire snapshots."""
    return {
        "placements": [
            {
                "instance_id": p.instance_id,
                "type_id": p.type_id,
                "cell": list(p.cell),
                "yaw": p.yaw,
            }
            for p in sorted(state.placements, key=lambda p: p.instance_id)
        ],
        "edges": [list(e) for e in sorted(state.edges)],
        "inventory": {str(k): v for k, v in sorted(state.inventory.items())},
    }
