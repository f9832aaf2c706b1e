"""Component type catalog: footprints, connection ports, aggregation rules.

Catalog documents are JSON with a schema_version field. Footprints and port
offsets live on an integer lattice; cell_size converts lattice units to
meters for everything geometric.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping

from .errors import EngineError, MalformedDocument

SCHEMA_VERSION = 1

AXIS_NAMES = {
    "+x": (1, 0, 0),
    "-x": (-1, 0, 0),
    "+y": (0, 1, 0),
    "-y": (0, -1, 0),
    "+z": (0, 0, 1),
    "-z": (0, 0, -1),
}
AXIS_LABELS = {v: k for k, v in AXIS_NAMES.items()}


class DuplicateTypeId(EngineError):
    pass


class AsymmetricRule(EngineError):
    pass


class UnknownType(EngineError):
    pass


class UnknownPort(EngineError):
    pass


class InventoryExhausted(EngineError):
    pass


@dataclass(frozen=True)
class Port:
    local_offset: tuple[int, int, int]
    direction: tuple[int, int, int]
    compatibility_class: str


@dataclass(frozen=True)
class ComponentType:
    type_id: int
    name: str
    footprint: tuple[int, int, int]
    mass: float
    ports: tuple[Port, ...]
    color_tag: str = ""
    # memo for derived per-yaw geometry; the type itself is immutable
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def max_dim_m(self, cell_size: tuple[float, float, float]) -> float:
        return max(d * s for d, s in zip(self.footprint, cell_size))


@dataclass
class Inventory:
    """Remaining part counts by type id. Counts never go negative."""

    counts: dict[int, int]

    def available(self, type_id: int) -> int:
        return self.counts.get(type_id, 0)

    def take(self, type_id: int) -> None:
        if self.counts.get(type_id, 0) <= 0:
            raise InventoryExhausted(f"no parts of type {type_id} left")
        self.counts[type_id] -= 1

    def put(self, type_id: int) -> None:
        self.counts[type_id] = self.counts.get(type_id, 0) + 1

    def copy(self) -> "Inventory":
        return Inventory(dict(self.counts))


@dataclass(frozen=True)
class Catalog:
    types: Mapping[int, ComponentType]
    rules: Mapping[tuple[str, str], bool]
    initial_inventory: Mapping[int, int]
    cell_size: tuple[float, float, float]
    schema_version: int = SCHEMA_VERSION
    warnings: tuple[str, ...] = field(default_factory=tuple)

    def type(self, type_id: int) -> ComponentType:
        try:
            return self.types[type_id]
        except KeyError:
            raise UnknownType(f"unknown component type {type_id}") from None

    def classes_allowed(self, class_a: str, class_b: str) -> bool:
        return self.rules.get((class_a, class_b), False)

    def new_inventory(self) -> Inventory:
        return Inventory(dict(self.initial_inventory))

    def max_component_dim_m(self) -> float:
        if not self.types:
            return 0.0
        return max(t.max_dim_m(self.cell_size) for t in self.types.values())


def ports_compatible(
    catalog: Catalog, type_a: int, port_a: int, type_b: int, port_b: int
) -> bool:
    """True iff the two ports face each other and their classes may connect."""
    ta = catalog.type(type_a)
    tb = catalog.type(type_b)
    try:
        pa = ta.ports[port_a]
    except IndexError:
        raise UnknownPort(f"type {type_a} has no port {port_a}") from None
    try:
        pb = tb.ports[port_b]
    except IndexError:
        raise UnknownPort(f"type {type_b} has no port {port_b}") from None
    opposed = all(a == -b for a, b in zip(pa.direction, pb.direction))
    return opposed and catalog.classes_allowed(pa.compatibility_class, pb.compatibility_class)


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise MalformedDocument(msg)


def _parse_port(raw: dict, footprint: tuple[int, int, int], ctx: str) -> Port:
    _require(isinstance(raw, dict), f"{ctx}: port must be an object")
    off = raw.get("local_offset")
    _require(
        isinstance(off, list) and len(off) == 3 and all(isinstance(c, int) for c in off),
        f"{ctx}: local_offset must be three lattice ints",
    )
    _require(
        all(0 <= c < d for c, d in zip(off, footprint)),
        f"{ctx}: local_offset {off} outside footprint {footprint}",
    )
    d = raw.get("direction")
    _require(d in AXIS_NAMES, f"{ctx}: direction {d!r} not a unit lattice axis")
    cls = raw.get("compatibility_class")
    _require(isinstance(cls, str) and cls != "", f"{ctx}: missing compatibility_class")
    return Port(tuple(off), AXIS_NAMES[d], cls)


def load_catalog(source) -> Catalog:
    """Load and validate a catalog document (dict, JSON string, or path).

    Aggregation rules are closed symmetrically: a one-sided rule is mirrored
    and recorded as a warning; contradictory sides raise AsymmetricRule.
    """
    doc = _load_doc(source)
    _require(isinstance(doc, dict), "catalog document must be a JSON object")
    version = doc.get("schema_version")
    _require(isinstance(version, int), "missing integer schema_version")
    if version != SCHEMA_VERSION:
        raise MalformedDocument(f"unsupported catalog schema_version {version}")

    raw_types = doc.get("types", [])
    _require(isinstance(raw_types, list), "types must be a list")
    types: dict[int, ComponentType] = {}
    for i, raw in enumerate(raw_types):
        ctx = f"types[{i}]"
        _require(isinstance(raw, dict), f"{ctx}: must be an object")
        tid = raw.get("type_id")
        _require(isinstance(tid, int) and tid >= 0, f"{ctx}: bad type_id {tid!r}")
        if tid in types:
            raise DuplicateTypeId(f"type_id {tid} appears more than once")
        fp = raw.get("footprint")
        _require(
            isinstance(fp, list) and len(fp) == 3 and all(isinstance(c, int) for c in fp),
            f"{ctx}: footprint must be three lattice ints",
        )
        _require(all(c >= 1 for c in fp), f"{ctx}: footprint must be >= (1,1,1)")
        mass = raw.get("mass")
        _require(isinstance(mass, (int, float)) and mass > 0, f"{ctx}: mass must be > 0")
        name = raw.get("name", f"type-{tid}")
        ports = tuple(
            _parse_port(p, tuple(fp), f"{ctx}.ports[{j}]")
            for j, p in enumerate(raw.get("ports", []))
        )
        types[tid] = ComponentType(
            type_id=tid,
            name=str(name),
            footprint=tuple(fp),
            mass=float(mass),
            ports=ports,
            color_tag=str(raw.get("color_tag", "")),
        )

    warnings: list[str] = []
    rules: dict[tuple[str, str], bool] = {}
    raw_rules = doc.get("rules", [])
    _require(isinstance(raw_rules, list), "rules must be a list")
    for i, raw in enumerate(raw_rules):
        ctx = f"rules[{i}]"
        _require(isinstance(raw, dict), f"{ctx}: must be an object")
        a, b = raw.get("class_a"), raw.get("class_b")
        allowed = raw.get("allowed")
        _require(isinstance(a, str) and isinstance(b, str), f"{ctx}: classes must be strings")
        _require(isinstance(allowed, bool), f"{ctx}: allowed must be a boolean")
        if (a, b) in rules and rules[(a, b)] != allowed:
            raise AsymmetricRule(f"rule({a},{b}) stated as both {rules[(a,b)]} and {allowed}")
        rules[(a, b)] = allowed
    for (a, b), allowed in list(rules.items()):
        if (b, a) not in rules:
            rules[(b, a)] = allowed
            warnings.append(f"rule({a},{b}) mirrored to rule({b},{a})")
        elif rules[(b, a)] != allowed:
            raise AsymmetricRule(f"rule({a},{b})={allowed} contradicts rule({b},{a})")

    inv_raw = doc.get("inventory", {})
    _require(isinstance(inv_raw, dict), "inventory must be an object")
    inventory: dict[int, int] = {}
    for key, count in inv_raw.items():
        try:
            tid = int(key)
        except ValueError:
            raise MalformedDocument(f"inventory key {key!r} is not a type id") from None
        _require(tid in types, f"inventory references unknown type {tid}")
        _require(isinstance(count, int) and count >= 0, f"inventory[{key}] must be >= 0")
        inventory[tid] = count

    cell = doc.get("cell_size", [0.032, 0.032, 0.02])
    _require(
        isinstance(cell, list) and len(cell) == 3 and all(
            isinstance(c, (int, float)) and c > 0 for c in cell
        ),
        "cell_size must be three positive numbers (meters)",
    )

    return Catalog(
        types=types,
        rules=rules,
        initial_inventory=inventory,
        cell_size=tuple(float(c) for c in cell),
        schema_version=version,
        warnings=tuple(warnings),
    )


def _load_doc(source):
    if isinstance(source, dict):
        return source
    if isinstance(source, Path):
        text = source.read_text(encoding="utf-8")
    elif isinstance(source, str):
        text = Path(source).read_text(encoding="utf-8") if source.lstrip()[:1] != "{" else source
    else:
        raise MalformedDocument(f"unsupported catalog source {type(source)!r}")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"invalid JSON: {exc}") from exc


def builtin_catalog(name: str) -> Catalog:
    """Bundled example catalogs: 'bricks8' and 'nodal15' (illustrative sets)."""
    data = resources.files("assembly_engine.data").joinpath(f"{name}.json").read_text("utf-8")
    return load_catalog(json.loads(data))


def catalog_to_dict(cat: Catalog) -> dict:
    return {
        "schema_version": cat.schema_version,
        "cell_size": list(cat.cell_size),
        "types": [
            {
                "type_id": t.type_id,
                "name": t.name,
                "footprint": list(t.footprint),
                "mass": t.mass,
                "color_tag": t.color_tag,
                "ports": [
                    {
                        "local_offset": list(p.local_offset),
                        "direction": AXIS_LABELS[p.direction],
                        "compatibility_class": p.compatibility_class,
                    }
                    for p in t.ports
                ],
            }
            for t in sorted(cat.types.values(), key=lambda t: t.type_id)
        ],
        "rules": [
            {"class_a": a, "class_b": b, "allowed": allowed}
            for (a, b), allowed in sorted(cat.rules.items())
        ],
        "inventory": {str(k): v for k, v in sorted(cat.initial_inventory.items())},
    }
