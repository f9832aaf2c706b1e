"""Static stability under gravity: support-cut analysis with a COM check.

Quasi-static, frictionless tipping model: for every horizontal cut of every
connected stack, the parts above the cut must keep their combined center of
mass over the convex hull of the supporting contact footprint. Connections
are non-adhesive by default (conservative); rigid_joints treats port-linked
substructures as monolithic bodies, closer to clutch-type bricks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .catalog import Catalog
from .planner import AssemblyState, occupied_cells, placement_box

# Lattice structures produce exact-boundary margins (COM exactly over a
# support edge). Snap float noise so verdicts are translation-invariant.
MARGIN_EPS = 1e-12


@dataclass(frozen=True)
class StabilityParams:
    rigid_joints: bool = False
    margin_scale: Optional[float] = None  # default: half the largest footprint dim


@dataclass
class StabilityReport:
    stable: bool
    score: float
    worst_cut: Optional[tuple[frozenset[int], float]]
    per_placement_margin: dict[int, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "stable": self.stable,
            "score": self.score,
            "worst_cut": None
            if self.worst_cut is None
            else {"instances": sorted(self.worst_cut[0]), "margin": self.worst_cut[1]},
            "per_placement_margin": {
                str(k): v for k, v in sorted(self.per_placement_margin.items())
            },
        }


@dataclass
class _Body:
    ids: frozenset[int]
    cells: frozenset[tuple[int, int, int]]
    mass: float
    com: tuple[float, float]  # ground-projected COM, meters
    z0: int


def _bodies(state: AssemblyState, catalog: Catalog, rigid: bool) -> list[_Body]:
    parts = []
    for p in state.placements:
        cells = occupied_cells(p, catalog.type(p.type_id))
        box = placement_box(p, catalog)
        parts.append(
            (p.instance_id, cells, catalog.type(p.type_id).mass, (box.center[0], box.center[1]))
        )
    if not rigid:
        groups = [[part] for part in parts]
    else:
        parent = {p[0]: p[0] for p in parts}

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for a, _, b, _ in state.edges:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[ra] = rb
        clusters: dict[int, list] = {}
        for part in parts:
            clusters.setdefault(find(part[0]), []).append(part)
        groups = list(clusters.values())

    bodies = []
    for group in groups:
        ids = frozenset(pid for pid, _, _, _ in group)
        cells = frozenset().union(*(c for _, c, _, _ in group))
        mass = sum(m for _, _, m, _ in group)
        cx = sum(m * com[0] for _, _, m, com in group) / mass
        cy = sum(m * com[1] for _, _, m, com in group) / mass
        bodies.append(_Body(ids, cells, mass, (cx, cy), min(c[2] for c in cells)))
    return sorted(bodies, key=lambda b: min(b.ids))


def _contact_cells(upper: _Body, lower: _Body) -> list[tuple[int, int, int]]:
    """Cells of `upper` whose bottom face rests on `lower`."""
    out = []
    for (x, y, z) in upper.cells:
        if (x, y, z - 1) in lower.cells and (x, y, z - 1) not in upper.cells:
            out.append((x, y, z))
    return out


def analyze(
    state: AssemblyState, catalog: Catalog, params: Optional[StabilityParams] = None
) -> StabilityReport:
    """Support-cut stability report for an overlap-free structure.

    An empty structure reports stable with score 1 by convention.
    """
    params = params or StabilityParams()
    if state.is_empty():
        return StabilityReport(stable=True, score=1.0, worst_cut=None)

    sx, sy, _ = catalog.cell_size
    bodies = _bodies(state, catalog, params.rigid_joints)
    n = len(bodies)

    supports: dict[int, list[tuple[int, list]]] = {i: [] for i in range(n)}  # upper -> lower
    adjacent: dict[int, set[int]] = {i: set() for i in range(n)}
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            contact = _contact_cells(bodies[i], bodies[j])
            if contact:
                supports[i].append((j, contact))
                adjacent[i].add(j)
                adjacent[j].add(i)

    # connected stacks over support adjacency
    stack_of: dict[int, int] = {}
    for i in range(n):
        if i in stack_of:
            continue
        frontier = [i]
        while frontier:
            cur = frontier.pop()
            if cur in stack_of:
                continue
            stack_of[cur] = i
            frontier.extend(adjacent[cur] - stack_of.keys())

    stacks: dict[int, list[int]] = {}
    for body_idx, root in stack_of.items():
        stacks.setdefault(root, []).append(body_idx)

    margin_scale = params.margin_scale
    if margin_scale is None:
        margin_scale = max(
            catalog.type(p.type_id).max_dim_m(catalog.cell_size) for p in state.placements
        ) / 2.0
    if margin_scale <= 0:
        margin_scale = 1.0

    cut_margins: list[tuple[frozenset[int], float]] = []
    margin_by_body_cut: dict[tuple[int, int], float] = {}  # (body idx, level) -> margin

    for members in stacks.values():
        levels = sorted({bodies[i].z0 for i in members})
        for k in levels:
            above = [i for i in members if bodies[i].z0 >= k]
            if not above:
                continue
            patches: list[tuple[int, int, int]] = []
            if k == 0:
                for i in above:
                    patches.extend(c for c in bodies[i].cells if c[2] == 0)
            else:
                above_set = set(above)
                for i in above:
                    for j, contact in supports[i]:
                        if j not in above_set:
                            patches.extend(contact)
            points = set()
            for (x, y, _) in patches:
                points.update(
                    ((x * sx, y * sy), ((x + 1) * sx, y * sy),
                     ((x + 1) * sx, (y + 1) * sy), (x * sx, (y + 1) * sy))
                )
            total_mass = sum(bodies[i].mass for i in above)
            com = (
                sum(bodies[i].mass * bodies[i].com[0] for i in above) / total_mass,
                sum(bodies[i].mass * bodies[i].com[1] for i in above) / total_mass,
            )
            if points:
                margin = signed_hull_margin(com, sorted(points))
                if abs(margin) < MARGIN_EPS:
                    margin = 0.0
            else:
                margin = -margin_scale  # nothing holds this set up
            ids = frozenset().union(*(bodies[i].ids for i in above))
            cut_margins.append((ids, margin))
            for i in above:
                if bodies[i].z0 == k:
                    margin_by_body_cut[(i, k)] = margin

    per_placement: dict[int, float] = {}
    for i, body in enumerate(bodies):
        margin = margin_by_body_cut.get((i, body.z0))
        if margin is None:
            continue
        for pid in body.ids:
            per_placement[pid] = margin

    worst = min(cut_margins, key=lambda cm: cm[1])
    stable = all(m >= 0.0 for _, m in cut_margins)
    score = max(0.0, min(1.0, worst[1] / margin_scale)) if stable else 0.0
    return StabilityReport(
        stable=stable, score=score, worst_cut=worst, per_placement_margin=per_placement
    )


def score_candidates(candidates, catalog: Catalog, params: Optional[StabilityParams] = None):
    """Fill the stability field of replanner candidates; order is preserved."""
    for cand in candidates:
        cand.stability = analyze(cand.final_state, catalog, params)
    return candidates


# --------------------------------------------------------------------------
# convex hull margin


def convex_hull(points: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Monotone-chain hull, counter-clockwise, no duplicate endpoint."""
    pts = sorted(set(points))
    if len(pts) <= 2:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[tuple[float, float]] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[tuple[float, float]] = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def signed_hull_margin(p: tuple[float, float], points: list[tuple[float, float]]) -> float:
    """Signed distance from p to the hull boundary; positive inside."""
    hull = convex_hull(points)
    if not hull:
        return -math.inf
    if len(hull) == 1:
        return -math.hypot(p[0] - hull[0][0], p[1] - hull[0][1])
    if len(hull) == 2:
        return -_point_segment_distance(p, hull[0], hull[1])
    margin = math.inf
    for i in range(len(hull)):
        a = hull[i]
        b = hull[(i + 1) % len(hull)]
        ex, ey = b[0] - a[0], b[1] - a[1]
        length = math.hypot(ex, ey)
        # inward distance for a CCW polygon
        d = ((ex) * (p[1] - a[1]) - (ey) * (p[0] - a[0])) / length
        margin = min(margin, d)
    if margin >= 0.0:
        return margin
    # outside: true distance to the boundary
    dist = min(
        _point_segment_distance(p, hull[i], hull[(i + 1) % len(hull)])
        for i in range(len(hull))
    )
    return -dist


def _point_segment_distance(p, a, b) -> float:
    ax, ay = a
    bx, by = b
    px, py = p
    dx, dy = bx - ax, by - ay
    denom = dx * dx + dy * dy
    if denom == 0.0:
        return math.hypot(px - ax, py - ay)
    t = max(0.0, min(1.0, ((px - ax) * dx + (py - ay) * dy) / denom))
    cx, cy = ax + t * dx, ay + t * dy
    return math.hypot(px - cx, py - cy)
