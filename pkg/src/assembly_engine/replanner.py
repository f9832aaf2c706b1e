"""Deviation recovery: best-first search over (remove, add) edit sequences.

When the user departs from the plan, the current structure (deviant part
included) becomes the search root. Edits are single placements added or
removed under the aggregation/overlap/inventory constraints; the search is
uniform-cost over the weighted edit count, so the first goal states popped
carry provably minimal cost. Candidates are ranked by (edit cost, stability
descending, canonical hash) and thinned to pairwise edit distance >=
diversity_min.

Removing physically done work costs more than adding (w_remove > w_add).
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, replace
from typing import Mapping, Optional

from .catalog import Catalog
from .errors import EngineError
from .planner import (
    AssemblyState,
    Placement,
    Plan,
    PlanStep,
    WorkArea,
    apply_placement,
    enumerate_placements,
    placement_box,
    remove_placement,
)
from .serialization import digest
from .stability import StabilityParams, StabilityReport, analyze


class InfeasibleGoals(EngineError):
    pass


class BudgetExceeded(EngineError):
    pass


class NoPendingCandidates(EngineError):
    pass


class IndexOutOfRange(EngineError):
    pass


@dataclass(frozen=True)
class GoalSet:
    target_height: int  # reached when max occupied z + part top >= target
    max_components: int
    per_type_limits: Optional[Mapping[int, int]] = None

    def __post_init__(self) -> None:
        if self.target_height < 1 or self.max_components < 1:
            raise ValueError("goals must ask for at least one unit of structure")


@dataclass(frozen=True)
class Deviation:
    expected: Placement
    actual: Placement
    step_index: int

    def __post_init__(self) -> None:
        if self.expected == self.actual:
            raise ValueError("deviation requires expected != actual")


@dataclass
class CandidatePlan:
    final_state: AssemblyState
    continuation: Plan
    edit_cost: int
    removals: tuple[Placement, ...]
    additions: tuple[Placement, ...]
    stability: Optional[StabilityReport]
    goal_satisfied: bool

    def state_hash(self) -> str:
        return digest([list(k[1]) + [k[0], k[2]] for k in self.final_state.canonical_key()])


@dataclass(frozen=True)
class ReplanParams:
    w_remove: int = 2
    w_add: int = 1
    diversity_min: int = 1
    node_budget: int = 200_000


def goal_satisfied(state: AssemblyState, goals: GoalSet, catalog: Catalog) -> bool:
    if len(state.placements) > goals.max_components:
        return False
    if goals.per_type_limits:
        for tid, limit in goals.per_type_limits.items():
            if sum(1 for p in state.placements if p.type_id == tid) > limit:
                return False
    return state.max_height(catalog) >= goals.target_height


def height_upper_bound(state: AssemblyState, goals: GoalSet, catalog: Catalog) -> int:
    """Stack every available part into one column: an upper bound on height."""
    heights = []
    for p in state.placements:
        heights.append(catalog.type(p.type_id).footprint[2])
    for tid, count in state.inventory.items():
        heights.extend([catalog.type(tid).footprint[2]] * max(0, count))
    heights.sort(reverse=True)
    return sum(heights[: goals.max_components])


def replan(
    current: AssemblyState,
    deviation: Deviation,
    goals: GoalSet,
    catalog: Catalog,
    k: int = 3,
    *,
    area: WorkArea,
    params: Optional[ReplanParams] = None,
    stability_params: Optional[StabilityParams] = None,
    next_instance_id: Optional[int] = None,
) -> list[CandidatePlan]:
    """Up to k diverse goal-satisfying continuations, cheapest first.

    Raises InfeasibleGoals when the reachable space holds no goal state
    (the quick height bound short-circuits obvious cases), BudgetExceeded
    when the node budget ran out before any candidate appeared.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    params = params or ReplanParams()
    if next_instance_id is None:
        next_instance_id = max(
            (p.instance_id for p in current.placements), default=0
        ) + 1

    if height_upper_bound(current, goals, catalog) < goals.target_height:
        raise InfeasibleGoals(
            f"target height {goals.target_height} exceeds what the inventory can stack"
        )

    start_key = current.canonical_key()
    best_cost: dict[tuple, int] = {start_key: 0}
    counter = 0
    # heap entries: (cost, tie counter, state, ops); ops are ("rm", placement)
    # or ("add", placement) in path order
    heap: list[tuple[int, int, AssemblyState, tuple]] = [(0, 0, current, ())]
    collected: dict[tuple, tuple[int, AssemblyState, tuple]] = {}
    pops = 0
    truncated = False

    while heap:
        cost, _, state, ops = heapq.heappop(heap)
        key = state.canonical_key()
        if cost > best_cost.get(key, -1):
            continue  # stale entry
        pops += 1
        if pops > params.node_budget:
            truncated = True
            break

        if key not in collected and goal_satisfied(state, goals, catalog):
            collected[key] = (cost, state, ops)

        if collected and _enough(collected, k, params.diversity_min, cost):
            break
        if collected and _enough(collected, k, params.diversity_min, cost + 1):
            # the final k live at cost <= current: children are strictly
            # costlier, so keep popping this level but stop branching
            continue

        # removals, cheapest-id first for deterministic path recovery
        for p in sorted(state.placements, key=lambda p: p.instance_id):
            try:
                nstate = remove_placement(state, p.instance_id, catalog)
            except EngineError:
                continue
            ncost = cost + params.w_remove
            nkey = nstate.canonical_key()
            if ncost >= best_cost.get(nkey, ncost + 1):
                continue
            best_cost[nkey] = ncost
            counter += 1
            heapq.heappush(heap, (ncost, counter, nstate, ops + (("rm", p),)))

        # additions; ids assigned per path depth keep states hash-equal
        if len(state.placements) < goals.max_components:
            add_id = next_instance_id + sum(1 for op, _ in ops if op == "add")
            for tid in sorted(catalog.types):
                if state.inventory.get(tid, 0) <= 0:
                    continue
                if goals.per_type_limits and sum(
                    1 for p in state.placements if p.type_id == tid
                ) >= goals.per_type_limits.get(tid, goals.max_components):
                    continue
                for cand in enumerate_placements(state, catalog, area, tid, add_id):
                    try:
                        nstate = apply_placement(state, cand, catalog)
                    except EngineError:
                        continue
                    ncost = cost + params.w_add
                    nkey = nstate.canonical_key()
                    if ncost >= best_cost.get(nkey, ncost + 1):
                        continue
                    best_cost[nkey] = ncost
                    counter += 1
                    heapq.heappush(heap, (ncost, counter, nstate, ops + (("add", cand),)))

    if not collected:
        if truncated:
            raise BudgetExceeded(f"no goal state within {params.node_budget} expansions")
        raise InfeasibleGoals("search space exhausted without reaching the goals")

    candidates = [
        _build_candidate(current, state, ops, cost, catalog, goals, stability_params, next_instance_id)
        for cost, state, ops in collected.values()
    ]
    candidates.sort(key=lambda c: (c.edit_cost, -c.stability.score, c.state_hash()))
    return _diverse_prefix(candidates, k, params.diversity_min)


def _enough(collected, k: int, diversity_min: int, current_cost: int) -> bool:
    """True once every kept cost level is complete and k diverse states exist."""
    done = [(c, s) for c, s, _ in collected.values() if c < current_cost]
    if len(done) < k:
        return False
    kept: list[AssemblyState] = []
    for _, state in sorted(done, key=lambda e: e[0]):
        if all(_edit_distance(state, other) >= diversity_min for other in kept):
            kept.append(state)
        if len(kept) >= k:
            return True
    return False


def _edit_distance(a: AssemblyState, b: AssemblyState) -> int:
    ka = set(p.key() for p in a.placements)
    kb = set(p.key() for p in b.placements)
    return len(ka ^ kb)


def _diverse_prefix(candidates: list[CandidatePlan], k: int, diversity_min: int):
    kept: list[CandidatePlan] = []
    for cand in candidates:
        if all(
            _edit_distance(cand.final_state, other.final_state) >= diversity_min
            for other in kept
        ):
            kept.append(cand)
        if len(kept) == k:
            break
    return kept


def _build_candidate(
    current: AssemblyState,
    goal_state: AssemblyState,
    ops: tuple,
    cost: int,
    catalog: Catalog,
    goals: GoalSet,
    stability_params: Optional[StabilityParams],
    next_instance_id: int,
) -> CandidatePlan:
    removals = tuple(p for kind, p in ops if kind == "rm")
    additions = tuple(p for kind, p in ops if kind == "add")
    ordered = _order_edits(current, removals, additions, catalog) or list(ops)

    # replay the ordered edits, renumbering additions sequentially
    state = current
    steps: list[PlanStep] = []
    add_id = next_instance_id
    final_removals = []
    final_additions = []
    for kind, p in ordered:
        if kind == "rm":
            state = remove_placement(state, p.instance_id, catalog)
            steps.append(
                PlanStep(
                    step_index=len(steps),
                    placement=p,
                    action="remove",
                    place_region=placement_box(p, catalog),
                )
            )
            final_removals.append(p)
        else:
            placed = replace(p, instance_id=add_id)
            add_id += 1
            state = apply_placement(state, placed, catalog)
            steps.append(
                PlanStep(
                    step_index=len(steps),
                    placement=placed,
                    place_region=placement_box(placed, catalog),
                )
            )
            final_additions.append(placed)

    assert state.canonical_key() == goal_state.canonical_key()
    stability = analyze(state, catalog, stability_params)
    return CandidatePlan(
        final_state=state,
        continuation=Plan(steps=steps, mode="graph"),
        edit_cost=cost,
        removals=tuple(final_removals),
        additions=tuple(final_additions),
        stability=stability,
        goal_satisfied=goal_satisfied(state, goals, catalog),
    )


def _order_edits(current, removals, additions, catalog):
    """Canonical edit order: safe removals first, then adjacency-sorted adds.

    Falls back to None when the canonical order is illegal (an interleaved
    search path was the only legal order); the caller then keeps path order.
    """
    state = current
    ordered: list[tuple[str, Placement]] = []
    pending_rm = sorted(removals, key=lambda p: p.instance_id)
    while pending_rm:
        progressed = False
        for p in list(pending_rm):
            try:
                state = remove_placement(state, p.instance_id, catalog)
            except EngineError:
                continue
            ordered.append(("rm", p))
            pending_rm.remove(p)
            progressed = True
            break
        if not progressed:
            return None

    pending_add = list(additions)
    while pending_add:
        scored = []
        for p in pending_add:
            try:
                nstate = apply_placement(state, p, catalog)
            except EngineError:
                continue
            engaged = len(nstate.edges) - len(state.edges)
            scored.append((-engaged, p.cell[2], p.cell[1], p.cell[0], p.yaw, p))
        if not scored:
            return None
        scored.sort(key=lambda s: s[:5])
        chosen = scored[0][5]
        state = apply_placement(state, chosen, catalog)
        ordered.append(("add", chosen))
        pending_add.remove(chosen)
    return ordered


def select_candidate(session, candidate_index: int) -> Plan:
    """Swap the session's plan for a candidate continuation.

    The session must expose pending_candidates and plan attributes; pending
    candidates are discarded after selection.
    """
    candidates = getattr(session, "pending_candidates", None)
    if not candidates:
        raise NoPendingCandidates("no replan candidates awaiting selection")
    if not (0 <= candidate_index < len(candidates)):
        raise IndexOutOfRange(
            f"candidate index {candidate_index} outside 0..{len(candidates) - 1}"
        )
    chosen = candidates[candidate_index]
    steps = [
        PlanStep(
            step_index=i,
            placement=s.placement,
            action=s.action,
            place_region=s.place_region,
        )
        for i, s in enumerate(chosen.continuation.steps)
    ]
    plan = Plan(steps=steps, mode=chosen.continuation.mode)
    session.plan = plan
    session.pending_candidates = None
    return plan
