"""Largest ND-simulation of the target by the community product.

A pair (t, c) belongs to a simulation when (1) t final implies c
community-final, and (2) every target transition t -o-> t' can be
delegated to some service k that has at least one enabled move on o at c
and whose every possible outcome c' keeps (t', c') in the relation.  The
largest such relation is computed by removal until stable, with a
worklist that only re-examines pairs whose successors changed.
"""

from __future__ import annotations

import dataclasses
import json
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple

from .errors import NondetTargetError
from .model import CompositionInstance, TransitionSystem, validate
from .product import CommunityConfig, CommunityProduct, build_product, community_final


class SimPair(NamedTuple):
    t_state: str
    config: CommunityConfig

    def key(self):
        return (self.t_state, self.config.key())

    def __str__(self):
        return f"({self.t_state},{self.config})"


@dataclass(frozen=True)
class SimulationStats:
    """Work accounting for the removal fixpoint.

    ``rechecks`` is bounded by ``candidates + target_transitions * product_moves``:
    every candidate is examined once up front, and each (target transition,
    product move) dependency edge can trigger at most one re-examination
    because its endpoint pair is removed at most once.
    """

    pair_universe: int
    candidates: int
    rechecks: int
    removals: int
    target_transitions: int
    product_moves: int

    @property
    def recheck_bound(self) -> int:
        return self.candidates + self.target_transitions * self.product_moves


@dataclass(frozen=True)
class SimulationRelation:
    pairs: frozenset[SimPair]
    is_largest: bool
    stats: SimulationStats | None = field(default=None, compare=False)

    def __contains__(self, pair: SimPair) -> bool:
        return pair in self.pairs

    def sorted_pairs(self):
        return sorted(self.pairs, key=SimPair.key)


def compute_largest_simulation(
    instance: CompositionInstance, product: CommunityProduct
) -> SimulationRelation:
    """Greatest fixpoint over the full (target state, config) pair universe."""
    target = instance.target
    t_states = sorted(target.states)
    t_index = {s: i for i, s in enumerate(t_states)}
    n_t = len(t_states)
    configs = product.configs
    n_c = len(configs)

    t_out = [[] for _ in range(n_t)]   # ti -> [(op, tj)]
    t_rev = [[] for _ in range(n_t)]   # tj -> [(op, ti)]
    for tr in target.transitions:
        i, j = t_index[tr.src], t_index[tr.dst]
        t_out[i].append((tr.op, j))
        t_rev[j].append((tr.op, i))

    # per config index: op -> tuple of (svc, successor index tuple)
    succ = [dict() for _ in range(n_c)]
    # per config index: op -> set of predecessor config indices
    pred = [dict() for _ in range(n_c)]
    for ci, c in enumerate(configs):
        by_op = {}
        for op in product.enabled_ops(c):
            entries = []
            for k, dsts in product.options(c, op):
                idxs = tuple(product.index[d] for d in dsts)
                entries.append((k, idxs))
                for di in idxs:
                    pred[di].setdefault(op, set()).add(ci)
            by_op[op] = tuple(entries)
        succ[ci] = by_op

    final_t = [t_states[i] in target.finals for i in range(n_t)]
    final_c = [community_final(c, instance) for c in configs]

    # condition (1) filters the initial candidate set
    live = bytearray(n_t * n_c)
    queue = deque()
    candidates = 0
    for ti in range(n_t):
        base = ti * n_c
        for ci in range(n_c):
            if not final_t[ti] or final_c[ci]:
                live[base + ci] = 1
                queue.append(base + ci)
                candidates += 1

    def holds(ti: int, ci: int) -> bool:
        for op, tj in t_out[ti]:
            entries = succ[ci].get(op)
            if not entries:
                return False
            base = tj * n_c
            for _k, idxs in entries:
                for di in idxs:
                    if not live[base + di]:
                        break
                else:
                    break
            else:
                return False
        return True

    rechecks = removals = 0
    while queue:
        pid = queue.popleft()
        if not live[pid]:
            continue
        ti, ci = divmod(pid, n_c)
        rechecks += 1
        if holds(ti, ci):
            continue
        live[pid] = 0
        removals += 1
        for op, t_prev in t_rev[ti]:
            base = t_prev * n_c
            for c_prev in pred[ci].get(op, ()):
                qid = base + c_prev
                if live[qid]:
                    queue.append(qid)

    pairs = frozenset(
        SimPair(t_states[ti], configs[ci])
        for ti in range(n_t)
        for ci in range(n_c)
        if live[ti * n_c + ci]
    )
    stats = SimulationStats(
        pair_universe=n_t * n_c,
        candidates=candidates,
        rechecks=rechecks,
        removals=removals,
        target_transitions=len(target.transitions),
        product_moves=len(product.moves),
    )
    return SimulationRelation(pairs=pairs, is_largest=True, stats=stats)


def check_simulation(
    pairs, instance: CompositionInstance, product: CommunityProduct
) -> list[SimPair]:
    """Direct pair-by-pair soundness check; returns the violating pairs.

    Independent of the fixpoint: evaluates both defining conditions of a
    simulation against the given set itself.
    """
    pair_set = frozenset(pairs)
    violations = []
    for p in sorted(pair_set, key=SimPair.key):
        ok = True
        if p.t_state in instance.target.finals and not community_final(p.config, instance):
            ok = False
        for tr in instance.target.transitions:
            if not ok:
                break
            if tr.src != p.t_state:
                continue
            good_k = False
            for _k, dsts in product.options(p.config, tr.op):
                if all(SimPair(tr.dst, d) in pair_set for d in dsts):
                    good_k = True
                    break
            if not good_k:
                ok = False
        if not ok:
            violations.append(p)
    return violations


def is_realizable(instance: CompositionInstance, product: CommunityProduct | None = None,
                  relation: SimulationRelation | None = None) -> bool:
    """Realizable iff the initial pair belongs to the largest simulation."""
    if product is None:
        product = build_product(instance)
    if relation is None:
        relation = compute_largest_simulation(instance, product)
    return SimPair(instance.target.initial, product.initial) in relation


def simulates(sys_big: TransitionSystem, sys_small: TransitionSystem) -> bool:
    """Standalone two-system check: can ``sys_big`` mimic every behavior of
    ``sys_small``?  ``sys_small`` must be deterministic."""
    if not sys_small.is_deterministic():
        raise NondetTargetError(
            f"{sys_small.name!r} is nondeterministic; the simulated side must be deterministic"
        )
    big, small = sys_big, sys_small
    if big.name == small.name:
        big = dataclasses.replace(big, name=big.name + "__lhs")
    alphabet = big.labels() | small.labels()
    instance = CompositionInstance(
        alphabet=alphabet, services=(big,), databox=None, target=small
    )
    problems = validate(instance)
    if problems:
        from .errors import InstanceError

        raise InstanceError(problems)
    return is_realizable(instance)


def _pair_obj(p: SimPair):
    obj = {"target": p.t_state, "services": list(p.config.service_states)}
    if p.config.db_state is not None:
        obj["db"] = p.config.db_state
    return obj


def relation_to_json(relation: SimulationRelation) -> str:
    """Canonical JSON array of pairs, sorted."""
    doc = {
        "largest": relation.is_largest,
        "pairs": [_pair_obj(p) for p in relation.sorted_pairs()],
    }
    return json.dumps(doc, indent=2) + "\n"
