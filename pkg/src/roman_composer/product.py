"""Asynchronous product of the community, synchronized with the data box.

One service moves per step; the data box follows the executed operation
(self-looping when it has no matching transition).  A move is labeled
``(op, svc)`` with ``svc`` the 1-based index of the moving service.  Only
configurations reachable from the initial one are kept, and everything is
canonically ordered so repeated builds are identical.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import NamedTuple

from .model import CompositionInstance


@dataclass(frozen=True)
class CommunityConfig:
    """Joint state: one state per service (in community order) plus data box."""

    service_states: tuple[str, ...]
    db_state: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "service_states", tuple(self.service_states))

    def key(self):
        return (self.service_states, self.db_state or "")

    def replace_at(self, svc: int, state: str, db_state: str | None) -> "CommunityConfig":
        parts = list(self.service_states)
        parts[svc - 1] = state
        return CommunityConfig(tuple(parts), db_state)

    def __str__(self):
        body = ",".join(self.service_states)
        if self.db_state is not None:
            return f"({body}|{self.db_state})"
        return f"({body})"


class Move(NamedTuple):
    src: CommunityConfig
    op: str
    svc: int
    dst: CommunityConfig

    def key(self):
        return (self.src.key(), self.op, self.svc, self.dst.key())


class CommunityProduct:
    """Reachable community transition system with per-config move indices."""

    def __init__(self, instance: CompositionInstance, initial: CommunityConfig,
                 configs, moves):
        self.instance = instance
        self.initial = initial
        self.configs = tuple(sorted(configs, key=CommunityConfig.key))
        self.index = {c: i for i, c in enumerate(self.configs)}
        # a move can arise from several guard variants of one transition: dedupe
        self.moves = tuple(sorted(set(moves), key=Move.key))
        options: dict = {}
        for m in self.moves:
            options.setdefault(m.src, {}).setdefault(m.op, {}).setdefault(m.svc, []).append(m.dst)
        # freeze: config -> op -> tuple[(svc, outcomes)]
        self._options = {
            c: {
                op: tuple(sorted((k, tuple(dsts)) for k, dsts in by_svc.items()))
                for op, by_svc in by_op.items()
            }
            for c, by_op in options.items()
        }

    def options(self, config: CommunityConfig, op: str):
        """Delegation choices at ``config`` for ``op``: tuple of (svc, outcomes)."""
        return self._options.get(config, {}).get(op, ())

    def outcomes(self, config: CommunityConfig, op: str, svc: int):
        for k, dsts in self.options(config, op):
            if k == svc:
                return dsts
        return ()

    def enabled_ops(self, config: CommunityConfig):
        return tuple(sorted(self._options.get(config, {})))

    def signature(self) -> str:
        """Canonical text form, for bit-equality checks across rebuilds."""
        lines = [f"initial {self.initial}"]
        lines += [f"config {c}" for c in self.configs]
        lines += [f"move {m.src} {m.op}/{m.svc} {m.dst}" for m in self.moves]
        return "\n".join(lines) + "\n"

    def to_dot(self) -> str:
        out = ["digraph community_product {", "  rankdir=LR;"]
        for c in self.configs:
            shape = "doublecircle" if community_final(c, self.instance) else "circle"
            out.append(f'  "{c}" [shape={shape}];')
        out.append('  __entry__ [shape=point,label=""];')
        out.append(f'  __entry__ -> "{self.initial}";')
        for m in self.moves:
            out.append(f'  "{m.src}" -> "{m.dst}" [label="{m.op}/{m.svc}"];')
        out.append("}")
        return "\n".join(out) + "\n"


def community_final(config: CommunityConfig, instance: CompositionInstance) -> bool:
    """True when every service sits in a final state (data box ignored)."""
    return all(
        s in instance.service(k).finals
        for k, s in enumerate(config.service_states, start=1)
    )


def initial_config(instance: CompositionInstance) -> CommunityConfig:
    db = instance.databox.initial if instance.databox is not None else None
    return CommunityConfig(tuple(s.initial for s in instance.services), db)


def config_moves(instance: CompositionInstance, config: CommunityConfig):
    """All moves enabled at ``config``, straight from the definition."""
    moves = []
    for k in range(1, instance.n + 1):
        svc = instance.service(k)
        local = config.service_states[k - 1]
        for t in svc.transitions:
            if t.src != local:
                continue
            if t.guard is not None and config.db_state not in t.guard:
                continue
            if instance.databox is not None:
                db_next = instance.databox.successors(config.db_state, t.op)
            else:
                db_next = (None,)
            for d in db_next:
                moves.append(Move(config, t.op, k, config.replace_at(k, t.dst, d)))
    return moves


def build_product(instance: CompositionInstance) -> CommunityProduct:
    """Breadth-first construction of the reachable synchronized product."""
    init = initial_config(instance)
    seen = {init}
    frontier = deque([init])
    moves = []
    while frontier:
        config = frontier.popleft()
        for m in config_moves(instance, config):
            moves.append(m)
            if m.dst not in seen:
                seen.add(m.dst)
                frontier.append(m.dst)
    return CommunityProduct(instance, init, seen, moves)
