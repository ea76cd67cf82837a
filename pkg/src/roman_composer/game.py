"""Safety-game encoding of the composition problem.

The arena is bipartite.  At an env state (target state, config) the
environment requests any operation the target allows, moving to a ctrl
state that carries the pending operation.  The controller answers with a
service index; an index with no enabled move leads to the unique unsafe
sink, otherwise the environment resolves which enabled move actually
happened.  Safe states are those that honor the finals condition; the
controller wins by staying safe forever, and the winning env states
project exactly onto the largest ND-simulation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import ParseError, UnrealizableError
from .model import CompositionInstance
from .product import CommunityConfig, CommunityProduct, community_final
from .simulation import SimPair
from .synthesis import OrchestratorGenerator, build_generator


@dataclass(frozen=True)
class GameState:
    turn: str                       # "env" | "ctrl"
    t_state: str | None
    config: CommunityConfig | None
    pending: str | None = None      # present iff turn == "ctrl"
    alive: bool = True

    def key(self):
        return (
            0 if self.alive else 1,
            self.turn,
            self.t_state or "",
            self.config.key() if self.config is not None else ((), ""),
            self.pending or "",
        )

    def __str__(self):
        if not self.alive:
            return "sink"
        if self.turn == "env":
            return f"env({self.t_state},{self.config})"
        return f"ctrl({self.t_state},{self.config},{self.pending})"


SINK = GameState(turn="env", t_state=None, config=None, pending=None, alive=False)


@dataclass
class SafetyGame:
    instance: CompositionInstance = field(repr=False)
    product: CommunityProduct = field(repr=False)
    initial: GameState
    env_states: tuple[GameState, ...]
    ctrl_states: tuple[GameState, ...]
    env_moves: dict[GameState, tuple[GameState, ...]]
    ctrl_moves: dict[GameState, dict[int, tuple[GameState, ...]]]
    safe: frozenset[GameState]

    @property
    def sink(self) -> GameState:
        return SINK

    def states(self) -> tuple[GameState, ...]:
        return tuple(sorted(
            list(self.env_states) + list(self.ctrl_states) + [SINK], key=GameState.key
        ))

    def structure(self):
        """Everything that defines the game, minus instance/product context."""
        return (
            self.initial, self.env_states, self.ctrl_states,
            self.env_moves, self.ctrl_moves, self.safe,
        )


@dataclass
class WinningRegion:
    states: frozenset[GameState]
    strategy: dict[GameState, int]

    def __contains__(self, s: GameState) -> bool:
        return s in self.states


def encode_game(instance: CompositionInstance, product: CommunityProduct) -> SafetyGame:
    """Build the arena over every (target state, reachable config) pair."""
    n = instance.n
    target = instance.target
    env_states = tuple(
        GameState("env", t, c)
        for t in sorted(target.states)
        for c in product.configs
    )
    t_out = {}
    for tr in target.transitions:
        t_out.setdefault(tr.src, []).append(tr)

    env_moves = {}
    ctrl_states = []
    ctrl_moves = {}
    for es in env_states:
        succs = []
        for tr in sorted(t_out.get(es.t_state, ()), key=lambda t: t.op):
            cs = GameState("ctrl", es.t_state, es.config, pending=tr.op)
            succs.append(cs)
            ctrl_states.append(cs)
            by_k = {}
            for k in range(1, n + 1):
                outcomes = product.outcomes(es.config, tr.op, k)
                if outcomes:
                    by_k[k] = tuple(
                        GameState("env", tr.dst, c2) for c2 in outcomes
                    )
                else:
                    by_k[k] = (SINK,)
            ctrl_moves[cs] = by_k
        env_moves[es] = tuple(succs)

    def is_safe(s: GameState) -> bool:
        if not s.alive:
            return False
        if s.t_state in target.finals:
            return community_final(s.config, instance)
        return True

    safe = frozenset(s for s in list(env_states) + ctrl_states if is_safe(s))
    initial = GameState("env", target.initial, product.initial)
    return SafetyGame(
        instance=instance, product=product, initial=initial,
        env_states=env_states, ctrl_states=tuple(sorted(ctrl_states, key=GameState.key)),
        env_moves=env_moves, ctrl_moves=ctrl_moves, safe=safe,
    )


def solve_game(game: SafetyGame) -> WinningRegion:
    """Greatest fixpoint of the controllable predecessor inside the safe set.

    Round-based sweeps: drop env states with an escaping move and ctrl
    states with no all-inside choice, until stable.
    """
    winning = set(game.safe)
    changed = True
    while changed:
        changed = False
        for cs in game.ctrl_states:
            if cs not in winning:
                continue
            if not any(
                all(dst in winning for dst in dsts)
                for dsts in game.ctrl_moves[cs].values()
            ):
                winning.discard(cs)
                changed = True
        for es in game.env_states:
            if es not in winning:
                continue
            if any(cs not in winning for cs in game.env_moves[es]):
                winning.discard(es)
                changed = True
    strategy = {}
    for cs in game.ctrl_states:
        if cs not in winning:
            continue
        for k in sorted(game.ctrl_moves[cs]):
            if all(dst in winning for dst in game.ctrl_moves[cs][k]):
                strategy[cs] = k
                break
    return WinningRegion(states=frozenset(winning), strategy=strategy)


def region_to_generator(
    game: SafetyGame, region: WinningRegion, instance: CompositionInstance
) -> OrchestratorGenerator:
    """Read the generator off the winning region.

    Structurally equal to the simulation-derived generator: winning env
    states become pairs, and a ctrl state's safe choices become omega.
    """
    if game.initial not in region:
        raise UnrealizableError("the initial game state is not winning")
    pairs = frozenset(
        SimPair(es.t_state, es.config)
        for es in game.env_states
        if es in region
    )
    omega = {}
    for cs in game.ctrl_states:
        p = SimPair(cs.t_state, cs.config)
        if p not in pairs:
            continue
        good = tuple(
            k
            for k in sorted(game.ctrl_moves[cs])
            if all(dst in region for dst in game.ctrl_moves[cs][k])
        )
        assert good, f"winning pair {p} has no safe delegation for {cs.pending!r}"
        omega[(p, cs.pending)] = good
    initial = SimPair(game.initial.t_state, game.initial.config)
    return OrchestratorGenerator(
        pairs=pairs, omega=omega, initial=initial,
        instance=instance, product=game.product,
    )


def solve_via_game(instance: CompositionInstance, product: CommunityProduct):
    game = encode_game(instance, product)
    region = solve_game(game)
    return game, region


# --- neutral textual export ----------------------------------------------------

def _state_tokens(s: GameState, n: int):
    if not s.alive:
        return ["sink"]
    toks = [s.turn, s.t_state, *s.config.service_states, s.config.db_state or "-"]
    if s.turn == "ctrl":
        toks.append(s.pending)
    return toks


def _tokens_state(tokens, n: int) -> GameState:
    if tokens == ["sink"]:
        return SINK
    tag = tokens[0]
    if tag == "env":
        if len(tokens) != n + 3:
            raise ParseError(f"bad env state arity: {tokens}", code="E_GAME_FORMAT")
        t, svc, db = tokens[1], tokens[2:2 + n], tokens[2 + n]
        return GameState("env", t, CommunityConfig(tuple(svc), None if db == "-" else db))
    if tag == "ctrl":
        if len(tokens) != n + 4:
            raise ParseError(f"bad ctrl state arity: {tokens}", code="E_GAME_FORMAT")
        t, svc, db, op = tokens[1], tokens[2:2 + n], tokens[2 + n], tokens[3 + n]
        return GameState(
            "ctrl", t, CommunityConfig(tuple(svc), None if db == "-" else db), pending=op
        )
    raise ParseError(f"bad state tag {tag!r}", code="E_GAME_FORMAT")


def export_game_neutral(game: SafetyGame) -> str:
    """Line-oriented sections STATES / INIT / ENV / CTRL / SAFE, one tuple
    per line, canonically sorted; round-trips through parse_game_neutral."""
    n = game.instance.n
    tok = lambda s: " ".join(_state_tokens(s, n))
    lines = [f"GAME safety 1", f"SERVICES {n}"]
    lines.append("STATES")
    for s in game.states():
        lines.append(tok(s))
    lines.append("INIT")
    lines.append(tok(game.initial))
    lines.append("ENV")
    for es in game.env_states:
        for cs in game.env_moves[es]:
            lines.append(f"{tok(es)} -> {tok(cs)}")
    lines.append("CTRL")
    for cs in game.ctrl_states:
        for k in sorted(game.ctrl_moves[cs]):
            for dst in sorted(game.ctrl_moves[cs][k], key=GameState.key):
                lines.append(f"{tok(cs)} {k} -> {tok(dst)}")
    lines.append("SAFE")
    for s in sorted(game.safe, key=GameState.key):
        lines.append(tok(s))
    return "\n".join(lines) + "\n"


def parse_game_neutral(text: str):
    """Re-read a neutral export; returns the same structure tuple as
    ``SafetyGame.structure()`` for isomorphism/equality checks."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("GAME "):
        raise ParseError("missing GAME header", code="E_GAME_FORMAT")
    if not lines[1].startswith("SERVICES "):
        raise ParseError("missing SERVICES header", code="E_GAME_FORMAT")
    n = int(lines[1].split()[1])
    sections = {"STATES": [], "INIT": [], "ENV": [], "CTRL": [], "SAFE": []}
    current = None
    for ln in lines[2:]:
        if ln in sections:
            current = ln
            continue
        if current is None:
            raise ParseError(f"content before any section: {ln!r}", code="E_GAME_FORMAT")
        sections[current].append(ln)

    states = [_tokens_state(ln.split(), n) for ln in sections["STATES"]]
    env_states = tuple(s for s in states if s.alive and s.turn == "env")
    ctrl_states = tuple(s for s in states if s.alive and s.turn == "ctrl")
    if len(sections["INIT"]) != 1:
        raise ParseError("INIT must hold exactly one state", code="E_GAME_FORMAT")
    initial = _tokens_state(sections["INIT"][0].split(), n)

    env_moves = {es: [] for es in env_states}
    for ln in sections["ENV"]:
        left, right = ln.split(" -> ")
        es = _tokens_state(left.split(), n)
        env_moves[es].append(_tokens_state(right.split(), n))
    ctrl_moves = {cs: {} for cs in ctrl_states}
    for ln in sections["CTRL"]:
        left, right = ln.split(" -> ")
        toks = left.split()
        cs = _tokens_state(toks[:-1], n)
        k = int(toks[-1])
        ctrl_moves[cs].setdefault(k, []).append(_tokens_state(right.split(), n))
    safe = frozenset(_tokens_state(ln.split(), n) for ln in sections["SAFE"])
    return (
        initial,
        env_states,
        ctrl_states,
        {es: tuple(moves) for es, moves in env_moves.items()},
        {cs: {k: tuple(v) for k, v in by_k.items()} for cs, by_k in ctrl_moves.items()},
        safe,
    )


# --- smv-style export ----------------------------------------------------------

def _smv_state_formula(s: GameState, svc_vars, has_db, *, primed: bool) -> str:
    wrap = (lambda v: f"next({v})") if primed else (lambda v: v)
    parts = []
    if not s.alive:
        parts.append(f"{wrap('alive')} = FALSE")
        return " & ".join(parts)
    parts.append(f"{wrap('alive')} = TRUE")
    parts.append(f"{wrap('turn')} = {s.turn}")
    parts.append(f"{wrap('t_state')} = {s.t_state}")
    for var, val in zip(svc_vars, s.config.service_states):
        parts.append(f"{wrap(var)} = {val}")
    if has_db:
        parts.append(f"{wrap('db')} = {s.config.db_state}")
    parts.append(f"{wrap('pending')} = {s.pending if s.pending else 'none'}")
    return " & ".join(parts)


def export_game_smv(game: SafetyGame) -> str:
    """SMV-style rendering: VAR/INIT/TRANS/INVAR over the game variables.

    A dialect resembling the SMV TRANS/INVAR structure: one TRANS disjunct
    per game move (controller disjuncts are commented with the chosen
    service), a frozen self-loop for the sink, and an INVAR stating the
    safety objective.  Not guaranteed loadable by any particular tool.
    """
    inst = game.instance
    n = inst.n
    svc_vars = [f"svc{k}" for k in range(1, n + 1)]
    has_db = inst.databox is not None
    ops = sorted(inst.alphabet)

    out = []
    out.append("-- safety game over the community/target state space")
    out.append("MODULE main")
    out.append("VAR")
    out.append("  turn : {env, ctrl};")
    out.append("  alive : boolean;")
    out.append("  t_state : {%s};" % ", ".join(sorted(inst.target.states)))
    for var, svc in zip(svc_vars, inst.services):
        out.append("  %s : {%s};" % (var, ", ".join(sorted(svc.states))))
    if has_db:
        out.append("  db : {%s};" % ", ".join(sorted(inst.databox.states)))
    out.append("  pending : {none, %s};" % ", ".join(ops))
    out.append("INIT")
    out.append("  " + _smv_state_formula(game.initial, svc_vars, has_db, primed=False))
    out.append("TRANS")
    disjuncts = []
    for es in game.env_states:
        for cs in game.env_moves[es]:
            disjuncts.append(
                "  (%s\n   & %s)  -- request %s"
                % (
                    _smv_state_formula(es, svc_vars, has_db, primed=False),
                    _smv_state_formula(cs, svc_vars, has_db, primed=True),
                    cs.pending,
                )
            )
    for cs in game.ctrl_states:
        for k in sorted(game.ctrl_moves[cs]):
            for dst in sorted(game.ctrl_moves[cs][k], key=GameState.key):
                disjuncts.append(
                    "  (%s\n   & %s)  -- delegate %s to service %d"
                    % (
                        _smv_state_formula(cs, svc_vars, has_db, primed=False),
                        _smv_state_formula(dst, svc_vars, has_db, primed=True),
                        cs.pending,
                        k,
                    )
                )
    disjuncts.append("  (alive = FALSE & next(alive) = FALSE)  -- sink stays sink")
    out.append("\n  |\n".join(disjuncts))
    out.append("INVAR")
    final_targets = sorted(inst.target.finals)
    if final_targets:
        finality = []
        for var, svc in zip(svc_vars, inst.services):
            vals = ", ".join(sorted(svc.finals)) or "__none__"
            finality.append("%s in {%s}" % (var, vals))
        out.append(
            "  alive = TRUE & (t_state in {%s} -> (%s))"
            % (", ".join(final_targets), " & ".join(finality))
        )
    else:
        out.append("  alive = TRUE")
    return "\n".join(out) + "\n"


def export_game(game: SafetyGame, fmt: str) -> str:
    if fmt == "neutral":
        return export_game_neutral(game)
    if fmt in ("smv", "smv-style"):
        return export_game_smv(game)
    raise ValueError(f"unknown game export format {fmt!r}")
