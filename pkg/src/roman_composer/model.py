"""Domain model: transition systems, data box, and composition instances.

A composition instance bundles a shared operation alphabet, an ordered
community of available services (indices 1..n), an optional finite-state
data box, and a deterministic target service.  Instances are immutable
value objects; parsing canonicalizes them so that
``parse_instance(serialize_instance(x)) == x``.

Instance files are UTF-8 JSON::

    {
      "alphabet": ["login", ...],
      "services": [TS, ...],
      "databox": TS-without-finals,      # optional
      "target": TS
    }

where a TS object is ``{"id", "states", "initial", "finals",
"transitions"}`` and a transition is ``{"from", "op", "to"}`` with an
optional ``"guard"`` (list of data-box states).  Unknown keys are
rejected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import InstanceError, ParseError


def _is_identifier(s) -> bool:
    return isinstance(s, str) and len(s) > 0 and not any(ch.isspace() for ch in s)


def _guard_key(guard):
    return () if guard is None else tuple(sorted(guard))


@dataclass(frozen=True)
class Transition:
    """One labeled edge; ``guard`` restricts firing to those data-box states."""

    src: str
    op: str
    dst: str
    guard: frozenset[str] | None = None

    def __post_init__(self):
        if self.guard is not None:
            object.__setattr__(self, "guard", frozenset(self.guard))

    def key(self):
        return (self.src, self.op, self.dst, _guard_key(self.guard))


@dataclass(frozen=True)
class TransitionSystem:
    """Finite transition system with final states, possibly nondeterministic."""

    name: str
    states: frozenset[str]
    initial: str
    finals: frozenset[str]
    transitions: tuple[Transition, ...]

    def __post_init__(self):
        object.__setattr__(self, "states", frozenset(self.states))
        object.__setattr__(self, "finals", frozenset(self.finals))
        object.__setattr__(
            self, "transitions", tuple(sorted(self.transitions, key=Transition.key))
        )

    def outgoing(self, state: str) -> tuple[Transition, ...]:
        return tuple(t for t in self.transitions if t.src == state)

    def successors(self, state: str, op: str) -> tuple[str, ...]:
        return tuple(t.dst for t in self.transitions if t.src == state and t.op == op)

    def labels(self) -> frozenset[str]:
        return frozenset(t.op for t in self.transitions)

    def is_deterministic(self) -> bool:
        seen = set()
        for t in self.transitions:
            if (t.src, t.op) in seen:
                return False
            seen.add((t.src, t.op))
        return True


@dataclass(frozen=True)
class DataBox:
    """Shared finite-state memory; moves on operations, has no finals/guards."""

    name: str
    states: frozenset[str]
    initial: str
    transitions: tuple[Transition, ...]

    def __post_init__(self):
        object.__setattr__(self, "states", frozenset(self.states))
        object.__setattr__(
            self, "transitions", tuple(sorted(self.transitions, key=Transition.key))
        )

    def successors(self, state: str, op: str) -> tuple[str, ...]:
        """Data-box successors on ``op``; defaults to a self-loop."""
        dsts = tuple(t.dst for t in self.transitions if t.src == state and t.op == op)
        return dsts if dsts else (state,)


@dataclass(frozen=True)
class CompositionInstance:
    alphabet: frozenset[str]
    services: tuple[TransitionSystem, ...]
    databox: DataBox | None
    target: TransitionSystem

    def __post_init__(self):
        object.__setattr__(self, "alphabet", frozenset(self.alphabet))
        object.__setattr__(self, "services", tuple(self.services))

    @property
    def n(self) -> int:
        return len(self.services)

    def service(self, k: int) -> TransitionSystem:
        """Service at 1-based community index ``k``."""
        return self.services[k - 1]


@dataclass(frozen=True)
class Diagnostic:
    code: str
    where: str
    message: str

    def __str__(self):
        return f"{self.code} {self.where}: {self.message}"


def validate(instance: CompositionInstance) -> list[Diagnostic]:
    """Check every structural invariant; returns one diagnostic per violation."""
    out = []
    bad = lambda code, where, msg: out.append(Diagnostic(code, where, msg))

    for op in sorted(instance.alphabet):
        if not _is_identifier(op):
            bad("E_BAD_IDENTIFIER", "alphabet", f"operation {op!r} is not an identifier")

    if instance.n < 1:
        bad("E_NO_SERVICES", "services", "a community needs at least one service")

    db_states = instance.databox.states if instance.databox else frozenset()

    def check_ts(ts, where, *, is_databox=False, is_target=False):
        if not _is_identifier(ts.name):
            bad("E_BAD_IDENTIFIER", where, f"system id {ts.name!r} is not an identifier")
        if not ts.states:
            bad("E_NO_STATES", where, "state set is empty")
        for s in sorted(ts.states):
            if not _is_identifier(s):
                bad("E_BAD_IDENTIFIER", where, f"state {s!r} is not an identifier")
        if ts.initial not in ts.states:
            bad("E_INITIAL_UNKNOWN_STATE", where, f"initial state {ts.initial!r} not in states")
        if not is_databox:
            for s in sorted(ts.finals):
                if s not in ts.states:
                    bad("E_FINAL_UNKNOWN_STATE", where, f"final state {s!r} not in states")
        for i, t in enumerate(ts.transitions):
            tw = f"{where}/transitions[{i}]"
            if t.src not in ts.states:
                bad("E_TRANS_UNKNOWN_STATE", tw, f"source {t.src!r} not in states")
            if t.dst not in ts.states:
                bad("E_TRANS_UNKNOWN_STATE", tw, f"destination {t.dst!r} not in states")
            if t.op not in instance.alphabet:
                bad("E_OP_UNKNOWN", tw, f"operation {t.op!r} not in alphabet")
            if t.guard is not None:
                if is_databox:
                    bad("E_DATABOX_GUARD", tw, "data-box transitions cannot carry guards")
                elif is_target:
                    bad("E_TARGET_GUARD", tw, "target transitions cannot carry guards")
                elif instance.databox is None:
                    bad("E_GUARD_NO_DATABOX", tw, "guard present but instance has no data box")
                else:
                    if not t.guard:
                        bad("E_GUARD_EMPTY", tw, "guard must be a non-empty state set")
                    for g in sorted(t.guard):
                        if g not in db_states:
                            bad("E_GUARD_UNKNOWN_STATE", tw, f"guard state {g!r} not in data box")

    names = [s.name for s in instance.services] + [instance.target.name]
    if instance.databox is not None:
        names.append(instance.databox.name)
    dup = sorted({x for x in names if names.count(x) > 1})
    for x in dup:
        bad("E_DUPLICATE", "instance", f"system id {x!r} used more than once")

    for i, svc in enumerate(instance.services):
        check_ts(svc, f"services[{i}]")
    if instance.databox is not None:
        check_ts(instance.databox, "databox", is_databox=True)
    check_ts(instance.target, "target", is_target=True)

    if not instance.target.is_deterministic():
        seen, culprits = set(), []
        for t in instance.target.transitions:
            if (t.src, t.op) in seen:
                culprits.append(t)
            seen.add((t.src, t.op))
        for t in culprits:
            bad("E_NONDET_TARGET", "target",
                f"two transitions from {t.src!r} on {t.op!r}; the target must be deterministic")
    return out


# --- parsing -----------------------------------------------------------------

_TS_KEYS = {"id", "states", "initial", "finals", "transitions"}
_DB_KEYS = {"id", "states", "initial", "transitions"}
_TR_KEYS = {"from", "op", "to", "guard"}


def _reject_unknown(obj, allowed, where):
    extra = sorted(set(obj) - allowed)
    if extra:
        raise ParseError(f"unknown key(s) {extra} in {where}", code="E_UNKNOWN_KEY")


def _string_list(value, where, *, what):
    if not isinstance(value, list) or not all(isinstance(x, str) for x in value):
        raise ParseError(f"{where}: {what} must be an array of strings", code="E_BAD_TYPE")
    dup = sorted({x for x in value if value.count(x) > 1})
    if dup:
        raise ParseError(f"{where}: duplicate {what} {dup}", code="E_DUPLICATE")
    return value


def _parse_transition(obj, where):
    if not isinstance(obj, dict):
        raise ParseError(f"{where}: transition must be an object", code="E_BAD_TYPE")
    _reject_unknown(obj, _TR_KEYS, where)
    for key in ("from", "op", "to"):
        if key not in obj or not isinstance(obj[key], str):
            raise ParseError(f"{where}: missing or non-string {key!r}", code="E_BAD_TYPE")
    guard = None
    if "guard" in obj:
        guard = frozenset(_string_list(obj["guard"], where, what="guard states"))
    return Transition(src=obj["from"], op=obj["op"], dst=obj["to"], guard=guard)


def _parse_ts(obj, where, *, databox=False):
    if not isinstance(obj, dict):
        raise ParseError(f"{where}: expected an object", code="E_BAD_TYPE")
    allowed = _DB_KEYS if databox else _TS_KEYS
    _reject_unknown(obj, allowed, where)
    for key in sorted(allowed - {"finals"}):
        if key not in obj:
            raise ParseError(f"{where}: missing key {key!r}", code="E_MISSING_KEY")
    if not databox and "finals" not in obj:
        raise ParseError(f"{where}: missing key 'finals'", code="E_MISSING_KEY")
    if not isinstance(obj["id"], str):
        raise ParseError(f"{where}: 'id' must be a string", code="E_BAD_TYPE")
    states = _string_list(obj["states"], where, what="states")
    if not isinstance(obj["initial"], str):
        raise ParseError(f"{where}: 'initial' must be a string", code="E_BAD_TYPE")
    if not isinstance(obj["transitions"], list):
        raise ParseError(f"{where}: 'transitions' must be an array", code="E_BAD_TYPE")
    transitions = [
        _parse_transition(t, f"{where}/transitions[{i}]")
        for i, t in enumerate(obj["transitions"])
    ]
    keys = [t.key() for t in transitions]
    if len(set(keys)) != len(keys):
        raise ParseError(f"{where}: duplicate transitions", code="E_DUPLICATE")
    if databox:
        return DataBox(
            name=obj["id"], states=frozenset(states), initial=obj["initial"],
            transitions=tuple(transitions),
        )
    finals = _string_list(obj["finals"], where, what="finals")
    return TransitionSystem(
        name=obj["id"], states=frozenset(states), initial=obj["initial"],
        finals=frozenset(finals), transitions=tuple(transitions),
    )


def parse_instance(text: str) -> CompositionInstance:
    """Parse and fully validate an instance file.

    Raises ParseError on malformed input (with position info for syntax
    errors) and InstanceError when the parsed structure violates model
    invariants, so every instance this function returns validates cleanly.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(
            f"syntax error at line {e.lineno}, column {e.colno}: {e.msg}",
            code="E_SYNTAX",
        ) from None
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object", code="E_BAD_TYPE")
    _reject_unknown(doc, {"alphabet", "services", "databox", "target"}, "instance")
    for key in ("alphabet", "services", "target"):
        if key not in doc:
            raise ParseError(f"missing key {key!r}", code="E_MISSING_KEY")
    alphabet = frozenset(_string_list(doc["alphabet"], "alphabet", what="operations"))
    if not isinstance(doc["services"], list):
        raise ParseError("'services' must be an array", code="E_BAD_TYPE")
    services = tuple(
        _parse_ts(s, f"services[{i}]") for i, s in enumerate(doc["services"])
    )
    databox = _parse_ts(doc["databox"], "databox", databox=True) if "databox" in doc else None
    target = _parse_ts(doc["target"], "target")
    instance = CompositionInstance(
        alphabet=alphabet, services=services, databox=databox, target=target
    )
    diagnostics = validate(instance)
    if diagnostics:
        raise InstanceError(diagnostics)
    return instance


def load_instance(path) -> CompositionInstance:
    with open(path, encoding="utf-8") as fh:
        return parse_instance(fh.read())


# --- serialization -----------------------------------------------------------

def _transition_obj(t: Transition):
    obj = {"from": t.src, "op": t.op}
    if t.guard is not None:
        obj["guard"] = sorted(t.guard)
    obj["to"] = t.dst
    return obj


def _ts_obj(ts, *, databox=False):
    obj = {"id": ts.name, "states": sorted(ts.states), "initial": ts.initial}
    if not databox:
        obj["finals"] = sorted(ts.finals)
    obj["transitions"] = [_transition_obj(t) for t in ts.transitions]
    return obj


def serialize_instance(instance: CompositionInstance) -> str:
    """Canonical JSON text; inverse of parse_instance on valid instances."""
    doc = {
        "alphabet": sorted(instance.alphabet),
        "services": [_ts_obj(s) for s in instance.services],
    }
    if instance.databox is not None:
        doc["databox"] = _ts_obj(instance.databox, databox=True)
    doc["target"] = _ts_obj(instance.target)
    return json.dumps(doc, indent=2) + "\n"
