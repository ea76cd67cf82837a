"""Orchestrator generators and their execution.

The generator is the largest simulation plus the delegation map ``omega``:
for each pair and each operation the target can request there, the set of
service indices that can safely execute it.  A concrete orchestrator is
the generator resolved by a policy; runtime service failures are handled
by recomputing the generator over the reduced community, rooted at the
community's current state.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import NamedTuple

from .errors import (
    ExecutorFailedError,
    NoTargetTransitionError,
    ObservationMismatchError,
    ObservationRequiredError,
    UnrealizableError,
    UnrealizableFromHereError,
)
from .model import CompositionInstance
from .product import CommunityConfig, CommunityProduct, build_product
from .simulation import SimPair, SimulationRelation, compute_largest_simulation


@dataclass(frozen=True)
class Policy:
    """Deterministic chooser over a delegation set.

    ``lowest-index`` picks the smallest index; ``round-robin`` rotates with
    the step counter; ``avoid-set`` dodges the given indices when possible.
    """

    name: str
    avoid: frozenset[int] = frozenset()

    def choose(self, options, step_index: int) -> int:
        choices = sorted(options)
        if not choices:
            raise ValueError("policy invoked with an empty delegation set")
        if self.name == "round-robin":
            return choices[step_index % len(choices)]
        if self.name == "avoid-set":
            preferred = [k for k in choices if k not in self.avoid]
            return preferred[0] if preferred else choices[0]
        return choices[0]


DEFAULT_POLICY = Policy("lowest-index")


def make_policy(spec: str) -> Policy:
    """Parse a policy spec: ``lowest-index``, ``round-robin``, ``avoid:2,3``."""
    if spec in ("lowest-index", "round-robin"):
        return Policy(spec)
    if spec.startswith("avoid:"):
        body = spec[len("avoid:"):]
        idxs = frozenset(int(x) for x in body.split(",") if x)
        return Policy("avoid-set", avoid=idxs)
    raise ValueError(f"unknown policy {spec!r}")


@dataclass(eq=True)
class OrchestratorGenerator:
    """Largest relation + delegation map; represents every safe orchestrator."""

    pairs: frozenset[SimPair]
    omega: dict[tuple[SimPair, str], tuple[int, ...]]
    initial: SimPair
    instance: CompositionInstance = field(compare=False, repr=False)
    product: CommunityProduct = field(compare=False, repr=False)

    def delegates(self, pair: SimPair, op: str) -> tuple[int, ...]:
        return self.omega.get((pair, op), ())

    def reachable_pairs(self) -> frozenset[SimPair]:
        """Pairs reachable from the initial one under any delegation/outcome."""
        seen = {self.initial}
        frontier = [self.initial]
        while frontier:
            p = frontier.pop()
            for tr in self.instance.target.transitions:
                if tr.src != p.t_state:
                    continue
                for k in self.omega.get((p, tr.op), ()):
                    for dst in self.product.outcomes(p.config, tr.op, k):
                        q = SimPair(tr.dst, dst)
                        if q not in seen:
                            seen.add(q)
                            frontier.append(q)
        return frozenset(seen)


def build_generator(
    instance: CompositionInstance,
    product: CommunityProduct,
    relation: SimulationRelation,
    initial_pair: SimPair | None = None,
) -> OrchestratorGenerator:
    """Extract omega from the largest relation.

    ``omega(p, o)`` collects every service that has an enabled move on ``o``
    whose outcomes all stay inside the relation.
    """
    if not relation.is_largest:
        raise ValueError("generator extraction needs the largest relation")
    if initial_pair is None:
        initial_pair = SimPair(instance.target.initial, product.initial)
    if initial_pair not in relation.pairs:
        raise UnrealizableError(
            f"initial pair {initial_pair} is not in the largest simulation"
        )
    omega = {}
    for p in relation.sorted_pairs():
        for tr in instance.target.transitions:
            if tr.src != p.t_state:
                continue
            good = tuple(
                k
                for k, dsts in product.options(p.config, tr.op)
                if all(SimPair(tr.dst, d) in relation.pairs for d in dsts)
            )
            assert good, f"empty delegation set at {p} for {tr.op!r}"
            omega[(p, tr.op)] = good
    return OrchestratorGenerator(
        pairs=relation.pairs, omega=omega, initial=initial_pair,
        instance=instance, product=product,
    )


class HistoryStep(NamedTuple):
    op: str
    svc: int
    config: CommunityConfig


@dataclass
class OrchestrationState:
    """One client session: current pair plus the replayable history."""

    pair: SimPair
    history: tuple[HistoryStep, ...]
    policy: Policy
    generator: OrchestratorGenerator


def initial_state(generator: OrchestratorGenerator, policy: Policy | None = None) -> OrchestrationState:
    return OrchestrationState(
        pair=generator.initial, history=(), policy=policy or DEFAULT_POLICY,
        generator=generator,
    )


def _target_successor(instance: CompositionInstance, t_state: str, op: str) -> str:
    for tr in instance.target.transitions:
        if tr.src == t_state and tr.op == op:
            return tr.dst
    raise NoTargetTransitionError(
        f"the target has no transition on {op!r} from {t_state!r}"
    )


def step(state: OrchestrationState, op: str, observed=None) -> OrchestrationState:
    """Delegate one requested operation and advance the session.

    ``observed`` is the environment's resolution of nondeterminism: a pair
    (new executor-service state, new data-box state).  It is required
    exactly when the chosen service or the data box has several possible
    outcomes, and must match one of the product's moves.
    """
    gen = state.generator
    t_next = _target_successor(gen.instance, state.pair.t_state, op)
    options = gen.delegates(state.pair, op)
    if not options:
        raise UnrealizableFromHereError(
            f"no safe delegation for {op!r} at {state.pair}"
        )
    k = state.policy.choose(options, len(state.history))
    outcomes = gen.product.outcomes(state.pair.config, op, k)
    if observed is not None:
        svc_state, db_state = observed
        chosen = state.pair.config.replace_at(k, svc_state, db_state)
        if chosen not in outcomes:
            raise ObservationMismatchError(
                f"observed outcome ({svc_state},{db_state}) is not a legal move "
                f"for service {k} on {op!r} at {state.pair.config}"
            )
    elif len(outcomes) == 1:
        chosen = outcomes[0]
    else:
        raise ObservationRequiredError(
            f"service {k} on {op!r} at {state.pair.config} has "
            f"{len(outcomes)} possible outcomes; an observation is required"
        )
    pair = SimPair(t_next, chosen)
    return OrchestrationState(
        pair=pair,
        history=state.history + (HistoryStep(op, k, chosen),),
        policy=state.policy,
        generator=gen,
    )


def replay(generator: OrchestratorGenerator, policy: Policy, requests) -> OrchestrationState:
    """Re-run a request/observation sequence from the generator's initial pair."""
    st = initial_state(generator, policy)
    for op, observed in requests:
        st = step(st, op, observed)
    return st


@dataclass
class FailoverResult:
    """Continuation problem after dropping failed services.

    ``kept`` maps the reduced community's 1-based indices to the indices of
    the instance the failure was applied to.
    """

    instance: CompositionInstance
    product: CommunityProduct
    relation: SimulationRelation
    generator: OrchestratorGenerator
    kept: tuple[int, ...]


def handle_failure(
    state: OrchestrationState, failed, instance: CompositionInstance
) -> FailoverResult:
    """Recompute the generator over the community minus ``failed`` services.

    The reduced community is rooted at the services' current states (and
    the current data-box state); the projected pair keeps the target state.
    Raises UnrealizableFromHereError when that pair is not in the reduced
    largest simulation.
    """
    failed = frozenset(failed)
    for k in failed:
        if not 1 <= k <= instance.n:
            raise ValueError(f"service index {k} out of range 1..{instance.n}")
    kept = tuple(k for k in range(1, instance.n + 1) if k not in failed)
    if not kept:
        raise UnrealizableFromHereError("every service has failed")
    config = state.pair.config
    services = tuple(
        dataclasses.replace(instance.service(k), initial=config.service_states[k - 1])
        for k in kept
    )
    databox = instance.databox
    if databox is not None:
        databox = dataclasses.replace(databox, initial=config.db_state)
    reduced = CompositionInstance(
        alphabet=instance.alphabet, services=services, databox=databox,
        target=instance.target,
    )
    product = build_product(reduced)
    relation = compute_largest_simulation(reduced, product)
    projected = SimPair(state.pair.t_state, product.initial)
    if projected not in relation.pairs:
        raise UnrealizableFromHereError(
            f"projected pair {projected} is not realizable with services {list(kept)}"
        )
    generator = build_generator(reduced, product, relation, initial_pair=projected)
    return FailoverResult(
        instance=reduced, product=product, relation=relation,
        generator=generator, kept=kept,
    )


# --- exports -----------------------------------------------------------------

def _pair_obj(p: SimPair):
    obj = {"target": p.t_state, "services": list(p.config.service_states)}
    if p.config.db_state is not None:
        obj["db"] = p.config.db_state
    return obj


def generator_to_json(gen: OrchestratorGenerator) -> str:
    entries = []
    for (p, op), ks in sorted(gen.omega.items(), key=lambda kv: (kv[0][0].key(), kv[0][1])):
        entries.append({"pair": _pair_obj(p), "op": op, "delegates": list(ks)})
    doc = {
        "initial": _pair_obj(gen.initial),
        "pairs": [_pair_obj(p) for p in sorted(gen.pairs, key=SimPair.key)],
        "omega": entries,
    }
    return json.dumps(doc, indent=2) + "\n"


def generator_to_dot(gen: OrchestratorGenerator, policy: Policy | None = None) -> str:
    """Mealy-style view of one resolved orchestrator: edges ``op/svc``.

    The policy is applied positionally (step index 0 at every pair), which
    coincides with the policy itself for the stateless policies.
    """
    policy = policy or DEFAULT_POLICY
    lines = ["digraph orchestrator {", "  rankdir=LR;"]
    seen = {gen.initial}
    stack = [gen.initial]
    while stack:
        p = stack.pop()
        for tr in sorted(gen.instance.target.transitions, key=lambda t: (t.src, t.op)):
            if tr.src != p.t_state:
                continue
            ks = gen.delegates(p, tr.op)
            if not ks:
                continue
            k = policy.choose(ks, 0)
            for dst in gen.product.outcomes(p.config, tr.op, k):
                q = SimPair(tr.dst, dst)
                if q not in seen:
                    seen.add(q)
                    stack.append(q)
    for p in sorted(seen, key=SimPair.key):
        lines.append(f'  "{p}" [shape=circle];')
    lines.append('  __entry__ [shape=point,label=""];')
    lines.append(f'  __entry__ -> "{gen.initial}";')
    edges = []
    for p in sorted(seen, key=SimPair.key):
        for tr in sorted(gen.instance.target.transitions, key=lambda t: (t.src, t.op)):
            if tr.src != p.t_state:
                continue
            ks = gen.delegates(p, tr.op)
            if not ks:
                continue
            k = policy.choose(ks, 0)
            for dst in gen.product.outcomes(p.config, tr.op, k):
                q = SimPair(tr.dst, dst)
                edges.append(f'  "{p}" -> "{q}" [label="{tr.op}/{k}"];')
    lines.extend(sorted(edges))
    lines.append("}")
    return "\n".join(lines) + "\n"


# --- session -----------------------------------------------------------------

class StepReport(NamedTuple):
    op: str
    executor: int          # original community index
    executor_local: int    # index within the current (possibly reduced) community
    pair: SimPair


class OrchestrationSession:
    """Stateful front end used by the CLI stepper and the tests.

    Tracks the mapping from the current reduced community back to original
    service indices across failures, and preserves the full trace.
    """

    def __init__(self, instance: CompositionInstance, policy: Policy | None = None):
        self.base_instance = instance
        self.instance = instance
        self.policy = policy or DEFAULT_POLICY
        self.product = build_product(instance)
        relation = compute_largest_simulation(instance, self.product)
        self.generator = build_generator(instance, self.product, relation)
        self.state = initial_state(self.generator, self.policy)
        self.to_original = tuple(range(1, instance.n + 1))
        self.trace: list[StepReport] = []

    @property
    def pair(self) -> SimPair:
        return self.state.pair

    def request(self, op: str, observed=None) -> StepReport:
        self.state = step(self.state, op, observed)
        last = self.state.history[-1]
        report = StepReport(
            op=op, executor=self.to_original[last.svc - 1],
            executor_local=last.svc, pair=self.state.pair,
        )
        self.trace.append(report)
        return report

    def fail(self, failed_original) -> FailoverResult:
        """Drop services (original indices); recompute and continue."""
        failed_original = frozenset(failed_original)
        local = frozenset(
            i + 1 for i, orig in enumerate(self.to_original) if orig in failed_original
        )
        result = handle_failure(self.state, local, self.instance)
        self.to_original = tuple(self.to_original[k - 1] for k in result.kept)
        self.instance = result.instance
        self.product = result.product
        self.generator = result.generator
        self.state = initial_state(self.generator, self.policy)
        return result
