"""Per-service local orchestrators over a round-synchronous broadcast network.

Each peer owns one service and a replica of the generator.  A round
starts with a client Request broadcast; every peer deterministically
computes the executor from its tracked pair, the executor runs the
operation on its own service and broadcasts the Outcome (new local state
plus new data-box state), and everyone advances its tracked pair from the
message alone.  Peers never read each other's service state: the harness
is the only holder of ground truth, and it reveals a service's moves only
to the peer that owns it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

from .errors import (
    ExecutorFailedError,
    NoTargetTransitionError,
    ObservationMismatchError,
    ObservationRequiredError,
    UnrealizableFromHereError,
)
from .model import CompositionInstance
from .product import CommunityConfig
from .simulation import SimPair
from .synthesis import (
    DEFAULT_POLICY,
    FailoverResult,
    OrchestrationState,
    OrchestratorGenerator,
    Policy,
    handle_failure,
)


@dataclass(frozen=True)
class Request:
    round: int
    op: str

    def log(self) -> str:
        return f"msg {self.round} request {self.op}"


@dataclass(frozen=True)
class Outcome:
    round: int
    op: str
    executor: int            # original community index
    svc_state: str
    db_state: str | None

    def log(self) -> str:
        return f"msg {self.round} outcome {self.op} {self.executor} {self.svc_state} {self.db_state or '-'}"


@dataclass
class LocalOrchestrator:
    """Replica of the centralized orchestrator attached to one service."""

    svc_index: int                      # original community index
    generator: OrchestratorGenerator
    tracked: SimPair
    policy: Policy
    instance: CompositionInstance
    to_original: tuple[int, ...]        # current community position -> original index
    inbox: list = field(default_factory=list)
    steps: int = 0                      # rounds applied since generator activation

    def local_index(self) -> int | None:
        """This peer's 1-based position in the current community, if alive."""
        if self.svc_index in self.to_original:
            return self.to_original.index(self.svc_index) + 1
        return None

    def receive(self, message) -> None:
        self.inbox.append(message)

    def decide_executor(self, op: str) -> int:
        """Deterministic executor choice; identical at every peer."""
        options = self.generator.delegates(self.tracked, op)
        if not options:
            raise UnrealizableFromHereError(
                f"no safe delegation for {op!r} at {self.tracked}"
            )
        local = self.policy.choose(options, self.steps)
        return self.to_original[local - 1]

    def own_outcomes(self, op: str):
        """Moves of this peer's own service at the tracked configuration."""
        local = self.local_index()
        return self.generator.product.outcomes(self.tracked.config, op, local)

    def apply_outcome(self, outcome: Outcome) -> SimPair:
        local = self.to_original.index(outcome.executor) + 1
        t_next = None
        for tr in self.instance.target.transitions:
            if tr.src == self.tracked.t_state and tr.op == outcome.op:
                t_next = tr.dst
                break
        if t_next is None:
            raise NoTargetTransitionError(
                f"outcome for {outcome.op!r} does not match the target at {self.tracked}"
            )
        config = self.tracked.config.replace_at(local, outcome.svc_state, outcome.db_state)
        pair = SimPair(t_next, config)
        if pair not in self.generator.pairs:
            raise ObservationMismatchError(
                f"outcome {outcome} leads outside the generator at {self.tracked}"
            )
        self.tracked = pair
        self.steps += 1
        return pair

    def apply_failure(self, failed_original) -> FailoverResult:
        """Independently recompute the generator for the reduced community."""
        failed_local = frozenset(
            i + 1 for i, orig in enumerate(self.to_original) if orig in failed_original
        )
        state = OrchestrationState(
            pair=self.tracked, history=(), policy=self.policy, generator=self.generator
        )
        result = handle_failure(state, failed_local, self.instance)
        self.to_original = tuple(self.to_original[k - 1] for k in result.kept)
        self.instance = result.instance
        self.generator = result.generator
        self.tracked = result.generator.initial
        self.steps = 0
        return result


def derive_locals(
    generator: OrchestratorGenerator,
    instance: CompositionInstance,
    policy: Policy | None = None,
) -> list[LocalOrchestrator]:
    """One local orchestrator per service, all tracking the initial pair."""
    policy = policy or DEFAULT_POLICY
    return [
        LocalOrchestrator(
            svc_index=k,
            generator=generator,
            tracked=generator.initial,
            policy=policy,
            instance=instance,
            to_original=tuple(range(1, instance.n + 1)),
        )
        for k in range(1, instance.n + 1)
    ]


class RoundRecord(NamedTuple):
    round: int
    op: str
    executor: int
    pair: SimPair
    messages: tuple


class NetworkHarness:
    """Round-synchronous reliable FIFO broadcast simulator.

    Also plays the physical layer: it owns the actual service/data-box
    states and resolves nondeterminism via the per-round observation.
    """

    def __init__(self, instance: CompositionInstance, generator: OrchestratorGenerator,
                 policy: Policy | None = None):
        self.instance = instance
        self.peers = derive_locals(generator, instance, policy)
        self.failed: set[int] = set()
        self.round = 0
        self.records: list[RoundRecord] = []
        self.log: list[str] = []

    def alive_peers(self) -> list[LocalOrchestrator]:
        return [p for p in self.peers if p.svc_index not in self.failed]

    def mark_failed(self, indices) -> None:
        """Mark peers failed without recomputation (models a detected crash)."""
        self.failed.update(indices)

    def _broadcast(self, message) -> None:
        for peer in self.alive_peers():
            peer.receive(message)
        self.log.append(message.log())

    def coherent_pair(self) -> SimPair:
        pairs = {p.tracked for p in self.alive_peers()}
        assert len(pairs) == 1, f"belief diverged: {sorted(map(str, pairs))}"
        return next(iter(pairs))


def dist_round(harness: NetworkHarness, op: str, observed=None) -> RoundRecord:
    """Execute one client request across the peer network.

    ``observed`` resolves executor-side nondeterminism, exactly as in the
    centralized stepper: a (new service state, new data-box state) pair.
    """
    peers = harness.alive_peers()
    if not peers:
        raise UnrealizableFromHereError("no peers left")
    tracked = harness.coherent_pair()
    if not any(
        tr.src == tracked.t_state and tr.op == op
        for tr in harness.instance.target.transitions
    ):
        raise NoTargetTransitionError(
            f"the target has no transition on {op!r} from {tracked.t_state!r}"
        )

    request = Request(harness.round, op)
    harness._broadcast(request)

    choices = {peer.decide_executor(op) for peer in peers}
    assert len(choices) == 1, f"executor choice diverged: {sorted(choices)}"
    executor = choices.pop()
    if executor in harness.failed:
        raise ExecutorFailedError(
            f"policy selected failed service {executor} for {op!r}"
        )
    executing = next(p for p in peers if p.svc_index == executor)

    outcomes = executing.own_outcomes(op)
    if observed is not None:
        svc_state, db_state = observed
        local = executing.local_index()
        chosen = tracked.config.replace_at(local, svc_state, db_state)
        if chosen not in outcomes:
            raise ObservationMismatchError(
                f"observed ({svc_state},{db_state}) is not a legal move of "
                f"service {executor} on {op!r}"
            )
    elif len(outcomes) == 1:
        chosen = outcomes[0]
    else:
        raise ObservationRequiredError(
            f"service {executor} on {op!r} has {len(outcomes)} possible outcomes"
        )
    local = executing.local_index()
    outcome = Outcome(
        round=harness.round, op=op, executor=executor,
        svc_state=chosen.service_states[local - 1], db_state=chosen.db_state,
    )
    harness._broadcast(outcome)

    pairs = {peer.apply_outcome(outcome) for peer in peers}
    assert len(pairs) == 1, "peers reconstructed different pairs"
    pair = pairs.pop()
    record = RoundRecord(
        round=harness.round, op=op, executor=executor, pair=pair,
        messages=(request, outcome),
    )
    harness.records.append(record)
    harness.log.append(f"round {record.round} {op} {executor} {pair}")
    harness.round += 1
    return record


def dist_handle_failure(harness: NetworkHarness, failed) -> None:
    """Fail services at a round boundary; survivors recompute independently.

    Raises UnrealizableFromHereError when the survivors (all of them,
    identically) find the projected pair unrealizable.
    """
    failed = frozenset(failed)
    if not failed:
        harness.log.append(f"round {harness.round} fail none (no-op)")
        return
    harness.mark_failed(failed)
    survivors = harness.alive_peers()
    if not survivors:
        raise UnrealizableFromHereError("every peer has failed")
    verdicts = []
    for peer in survivors:
        try:
            peer.apply_failure(failed)
            verdicts.append("ok")
        except UnrealizableFromHereError as e:
            verdicts.append(f"unrealizable:{e}")
    assert len(set(verdicts)) == 1, f"failure verdicts diverged: {verdicts}"
    harness.log.append(
        f"round {harness.round} fail {','.join(str(k) for k in sorted(failed))} {verdicts[0].split(':')[0]}"
    )
    if verdicts[0] != "ok":
        raise UnrealizableFromHereError(verdicts[0].split(":", 1)[1])
    harness.coherent_pair()
