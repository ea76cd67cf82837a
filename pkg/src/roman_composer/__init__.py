"""Composition of finite-state services via simulation relations and safety games."""

from .errors import (
    ComposerError,
    ExecutorFailedError,
    InstanceError,
    NondetTargetError,
    NoTargetTransitionError,
    ObservationMismatchError,
    ObservationRequiredError,
    ParseError,
    UnrealizableError,
    UnrealizableFromHereError,
)
from .model import (
    CompositionInstance,
    DataBox,
    Diagnostic,
    Transition,
    TransitionSystem,
    load_instance,
    parse_instance,
    serialize_instance,
    validate,
)
from .product import (
    CommunityConfig,
    CommunityProduct,
    Move,
    build_product,
    community_final,
)
from .simulation import (
    SimPair,
    SimulationRelation,
    SimulationStats,
    check_simulation,
    compute_largest_simulation,
    is_realizable,
    relation_to_json,
    simulates,
)
from .synthesis import (
    FailoverResult,
    OrchestrationSession,
    OrchestrationState,
    OrchestratorGenerator,
    Policy,
    build_generator,
    generator_to_dot,
    generator_to_json,
    handle_failure,
    initial_state,
    make_policy,
    replay,
    step,
)
from .game import (
    GameState,
    SafetyGame,
    WinningRegion,
    encode_game,
    export_game,
    parse_game_neutral,
    region_to_generator,
    solve_game,
)
from .distrib import (
    LocalOrchestrator,
    NetworkHarness,
    Outcome,
    Request,
    RoundRecord,
    derive_locals,
    dist_handle_failure,
    dist_round,
)

__version__ = "0.1.0"
