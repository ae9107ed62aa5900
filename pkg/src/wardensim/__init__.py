"""Deterministic simulator of storage covert channels and active wardens."""

from .channels import (
    CapacityExceededError,
    ChannelTechnique,
    ProtocolMismatchError,
    catalog,
    decode_any,
    embed,
    extract,
    technique,
)
from .experiment import (
    ExperimentResult,
    MetricsRecord,
    Scenario,
    SweepGrid,
    WardenKind,
    WardenParams,
    compare_wardens,
    run_experiment,
    run_four_way,
    run_single,
    run_sweep,
    sim_paper_scenarios,
)
from .packets import (
    PacketHeaderSet,
    Protocol,
    UnknownFieldError,
    ValueOutOfRangeError,
    format_packet,
    make_overt_packet,
    set_field,
    validate,
)
from .peers import ChannelState, CovertReceiver, CovertSender, IclMessage, PeerConfig
from .rules import NormalizationRule, RuleAction, RuleOutcome, Verdict, apply_rule, matches, rules
from .simnet import EventBudgetExhaustedError, LinkConfig, World
from .wardens import (
    AdaptiveWarden,
    AdaptiveWardenConfig,
    DynamicWarden,
    EvictionPolicy,
    NullWarden,
    RegularWarden,
    WardenCounters,
)

__version__ = "0.1.0"
