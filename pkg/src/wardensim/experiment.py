"""Scenario definitions, repetition/averaging, sweeps, and CSV emission.

A scenario fixes one warden configuration, the covert-transfer target
(100/200/400 packets), peer and link parameters, and a base seed. Each
repetition derives its component seeds from ``base_seed + rep``, runs one
isolated simulation world, and yields a metrics record; the mean record
averages exactly (rationals, rounded to three decimals at the edge).

The learning time metric starts at the receiver's first established channel
and stops when the received covert packet count hits the target.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from fractions import Fraction
from random import Random
from typing import Iterable

from .peers import CovertReceiver, CovertSender, PeerConfig
from .rules import RuleAction, build_rules
from .simnet import (
    EventBudgetExhaustedError,
    LinkConfig,
    World,
    millis_us,
    seconds_us,
)
from .wardens import (
    AdaptiveWarden,
    AdaptiveWardenConfig,
    DynamicWarden,
    EvictionPolicy,
    NullWarden,
    RegularWarden,
    Warden,
    ratio_count,
)


class WardenKind(Enum):
    NONE = "none"
    REGULAR = "regular"
    DYNAMIC = "dynamic"
    ADAPTIVE = "adaptive"


@dataclass
class WardenParams:
    subset_pct: float = 50.0          # regular & dynamic: active share of the 51 rules
    reload_s: float = 10.0            # dynamic: reload interval
    ic_pct: float = 10.0              # adaptive: watched inactive share
    ac_pct: float | None = None       # adaptive: active capacity; None = drawn at init
    twt: int = 1                      # adaptive: triggers required for promotion
    ws_s: float = 10.0                # adaptive: trigger window length
    eviction: EvictionPolicy = EvictionPolicy.NRU
    promote_at_expiry: bool = False
    start_empty: bool = False         # adaptive: no pre-filled active core
    action_override: str | None = None  # None | "normalize" | "drop"


@dataclass
class PeerParams:
    probe_repeat: int = 5
    com_burst: int = 5
    fail_pause_s: float = 1.0
    probe_timeout_s: float = 2.0
    retest_delay_s: float = 30.0
    probes_between_bursts: int = 3
    # Default send pace models a sender that needs a noticeable fraction of a
    # second per crafted packet; transfers then span enough reload/window
    # cycles for the warden differences to express themselves.
    send_spacing_ms: float = 250.0


@dataclass
class LinkParams:
    dcl_latency_ms: float = 5.0
    icl_latency_ms: float = 5.0
    dcl_loss: float = 0.0
    icl_loss: float = 0.0


@dataclass
class Scenario:
    warden_kind: WardenKind = WardenKind.NONE
    target_packets: int = 100
    warden: WardenParams = field(default_factory=WardenParams)
    peers: PeerParams = field(default_factory=PeerParams)
    links: LinkParams = field(default_factory=LinkParams)
    repetitions: int = 3
    base_seed: int = 1
    event_budget: int = 2_000_000

    def __post_init__(self) -> None:
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.target_packets < 1:
            raise ValueError("target_packets must be >= 1")


def scenario_to_dict(sc: Scenario) -> dict:
    d = asdict(sc)
    d["warden_kind"] = sc.warden_kind.value
    d["warden"]["eviction"] = sc.warden.eviction.value
    return d


def scenario_from_dict(d: dict) -> Scenario:
    d = dict(d)
    warden = dict(d.pop("warden"))
    warden["eviction"] = EvictionPolicy(warden["eviction"])
    return Scenario(
        warden_kind=WardenKind(d.pop("warden_kind")),
        warden=WardenParams(**warden),
        peers=PeerParams(**d.pop("peers")),
        links=LinkParams(**d.pop("links")),
        **d,
    )


@dataclass
class MetricsRecord:
    """Outcome of one repetition."""

    nel_time_us: int
    total_sent: int
    normalized: int
    dropped: int
    forwarded: int
    received: int
    per_technique: dict[int, dict[str, int]]

    @property
    def nel_time_s(self) -> float:
        return self.nel_time_us / 1_000_000

    @property
    def processed(self) -> int:
        return self.normalized + self.dropped + self.forwarded


@dataclass
class MeanMetrics:
    """Arithmetic means of the repetition records, rounded to 3 decimals."""

    nel_time_s: float
    total_sent: float
    normalized: float
    dropped: float
    forwarded: float
    received: float


@dataclass
class ExperimentResult:
    scenario: Scenario
    seeds: list[int]
    records: list[MetricsRecord]
    mean: MeanMetrics


def _mean(values: Iterable[int], scale: int = 1) -> float:
    values = list(values)
    return float(round(Fraction(sum(values), len(values) * scale), 3))


def mean_of(records: list[MetricsRecord]) -> MeanMetrics:
    return MeanMetrics(
        nel_time_s=_mean((r.nel_time_us for r in records), scale=1_000_000),
        total_sent=_mean(r.total_sent for r in records),
        normalized=_mean(r.normalized for r in records),
        dropped=_mean(r.dropped for r in records),
        forwarded=_mean(r.forwarded for r in records),
        received=_mean(r.received for r in records),
    )


def build_warden(sc: Scenario, rng: Random) -> Warden:
    override = None
    if sc.warden.action_override is not None:
        override = RuleAction(sc.warden.action_override)
    table = build_rules(override)
    if sc.warden_kind is WardenKind.NONE:
        return NullWarden(table)
    if sc.warden_kind is WardenKind.REGULAR:
        size = ratio_count(sc.warden.subset_pct)
        active = sorted(rng.sample(range(51), size))
        return RegularWarden(active, table)
    if sc.warden_kind is WardenKind.DYNAMIC:
        return DynamicWarden(
            subset_size=ratio_count(sc.warden.subset_pct),
            reload_interval_us=seconds_us(sc.warden.reload_s),
            rng=rng,
            rule_table=table,
        )
    config = AdaptiveWardenConfig(
        ic_ratio=sc.warden.ic_pct,
        ac_ratio=sc.warden.ac_pct,
        twt=sc.warden.twt,
        ws_us=seconds_us(sc.warden.ws_s),
        rng=rng,
        eviction=sc.warden.eviction,
        promote_at_expiry=sc.warden.promote_at_expiry,
        start_empty=sc.warden.start_empty,
    )
    return AdaptiveWarden(config, table)


def build_world(sc: Scenario, seed: int) -> World:
    root = Random(seed)
    warden_seed = root.randrange(2**63)
    cs_seed = root.randrange(2**63)
    dcl_seed = root.randrange(2**63)
    icl_seed = root.randrange(2**63)

    warden = build_warden(sc, Random(warden_seed))
    dcl = LinkConfig(latency_us=millis_us(sc.links.dcl_latency_ms),
                     loss_prob=sc.links.dcl_loss, rng=Random(dcl_seed))
    icl = LinkConfig(latency_us=millis_us(sc.links.icl_latency_ms),
                     loss_prob=sc.links.icl_loss, rng=Random(icl_seed))
    world = World(warden, dcl, icl, event_budget=sc.event_budget)
    warden._trace = world.trace

    peer_cfg = PeerConfig(
        target_packets=sc.target_packets,
        probe_repeat=sc.peers.probe_repeat,
        com_burst=sc.peers.com_burst,
        fail_pause_us=seconds_us(sc.peers.fail_pause_s),
        probe_timeout_us=seconds_us(sc.peers.probe_timeout_s),
        retest_delay_us=seconds_us(sc.peers.retest_delay_s),
        send_spacing_us=millis_us(sc.peers.send_spacing_ms),
        probes_between_bursts=sc.peers.probes_between_bursts,
        rng=Random(cs_seed),
    )
    cs = CovertSender(peer_cfg, world)
    cr = CovertReceiver(peer_cfg, world)
    world.attach(cs, cr)
    return world


def run_single(sc: Scenario, seed: int) -> tuple[MetricsRecord, World]:
    """One repetition; raises the budget error with partial diagnostics when
    the transfer cannot complete."""
    world = build_world(sc, seed)
    target = sc.target_packets
    world.run_until(lambda w: w.cr.received_covert_count >= target)
    started = world.cr.first_established_at
    record = MetricsRecord(
        nel_time_us=world.now - started,
        total_sent=world.cs.packets_sent,
        normalized=world.warden.counters.normalized,
        dropped=world.warden.counters.dropped,
        forwarded=world.warden.counters.forwarded,
        received=world.cr.received_covert_count,
        per_technique={tid: dict(v) for tid, v in world.cs.per_technique.items()},
    )
    return record, world


def run_experiment(sc: Scenario) -> ExperimentResult:
    """All repetitions of a scenario plus the mean record."""
    seeds = [sc.base_seed + i for i in range(sc.repetitions)]
    records = [run_single(sc, seed)[0] for seed in seeds]
    return ExperimentResult(scenario=sc, seeds=seeds, records=records,
                            mean=mean_of(records))


# -- CSV ---------------------------------------------------------------------

CSV_HEADER = ["twt", "ic_pct", "ws_s", "warden", "target", "rep",
              "nel_time_s", "total_sent", "normalized", "dropped", "forwarded",
              "received"]


def _num_str(x: float | int) -> str:
    if isinstance(x, int) or float(x).is_integer():
        return str(int(x))
    return str(x)


def result_rows(result: ExperimentResult) -> list[list[str]]:
    """One row per repetition plus a ``rep=mean`` row."""
    sc = result.scenario
    if sc.warden_kind is WardenKind.ADAPTIVE:
        twt, ic, ws = str(sc.warden.twt), _num_str(sc.warden.ic_pct), _num_str(sc.warden.ws_s)
    else:
        twt, ic, ws = "", "", ""
    rows = []
    for i, rec in enumerate(result.records):
        rows.append([twt, ic, ws, sc.warden_kind.value, str(sc.target_packets), str(i),
                     f"{rec.nel_time_us / 1_000_000:.6f}", str(rec.total_sent),
                     str(rec.normalized), str(rec.dropped), str(rec.forwarded),
                     str(rec.received)])
    m = result.mean
    rows.append([twt, ic, ws, sc.warden_kind.value, str(sc.target_packets), "mean",
                 f"{m.nel_time_s:.3f}", f"{m.total_sent:.3f}", f"{m.normalized:.3f}",
                 f"{m.dropped:.3f}", f"{m.forwarded:.3f}", f"{m.received:.3f}"])
    return rows


def write_csv(rows: list[list[str]], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        writer.writerows(rows)


def read_csv(path: str) -> list[list[str]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if rows and rows[0] == CSV_HEADER:
        rows = rows[1:]
    return rows


# -- sweeps --------------------------------------------------------------------

@dataclass
class SweepGrid:
    """Adaptive-warden parameter grid (cartesian product, stable order)."""

    twt_values: list[int] = field(default_factory=lambda: [1, 3, 7, 15, 20])
    ic_values: list[float] = field(default_factory=lambda: [1, 3, 10, 25, 50, 75, 95])
    ws_values: list[float] = field(default_factory=lambda: [20, 30, 40, 60, 95])

    def __post_init__(self) -> None:
        if not (self.twt_values and self.ic_values and self.ws_values):
            raise ValueError("sweep grid lists must be nonempty")


def run_sweep(grid: SweepGrid, template: Scenario) -> list[ExperimentResult]:
    """Run the full grid over the adaptive-warden template; rows are ordered
    twt-major, then ic, then ws."""
    results = []
    for twt in grid.twt_values:
        for ic in grid.ic_values:
            for ws in grid.ws_values:
                sc = replace(template,
                             warden_kind=WardenKind.ADAPTIVE,
                             warden=replace(template.warden, twt=twt, ic_pct=ic, ws_s=ws))
                results.append(run_experiment(sc))
    return results


def sweep_rows(results: list[ExperimentResult]) -> list[list[str]]:
    rows: list[list[str]] = []
    for result in results:
        rows.extend(result_rows(result))
    return rows


# -- comparisons ---------------------------------------------------------------

def _ratio(b: float, a: float) -> float | None:
    if a == 0:
        return None
    return round(b / a, 3)


@dataclass
class ComparisonReport:
    """Per-metric mean ratios (B relative to A) of two scenarios with the
    same transfer target."""

    label_a: str
    label_b: str
    mean_a: MeanMetrics
    mean_b: MeanMetrics
    ratios: dict[str, float | None]

    def render(self) -> str:
        lines = [f"comparison: {self.label_b} relative to {self.label_a}"]
        for key, value in self.ratios.items():
            if value is None:
                lines.append(f"  {key}: n/a (baseline is zero)")
            else:
                lines.append(f"  {key}: x{value:.3f} ({(value - 1) * 100:+.1f}%)")
        return "\n".join(lines)


def compare_results(a: ExperimentResult, b: ExperimentResult,
                    label_a: str, label_b: str) -> ComparisonReport:
    ma, mb = a.mean, b.mean
    ratios = {
        "nel_time": _ratio(mb.nel_time_s, ma.nel_time_s),
        "total_packets_sent": _ratio(mb.total_sent, ma.total_sent),
        "normalized_plus_dropped": _ratio(mb.normalized + mb.dropped,
                                          ma.normalized + ma.dropped),
        "forwarded": _ratio(mb.forwarded, ma.forwarded),
        "received": _ratio(mb.received, ma.received),
    }
    return ComparisonReport(label_a=label_a, label_b=label_b, mean_a=ma, mean_b=mb,
                            ratios=ratios)


def compare_wardens(scenario_a: Scenario, scenario_b: Scenario) -> ComparisonReport:
    if scenario_a.target_packets != scenario_b.target_packets:
        raise ValueError("compared scenarios must share the same target")
    result_a = run_experiment(scenario_a)
    result_b = run_experiment(scenario_b)
    return compare_results(result_a, result_b,
                           scenario_a.warden_kind.value, scenario_b.warden_kind.value)


def matched_dynamic(adaptive: Scenario) -> Scenario:
    """Dynamic-warden twin of an adaptive scenario: same active budget
    (subset size = the adaptive capacity) and reload interval = window size."""
    if adaptive.warden.ac_pct is None:
        raise ValueError("matched comparison needs an explicit adaptive active share")
    return replace(
        adaptive,
        warden_kind=WardenKind.DYNAMIC,
        warden=replace(adaptive.warden,
                       subset_pct=adaptive.warden.ac_pct,
                       reload_s=adaptive.warden.ws_s),
    )


# -- named presets ----------------------------------------------------------------

def sim_paper_scenarios(base_seed: int = 1, target: int = 100,
                        repetitions: int = 1) -> dict[str, Scenario]:
    """Four-way comparison preset `sim-paper`: no warden, regular and dynamic
    wardens holding 50% of the rules (10 s reload), and an adaptive warden
    watching 10% of the inactive rules on a 10 s window with single-trigger
    promotion and an 80% active budget (the strongest configuration within
    its allowed [0, 100 - ic] range)."""
    common = dict(target_packets=target, repetitions=repetitions, base_seed=base_seed)
    return {
        "none": Scenario(warden_kind=WardenKind.NONE, **common),
        "regular": Scenario(warden_kind=WardenKind.REGULAR,
                            warden=WardenParams(subset_pct=50), **common),
        "dynamic": Scenario(warden_kind=WardenKind.DYNAMIC,
                            warden=WardenParams(subset_pct=50, reload_s=10), **common),
        "adaptive": Scenario(warden_kind=WardenKind.ADAPTIVE,
                             warden=WardenParams(ic_pct=10, ws_s=10, twt=1, ac_pct=80),
                             **common),
    }


FOUR_WAY_ORDER = ["none", "regular", "dynamic", "adaptive"]


@dataclass
class FourWayResult:
    per_seed: dict[str, list[float]]  # warden name -> nel_time_s per seed set
    means: dict[str, float]
    ordering_ok: int
    seed_sets: int
    adaptive_dynamic_ratio: float

    def render(self) -> str:
        lines = ["four-way comparison (nel_time_s means)"]
        for name in FOUR_WAY_ORDER:
            lines.append(f"  {name:9s} {self.means[name]:10.3f}")
        lines.append(f"  ordering none<regular<dynamic<adaptive held in "
                     f"{self.ordering_ok}/{self.seed_sets} seed sets")
        lines.append(f"  adaptive/dynamic mean ratio: {self.adaptive_dynamic_ratio:.3f}")
        return "\n".join(lines)


def run_four_way(base_seed: int = 1, seed_sets: int = 10, target: int = 100) -> FourWayResult:
    per_seed: dict[str, list[float]] = {name: [] for name in FOUR_WAY_ORDER}
    for i in range(seed_sets):
        scenarios = sim_paper_scenarios(base_seed=base_seed + i, target=target)
        for name in FOUR_WAY_ORDER:
            record, _ = run_single(scenarios[name], base_seed + i)
            per_seed[name].append(record.nel_time_us / 1_000_000)
    ordering_ok = sum(
        1 for i in range(seed_sets)
        if (per_seed["none"][i] < per_seed["regular"][i]
            < per_seed["dynamic"][i] < per_seed["adaptive"][i])
    )
    means = {name: sum(v) / len(v) for name, v in per_seed.items()}
    return FourWayResult(
        per_seed=per_seed,
        means=means,
        ordering_ok=ordering_ok,
        seed_sets=seed_sets,
        adaptive_dynamic_ratio=means["adaptive"] / means["dynamic"],
    )
