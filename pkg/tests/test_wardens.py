from __future__ import annotations

from random import Random

import pytest

from wardensim.channels import embed, technique
from wardensim.packets import make_overt_packet
from wardensim.rules import Verdict, build_rules
from wardensim.simnet import US_PER_S
from wardensim.wardens import (
    AdaptiveWarden,
    AdaptiveWardenConfig,
    DynamicWarden,
    EmptyActiveSetError,
    EvictionPolicy,
    NotEligibleError,
    NullWarden,
    RegularWarden,
    ratio_count,
)


def covert(tid: int, seed: int = 0, bits: str | None = None):
    t = technique(tid)
    payload = bits if bits is not None else "1" * t.capacity_bits
    return embed(tid, make_overt_packet(t.protocol, seed), payload)


def overt_for(tid: int, seed: int = 0):
    return make_overt_packet(technique(tid).protocol, seed)


def adaptive(ic=0.0, ac=100.0, twt=1, ws_s=95, seed=1, active=None, checked=None, **kw):
    cfg = AdaptiveWardenConfig(ic_ratio=ic, ac_ratio=ac, twt=twt,
                               ws_us=ws_s * US_PER_S, rng=Random(seed), **kw)
    return AdaptiveWarden(cfg, initial_active=active, initial_checked=checked)


def test_ratio_count_rounding():
    assert ratio_count(0) == 0
    assert ratio_count(1) == 1       # 0.51 rounds half-up
    assert ratio_count(10) == 5
    assert ratio_count(50) == 26
    assert ratio_count(95) == 48
    assert ratio_count(100) == 51


def test_null_warden_forwards_everything():
    w = NullWarden()
    out = w.process(covert(0), 0)
    assert out.verdict is Verdict.FORWARDED
    assert w.counters.forwarded == 1 and w.counters.processed == 1


def test_regular_applies_active_rule():
    w = RegularWarden(active_ids={4})
    out = w.process(covert(4), 0)
    assert out.verdict in (Verdict.NORMALIZED, Verdict.DROPPED)
    assert w.counters.processed == 1


def test_regular_forwards_unmatched_covert():
    w = RegularWarden(active_ids={4})
    out = w.process(covert(8), 0)
    assert out.verdict is Verdict.FORWARDED


def test_regular_empty_set_forwards_all():
    w = RegularWarden(active_ids=set())
    for tid in (0, 12, 26):
        assert w.process(covert(tid), 0).verdict is Verdict.FORWARDED


def test_counter_conservation():
    w = RegularWarden(active_ids=set(range(51)))
    for tid in range(0, 51, 7):
        w.process(covert(tid), 0)
        w.process(overt_for(tid), 0)
    c = w.counters
    assert c.processed == c.normalized + c.dropped + c.forwarded


# -- dynamic ----------------------------------------------------------------


def test_dynamic_full_and_empty_subsets():
    always_all = DynamicWarden(51, 10 * US_PER_S, Random(1))
    assert always_all.active_ids == list(range(51))
    never = DynamicWarden(0, 10 * US_PER_S, Random(1))
    assert never.active_ids == []
    assert never.process(covert(3), 0).verdict is Verdict.FORWARDED


def test_dynamic_third_draw_at_25s():
    # independent replay of the seeded draw sequence: init draw plus reloads
    # at 10 s and 20 s leave the third subset active at t=25 s
    w = DynamicWarden(10, 10 * US_PER_S, Random(42))
    replay = Random(42)
    draws = [sorted(replay.sample(list(range(51)), 10)) for _ in range(3)]
    w.process(overt_for(0, 5), 25 * US_PER_S)
    assert w.active_ids == draws[2]
    assert w.reload_count == 2


def test_dynamic_reload_sequence_deterministic():
    a = DynamicWarden(7, 5 * US_PER_S, Random(9))
    b = DynamicWarden(7, 5 * US_PER_S, Random(9))
    for t in range(0, 60):
        a.housekeep(t * US_PER_S)
        b.housekeep(t * US_PER_S)
        assert a.active_ids == b.active_ids


def test_dynamic_reload_count_over_duration():
    w = DynamicWarden(5, 10 * US_PER_S, Random(3))
    w.housekeep(95 * US_PER_S)
    assert w.reload_count == 95 * US_PER_S // (10 * US_PER_S)


# -- adaptive ----------------------------------------------------------------


def test_adaptive_promotion_two_packet_trace():
    w = adaptive(twt=1, active=set(), checked={6})
    first = w.process(covert(6, seed=1), 1000)
    assert first.verdict is Verdict.FORWARDED  # trigger packet itself passes
    assert 6 in w.active
    second = w.process(covert(6, seed=2), 2000)
    assert second.verdict in (Verdict.NORMALIZED, Verdict.DROPPED)


def test_adaptive_needs_twt_triggers():
    w = adaptive(twt=3, active=set(), checked={6})
    for i in range(2):
        assert w.process(covert(6, seed=i), 1000 + i).verdict is Verdict.FORWARDED
        assert 6 not in w.active
    w.process(covert(6, seed=9), 5000)
    assert 6 in w.active


def test_adaptive_overt_traffic_only_forwards():
    w = adaptive(ic=95.0, ac=5.0, seed=4)
    before = dict(w.triggers)
    out = w.process(make_overt_packet(technique(0).protocol, 9), 1000)
    assert out.verdict is Verdict.FORWARDED
    assert w.triggers == before
    assert w.counters.forwarded == 1


def test_adaptive_unchecked_rule_never_triggers():
    w = adaptive(twt=1, active=set(), checked={5})
    w.process(covert(8), 1000)
    assert 8 not in w.active and w.trigger_count(8) == 0


def test_adaptive_ic_zero_equals_regular():
    active = {1, 9, 20, 33, 47}
    ada = adaptive(ic=0.0, ac=100.0, twt=5, ws_s=10, active=set(active), checked=set())
    reg = RegularWarden(active_ids=set(active))
    rng = Random(77)
    now = 0
    for _ in range(2000):
        now += rng.randrange(1, 1000)
        tid = rng.randrange(51)
        p = covert(tid, seed=rng.randrange(1000)) if rng.random() < 0.7 else overt_for(tid)
        assert ada.process(p, now).verdict is reg.process(p, now).verdict
    assert ada.counters == reg.counters


def test_promote_requires_eligibility():
    w = adaptive(twt=2, active=set(), checked={6})
    w.process(covert(6), 1000)
    with pytest.raises(NotEligibleError):
        w.promote(6, 2000)
    with pytest.raises(NotEligibleError):
        w.promote(40, 2000)  # not checked at all


def test_partition_invariant_after_operations():
    w = adaptive(ic=95.0, ac=5.0, twt=1, ws_s=1, seed=2)
    rng = Random(5)
    now = 0
    for _ in range(500):
        now += rng.randrange(1, 500_000)
        tid = rng.randrange(51)
        w.process(covert(tid, seed=rng.randrange(100)), now)
        assert w.active | w.inactive == set(range(51))
        assert not (w.active & w.inactive)
        assert w.checked <= w.inactive


# -- eviction ------------------------------------------------------------------


def test_eviction_fifo_when_counts_equal():
    # none of the rules applied yet: first activated goes first
    w = adaptive(ac=100.0, active=set(), checked=set())
    w.active = {3, 8, 5}
    w.activated_at = {3: 10, 8: 20, 5: 30}
    assert w.select_eviction(EvictionPolicy.FIFO) == 3
    assert w.select_eviction(EvictionPolicy.NRU) == 3  # falls back to FIFO


def test_eviction_nru_prefers_never_applied():
    w = adaptive(ac=100.0, active=set(), checked=set())
    w.active = {1, 2, 3}
    w.activated_at = {1: 10, 2: 20, 3: 30}
    w.apply_count = {1: 3, 2: 1}
    w.last_applied = {1: 9_000_000, 2: 4_000_000}
    assert w.select_eviction(EvictionPolicy.NRU) == 3  # never applied = oldest
    w.apply_count[3] = 2
    w.last_applied[3] = 1_000_000
    assert w.select_eviction(EvictionPolicy.NRU) == 3  # oldest use


def test_eviction_empty_active_set_raises():
    w = adaptive(active=set(), checked=set())
    with pytest.raises(EmptyActiveSetError):
        w.select_eviction()


def test_promotion_evicts_incumbent_at_capacity():
    # capacity 2 (ac ~ 4%), two incumbents, promoting a third displaces one
    w = adaptive(ic=10.0, ac=4.0, twt=1, active={1, 2}, checked={6})
    assert w.capacity == 2
    w.process(covert(6), 1000)
    assert 6 in w.active
    assert len(w.active) == 2
    evicted = ({1, 2} - w.active).pop()
    assert evicted in w.inactive
    assert evicted in w.checked  # evicted rules stay watched


def test_promotion_without_pressure_keeps_active_growing():
    w = adaptive(ic=10.0, ac=100.0, twt=1, active={1}, checked={6})
    w.process(covert(6), 1000)
    assert w.active == {1, 6}


def test_capacity_zero_promotion_is_noop():
    w = adaptive(ic=10.0, ac=0.0, twt=1, active=set(), checked={6})
    out = w.process(covert(6), 1000)
    assert out.verdict is Verdict.FORWARDED
    assert w.active == set()
    assert w.trigger_count(6) == 0  # triggers cleared, no churn


# -- windows ---------------------------------------------------------------------


def test_window_expiry_discards_triggers():
    w = adaptive(ic=10.0, ac=10.0, twt=3, ws_s=10, active=set(), checked={6})
    w.process(covert(6, seed=1), 1 * US_PER_S)
    w.process(covert(6, seed=2), 2 * US_PER_S)
    assert w.trigger_count(6) == 2
    w.housekeep(10 * US_PER_S)  # window [0, 10s) expires
    assert w.trigger_count(6) == 0
    # two more triggers in the new window still do not reach twt=3
    w.process(covert(6, seed=3), 11 * US_PER_S)
    w.process(covert(6, seed=4), 12 * US_PER_S)
    assert 6 not in w.active


def test_promoted_then_idle_rule_demoted_after_one_full_window():
    w = adaptive(ic=10.0, ac=10.0, twt=1, ws_s=10, active=set(), checked={6})
    w.process(covert(6), 1 * US_PER_S)       # promoted during window 1
    assert 6 in w.active
    w.housekeep(10 * US_PER_S)               # end of window 1: stays
    assert 6 in w.active
    w.housekeep(20 * US_PER_S)               # idle through window 2: demoted
    assert 6 not in w.active
    assert 6 in w.inactive


def test_promoted_rule_in_use_stays_active():
    w = adaptive(ic=10.0, ac=10.0, twt=1, ws_s=10, active=set(), checked={6})
    w.process(covert(6, seed=1), 1 * US_PER_S)
    w.housekeep(10 * US_PER_S)
    w.process(covert(6, seed=2), 12 * US_PER_S)  # applied during window 2
    w.housekeep(20 * US_PER_S)
    assert 6 in w.active


def test_initial_active_rules_never_demoted():
    w = adaptive(ic=0.0, ac=10.0, twt=1, ws_s=10, active={4}, checked=set())
    w.housekeep(50 * US_PER_S)  # several idle windows
    assert 4 in w.active


def test_window_resamples_checked_subset():
    w = adaptive(ic=10.0, ac=10.0, twt=1, ws_s=10, seed=3)
    seen = set()
    for k in range(1, 30):
        w.housekeep(k * 10 * US_PER_S)
        assert len(w.checked) == min(w.ic_count, len(w.inactive))
        seen.add(frozenset(w.checked))
    assert len(seen) > 1  # the watched subset actually rotates


def test_deferred_promotion_waits_for_window_end():
    w = adaptive(ic=10.0, ac=10.0, twt=1, ws_s=10, active=set(), checked={6},
                 promote_at_expiry=True)
    w.process(covert(6, seed=1), 1 * US_PER_S)
    assert 6 not in w.active  # queued, not yet promoted
    w.process(covert(6, seed=2), 2 * US_PER_S)
    assert w.process(covert(6, seed=3), 3 * US_PER_S).verdict is Verdict.FORWARDED
    w.housekeep(10 * US_PER_S)
    assert 6 in w.active


def test_adaptive_determinism():
    def run():
        w = adaptive(ic=50.0, ac=30.0, twt=2, ws_s=5, seed=11)
        rng = Random(13)
        now = 0
        verdicts = []
        for _ in range(800):
            now += rng.randrange(1, 400_000)
            verdicts.append(w.process(covert(rng.randrange(51), seed=rng.randrange(50)), now).verdict)
        return verdicts, sorted(w.active)

    assert run() == run()
