"""Cost model and usage-ledger tests.

Expected values are frozen from two sources: reference usage tables from a
large production run (replayed cell-exact through the ledger aggregation),
and hand-derived exact costs computed with Fraction arithmetic, which an
independent per-turn oracle must reproduce.
"""

from __future__ import annotations

import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swarmtrunk.accounting import (
    DEFAULT_PRICES,
    MICRO,
    OUTCOME_ORDER,
    ROLE_ORDER,
    Prices,
    Totals,
    UsageRecord,
    aggregate,
    break_even_turns,
    cache_coefficients,
    churn_series,
    closed_form_input_costs,
    conservation_check,
    decl_series,
    dialog_input_costs,
    estimate_run_cost,
    grand_total,
    histogram,
    outcome_token_shares,
    pr_line_histograms,
    render_row,
    render_usage_table,
    role_file_histograms,
    savings_factor,
    to_micro,
    tokens_per_turn,
)
from table_fixtures import (
    OUTCOME_TABLE_ROWS,
    OUTCOME_TABLE_TOTAL,
    ROLE_TABLE_ROWS,
    ROLE_TABLE_TOTAL,
    build_standalone_totals,
    build_usage_ledger,
    expected_table,
)


# -- reference table replay ----------------------------------------------------------


def test_role_table_replays_cell_exact():
    records = build_usage_ledger(ROLE_TABLE_ROWS, key="role", total_row=ROLE_TABLE_TOTAL)
    table = render_usage_table(aggregate(records, "role"), order=ROLE_ORDER)
    assert table == expected_table(ROLE_TABLE_ROWS, ROLE_TABLE_TOTAL)


def test_outcome_table_rows_replay_cell_exact():
    records = build_usage_ledger(OUTCOME_TABLE_ROWS, key="outcome")
    table = render_usage_table(
        aggregate(records, "outcome"), order=OUTCOME_ORDER, include_total=False
    )
    assert table == expected_table(OUTCOME_TABLE_ROWS)


def test_outcome_total_row_renders_from_its_own_aggregate():
    # The outcome table's grand-total row describes a different agent universe
    # than its body rows (their sums differ), so it is validated standalone.
    totals = build_standalone_totals(OUTCOME_TABLE_TOTAL)
    assert render_row("total", totals) == expected_table((), OUTCOME_TABLE_TOTAL)[0]


def test_outcome_rows_do_not_sum_to_outcome_total_row():
    body_count = sum(row[1] for row in OUTCOME_TABLE_ROWS)
    assert body_count == 30046
    assert OUTCOME_TABLE_TOTAL[1] == 29691
    assert body_count != OUTCOME_TABLE_TOTAL[1]


def test_ledger_conservation_between_groupings():
    records = build_usage_ledger(ROLE_TABLE_ROWS, key="role", total_row=ROLE_TABLE_TOTAL)
    assert conservation_check(records)
    by_role = grand_total(aggregate(records, "role"))
    assert by_role.count == 30046
    assert by_role.turns == 1645274


def test_aggregate_rejects_unknown_key():
    with pytest.raises(ValueError):
        aggregate([], "chapter")


def test_render_row_rejects_empty():
    with pytest.raises(ValueError):
        render_row("x", Totals())


# -- run cost endpoints ---------------------------------------------------------------


def test_full_run_cost_endpoints():
    est = estimate_run_cost(
        n_agents=30046,
        avg_turns=Fraction("54.8"),
        tokens_in=83_176_000_000,
        tokens_out=561_200_000,
    )
    # Uncached input = rate times volume exactly: $5/M * 83,176M = $415,880.
    assert est.input_nocache_micro == 415_880 * MICRO
    assert est.output_micro == 14_030 * MICRO
    assert est.total_nocache_micro == 429_910 * MICRO
    assert abs(est.total_nocache_micro / MICRO - 430_000) <= 0.01 * 430_000

    factor = savings_factor(Fraction("54.8"))
    assert factor == Fraction(930, 193)
    assert abs(est.savings_factor - 4.82) <= 0.02

    # Cached input = uncached / factor = $415,880 * 193/930.
    assert est.input_cache_micro == round(Fraction(415_880 * MICRO) * Fraction(193, 930))
    assert abs(est.total_cache_micro / MICRO - 100_000) <= 0.05 * 100_000


def test_tokens_per_turn_inverts_total_volume():
    m = tokens_per_turn(30046, Fraction("54.8"), 83_176_000_000)
    total = Fraction(30046) * m * Fraction("54.8") * (Fraction("54.8") + 1) / 2
    assert total == 83_176_000_000
    # Final context stays under a typical window.
    assert 50_000 < float(m * Fraction("54.8")) < 200_000


def test_break_even_is_exactly_seventeen_thirds():
    assert break_even_turns() == Fraction(17, 3)
    assert savings_factor(Fraction(17, 3)) == 1
    assert savings_factor(Fraction(17, 3) + 1) > 1
    assert savings_factor(Fraction(17, 3) - 1) < 1


def test_cache_coefficients_follow_price_ratios():
    assert cache_coefficients() == (Fraction(1, 20), Fraction(61, 20))
    steep = Prices(Fraction(5), Fraction(25), store_multiplier=Fraction(4), hit_divisor=Fraction(2))
    a2, a1 = cache_coefficients(steep)
    assert a2 == Fraction(1, 4)
    assert a1 == Fraction(1, 4) + 5


def test_closed_form_equals_per_turn_oracle_on_uniform_dialogs():
    rng = random.Random("accounting/uniform")
    for _ in range(1000):
        turns = rng.randint(1, 200)
        per_turn = rng.randint(1, 5000)
        n_agents = rng.randint(1, 40)
        one_no, one_cache = dialog_input_costs([per_turn] * turns)
        closed_no, closed_cache = closed_form_input_costs(
            n_agents, Fraction(turns), Fraction(per_turn)
        )
        assert closed_no == n_agents * one_no
        assert closed_cache == n_agents * one_cache
        # The exact match trivially satisfies the 1e-9 relative tolerance.
        assert abs(float(closed_no - n_agents * one_no)) <= 1e-9 * float(closed_no)


def test_per_turn_oracle_small_dialog_by_hand():
    # Turns of 10 then 30 tokens: prefixes 10 and 40, so 50 prefix-tokens.
    # Uncached: 50 * $5/M.  Cached: 50 * $0.5/M + 40 new * ($5 + $10)/M.
    nocache, cached = dialog_input_costs([10, 30])
    assert nocache == Fraction(250, MICRO)
    assert cached == Fraction(25, MICRO) + Fraction(40 * 15, MICRO)


def test_per_turn_oracle_rejects_negative():
    with pytest.raises(ValueError):
        dialog_input_costs([5, -1])


def test_front_loaded_dialogs_cost_more():
    asc, _ = dialog_input_costs([1, 100])
    desc, _ = dialog_input_costs([100, 1])
    assert desc > asc


@given(
    turns=st.lists(st.integers(min_value=0, max_value=10_000), min_size=1, max_size=50),
    scale=st.integers(min_value=1, max_value=1000),
)
@settings(max_examples=200, deadline=None)
def test_dialog_costs_scale_linearly(turns, scale):
    base_no, base_cache = dialog_input_costs(turns)
    scaled_no, scaled_cache = dialog_input_costs([t * scale for t in turns])
    assert scaled_no == base_no * scale
    assert scaled_cache == base_cache * scale


@given(
    turns=st.lists(st.integers(min_value=0, max_value=10_000), min_size=1, max_size=50),
    extra=st.integers(min_value=1, max_value=10_000),
)
@settings(max_examples=200, deadline=None)
def test_appending_a_turn_increases_both_costs(turns, extra):
    base_no, base_cache = dialog_input_costs(turns)
    more_no, more_cache = dialog_input_costs(turns + [extra])
    assert more_no > base_no
    assert more_cache > base_cache


def test_to_micro_rounds_half_to_even():
    assert to_micro(Fraction(3, 2 * MICRO)) == 2
    assert to_micro(Fraction(1, 2 * MICRO)) == 0
    assert to_micro(Fraction(5)) == 5 * MICRO


# -- chart series ---------------------------------------------------------------------


def test_churn_series_accumulates():
    rows = [
        {"added": 10, "removed": 2, "time": 1.0},
        {"added": 5, "removed": 5, "time": 2.0},
        {"added": 0, "removed": 3, "time": 3.0},
    ]
    series = churn_series(rows)
    assert [p["cum_added"] for p in series] == [10, 15, 15]
    assert [p["cum_removed"] for p in series] == [2, 7, 10]
    assert series[2]["merge_index"] == 2


def test_decl_series_passthrough():
    rows = [{"decl_count": 3, "sorry_count": 2}, {"decl_count": 5, "sorry_count": 1}]
    series = decl_series(rows)
    assert [p["decl_count"] for p in series] == [3, 5]
    assert [p["sorry_count"] for p in series] == [2, 1]


def test_outcome_token_shares_windows():
    rows = []
    for i in range(8):
        rows.append({"outcome": "merged" if i % 2 == 0 else "no-pr", "tokens_in": 10})
    points = outcome_token_shares(rows, window=4, stride=2)
    assert [(p["start"], p["end"]) for p in points] == [(0, 4), (2, 6), (4, 8)]
    for p in points:
        assert not p["partial"]
        assert p["shares"]["merged"] == 0.5
        assert p["shares"]["no-pr"] == 0.5
        assert abs(sum(p["shares"].values()) - 1.0) < 1e-12


def test_outcome_token_shares_partial_when_short():
    rows = [{"outcome": "merged", "tokens_in": 7}] * 3
    points = outcome_token_shares(rows, window=400)
    assert len(points) == 1
    assert points[0]["partial"]
    assert points[0]["shares"]["merged"] == 1.0


def test_outcome_token_shares_rejects_bad_window():
    with pytest.raises(ValueError):
        outcome_token_shares([], window=0)


def test_histogram_bins_are_half_open():
    rows = histogram([0, 1, 4, 5, 10, 1600])
    by_lo = {(b["lo"], b["hi"]): b["count"] for b in rows}
    assert by_lo[(None, 1)] == 1
    assert by_lo[(1, 2)] == 1
    assert by_lo[(2, 5)] == 1
    assert by_lo[(5, 10)] == 1
    assert by_lo[(10, 20)] == 1
    assert by_lo[(1600, None)] == 1
    assert sum(b["count"] for b in rows) == 6


def test_pr_line_histograms_counts_net_negative():
    rows = [
        {"added": 10, "removed": 2},
        {"added": 1, "removed": 5},
        {"added": 3, "removed": 3},
    ]
    hists = pr_line_histograms(rows)
    assert hists["net_negative"] == 1
    assert sum(b["count"] for b in hists["added"]) == 3


def test_role_file_histograms_caps_and_groups():
    rows = [
        {"author_role": "prover", "code_files": 1, "coord_files": 0, "added": 12, "removed": 0},
        {"author_role": "maintainer", "code_files": 99, "coord_files": 2, "added": 4, "removed": 9},
    ]
    hists = role_file_histograms(rows, max_files=16)
    assert hists["prover"]["code_files"][1] == 1
    assert hists["maintainer"]["code_files"][16] == 1
    assert hists["maintainer"]["net_lines"] == [-5]
