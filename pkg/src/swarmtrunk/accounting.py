"""Token and cost accounting for a run.

Money is handled exactly: prices enter as Fractions of a dollar per token and
public totals leave as integer micro-dollars, so no float drift can enter a
ledger sum.  The cache model prices an agent dialog of T turns in which the
whole conversation prefix is re-read every turn:

* without caching every prefix token is reprocessed at the full input rate;
* with caching the prefix is re-read at the hit rate while each newly
  appended token additionally pays the full input rate plus a write premium.

With a write premium of 2x input and a hit rate of input/10, an agent with
per-turn appends m has closed-form input costs

    nocache = N * m * c_in * (T^2 / 2 + T / 2)
    cached  = N * m * c_in * (T^2 / 20 + (1 / 20 + 3) * T)

whose ratio crosses 1 at exactly T = 17/3 turns.  A per-turn brute-force
oracle (`dialog_input_costs`) reproduces the closed forms exactly on uniform
dialogs and bounds them on ragged ones.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

MTOK = 1_000_000
MICRO = 1_000_000

ROLE_ORDER = (
    "sketcher",
    "prover",
    "maintainer",
    "math-reviewer",
    "eng-reviewer",
    "triage",
    "scan",
    "progress",
)

OUTCOME_ORDER = (
    "merged",
    "approved",
    "max-revisions",
    "max-iterations",
    "no-pr",
    "no-pr-blocked",
    "aborted",
)


@dataclass(frozen=True)
class Prices:
    """Dollars per million tokens, plus cache pricing ratios."""

    input_per_mtok: Fraction
    output_per_mtok: Fraction
    store_multiplier: Fraction = Fraction(2)
    hit_divisor: Fraction = Fraction(10)

    @property
    def per_token_in(self) -> Fraction:
        return Fraction(self.input_per_mtok, MTOK)

    @property
    def per_token_out(self) -> Fraction:
        return Fraction(self.output_per_mtok, MTOK)

    @property
    def per_token_store(self) -> Fraction:
        return self.per_token_in * self.store_multiplier

    @property
    def per_token_hit(self) -> Fraction:
        return self.per_token_in / self.hit_divisor


DEFAULT_PRICES = Prices(input_per_mtok=Fraction(5), output_per_mtok=Fraction(25))


def to_micro(dollars: Fraction) -> int:
    """Exact dollars -> integer micro-dollars (round half to even)."""
    return round(dollars * MICRO)


def nocache_coefficients() -> tuple[Fraction, Fraction]:
    """(a2, a1) with input cost N * m * c_in * (a2*T^2 + a1*T)."""
    return Fraction(1, 2), Fraction(1, 2)


def cache_coefficients(prices: Prices = DEFAULT_PRICES) -> tuple[Fraction, Fraction]:
    """(a2, a1) for the cached variant, derived from the pricing ratios."""
    half_hit = Fraction(1, 2) / prices.hit_divisor
    return half_hit, half_hit + 1 + prices.store_multiplier


def tokens_per_turn(n_agents: int, avg_turns: Fraction, tokens_in_total: int) -> Fraction:
    """Per-turn append m implied by a total input volume: m = 2C / (N*T*(T+1))."""
    avg_turns = Fraction(avg_turns)
    return Fraction(2 * tokens_in_total) / (n_agents * avg_turns * (avg_turns + 1))


def closed_form_input_costs(
    n_agents: int, turns: Fraction, per_turn: Fraction, prices: Prices = DEFAULT_PRICES
) -> tuple[Fraction, Fraction]:
    """Exact (nocache, cached) input dollars for N uniform dialogs."""
    turns = Fraction(turns)
    base = n_agents * per_turn * prices.per_token_in
    n2, n1 = nocache_coefficients()
    c2, c1 = cache_coefficients(prices)
    nocache = base * (n2 * turns * turns + n1 * turns)
    cached = base * (c2 * turns * turns + c1 * turns)
    return nocache, cached


def savings_factor(turns: Fraction, prices: Prices = DEFAULT_PRICES) -> Fraction:
    """nocache / cached input cost ratio at a given dialog length."""
    turns = Fraction(turns)
    n2, n1 = nocache_coefficients()
    c2, c1 = cache_coefficients(prices)
    return (n2 * turns + n1) / (c2 * turns + c1)


def break_even_turns(prices: Prices = DEFAULT_PRICES) -> Fraction:
    """Dialog length where caching starts paying for itself (exact)."""
    n2, n1 = nocache_coefficients()
    c2, c1 = cache_coefficients(prices)
    return (c1 - n1) / (n2 - c2)


def dialog_input_costs(
    turn_tokens: Sequence[int], prices: Prices = DEFAULT_PRICES
) -> tuple[Fraction, Fraction]:
    """Per-turn oracle for one dialog: exact (nocache, cached) input dollars.

    Turn i processes the full prefix through turn i.  Without caching the
    prefix costs the input rate; with caching it costs the hit rate and the
    turn's new tokens additionally pay input plus store.
    """
    prefix = 0
    prefix_sum = 0
    new_total = 0
    for m in turn_tokens:
        if m < 0:
            raise ValueError("turn token counts must be non-negative")
        prefix += m
        prefix_sum += prefix
        new_total += m
    nocache = prices.per_token_in * prefix_sum
    cached = prices.per_token_hit * prefix_sum + (
        prices.per_token_in + prices.per_token_store
    ) * new_total
    return nocache, cached


@dataclass(frozen=True)
class CostEstimate:
    """Replayed cost of a whole run, in integer micro-dollars."""

    n_agents: int
    avg_turns: float
    tokens_in: int
    tokens_out: int
    input_nocache_micro: int
    input_cache_micro: int
    output_micro: int
    savings_factor: float
    tokens_per_turn: float
    final_context: float

    @property
    def total_nocache_micro(self) -> int:
        return self.input_nocache_micro + self.output_micro

    @property
    def total_cache_micro(self) -> int:
        return self.input_cache_micro + self.output_micro

    def dollars(self, micro: int) -> float:
        return micro / MICRO


def estimate_run_cost(
    n_agents: int,
    avg_turns: Fraction,
    tokens_in: int,
    tokens_out: int,
    prices: Prices = DEFAULT_PRICES,
) -> CostEstimate:
    """Cost of a run from its aggregate usage, under the uniform-dialog model."""
    avg_turns = Fraction(avg_turns)
    m = tokens_per_turn(n_agents, avg_turns, tokens_in)
    nocache, cached = closed_form_input_costs(n_agents, avg_turns, m, prices)
    output = prices.per_token_out * tokens_out
    return CostEstimate(
        n_agents=n_agents,
        avg_turns=float(avg_turns),
        tokens_in=tokens_in,
        tokens_out=tokens_out,
        input_nocache_micro=to_micro(nocache),
        input_cache_micro=to_micro(cached),
        output_micro=to_micro(output),
        savings_factor=float(savings_factor(avg_turns, prices)),
        tokens_per_turn=float(m),
        final_context=float(avg_turns * m),
    )


# -- usage ledger -----------------------------------------------------------------


@dataclass(frozen=True)
class UsageRecord:
    """Per-agent usage row as recorded at session end."""

    agent_id: str
    role: str
    outcome: str
    tokens_in: int
    tokens_out: int
    turns: int


@dataclass
class Totals:
    """Mutable accumulator for one table row."""

    count: int = 0
    tokens_in: int = 0
    tokens_out: int = 0
    turns: int = 0

    def add(self, rec: UsageRecord) -> None:
        self.count += 1
        self.tokens_in += rec.tokens_in
        self.tokens_out += rec.tokens_out
        self.turns += rec.turns


def aggregate(records: Iterable[UsageRecord], key: str) -> dict[str, Totals]:
    """Group usage by 'role' or 'outcome'."""
    if key not in ("role", "outcome"):
        raise ValueError("key must be 'role' or 'outcome'")
    out: dict[str, Totals] = {}
    for rec in records:
        out.setdefault(getattr(rec, key), Totals()).add(rec)
    return out


def grand_total(groups: Mapping[str, Totals]) -> Totals:
    total = Totals()
    for t in groups.values():
        total.count += t.count
        total.tokens_in += t.tokens_in
        total.tokens_out += t.tokens_out
        total.turns += t.turns
    return total


def render_row(label: str, t: Totals) -> dict:
    """Display form: token totals in millions, averages in thousands.

    Totals render as integers except output (one decimal); per-agent
    averages render as integer thousands except output (one decimal);
    average turns keep one decimal.
    """
    if t.count == 0:
        raise ValueError(f"empty row {label!r}")
    in_m = int(round(Fraction(t.tokens_in, MTOK)))
    out_m = float(round(Fraction(t.tokens_out, MTOK), 1))
    total_m = int(round(Fraction(t.tokens_in + t.tokens_out, MTOK)))
    avg_in_k = int(round(Fraction(t.tokens_in, t.count * 1000)))
    avg_out_k = float(round(Fraction(t.tokens_out, t.count * 1000), 1))
    avg_turns = float(round(Fraction(t.turns, t.count), 1))
    return {
        "label": label,
        "count": t.count,
        "in_m": in_m,
        "out_m": out_m,
        "total_m": total_m,
        "avg_in_k": avg_in_k,
        "avg_out_k": avg_out_k,
        "turns": t.turns,
        "avg_turns": avg_turns,
    }


def render_usage_table(
    groups: Mapping[str, Totals], order: Sequence[str] = (), include_total: bool = True
) -> list[dict]:
    labels = [l for l in order if l in groups] + sorted(set(groups) - set(order))
    rows = [render_row(label, groups[label]) for label in labels]
    if include_total and groups:
        rows.append(render_row("total", grand_total(groups)))
    return rows


def conservation_check(records: Sequence[UsageRecord]) -> bool:
    """Role-keyed and outcome-keyed grand totals must be identical."""
    by_role = grand_total(aggregate(records, "role"))
    by_outcome = grand_total(aggregate(records, "outcome"))
    return by_role == by_outcome


# -- series for charts ---------------------------------------------------------------


def churn_series(merge_rows: Sequence[Mapping]) -> list[dict]:
    """Per-merge added/removed with running totals (code churn over time)."""
    out = []
    cum_added = cum_removed = 0
    for i, row in enumerate(merge_rows):
        cum_added += int(row["added"])
        cum_removed += int(row["removed"])
        out.append(
            {
                "merge_index": i,
                "time": row.get("time", 0.0),
                "added": int(row["added"]),
                "removed": int(row["removed"]),
                "cum_added": cum_added,
                "cum_removed": cum_removed,
            }
        )
    return out


def decl_series(merge_rows: Sequence[Mapping]) -> list[dict]:
    """Declaration and admitted-proof counts on main after each merge."""
    return [
        {
            "merge_index": i,
            "time": row.get("time", 0.0),
            "decl_count": int(row["decl_count"]),
            "sorry_count": int(row["sorry_count"]),
        }
        for i, row in enumerate(merge_rows)
    ]


def outcome_token_shares(
    usage_rows: Sequence[Mapping], window: int = 400, stride: int = 0
) -> list[dict]:
    """Rolling share of input tokens by outcome over consecutive agents.

    A run shorter than the window yields a single partial point.
    """
    if window <= 0:
        raise ValueError("window must be positive")
    if stride <= 0:
        stride = max(1, window // 8)
    n = len(usage_rows)
    points: list[dict] = []

    def point(start: int, end: int, partial: bool) -> dict:
        totals: dict[str, int] = {}
        grand = 0
        for row in usage_rows[start:end]:
            tokens = int(row["tokens_in"])
            totals[row["outcome"]] = totals.get(row["outcome"], 0) + tokens
            grand += tokens
        shares = {
            outcome: (totals.get(outcome, 0) / grand if grand else 0.0)
            for outcome in sorted(set(totals) | set(OUTCOME_ORDER))
        }
        return {"start": start, "end": end, "partial": partial, "shares": shares}

    if n < window:
        if n:
            points.append(point(0, n, True))
        return points
    start = 0
    while start + window <= n:
        points.append(point(start, start + window, False))
        start += stride
    return points


DEFAULT_LINE_BINS = (1, 2, 5, 10, 20, 50, 100, 200, 400, 800, 1600)


def histogram(values: Iterable[int], bins: Sequence[int] = DEFAULT_LINE_BINS) -> list[dict]:
    """Counts per half-open bin [edge_i, edge_i+1), with open first/last bins."""
    edges = list(bins)
    counts = [0] * (len(edges) + 1)
    for value in values:
        slot = 0
        for i, edge in enumerate(edges):
            if value >= edge:
                slot = i + 1
        counts[slot] += 1
    out = []
    for i, count in enumerate(counts):
        lo = edges[i - 1] if i > 0 else None
        hi = edges[i] if i < len(edges) else None
        out.append({"lo": lo, "hi": hi, "count": count})
    return out


def pr_line_histograms(merge_rows: Sequence[Mapping], bins: Sequence[int] = DEFAULT_LINE_BINS) -> dict:
    """Added / removed / net line histograms over merged PRs."""
    added = [int(r["added"]) for r in merge_rows]
    removed = [int(r["removed"]) for r in merge_rows]
    net = [a - b for a, b in zip(added, removed)]
    return {
        "added": histogram(added, bins),
        "removed": histogram(removed, bins),
        "net": histogram([abs(v) for v in net], bins),
        "net_negative": sum(1 for v in net if v < 0),
    }


def role_file_histograms(merge_rows: Sequence[Mapping], max_files: int = 16) -> dict:
    """Per-role distribution of files touched by merged PRs, split by file class."""
    out: dict[str, dict] = {}
    for row in merge_rows:
        role = row.get("author_role", "unknown")
        slot = out.setdefault(
            role,
            {
                "code_files": [0] * (max_files + 1),
                "coord_files": [0] * (max_files + 1),
                "net_lines": [],
            },
        )
        code = min(int(row.get("code_files", 0)), max_files)
        coord = min(int(row.get("coord_files", 0)), max_files)
        slot["code_files"][code] += 1
        slot["coord_files"][coord] += 1
        slot["net_lines"].append(int(row["added"]) - int(row["removed"]))
    return out
