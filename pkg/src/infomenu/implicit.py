"""Approximately optimal menus with only best-response oracle access.

The pipeline: discretize signal columns on a grid whose step keeps the
rounding loss below epsilon, learn per-type action sets by querying the
oracle across induced posteriors, solve the menu LP restricted to those
action sets with lazily separated deviation bounds, and finish with the
price-discount repair that turns an almost-incentive-compatible menu into an
exactly incentive-compatible one.

Also here: the signal-merging and entry-rounding transforms the guarantee
rests on, menu compression across nearby types, and price repair for menus
designed under misspecified type data.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import lp as lpmod
from .errors import (
    GridTooLarge,
    InvalidInstance,
    NonConvergence,
    NumericalFailure,
    PairingMismatch,
)
from .explicit import clean_experiment_matrix, optimal_prices
from .market import (
    AuditReport,
    BuyerType,
    Experiment,
    Menu,
    audit_menu,
    choose_from_menu,
)
from .oracles import BROracle, OracleMarket

log = logging.getLogger(__name__)

DEFAULT_GRID_CAP = 10**7
EXACT_IC_TOL = 1e-9          # observed violations below this count as exact
SEPARATION_TOL = 1e-8


def tv_distance(p, q) -> float:
    """Total variation distance between discrete distributions (half L1)."""
    return 0.5 * float(np.abs(np.asarray(p, dtype=float) - np.asarray(q, dtype=float)).sum())


def _half_down_bucket(x: np.ndarray, step: float) -> np.ndarray:
    """Nearest-multiple bucket indices with boundary ties to the lower bucket."""
    return np.ceil(x / step - 0.5).astype(np.int64)


def _lattice_key(vec: np.ndarray, steps: int) -> tuple:
    """Quantize a distribution onto the 1/steps simplex lattice by largest-
    remainder apportionment; the key identifies the nearest lattice point."""
    scaled = np.asarray(vec, dtype=float) * steps
    floors = np.floor(scaled).astype(np.int64)
    short = steps - int(floors.sum())
    order = np.argsort(-(scaled - floors), kind="stable")
    floors[order[:short]] += 1
    return tuple(floors)


def merge_signals(experiment: Experiment, epsilon: float) -> Experiment:
    """Merge signal columns whose normalized versions bucket together.

    Columns are normalized to unit mass, bucketed to multiples of
    epsilon/n_states, and summed per bucket; zero columns are dropped.  The
    owner's value drops by at most 2*epsilon and no type's value for the
    result exceeds its value for the input.
    """
    if not (0.0 < epsilon <= 1.0):
        raise InvalidInstance("epsilon must lie in (0, 1]")
    m = experiment.matrix
    n = experiment.n_states
    step = epsilon / n
    sums = m.sum(axis=0)
    buckets: dict[tuple, int] = {}
    merged: list[np.ndarray] = []
    for k in range(experiment.n_signals):
        if sums[k] <= 0.0:
            continue
        key = tuple(_half_down_bucket(m[:, k] / sums[k], step))
        if key in buckets:
            merged[buckets[key]] = merged[buckets[key]] + m[:, k]
        else:
            buckets[key] = len(merged)
            merged.append(m[:, k].copy())
    if not merged:
        raise InvalidInstance("experiment has no positive-mass column")
    return Experiment(np.column_stack(merged), row_mass=experiment.row_mass)


def round_experiment(experiment: Experiment, delta: float) -> Experiment:
    """Round entries to multiples of delta, keeping every row an exact unit
    by largest-remainder apportionment (remainder ties to the lower index)."""
    steps = 1.0 / delta
    n_steps = round(steps)
    if abs(steps - n_steps) > 1e-9:
        raise InvalidInstance("1/delta must be an integer")
    m = experiment.matrix
    out = np.empty_like(m)
    for w in range(experiment.n_states):
        scaled = m[w] * n_steps
        floors = np.floor(scaled).astype(np.int64)
        short = n_steps - int(floors.sum())
        remainders = scaled - floors
        # stable argsort descending: ties resolved toward lower index
        order = np.argsort(-remainders, kind="stable")
        floors[order[:short]] += 1
        out[w] = floors / n_steps
    return Experiment(out, row_mass=experiment.row_mass)


def eps_ic_to_ic(view, menu: Menu, epsilon: float) -> Menu:
    """Repair an almost-IC menu into an exactly IC and IR one by pricing.

    If the audited violations are numerically zero the menu passes through
    unchanged.  Otherwise every price becomes (1 - sqrt(eps)) * t - eps,
    floored at zero, and each type is reassigned its best choice; revenue
    falls by at most sqrt(eps) + eps plus the sqrt(eps) discount fraction.
    """
    if epsilon < 0:
        raise InvalidInstance("epsilon must be nonnegative")
    report = audit_menu(view, menu)
    observed = max(report.max_ic_violation, report.max_ir_violation)
    if observed > epsilon + 1e-7:
        raise InvalidInstance(
            f"menu violates constraints by {observed}, above the promised {epsilon}"
        )
    if observed <= EXACT_IC_TOL:
        return menu
    eta = math.sqrt(epsilon)
    new_entries = [
        (ex, max(0.0, (1.0 - eta) * price - epsilon)) for ex, price in menu.entries
    ]
    repaired = Menu(entries=new_entries)
    repaired.assignment = {
        tid: choose_from_menu(view, tid, repaired)[0] for tid in view.type_ids()
    }
    return repaired


@dataclass(frozen=True)
class SignalGrid:
    """The discretized column universe: entries are multiples of delta."""

    delta: float
    n_states: int

    @property
    def steps(self) -> int:
        return round(1.0 / self.delta)

    @property
    def n_columns(self) -> int:
        return (self.steps + 1) ** self.n_states


@dataclass
class ActionSets:
    """Per-type candidate actions discovered through oracle queries, with
    their per-state payoffs materialized for LP coefficient building."""

    actions: dict[str, list]                 # type id -> ordered opaque tokens
    utilities: dict[str, np.ndarray]         # type id -> (n_actions, n_states)

    def size(self, type_id: str) -> int:
        return len(self.actions[type_id])


def _bucket_count_bound(n_states: int, epsilon: float) -> int:
    """Upper bound on the number of merge buckets of normalized columns.

    Bucketed simplex points have integer index sums within a window of width
    n_states around 1/step; summing compositions over that window bounds the
    distinct bucket count from above (a safe overestimate: it only shrinks
    the grid step).
    """
    step = epsilon / n_states
    k = 1.0 / step
    lo = math.floor(k - n_states / 2.0) + 1
    hi = math.floor(k + n_states / 2.0)
    return sum(
        math.comb(s + n_states - 1, n_states - 1) for s in range(max(lo, 0), hi + 1)
    )


def schedule_delta(n_states: int, epsilon: float, grid_cap: int = DEFAULT_GRID_CAP) -> float:
    """Grid step: epsilon divided by the merge-bucket bound, clamped so the
    full column grid fits under ``grid_cap``.

    The clamp is admissible while delta stays below epsilon/(2*n_states):
    querying best responses on a posterior net of that resolution loses at
    most epsilon of value, which the repair budget already absorbs.  Beyond
    that (in particular for 4+ states at practical epsilon) the grid is
    genuinely too large and GridTooLarge is raised.
    """
    if not (0.0 < epsilon < 1.0):
        raise InvalidInstance("epsilon must lie in (0, 1)")
    buckets = _bucket_count_bound(n_states, epsilon)
    steps = math.ceil(buckets / epsilon)
    if (steps + 1) ** n_states <= grid_cap:
        return 1.0 / steps
    capped = int(grid_cap ** (1.0 / n_states))
    while (capped + 1) ** n_states > grid_cap:
        capped -= 1
    if capped < 1 or 1.0 / capped > epsilon / (2.0 * n_states):
        raise GridTooLarge(
            f"grid needs {(steps + 1) ** n_states} columns, cap is {grid_cap}"
        )
    log.info(
        "signal grid clamped: schedule step 1/%d exceeds cap, using 1/%d", steps, capped
    )
    return 1.0 / capped


def simplex_lattice(n_parts: int, resolution: int) -> np.ndarray:
    """All nonnegative integer vectors of length ``n_parts`` summing to
    ``resolution``, in lexicographic order."""
    if n_parts == 1:
        return np.array([[resolution]], dtype=np.int64)
    blocks = []
    for first in range(resolution + 1):
        rest = simplex_lattice(n_parts - 1, resolution - first)
        head = np.full((len(rest), 1), first, dtype=np.int64)
        blocks.append(np.hstack([head, rest]))
    return np.vstack(blocks)


def build_action_sets(
    oracle: BROracle,
    types: list[BuyerType],
    epsilon: float,
    *,
    grid_cap: int = DEFAULT_GRID_CAP,
    delta: float | None = None,
    threads: int = 1,
) -> tuple[ActionSets, SignalGrid]:
    """Discover the actions each type could best-respond with.

    For each type, the oracle is queried across a posterior net of grid
    resolution covering every posterior a grid column can induce (plus the
    prior itself); the distinct answers form that type's action set.
    """
    if not types:
        raise InvalidInstance("need at least one type")
    n_states = len(types[0].prior)
    for t in types:
        if len(t.prior) != n_states:
            raise InvalidInstance("types disagree on the state count")
    if delta is None:
        delta = schedule_delta(n_states, epsilon, grid_cap)
    grid = SignalGrid(delta, n_states)
    if grid.n_columns > grid_cap:
        raise GridTooLarge(f"{grid.n_columns} grid columns exceed cap {grid_cap}")

    def collect(bt: BuyerType) -> tuple[str, list, np.ndarray]:
        support = np.flatnonzero(bt.prior > 0.0)
        lattice = simplex_lattice(len(support), grid.steps)
        posteriors = np.zeros((len(lattice) + 1, n_states))
        posteriors[:-1, support] = lattice / grid.steps
        posteriors[-1] = bt.prior
        tokens, _ = oracle.respond_many(posteriors)
        seen: dict = {}
        ordered = []
        for tok in tokens:
            if tok not in seen:
                seen[tok] = True
                ordered.append(tok)
        utils = np.array(
            [[oracle.utility_of(tok, w) for w in range(n_states)] for tok in ordered]
        )
        return bt.id, ordered, utils

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(collect, types))
    else:
        results = [collect(bt) for bt in types]
    actions = {tid: toks for tid, toks, _ in results}
    utilities = {tid: utils for tid, _, utils in results}
    return ActionSets(actions, utilities), grid


@dataclass
class ImplicitResult:
    menu: Menu
    revenue: float
    report: AuditReport
    action_sets: ActionSets
    grid: SignalGrid
    lp_objective: float
    separation_rounds: int


def solve_implicit(
    oracle: BROracle,
    types: list[BuyerType],
    type_probs: dict[str, float],
    epsilon: float,
    *,
    grid_cap: int = DEFAULT_GRID_CAP,
    delta: float | None = None,
    threads: int = 1,
    max_rounds: int = 200,
    separation_tol: float = SEPARATION_TOL,
) -> ImplicitResult:
    """Oracle-driven menu optimization within epsilon-ish of optimal.

    Builds the restricted menu LP over each type's discovered action set and
    grows the deviation bounds lazily: after each solve, the oracle names the
    best deviating action against every signal of every experiment, and any
    bound it beats becomes a new constraint.  The extracted menu is re-priced
    on exactly audited values and passed through the 4*epsilon repair (a
    no-op whenever the solution is already exactly IC, the usual case).
    """
    market = OracleMarket(oracle, types, type_probs)
    action_sets, grid = build_action_sets(
        oracle, types, epsilon, grid_cap=grid_cap, delta=delta, threads=threads
    )
    k = len(types)
    n = grid.n_states
    sizes = [action_sets.size(t.id) for t in types]
    utils = [action_sets.utilities[t.id] for t in types]     # (|A_t|, n_states)
    priors = [t.prior for t in types]
    base = np.array([market.base(t.id) for t in types])

    prog = lpmod.LinearProgram(sense="max")
    for t in range(k):
        for w in range(n):
            for i in range(sizes[t]):
                prog.add_variable(f"pi[{t},{w},{i}]", 0.0, 1.0)
    for t in range(k):
        prog.add_variable(f"t[{t}]", None, None)
        prog.set_objective(f"t[{t}]", type_probs[types[t].id])
    for t in range(k):
        for t2 in range(k):
            for i in range(sizes[t2]):
                prog.add_variable(f"z[{i},{t},{t2}]", 0.0, None)

    def own_coeffs(t: int) -> dict[str, float]:
        return {
            f"pi[{t},{w},{i}]": priors[t][w] * utils[t][i, w]
            for w in range(n)
            for i in range(sizes[t])
            if priors[t][w] * utils[t][i, w] != 0.0
        }

    for t in range(k):
        own = own_coeffs(t)
        for t2 in range(k):
            coeffs = dict(own)
            coeffs[f"t[{t}]"] = coeffs.get(f"t[{t}]", 0.0) - 1.0
            for i in range(sizes[t2]):
                coeffs[f"z[{i},{t},{t2}]"] = -1.0
            coeffs[f"t[{t2}]"] = coeffs.get(f"t[{t2}]", 0.0) + 1.0
            prog.add_constraint(f"ic[{t},{t2}]", coeffs, lpmod.GE, 0.0)
        coeffs = own_coeffs(t)
        coeffs[f"t[{t}]"] = coeffs.get(f"t[{t}]", 0.0) - 1.0
        prog.add_constraint(f"ir[{t}]", coeffs, lpmod.GE, float(base[t]))
    for t in range(k):
        for w in range(n):
            prog.add_constraint(
                f"rowsum[{t},{w}]", {f"pi[{t},{w},{i}]": 1.0 for i in range(sizes[t])},
                lpmod.EQ, 1.0,
            )

    added: set[tuple] = set()
    sol = None
    rounds = 0
    while True:
        rounds += 1
        if rounds > max_rounds:
            raise NonConvergence(f"separation did not settle in {max_rounds} rounds")
        sol = lpmod.solve(prog, want_duals=False)
        if sol.status != "Optimal":
            raise NumericalFailure(f"restricted menu LP is {sol.status}")

        queries: list[tuple[int, int, int, float, np.ndarray]] = []
        for t2 in range(k):
            mat = np.array(
                [[sol.values[f"pi[{t2},{w},{i}]"] for i in range(sizes[t2])] for w in range(n)]
            )
            mat = np.clip(mat, 0.0, None)
            for t in range(k):
                weighted = mat * priors[t][:, None]
                masses = weighted.sum(axis=0)
                for i in range(sizes[t2]):
                    if masses[i] <= 1e-15:
                        continue
                    queries.append((t, t2, i, masses[i], weighted[:, i] / masses[i]))
        new_rows = 0
        stale_violation = 0.0
        if queries:
            beliefs = np.array([q[4] for q in queries])
            tokens, eus = oracle.respond_many(beliefs)
            for (t, t2, i, mass, _), tok, eu in zip(queries, tokens, eus):
                zval = sol.values[f"z[{i},{t},{t2}]"]
                if mass * eu - zval <= separation_tol:
                    continue
                key = (t, t2, i, tok)
                if key in added:
                    stale_violation = max(stale_violation, mass * eu - zval)
                    continue
                added.add(key)
                new_rows += 1
                coeffs = {f"z[{i},{t},{t2}]": 1.0}
                for w in range(n):
                    c = priors[t][w] * oracle.utility_of(tok, w)
                    if c != 0.0:
                        coeffs[f"pi[{t2},{w},{i}]"] = coeffs.get(f"pi[{t2},{w},{i}]", 0.0) - c
                prog.add_constraint(f"zlb[{len(added)}]", coeffs, lpmod.GE, 0.0)
        if new_rows == 0:
            if stale_violation > 10 * separation_tol:
                raise NumericalFailure(
                    f"existing deviation bound still violated by {stale_violation}"
                )
            break
    assert rounds <= len(added) + 1, "each non-final round must add a constraint"

    entries: list[tuple[Experiment, float]] = []
    for t in range(k):
        raw = np.array(
            [[sol.values[f"pi[{t},{w},{i}]"] for i in range(sizes[t])] for w in range(n)]
        )
        entries.append((Experiment(clean_experiment_matrix(raw)), 0.0))
    values = np.array(
        [[market.value(types[t].id, entries[t2][0]) for t2 in range(k)] for t in range(k)]
    )
    probs = np.array([type_probs[t.id] for t in types])
    prices = optimal_prices(values, base, probs)
    prices = np.clip(prices, 0.0, None)
    menu = Menu(
        entries=[(ex, float(p)) for (ex, _), p in zip(entries, prices)],
        assignment={types[t].id: t for t in range(k)},
    )
    repaired = eps_ic_to_ic(market, menu, 4.0 * epsilon)
    report = audit_menu(market, repaired)
    return ImplicitResult(
        menu=repaired,
        revenue=report.revenue,
        report=report,
        action_sets=action_sets,
        grid=grid,
        lp_objective=sol.objective_value,
        separation_rounds=rounds,
    )


def compress_menu(view, menu: Menu, epsilon: float) -> Menu:
    """Shrink a menu so its entry count depends only on the state count.

    Types are bucketed onto the epsilon/(n_states^2)-step simplex lattice
    (nearest lattice distribution, so bucketed types sit within
    epsilon/n_states of each other in total variation); every type in a
    bucket is handed the most expensive experiment among the bucket's
    assigned entries (first assignee wins price ties), after which the
    standard price repair restores exact IC and IR.
    """
    if menu.assignment is None:
        raise InvalidInstance("compression needs an assigned menu")
    tids = view.type_ids()
    n_states = len(view.prior(tids[0]))
    eps2 = epsilon / n_states
    steps = math.ceil(n_states / eps2)
    groups: dict[tuple, list[str]] = {}
    for tid in tids:
        key = _lattice_key(view.prior(tid), steps)
        groups.setdefault(key, []).append(tid)

    chosen_entry: dict[str, int] = {}
    used: list[int] = []
    for _, members in groups.items():
        rep = None
        rep_price = -np.inf
        for tid in members:
            idx = menu.assignment[tid]
            price = menu.entries[idx][1] if idx is not None else 0.0
            if price > rep_price:
                rep, rep_price = idx, price
        for tid in members:
            chosen_entry[tid] = rep
        if rep is not None and rep not in used:
            used.append(rep)

    remap = {old: new for new, old in enumerate(used)}
    squeezed = Menu(
        entries=[menu.entries[old] for old in used],
        assignment={
            tid: (remap[chosen_entry[tid]] if chosen_entry[tid] is not None else None)
            for tid in tids
        },
    )
    return eps_ic_to_ic(view, squeezed, 2.0 * n_states * eps2)


def repair_misspecified(
    true_view,
    menu: Menu,
    assumed_types: list[BuyerType],
    eps1: float,
    eps2: float,
) -> Menu:
    """Reprice a menu designed under perturbed types and type distribution.

    ``assumed_types`` must pair with the true types index by index within
    eps2 in total variation (eps1 bounds the distribution error and only
    affects the revenue guarantee, not the repair itself).  The repaired
    menu is exactly IC and IR under the true view; its true revenue trails
    the misspecified revenue by O(eps1 + sqrt(n_states * eps2)).
    """
    true_ids = true_view.type_ids()
    if len(assumed_types) != len(true_ids):
        raise PairingMismatch(
            f"{len(assumed_types)} assumed types vs {len(true_ids)} true types"
        )
    for at, tid in zip(assumed_types, true_ids):
        d = tv_distance(at.prior, true_view.prior(tid))
        if d > eps2 + 1e-12:
            raise PairingMismatch(
                f"assumed type {at.id} is {d} away from true type {tid}, above {eps2}"
            )
    n_states = len(true_view.prior(true_ids[0]))
    remapped = Menu(
        entries=list(menu.entries),
        assignment={
            tid: menu.assignment[at.id] for at, tid in zip(assumed_types, true_ids)
        }
        if menu.assignment is not None
        else None,
    )
    return eps_ic_to_ic(true_view, remapped, 2.0 * n_states * eps2)
