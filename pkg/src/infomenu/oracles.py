"""Best-response oracles: black boxes mapping beliefs to optimal actions.

An oracle answers two questions: "given this belief over states, which action
maximizes expected payoff, and what is that payoff?" and "what does a given
action pay in a given state?".  Action ids are opaque tokens (ints, edge
tuples, assignment bitmasks) so callers never need the global action count.

Three implementations: an explicit utility matrix, a two-state traffic
network answered by shortest paths under expected edge times, and satisfied-
clause maximization over CNF formulas answered by bounded brute force.
"""

from __future__ import annotations

import heapq
import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInstance, NoPath, TooLarge
from .market import BuyerType, Environment

SAT_BRUTE_FORCE_VARS = 24
_STREAM_VARS = 20          # cache per-state utility vectors up to this many vars


class BROracle:
    """Base class handling the query counter; subclasses implement _respond
    and utility_of.  The counter update is lock-protected so oracles can be
    shared across threads."""

    def __init__(self):
        self._lock = threading.Lock()
        self._queries = 0

    @property
    def query_count(self) -> int:
        with self._lock:
            return self._queries

    def _count(self, k: int = 1) -> None:
        with self._lock:
            self._queries += k

    def respond(self, belief) -> tuple[object, float]:
        self._count()
        return self._respond(np.asarray(belief, dtype=float))

    def respond_many(self, beliefs: np.ndarray) -> tuple[list[object], np.ndarray]:
        """Batched respond; equivalent to a loop but lets subclasses vectorize."""
        self._count(len(beliefs))
        actions, utilities = [], np.empty(len(beliefs))
        for r, b in enumerate(np.asarray(beliefs, dtype=float)):
            a, u = self._respond(b)
            actions.append(a)
            utilities[r] = u
        return actions, utilities

    def _respond(self, belief: np.ndarray) -> tuple[object, float]:
        raise NotImplementedError

    def utility_of(self, action_id, state: int) -> float:
        raise NotImplementedError


class MatrixOracle(BROracle):
    """Oracle over an explicit (states x actions) utility matrix; action ids
    are column indices, ties go to the lowest index."""

    def __init__(self, utility: np.ndarray):
        super().__init__()
        u = np.asarray(utility, dtype=float)
        if u.ndim != 2:
            raise InvalidInstance("utility matrix must be 2-d")
        if np.any(u < 0) or np.any(u > 1):
            raise InvalidInstance("utilities must lie in [0, 1]")
        self.utility = u

    @classmethod
    def for_type(cls, env: Environment, type_id: str) -> "MatrixOracle":
        return cls(env.utility[type_id])

    def _respond(self, belief: np.ndarray) -> tuple[int, float]:
        scores = belief @ self.utility
        a = int(np.argmax(scores))
        return a, float(scores[a])

    def respond_many(self, beliefs: np.ndarray) -> tuple[list[int], np.ndarray]:
        beliefs = np.asarray(beliefs, dtype=float)
        self._count(len(beliefs))
        scores = beliefs @ self.utility
        actions = np.argmax(scores, axis=1)
        return [int(a) for a in actions], scores[np.arange(len(beliefs)), actions]

    def utility_of(self, action_id: int, state: int) -> float:
        return float(self.utility[state, action_id])


@dataclass(eq=False)
class TrafficInstance:
    """Directed network with per-edge travel times under two states.

    Payoffs are (H - travel time) / H so they land in [0, 1]; H must cover
    the slowest path a best response could ever use.
    """

    n_vertices: int
    edges: list[tuple[int, int, float, float]]   # (u, v, time_state0, time_state1)
    source: int
    sink: int
    horizon: float

    def __post_init__(self):
        if self.horizon <= 0:
            raise InvalidInstance("horizon H must be positive")
        for u, v, t0, t1 in self.edges:
            if not (0 <= u < self.n_vertices and 0 <= v < self.n_vertices):
                raise InvalidInstance("edge endpoint out of range")
            if t0 < 0 or t1 < 0:
                raise InvalidInstance("travel times must be nonnegative")

    @property
    def times(self) -> np.ndarray:
        return np.array([[t0, t1] for _, _, t0, t1 in self.edges])


def parse_traffic(text: str) -> TrafficInstance:
    """Parse the edge-list format: first data line ``source sink H``, then
    one ``u v time_state0 time_state1`` line per edge.  '#' starts a comment."""
    lines = [ln.split("#")[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise InvalidInstance("empty traffic file")
    head = lines[0].split()
    if len(head) != 3:
        raise InvalidInstance("first line must be: source sink H")
    source, sink, horizon = int(head[0]), int(head[1]), float(head[2])
    edges = []
    hi = max(source, sink)
    for ln in lines[1:]:
        p = ln.split()
        if len(p) != 4:
            raise InvalidInstance(f"bad edge line {ln!r}")
        u, v, t0, t1 = int(p[0]), int(p[1]), float(p[2]), float(p[3])
        edges.append((u, v, t0, t1))
        hi = max(hi, u, v)
    return TrafficInstance(hi + 1, edges, source, sink, horizon)


def format_traffic(inst: TrafficInstance) -> str:
    lines = [f"{inst.source} {inst.sink} {inst.horizon!r}"]
    for u, v, t0, t1 in inst.edges:
        lines.append(f"{u} {v} {t0!r} {t1!r}")
    return "\n".join(lines) + "\n"


class TrafficOracle(BROracle):
    """Shortest-path best responses: expected congestion becomes the edge
    length.  Action ids are tuples of edge indices; among minimum-time paths
    the lexicographically smallest edge sequence is returned."""

    def __init__(self, instance: TrafficInstance):
        super().__init__()
        self.instance = instance
        self._out: list[list[int]] = [[] for _ in range(instance.n_vertices)]
        self._in: list[list[int]] = [[] for _ in range(instance.n_vertices)]
        for e, (u, v, _, _) in enumerate(instance.edges):
            self._out[u].append(e)
            self._in[v].append(e)
        self._times = instance.times

    def _dijkstra(self, weights: np.ndarray, start: int, forward: bool) -> np.ndarray:
        n = self.instance.n_vertices
        dist = np.full(n, np.inf)
        dist[start] = 0.0
        heap = [(0.0, start)]
        adj = self._out if forward else self._in
        edges = self.instance.edges
        while heap:
            d, u = heapq.heappop(heap)
            if d > dist[u]:
                continue
            for e in adj[u]:
                v = edges[e][1] if forward else edges[e][0]
                nd = d + weights[e]
                if nd < dist[v]:
                    dist[v] = nd
                    heapq.heappush(heap, (nd, v))
        return dist

    def _respond(self, belief: np.ndarray) -> tuple[tuple[int, ...], float]:
        if len(belief) != 2:
            raise InvalidInstance("traffic oracle supports exactly two states")
        inst = self.instance
        weights = self._times @ belief
        dist_s = self._dijkstra(weights, inst.source, True)
        dist_t = self._dijkstra(weights, inst.sink, False)
        total = dist_s[inst.sink]
        if not np.isfinite(total):
            raise NoPath("no source-sink path")
        # Greedy walk taking the smallest edge index that stays on a shortest
        # path; yields the lexicographically least optimal edge sequence.
        tol = 1e-9 * max(1.0, total)
        path: list[int] = []
        u = inst.source
        steps = 0
        while u != inst.sink:
            steps += 1
            if steps > len(inst.edges) + 1:
                raise NoPath("shortest-path reconstruction cycled")
            for e in self._out[u]:
                v = inst.edges[e][1]
                if abs(dist_s[u] + weights[e] + dist_t[v] - total) <= tol:
                    path.append(e)
                    u = v
                    break
            else:
                raise NoPath("shortest-path reconstruction stuck")
        expected_time = float(total)
        utility = (inst.horizon - expected_time) / inst.horizon
        if utility < -1e-12:
            raise InvalidInstance("horizon H smaller than an optimal path time")
        return tuple(path), utility

    def utility_of(self, action_id: tuple[int, ...], state: int) -> float:
        t = float(sum(self.instance.edges[e][2 + state] for e in action_id))
        return (self.instance.horizon - t) / self.instance.horizon


@dataclass
class CNF:
    """A boolean formula in conjunctive normal form over variables 1..n;
    clauses are lists of nonzero signed ints (DIMACS literal convention)."""

    num_vars: int
    clauses: list[list[int]] = field(default_factory=list)

    def __post_init__(self):
        for cl in self.clauses:
            if not cl:
                raise InvalidInstance("empty clause")
            for lit in cl:
                if lit == 0 or abs(lit) > self.num_vars:
                    raise InvalidInstance(f"literal {lit} out of range")


def parse_dimacs(text: str) -> CNF:
    num_vars = 0
    clauses: list[list[int]] = []
    for raw in text.splitlines():
        s = raw.strip()
        if not s or s.startswith("c") or s.startswith("%"):
            continue
        if s.startswith("p"):
            parts = s.split()
            if len(parts) < 4 or parts[1] != "cnf":
                raise InvalidInstance("only 'p cnf' headers are supported")
            num_vars = int(parts[2])
            continue
        lits = [int(x) for x in s.split() if x != "0"]
        if lits:
            clauses.append(lits)
            num_vars = max(num_vars, max(abs(l) for l in lits))
    if not clauses:
        raise InvalidInstance("CNF has no clauses")
    return CNF(num_vars, clauses)


def format_dimacs(cnf: CNF) -> str:
    lines = [f"p cnf {cnf.num_vars} {len(cnf.clauses)}"]
    for cl in cnf.clauses:
        lines.append(" ".join(str(l) for l in cl) + " 0")
    return "\n".join(lines) + "\n"


def satisfied_counts(cnf: CNF, assignment_ids: np.ndarray) -> np.ndarray:
    """Number of satisfied clauses for each assignment id.

    Assignment ids encode variable j (1-indexed) in bit (num_vars - j), so
    increasing id order is lexicographic order over (x_1, ..., x_n) with
    False < True.
    """
    ids = np.asarray(assignment_ids, dtype=np.int64)
    counts = np.zeros(len(ids), dtype=np.int32)
    for cl in cnf.clauses:
        sat = np.zeros(len(ids), dtype=bool)
        for lit in cl:
            bit = (ids >> (cnf.num_vars - abs(lit))) & 1
            sat |= (bit == 1) if lit > 0 else (bit == 0)
        counts += sat
    return counts


def assignment_bits(cnf_vars: int, action_id: int) -> list[bool]:
    return [bool((action_id >> (cnf_vars - j)) & 1) for j in range(1, cnf_vars + 1)]


def max_satisfiable(cnf: CNF, cap: int = _STREAM_VARS) -> int:
    """max_a (#satisfied clauses) by exhaustive enumeration."""
    if cnf.num_vars > cap:
        raise TooLarge(f"CNF has {cnf.num_vars} > {cap} variables")
    return int(satisfied_counts(cnf, np.arange(1 << cnf.num_vars)).max())


@dataclass(eq=False)
class IPSATInstance:
    """Per-state CNF formulas over shared variables; actions are assignments
    and the payoff in a state is the satisfied fraction of its formula."""

    formulas: list[CNF]
    type_prior: np.ndarray | None = None   # defaults to uniform over states

    def __post_init__(self):
        if not self.formulas:
            raise InvalidInstance("need at least one per-state formula")
        nv = {f.num_vars for f in self.formulas}
        if len(nv) != 1:
            raise InvalidInstance("formulas must share one variable set")
        self.num_vars = self.formulas[0].num_vars
        if self.type_prior is None:
            self.type_prior = np.full(len(self.formulas), 1.0 / len(self.formulas))

    @property
    def n_states(self) -> int:
        return len(self.formulas)


class SATOracle(BROracle):
    """Brute-force satisfied-fraction maximizer.

    Exhaustive over all assignments, capped at 24 variables; beyond the cap
    the query is refused since answering it is exactly the hard regime.
    Per-state utility vectors are cached up to 2^20 assignments and streamed
    in chunks above that.
    """

    def __init__(self, instance: IPSATInstance):
        super().__init__()
        if instance.num_vars > SAT_BRUTE_FORCE_VARS:
            raise TooLarge(
                f"{instance.num_vars} variables exceed the brute-force cap {SAT_BRUTE_FORCE_VARS}"
            )
        self.instance = instance
        self._cache: list[np.ndarray] | None = None
        if instance.num_vars <= _STREAM_VARS:
            total = 1 << instance.num_vars
            ids = np.arange(total)
            self._cache = [
                satisfied_counts(f, ids) / len(f.clauses) for f in instance.formulas
            ]

    def _respond(self, belief: np.ndarray) -> tuple[int, float]:
        inst = self.instance
        if len(belief) != inst.n_states:
            raise InvalidInstance("belief length does not match the state count")
        if self._cache is not None:
            scores = sum(b * u for b, u in zip(belief, self._cache))
            a = int(np.argmax(scores))
            return a, float(scores[a])
        total = 1 << inst.num_vars
        chunk = 1 << 20
        best_a, best_u = 0, -1.0
        for lo in range(0, total, chunk):
            ids = np.arange(lo, min(lo + chunk, total))
            scores = np.zeros(len(ids))
            for b, f in zip(belief, inst.formulas):
                if b != 0.0:
                    scores += b * (satisfied_counts(f, ids) / len(f.clauses))
            a = int(np.argmax(scores))
            if scores[a] > best_u + 1e-15:
                best_a, best_u = lo + a, float(scores[a])
        return best_a, best_u

    def utility_of(self, action_id: int, state: int) -> float:
        f = self.instance.formulas[state]
        return float(satisfied_counts(f, np.array([action_id]))[0]) / len(f.clauses)


def build_sat_reduction(cnf: CNF) -> IPSATInstance:
    """The two-state instance tying revenue to maximum satisfiability.

    A fresh switch variable y is appended; state 0 gets every clause with
    (or y) added plus (x1 or y), (not x1 or y); state 1 the same with y
    negated.  Both formulas have m + 2 clauses, and the single buyer type is
    uniform over the two states.
    """
    n = cnf.num_vars
    y = n + 1
    f0 = [cl + [y] for cl in cnf.clauses] + [[1, y], [-1, y]]
    f1 = [cl + [-y] for cl in cnf.clauses] + [[1, -y], [-1, -y]]
    return IPSATInstance(
        formulas=[CNF(y, f0), CNF(y, f1)],
        type_prior=np.array([0.5, 0.5]),
    )


def enumerate_environment(
    instance: IPSATInstance, type_id: str = "t0", max_vars: int = 12
) -> Environment:
    """Materialize an IP-SAT instance as an explicit environment.

    All 2^n assignments become explicit actions; refuse beyond ``max_vars``
    since the action count doubles per variable.
    """
    if instance.num_vars > max_vars:
        raise TooLarge(f"{instance.num_vars} variables exceed enumeration cap {max_vars}")
    total = 1 << instance.num_vars
    ids = np.arange(total)
    utility = np.stack(
        [satisfied_counts(f, ids) / len(f.clauses) for f in instance.formulas]
    )
    return Environment.build(
        states=[f"w{w}" for w in range(instance.n_states)],
        actions=[int(a) for a in ids],
        utility=utility,
        types=[BuyerType(type_id, np.asarray(instance.type_prior, dtype=float))],
        type_probs={type_id: 1.0},
    )


def oracle_value(oracle: BROracle, prior: np.ndarray, matrix: np.ndarray) -> float:
    """Value of an experiment matrix under ``prior``, evaluated via best-
    response queries (one per positive-mass signal)."""
    prior = np.asarray(prior, dtype=float)
    total = 0.0
    for k in range(matrix.shape[1]):
        weighted = prior * matrix[:, k]
        mass = float(weighted.sum())
        if mass <= 0.0:
            continue
        _, eu = oracle.respond(weighted / mass)
        total += mass * eu
    return total


class OracleMarket:
    """Market view backed by a best-response oracle (the implicit model).

    Exposes the same interface as Environment for menu auditing and repair:
    type ids, probabilities, base utilities, and experiment values, all
    answered through oracle queries.
    """

    def __init__(self, oracle: BROracle, types: list[BuyerType], type_probs: dict[str, float]):
        total = sum(type_probs.get(t.id, -1.0) for t in types)
        if abs(total - 1.0) > 1e-9 or any(type_probs.get(t.id, -1.0) < -1e-9 for t in types):
            raise InvalidInstance("type probabilities must be nonnegative and sum to 1")
        self.oracle = oracle
        self.types = list(types)
        self.type_probs = dict(type_probs)
        self._base: dict[str, float] = {}

    def type_ids(self) -> list[str]:
        return [t.id for t in self.types]

    def prior(self, type_id: str) -> np.ndarray:
        for t in self.types:
            if t.id == type_id:
                return t.prior
        raise KeyError(type_id)

    def prob(self, type_id: str) -> float:
        return self.type_probs[type_id]

    def base(self, type_id: str) -> float:
        if type_id not in self._base:
            _, eu = self.oracle.respond(self.prior(type_id))
            self._base[type_id] = eu
        return self._base[type_id]

    def value(self, type_id: str, experiment) -> float:
        return oracle_value(self.oracle, self.prior(type_id), experiment.matrix)
