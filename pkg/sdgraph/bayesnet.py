"""Bayesian network over binary entity/AVC variables: tabu structure search, CPTs, exact queries."""
from collections import deque
from dataclasses import dataclass
from itertools import permutations
import logging
import math
from typing import Any, Dict, List, Mapping, Sequence, Tuple

import networkx as nx
import numpy as np

from sdgraph.config import (
    CPT_SMOOTHING_ALPHA, ENUMERATION_LIMIT, RANDOM_SEED, SCORE_EPSILON, TABU_LIST_LENGTH,
    TABU_MAX_ITERATIONS, TABU_MAX_PARENTS, TABU_RANDOM_RESTARTS, TABU_RESTART_LENGTH,
)
from sdgraph.errors import (
    ConfigError, InputError, InvalidData, InvariantViolation, TooLarge, UnknownVariable,
    ZeroProbabilityEvidence,
)
from sdgraph.models import BnDataset

logger = logging.getLogger(__name__)

Move = Tuple[str, str, str]


@dataclass(frozen=True)
class TabuConfig:
    """Tabu search settings; the score is always BIC."""
    max_iterations: int = TABU_MAX_ITERATIONS
    tabu_list_length: int = TABU_LIST_LENGTH
    max_parents: int = TABU_MAX_PARENTS
    random_seed: int = RANDOM_SEED
    random_restarts: int = TABU_RANDOM_RESTARTS
    restart_length: int = TABU_RESTART_LENGTH

    def __post_init__(self):
        for name in ('max_iterations', 'tabu_list_length', 'max_parents', 'restart_length'):
            if getattr(self, name) <= 0:
                raise ConfigError(f"TabuConfig.{name} must be positive")
        if self.random_seed < 0 or self.random_restarts < 0:
            raise ConfigError("TabuConfig seed and restarts must be non-negative")


def parent_configurations(columns: np.ndarray) -> np.ndarray:
    """Row-wise parent assignment index; the first parent is the most significant bit."""
    k = columns.shape[1]
    if k == 0:
        return np.zeros(columns.shape[0], dtype=np.int64)
    weights = 1 << np.arange(k - 1, -1, -1, dtype=np.int64)
    return columns.astype(np.int64) @ weights


class BicScore:
    """Decomposable BIC with cached local scores."""

    def __init__(self, data: BnDataset):
        if len(data) == 0 or not data.variables:
            raise InvalidData("Structure learning needs at least one tuple and one variable")
        self.variables = data.variables
        self.values = data.tuples
        self.columns = {v: i for i, v in enumerate(data.variables)}
        self.sample_size = len(data)
        self._cache: Dict[Tuple[str, Tuple[str, ...]], float] = {}

    def counts(self, variable: str, parents: Sequence[str]) -> np.ndarray:
        """Counts shaped (2 ** len(parents), 2): rows are parent configurations."""
        x = self.values[:, self.columns[variable]].astype(np.int64)
        pa = self.values[:, [self.columns[p] for p in parents]]
        index = parent_configurations(pa) * 2 + x
        width = 2 ** (len(parents) + 1)
        return np.bincount(index, minlength=width).reshape(-1, 2)

    def local_score(self, variable: str, parents: Sequence[str]) -> float:
        key = (variable, tuple(sorted(parents)))
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        counts = self.counts(variable, key[1]).astype(float)
        totals = counts.sum(axis=1, keepdims=True)
        log_likelihoods = np.zeros_like(counts)
        np.log(counts, out=log_likelihoods, where=counts > 0)
        log_totals = np.zeros_like(totals)
        np.log(totals, out=log_totals, where=totals > 0)
        score = float(np.sum(counts * (log_likelihoods - log_totals)))
        score -= 0.5 * math.log(self.sample_size) * counts.shape[0]
        self._cache[key] = score
        return score

    def score(self, dag: nx.DiGraph) -> float:
        return sum(self.local_score(v, list(dag.predecessors(v))) for v in self.variables)


def empty_dag(variables: Sequence[str]) -> nx.DiGraph:
    dag = nx.DiGraph()
    dag.add_nodes_from(variables)
    return dag


def _score_deltas(dag: nx.DiGraph, scorer: BicScore) -> List[Tuple[float, Move]]:
    deltas: List[Tuple[float, Move]] = []
    local = scorer.local_score
    for x, y in permutations(scorer.variables, 2):
        if dag.has_edge(x, y):
            y_parents = list(dag.predecessors(y))
            x_parents = list(dag.predecessors(x))
            without = [p for p in y_parents if p != x]
            deltas.append((local(y, without) - local(y, y_parents), ('-', x, y)))
            deltas.append((
                local(y, without) + local(x, x_parents + [y])
                - local(y, y_parents) - local(x, x_parents),
                ('flip', x, y),
            ))
        elif not dag.has_edge(y, x):
            y_parents = list(dag.predecessors(y))
            deltas.append((local(y, y_parents + [x]) - local(y, y_parents), ('+', x, y)))
    return deltas


def _is_legal(dag: nx.DiGraph, move: Move, max_parents: int) -> bool:
    op, x, y = move
    if op == '+':
        return dag.in_degree(y) < max_parents and not nx.has_path(dag, y, x)
    if op == 'flip':
        if dag.in_degree(x) >= max_parents:
            return False
        dag.remove_edge(x, y)
        legal = not nx.has_path(dag, x, y)
        dag.add_edge(x, y)
        return legal
    return True


def _apply(dag: nx.DiGraph, move: Move) -> Move:
    """Apply a move in place and return the move that would undo it."""
    op, x, y = move
    if op == '+':
        dag.add_edge(x, y)
        return ('-', x, y)
    if op == '-':
        dag.remove_edge(x, y)
        return ('+', x, y)
    dag.remove_edge(x, y)
    dag.add_edge(y, x)
    return ('flip', y, x)


def _climb(
    dag: nx.DiGraph, scorer: BicScore, cfg: TabuConfig, score: float
) -> Tuple[nx.DiGraph, List[float]]:
    tabu: deque = deque(maxlen=cfg.tabu_list_length)
    trajectory = [score]
    for _ in range(cfg.max_iterations):
        ranked = sorted(
            (item for item in _score_deltas(dag, scorer) if item[0] > SCORE_EPSILON),
            key=lambda item: (-item[0], item[1]),
        )
        chosen = next(
            (item for item in ranked
             if item[1] not in tabu and _is_legal(dag, item[1], cfg.max_parents)),
            None,
        )
        if chosen is None:
            break
        delta, move = chosen
        tabu.append(_apply(dag, move))
        score += delta
        trajectory.append(score)
        logger.debug(f"Accepted {move} (+{delta:.4f}), BIC {score:.4f}")
    return dag, trajectory


def _random_moves(dag: nx.DiGraph, cfg: TabuConfig, rng: np.random.Generator) -> None:
    variables = sorted(dag.nodes)
    for _ in range(cfg.restart_length):
        moves = []
        for x, y in permutations(variables, 2):
            if dag.has_edge(x, y):
                moves += [('-', x, y), ('flip', x, y)]
            elif not dag.has_edge(y, x):
                moves.append(('+', x, y))
        legal = [m for m in moves if _is_legal(dag, m, cfg.max_parents)]
        if not legal:
            return
        _apply(dag, legal[int(rng.integers(len(legal)))])


def learn_structure(data: BnDataset, cfg: TabuConfig = TabuConfig()) -> nx.DiGraph:
    """Tabu hill-climbing over add/delete/reverse moves, starting from the empty graph.

    Only strictly improving moves are accepted, so the recorded score
    trajectory increases. The returned DAG carries ``score`` and
    ``trajectory`` in its graph attributes.
    """
    scorer = BicScore(data)
    start = empty_dag(data.variables)
    empty_score = scorer.score(start)
    best, trajectory = _climb(start, scorer, cfg, empty_score)
    best_score = trajectory[-1]

    rng = np.random.default_rng(cfg.random_seed)
    for restart in range(cfg.random_restarts):
        candidate = best.copy()
        _random_moves(candidate, cfg, rng)
        candidate, path = _climb(candidate, scorer, cfg, scorer.score(candidate))
        if path[-1] > best_score + SCORE_EPSILON:
            logger.info(f"Restart {restart + 1} improved BIC to {path[-1]:.4f}")
            best, best_score = candidate, path[-1]
            trajectory.append(best_score)

    if not nx.is_directed_acyclic_graph(best):
        raise InvariantViolation("Learned structure contains a cycle")
    if best_score < empty_score - SCORE_EPSILON:
        raise InvariantViolation("Learned structure scores below the empty graph")
    logger.info(
        f"Learned {best.number_of_edges()} edges over {len(data.variables)} variables; "
        f"BIC trajectory {[round(s, 4) for s in trajectory]}"
    )
    best.graph['score'] = best_score
    best.graph['trajectory'] = trajectory
    return best


@dataclass
class BayesNet:
    """Binary network; ``cpts[v][i]`` is P(v=1 | parent assignment i).

    Parent assignments follow binary-counter order with the first listed
    parent as the most significant bit.
    """
    variables: Tuple[str, ...]
    parents: Dict[str, Tuple[str, ...]]
    cpts: Dict[str, np.ndarray]

    def __post_init__(self):
        self.variables = tuple(self.variables)
        known = set(self.variables)
        if len(known) != len(self.variables):
            raise InvalidData("Duplicate variable names")
        dag = empty_dag(self.variables)
        for variable in self.variables:
            parents = tuple(self.parents.get(variable, ()))
            self.parents[variable] = parents
            unknown = set(parents) - known
            if unknown:
                raise UnknownVariable(f"Parents {sorted(unknown)} of {variable!r} are not variables")
            dag.add_edges_from((p, variable) for p in parents)
            cpt = np.asarray(self.cpts.get(variable), dtype=float)
            if cpt.shape != (2 ** len(parents),):
                raise InvalidData(f"CPT of {variable!r} must hold {2 ** len(parents)} entries")
            if np.any((cpt < 0) | (cpt > 1)):
                raise InvalidData(f"CPT of {variable!r} has entries outside [0, 1]")
            self.cpts[variable] = cpt
        if not nx.is_directed_acyclic_graph(dag):
            raise InvalidData("Parent graph is not acyclic")
        self.dag = dag

    def __contains__(self, variable: str) -> bool:
        return variable in self.parents

    def to_dict(self) -> Dict[str, Any]:
        return {
            'variables': list(self.variables),
            'parents': {v: list(self.parents[v]) for v in self.variables},
            'cpts': {v: [float(p) for p in self.cpts[v]] for v in self.variables},
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'BayesNet':
        try:
            return cls(
                tuple(data['variables']),
                {v: tuple(ps) for v, ps in data['parents'].items()},
                {v: np.asarray(p, dtype=float) for v, p in data['cpts'].items()},
            )
        except (KeyError, TypeError, AttributeError) as e:
            raise InputError(f"Malformed Bayesian network: {e}") from e


def fit_cpts(dag: nx.DiGraph, data: BnDataset, alpha: float = CPT_SMOOTHING_ALPHA) -> BayesNet:
    """Laplace-smoothed CPTs: (count(X=1, pa) + alpha) / (count(pa) + 2 alpha)."""
    if alpha <= 0:
        raise ConfigError(f"Smoothing alpha must be positive, got {alpha}")
    scorer = BicScore(data)
    parents = {v: tuple(sorted(dag.predecessors(v))) for v in data.variables}
    cpts = {}
    for variable in data.variables:
        counts = scorer.counts(variable, parents[variable]).astype(float)
        cpts[variable] = (counts[:, 1] + alpha) / (counts.sum(axis=1) + 2 * alpha)
    return BayesNet(data.variables, parents, cpts)


@dataclass
class Factor:
    scope: Tuple[str, ...]
    table: np.ndarray

    def reduce(self, evidence: Mapping[str, int]) -> 'Factor':
        index = tuple(evidence[v] if v in evidence else slice(None) for v in self.scope)
        scope = tuple(v for v in self.scope if v not in evidence)
        return Factor(scope, self.table[index])


def _cpt_factor(bn: BayesNet, variable: str) -> Factor:
    parents = bn.parents[variable]
    p = bn.cpts[variable].reshape((2,) * len(parents))
    return Factor(parents + (variable,), np.stack([1.0 - p, p], axis=-1))


def _contract(factors: Sequence[Factor], scope: Sequence[str]) -> Factor:
    labels: Dict[str, int] = {}
    operands: List[Any] = []
    for factor in factors:
        operands.append(factor.table)
        operands.append([labels.setdefault(v, len(labels)) for v in factor.scope])
    operands.append([labels[v] for v in scope])
    return Factor(tuple(scope), np.asarray(np.einsum(*operands)))


def _product(factors: Sequence[Factor], keep: Sequence[str]) -> Factor:
    """Multiply factors and sum out everything not in ``keep``.

    Scalar factors fold into a constant and the rest are multiplied two at a
    time, so the einsum operand count stays fixed however many factors remain.
    Variables are summed out as soon as no later factor mentions them.
    """
    constant = 1.0
    tables = []
    for factor in factors:
        if factor.scope:
            tables.append(factor)
        else:
            constant *= float(factor.table)
    present = {v for f in tables for v in f.scope}
    keep = tuple(v for v in keep if v in present)
    if not tables:
        return Factor((), np.asarray(constant))

    wanted = set(keep)
    later: List[set] = [set() for _ in tables]
    for i in range(len(tables) - 2, -1, -1):
        later[i] = later[i + 1] | set(tables[i + 1].scope)

    accumulated = tables[0]
    for i in range(1, len(tables)):
        union = dict.fromkeys((*accumulated.scope, *tables[i].scope))
        scope = [v for v in union if v in wanted or v in later[i]]
        accumulated = _contract([accumulated, tables[i]], scope)
    result = _contract([accumulated], keep)
    return Factor(keep, result.table * constant)


def _check_query(bn: BayesNet, target: str, evidence: Mapping[str, int]) -> Dict[str, int]:
    if target not in bn:
        raise UnknownVariable(f"Unknown query variable {target!r}")
    known = {}
    for name, value in evidence.items():
        if name not in bn:
            logger.warning(f"Dropping evidence {name!r}: not a network variable")
            continue
        if value not in (0, 1):
            raise InputError(f"Evidence {name}={value!r} is not binary")
        known[name] = int(value)
    return known


def query(bn: BayesNet, target: str, evidence: Mapping[str, int] | None = None) -> float:
    """Exact P(target=1 | evidence) by variable elimination.

    Barren variables are pruned to the ancestors of the target and evidence,
    then hidden variables are summed out in min-degree order, ties by name.
    """
    evidence = _check_query(bn, target, evidence or {})
    if target in evidence:
        return float(evidence[target])

    relevant = {target, *evidence}
    for variable in list(relevant):
        relevant |= nx.ancestors(bn.dag, variable)
    factors = [_cpt_factor(bn, v).reduce(evidence) for v in bn.variables if v in relevant]
    hidden = relevant - set(evidence) - {target}

    while hidden:
        def degree(variable: str) -> Tuple[int, str]:
            touching = {u for f in factors if variable in f.scope for u in f.scope}
            return (len(touching - {variable}), variable)

        variable = min(hidden, key=degree)
        hidden.remove(variable)
        involved = [f for f in factors if variable in f.scope]
        rest = [f for f in factors if variable not in f.scope]
        scope = sorted({u for f in involved for u in f.scope} - {variable})
        factors = rest + [_product(involved, scope)]

    result = _product(factors, [target])
    total = float(result.table.sum())
    if total <= 0.0:
        raise ZeroProbabilityEvidence(f"P(evidence) = 0 for {evidence}")
    return float(result.table[1] / total)


def enumerate_oracle(bn: BayesNet, target: str, evidence: Mapping[str, int] | None = None) -> float:
    """Reference P(target=1 | evidence) by summing the full joint distribution."""
    n = len(bn.variables)
    if n > ENUMERATION_LIMIT:
        raise TooLarge(f"Enumeration over {n} variables exceeds {ENUMERATION_LIMIT}")
    evidence = _check_query(bn, target, evidence or {})
    index = {v: i for i, v in enumerate(bn.variables)}

    states = (np.arange(2 ** n)[:, None] >> np.arange(n - 1, -1, -1)) & 1
    joint = np.ones(2 ** n)
    for variable in bn.variables:
        parents = bn.parents[variable]
        config = parent_configurations(states[:, [index[p] for p in parents]])
        p = bn.cpts[variable][config]
        joint *= np.where(states[:, index[variable]] == 1, p, 1.0 - p)

    mask = np.ones(2 ** n, dtype=bool)
    for name, value in evidence.items():
        mask &= states[:, index[name]] == value
    total = joint[mask].sum()
    if total <= 0.0:
        raise ZeroProbabilityEvidence(f"P(evidence) = 0 for {evidence}")
    return float(joint[mask & (states[:, index[target]] == 1)].sum() / total)


def bic_score(dag: nx.DiGraph, data: BnDataset) -> float:
    return BicScore(data).score(dag)


def all_dags(variables: Sequence[str]) -> List[nx.DiGraph]:
    """Every DAG over ``variables``; meant for tiny exhaustive checks."""
    pairs = [(a, b) for i, a in enumerate(variables) for b in variables[i + 1:]]
    dags = []
    for choice in np.ndindex(*(3,) * len(pairs)):
        dag = empty_dag(variables)
        for (a, b), c in zip(pairs, choice):
            if c == 1:
                dag.add_edge(a, b)
            elif c == 2:
                dag.add_edge(b, a)
        if nx.is_directed_acyclic_graph(dag):
            dags.append(dag)
    return dags
