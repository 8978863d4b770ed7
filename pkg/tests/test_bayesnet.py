import networkx as nx
import numpy as np
import pytest

from sdgraph.bayesnet import (
    BayesNet, BicScore, TabuConfig, all_dags, bic_score, empty_dag, enumerate_oracle, fit_cpts,
    learn_structure, parent_configurations, query,
)
from sdgraph.config import BN_MAX_VARIABLES
from sdgraph.errors import ConfigError, InputError, InvalidData, TooLarge, UnknownVariable
from sdgraph.models import BnDataset


def balanced_dataset():
    """Y copies X, Z is independent of both, every (X, Z) pair appears 25 times."""
    tuples = [[x, x, z] for x in (0, 1) for z in (0, 1) for _ in range(25)]
    return BnDataset.from_tuples(('x', 'y', 'z'), tuples)


def test_parent_configurations_msb_first():
    """Test that the first parent column is the most significant bit."""
    columns = np.array([[0, 0], [0, 1], [1, 0], [1, 1]])
    assert parent_configurations(columns).tolist() == [0, 1, 2, 3]
    assert parent_configurations(np.zeros((3, 0))).tolist() == [0, 0, 0]


def test_query_simple_chain(two_avc_net):
    """Test conditional and marginal queries on a two-node chain."""
    assert query(two_avc_net, 'a1', {'o': 1}) == pytest.approx(0.9)
    assert query(two_avc_net, 'a1', {'o': 0}) == pytest.approx(0.1)
    assert query(two_avc_net, 'a1') == pytest.approx(0.5)
    assert query(two_avc_net, 'o', {'a1': 1}) == pytest.approx(0.9)
    assert query(two_avc_net, 'a2', {'o': 1, 'a1': 1}) == pytest.approx(0.5)


def test_query_target_in_evidence(two_avc_net):
    """Test that a target fixed by evidence returns the evidence value."""
    assert query(two_avc_net, 'a1', {'a1': 1}) == 1.0
    assert query(two_avc_net, 'a1', {'a1': 0}) == 0.0


def test_query_drops_unknown_evidence(two_avc_net, caplog):
    """Test that evidence on unknown variables is dropped with a warning."""
    assert query(two_avc_net, 'a1', {'o': 1, 'zebra': 1}) == pytest.approx(0.9)
    assert "Dropping evidence 'zebra'" in caplog.text


def test_query_errors(two_avc_net):
    """Test unknown targets and non-binary evidence."""
    with pytest.raises(UnknownVariable):
        query(two_avc_net, 'zebra')
    with pytest.raises(InputError):
        query(two_avc_net, 'a1', {'o': 2})


def test_query_v_structure():
    """Test explaining away against the enumeration oracle."""
    bn = BayesNet(
        ('rain', 'sprinkler', 'wet'),
        {'wet': ('rain', 'sprinkler')},
        {
            'rain': np.array([0.2]),
            'sprinkler': np.array([0.4]),
            'wet': np.array([0.01, 0.8, 0.9, 0.99]),
        },
    )
    for evidence in ({}, {'wet': 1}, {'wet': 1, 'sprinkler': 1}, {'wet': 0}):
        assert query(bn, 'rain', evidence) == pytest.approx(
            enumerate_oracle(bn, 'rain', evidence), abs=1e-12
        )
    assert query(bn, 'rain', {'wet': 1, 'sprinkler': 1}) < query(bn, 'rain', {'wet': 1})


def test_query_matches_enumeration(random_network):
    """Test variable elimination against full enumeration on 1000 random networks."""
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        bn = random_network(rng, int(rng.integers(1, 13)))
        target = bn.variables[int(rng.integers(len(bn.variables)))]
        observed = [v for v in bn.variables if v != target and rng.random() < 0.3]
        evidence = {v: int(rng.integers(2)) for v in observed}
        p = query(bn, target, evidence)
        assert p == pytest.approx(enumerate_oracle(bn, target, evidence), abs=1e-9)
        assert 0.0 <= p <= 1.0


def test_query_with_many_independent_observed_roots():
    """Test that 70 observed roots leave the target at its prior."""
    variables = tuple(f"v{i:02d}" for i in range(70))
    bn = BayesNet(variables, {}, {v: np.array([0.3]) for v in variables})
    evidence = {v: 1 for v in variables[1:]}
    assert query(bn, 'v00', evidence) == pytest.approx(0.3)


def test_query_at_variable_cap_with_observed_children():
    """Test a hub with every other capped variable observed as its child."""
    variables = tuple(f"v{i:02d}" for i in range(BN_MAX_VARIABLES))
    parents = {v: ('v00',) for v in variables[1:]}
    cpts = {'v00': np.array([0.5]), **{v: np.array([0.4, 0.6]) for v in variables[1:]}}
    bn = BayesNet(variables, parents, cpts)
    evidence = {v: 1 for v in variables[1:]}
    odds = (0.6 / 0.4) ** (BN_MAX_VARIABLES - 1)
    assert query(bn, 'v00', evidence) == pytest.approx(odds / (1.0 + odds))
    half = {v: i % 2 for i, v in enumerate(variables[1:])}
    assert query(bn, 'v00', half) == pytest.approx(0.4)


def test_query_hidden_hub_with_many_children():
    """Test eliminating a hidden variable that touches 40 factors."""
    variables = ('hub', *(f"c{i:02d}" for i in range(40)), 'target')
    parents = {**{v: ('hub',) for v in variables[1:-1]}, 'target': ('hub',)}
    cpts = {'hub': np.array([0.3]), **{v: np.array([0.2, 0.7]) for v in variables[1:]}}
    bn = BayesNet(variables, parents, cpts)
    evidence = {v: 1 for v in variables[1:-1]}
    like_on = 0.3 * 0.7 ** 40
    like_off = 0.7 * 0.2 ** 40
    expected = (like_on * 0.7 + like_off * 0.2) / (like_on + like_off)
    assert query(bn, 'target', evidence) == pytest.approx(expected)


def test_enumerate_oracle_too_large():
    """Test that enumeration refuses networks above the variable limit."""
    variables = tuple(f"v{i}" for i in range(21))
    bn = BayesNet(variables, {}, {v: np.array([0.5]) for v in variables})
    with pytest.raises(TooLarge):
        enumerate_oracle(bn, 'v0')
    assert query(bn, 'v0', {'v1': 1}) == pytest.approx(0.5)


def test_bayesnet_validation():
    """Test CPT shape, range and acyclicity checks."""
    with pytest.raises(InvalidData, match='entries'):
        BayesNet(('a', 'b'), {'b': ('a',)}, {'a': np.array([0.5]), 'b': np.array([0.5])})
    with pytest.raises(InvalidData, match='outside'):
        BayesNet(('a',), {}, {'a': np.array([1.5])})
    with pytest.raises(InvalidData, match='acyclic'):
        BayesNet(
            ('a', 'b'), {'a': ('b',), 'b': ('a',)},
            {'a': np.array([0.5, 0.5]), 'b': np.array([0.5, 0.5])},
        )
    with pytest.raises(UnknownVariable):
        BayesNet(('a',), {'a': ('ghost',)}, {'a': np.array([0.5, 0.5])})


def test_bayesnet_dict_round_trip(two_avc_net):
    """Test that serialization keeps parents and CPT values."""
    restored = BayesNet.from_dict(two_avc_net.to_dict())
    assert restored.parents == two_avc_net.parents
    for variable in restored.variables:
        assert restored.cpts[variable].tolist() == two_avc_net.cpts[variable].tolist()
    with pytest.raises(InputError):
        BayesNet.from_dict({'variables': ['a']})


def test_fit_cpts_laplace_smoothing():
    """Test the smoothed estimate (count + alpha) / (total + 2 alpha)."""
    data = BnDataset.from_tuples(('a',), [[1], [1], [1], [0]])
    bn = fit_cpts(empty_dag(('a',)), data, alpha=1.0)
    assert bn.cpts['a'][0] == pytest.approx(4 / 6)


def test_fit_cpts_unseen_parent_configuration():
    """Test that a parent configuration never observed gets 0.5."""
    data = BnDataset.from_tuples(('x', 'y'), [[0, 1], [0, 0], [0, 1]])
    dag = empty_dag(('x', 'y'))
    dag.add_edge('x', 'y')
    bn = fit_cpts(dag, data)
    assert bn.parents['y'] == ('x',)
    assert bn.cpts['y'][1] == pytest.approx(0.5)
    assert bn.cpts['y'][0] == pytest.approx(3 / 5)


def test_fit_cpts_small_alpha():
    """Test that a tiny alpha approaches the maximum-likelihood estimate."""
    data = BnDataset.from_tuples(('a',), [[1], [1]])
    bn = fit_cpts(empty_dag(('a',)), data, alpha=1e-6)
    assert bn.cpts['a'][0] == pytest.approx(1.0, abs=1e-5)
    with pytest.raises(ConfigError):
        fit_cpts(empty_dag(('a',)), data, alpha=0.0)


def test_bic_local_score_is_cached():
    """Test that the BIC of a DAG is the sum of cached local scores."""
    data = balanced_dataset()
    scorer = BicScore(data)
    dag = empty_dag(data.variables)
    dag.add_edge('x', 'y')
    total = scorer.score(dag)
    assert total == pytest.approx(
        scorer.local_score('x', []) + scorer.local_score('y', ['x']) + scorer.local_score('z', [])
    )
    assert ('y', ('x',)) in scorer._cache
    assert bic_score(dag, data) == pytest.approx(total)


def test_learn_structure_independent_variables():
    """Test that exactly balanced independent variables stay unconnected."""
    tuples = [[a, b] for a in (0, 1) for b in (0, 1) for _ in range(25)]
    dag = learn_structure(BnDataset.from_tuples(('a', 'b'), tuples))
    assert dag.number_of_edges() == 0


def test_learn_structure_finds_dependency():
    """Test that a copied variable is connected to its source."""
    rng = np.random.default_rng(5)
    x = rng.integers(0, 2, size=100)
    data = BnDataset.from_tuples(('x', 'y'), np.column_stack([x, x]).tolist())
    dag = learn_structure(data)
    assert dag.number_of_edges() == 1
    assert dag.has_edge('x', 'y') or dag.has_edge('y', 'x')


def test_learn_structure_reaches_exhaustive_optimum():
    """Test the learned BIC against every DAG over three variables."""
    data = balanced_dataset()
    dags = all_dags(data.variables)
    assert len(dags) == 25
    best = max(bic_score(d, data) for d in dags)
    learned = learn_structure(data)
    assert learned.graph['score'] == pytest.approx(best, abs=1e-9)
    assert bic_score(learned, data) == pytest.approx(best, abs=1e-9)
    assert {frozenset(e) for e in learned.edges} == {frozenset(('x', 'y'))}


def test_learn_structure_invariants_over_seeds():
    """Test acyclicity, the parent cap and a rising trajectory for 100 seeds."""
    for seed in range(100):
        rng = np.random.default_rng(seed)
        tuples = rng.integers(0, 2, size=(40, 5))
        tuples[:, 1] = tuples[:, 0] ^ (rng.random(40) < 0.1)
        data = BnDataset.from_tuples(('a', 'b', 'c', 'd', 'e'), tuples.tolist())
        cfg = TabuConfig(max_parents=2, random_seed=seed, random_restarts=2)
        dag = learn_structure(data, cfg)
        assert nx.is_directed_acyclic_graph(dag)
        assert max(d for _, d in dag.in_degree()) <= 2
        trajectory = dag.graph['trajectory']
        assert all(b > a for a, b in zip(trajectory, trajectory[1:]))
        assert dag.graph['score'] >= bic_score(empty_dag(data.variables), data) - 1e-9


def test_learn_structure_deterministic():
    """Test that the same seed yields the same structure."""
    rng = np.random.default_rng(9)
    tuples = rng.integers(0, 2, size=(30, 4)).tolist()
    data = BnDataset.from_tuples(('a', 'b', 'c', 'd'), tuples)
    cfg = TabuConfig(random_seed=3, random_restarts=3)
    assert sorted(learn_structure(data, cfg).edges) == sorted(learn_structure(data, cfg).edges)


def test_learn_structure_rejects_empty_data():
    """Test that structure learning needs tuples."""
    with pytest.raises(InvalidData):
        learn_structure(BnDataset.from_tuples(('a',), []))


def test_tabu_config_validation():
    """Test that non-positive search limits are refused."""
    with pytest.raises(ConfigError):
        TabuConfig(max_iterations=0)
    with pytest.raises(ConfigError):
        TabuConfig(random_restarts=-1)
