"""Test configuration and fixtures."""
from itertools import product
import json
from pathlib import Path

import numpy as np
import pytest

from sdgraph.bayesnet import BayesNet
from sdgraph.ingest import Lexicon
from sdgraph.models import AnnotationRecord, DetectionSet, NodeKind
from sdgraph.ontology import ObjectMetaTable, SceneMetaTable, Taxonomy
from sdgraph.pipeline import RunConfig, build_kb
from sdgraph.reasoner import CompatRule
from sdgraph.semgraph import SceneDescriptionGraph, SemanticGraph


FIXTURE_TAXONOMY = [
    {'label': 'entity', 'count': 2},
    {'label': 'animate', 'parents': ['entity'], 'animate': True, 'count': 0},
    {'label': 'person', 'parents': ['animate'], 'animate': True, 'count': 4,
     'synonyms': ['boy', 'human'], 'is_generalization_class': True},
    {'label': 'dog', 'parents': ['animate'], 'animate': True, 'count': 4,
     'is_generalization_class': True},
    {'label': 'clothing', 'parents': ['entity'], 'count': 0, 'is_generalization_class': True},
    {'label': 'shorts', 'parents': ['clothing'], 'count': 2},
    {'label': 'trunk', 'parents': ['clothing'], 'count': 2},
    {'label': 'hat', 'parents': ['clothing'], 'count': 2},
]

SCENE_TAXONOMY = [
    {'label': 'entity', 'count': 1},
    {'label': 'organism', 'parents': ['entity'], 'count': 1},
    {'label': 'person', 'parents': ['organism'], 'animate': True, 'count': 10,
     'synonyms': ['boy', 'human'], 'is_generalization_class': True},
    {'label': 'man', 'parents': ['person'], 'animate': True, 'count': 5},
    {'label': 'dog', 'parents': ['organism'], 'animate': True, 'count': 5,
     'is_generalization_class': True},
    {'label': 'tree', 'parents': ['organism'], 'count': 4, 'is_generalization_class': True},
    {'label': 'artifact', 'parents': ['entity'], 'count': 1},
    {'label': 'clothing', 'parents': ['artifact'], 'count': 2, 'is_generalization_class': True},
    {'label': 'trunk', 'parents': ['clothing'], 'count': 3, 'is_generalization_class': True},
    {'label': 'shorts', 'parents': ['clothing'], 'count': 3, 'is_generalization_class': True},
    {'label': 'hat', 'parents': ['clothing'], 'count': 3, 'is_generalization_class': True},
    {'label': 'headband', 'parents': ['clothing'], 'count': 1, 'is_generalization_class': True},
    {'label': 'ball', 'parents': ['artifact'], 'count': 4, 'is_generalization_class': True},
    {'label': 'location', 'parents': ['entity'], 'count': 1},
    {'label': 'beach', 'parents': ['location'], 'count': 2, 'is_generalization_class': True},
    {'label': 'park', 'parents': ['location'], 'count': 2, 'is_generalization_class': True},
]

SCENE_OBJECT_META = {
    'person': {'synonyms': ['person'], 'hypernyms': ['organism'], 'animate': True},
    'dog': {'synonyms': ['dog'], 'hypernyms': ['organism'], 'animate': True},
    'swimming trunks': {'synonyms': ['trunk'], 'hypernyms': ['clothing'], 'animate': False},
    'sports ball': {'synonyms': ['ball'], 'hypernyms': ['artifact'], 'animate': False},
    'hat': {'synonyms': ['hat'], 'hypernyms': ['clothing'], 'animate': False},
}

SCENE_META = {
    'beach': {'synonyms': ['coast'], 'avcs': [
        {'name': 'water', 'prior': 0.9}, {'name': 'sand', 'prior': 0.8}]},
    'airport_terminal': {'synonyms': ['airport'], 'avcs': [
        {'name': 'waiting_room', 'prior': 0.7}, {'name': 'big_glass_view', 'prior': 0.4},
        {'name': 'people', 'prior': 0.8}]},
    'park': {'synonyms': [], 'avcs': [{'name': 'grass', 'prior': 0.8}, {'name': 'tree', 'prior': 0.7}]},
}

LEXICON = {
    'verbs': ['wear', 'climb', 'sniff', 'hold', 'chase', 'run', 'play', 'ride', 'sit'],
    'adjectives': ['wet', 'red'],
    'noun_lemmas': {'men': 'man'},
    'verb_lemmas': {'ran': 'run'},
    'ing_forms': {'lay': 'laying'},
    'plurals': {'person': 'people'},
    'plural_only': ['shorts', 'trunks'],
}

COMPAT_RULES = [
    {'edges': ['agent', 'recipient'], 'constraints': ['agent_must_be_animate', 'recipient_any']},
]

AVC_RULES = [{'avc': 'people', 'trigger': {'min_person_count': 2}}]


def _record(image_id, sentence_id, nodes, edges):
    return {
        'image_id': image_id,
        'sentence_id': sentence_id,
        'nodes': [{'id': i, 'label': label, 'kind': kind} for i, label, kind in nodes],
        'edges': [{'from': s, 'label': l, 'to': t} for s, l, t in edges],
    }


# Concept ids follow this order: 0 wear, 1 climb, 2 sniff, 3 hold, 4 chase, 5 wear at the beach.
SCENE_ANNOTATIONS = [
    _record('img1', 's0',
            [('e0', 'wear', 'Event'), ('n0', 'man', 'Entity'), ('n1', 'trunk', 'Entity')],
            [('e0', 'agent', 'n0'), ('e0', 'recipient', 'n1')]),
    _record('img2', 's0',
            [('e0', 'climb', 'Event'), ('n0', 'person', 'Entity'), ('n1', 'trunk', 'Entity'),
             ('n2', 'tree', 'Entity')],
            [('e0', 'agent', 'n0'), ('e0', 'recipient', 'n1'), ('n2', 'component', 'n1')]),
    _record('img3', 's0',
            [('e0', 'sniff', 'Event'), ('n0', 'dog', 'Entity'), ('n1', 'trunk', 'Entity')],
            [('e0', 'agent', 'n0'), ('e0', 'recipient', 'n1')]),
    _record('img4', 's0',
            [('e0', 'hold', 'Event'), ('n0', 'person', 'Entity'), ('n1', 'ball', 'Entity')],
            [('e0', 'agent', 'n0'), ('e0', 'recipient', 'n1')]),
    _record('img4', 's1',
            [('e0', 'chase', 'Event'), ('n0', 'dog', 'Entity'), ('n1', 'ball', 'Entity')],
            [('e0', 'agent', 'n0'), ('e0', 'recipient', 'n1')]),
    _record('img1', 's1',
            [('e0', 'wear', 'Event'), ('n0', 'person', 'Entity'), ('n1', 'trunk', 'Entity'),
             ('n2', 'beach', 'Entity')],
            [('e0', 'agent', 'n0'), ('e0', 'recipient', 'n1'), ('e0', 'location', 'n2')]),
]

TRAINING_DETECTIONS = [
    {'image_id': 'img1', 'scenes': [{'label': 'beach', 'score': 0.9}]},
    {'image_id': 'img2', 'scenes': [{'label': 'park', 'score': 0.8}]},
    {'image_id': 'img3', 'scenes': [{'label': 'park', 'score': 0.7}]},
    {'image_id': 'img4', 'scenes': [{'label': 'beach', 'score': 0.6}]},
]

TEST_DETECTIONS = [
    {'image_id': 't1',
     'objects': [
         {'label': 'person', 'box': [10, 10, 50, 120], 'score': 0.9},
         {'label': 'person', 'box': [80, 12, 40, 110], 'score': 0.7},
         {'label': 'swimming trunks', 'box': [20, 60, 30, 20], 'score': 0.8}],
     'scenes': [{'label': 'beach', 'score': 0.9}]},
    {'image_id': 't2',
     'objects': [
         {'label': 'dog', 'box': [5, 40, 60, 40], 'score': 0.9},
         {'label': 'sports ball', 'box': [90, 70, 10, 10], 'score': 0.8}],
     'scenes': [{'label': 'beach', 'score': 0.6}]},
    {'image_id': 't3', 'objects': [{'label': 'dog', 'box': [0, 0, 5, 5], 'score': 0.9}]},
]


# Sentence graphs over the packaged taxonomy; labels are lemmas before generalization.
PACKAGED_ANNOTATIONS = [
    _record(image_id, sentence_id,
            [('e0', verb, 'Event'), ('n0', agent, 'Entity'), ('n1', recipient, 'Entity')],
            [('e0', 'agent', 'n0'), ('e0', 'recipient', 'n1')])
    for image_id, sentence_id, agent, verb, recipient in [
        ('p01', 's0', 'man', 'wear', 'shirt'),
        ('p01', 's1', 'woman', 'wear', 'hat'),
        ('p02', 's0', 'dog', 'catch', 'frisbee'),
        ('p02', 's1', 'child', 'throw', 'frisbee'),
        ('p03', 's0', 'child', 'ride', 'bicycle'),
        ('p03', 's1', 'child', 'wear', 'hat'),
        ('p04', 's0', 'man', 'sit', 'chair'),
        ('p05', 's0', 'woman', 'hold', 'cat'),
        ('p06', 's0', 'person', 'ride', 'horse'),
        ('p06', 's1', 'person', 'wear', 'shorts'),
        ('p07', 's0', 'man', 'carry', 'luggage'),
        ('p08', 's0', 'dog', 'catch', 'ball'),
        ('p09', 's0', 'woman', 'drive', 'car'),
        ('p09', 's1', 'woman', 'wear', 'shirt'),
        ('p10', 's0', 'man', 'look', 'airplane'),
    ]
]

PACKAGED_SCENES = ['beach', 'park', 'street', 'bedroom', 'airport_terminal']

PACKAGED_TRAINING = [
    {'image_id': f"p{i:02d}", 'scenes': [{'label': PACKAGED_SCENES[(i - 1) % 5], 'score': 0.8}]}
    for i in range(1, 11)
]

# Detector class pairs for the 20-image corpus; even images also carry a faint hat.
PACKAGED_PAIRS = [
    ('person', 'sports ball'), ('dog', 'frisbee'), ('person', 'bicycle'), ('person', 'chair'),
    ('person', 'cat'), ('person', 'horse'), ('person', 'suitcase'), ('dog', 'sports ball'),
    ('person', 'car'), ('person', 'tie'), ('cat', 'bed'), ('horse', 'person'),
    ('person', 'airplane'), ('dog', 'person'), ('person', 'bench'), ('car', 'bicycle'),
    ('person', 'frisbee'), ('dog', 'cat'), ('person', 'potted plant'), ('person', 'dog'),
]


def _synthetic_detection(i, first, second):
    objects = [
        {'label': first, 'box': [10, 10, 40, 90], 'score': 0.9},
        {'label': second, 'box': [60, 30, 30, 30], 'score': 0.8},
    ]
    if i % 2 == 0:
        objects.append({'label': 'hat', 'box': [15, 5, 10, 8], 'score': 0.3})
    return {
        'image_id': f"s{i:02d}",
        'objects': objects,
        'scenes': [
            {'label': PACKAGED_SCENES[i % 5], 'score': 0.7},
            {'label': PACKAGED_SCENES[(i + 1) % 5], 'score': 0.2},
        ],
    }


SYNTHETIC_DETECTIONS = [_synthetic_detection(i, *pair) for i, pair in enumerate(PACKAGED_PAIRS)]


def _write_jsonl(path: Path, records) -> Path:
    path.write_text(''.join(json.dumps(r) + "\n" for r in records), encoding='utf-8')
    return path


@pytest.fixture
def fixture_taxonomy():
    """8-node taxonomy: root=16, animate=8, person=dog=4, clothing=6."""
    return Taxonomy(FIXTURE_TAXONOMY)


@pytest.fixture
def scene_taxonomy():
    return Taxonomy(SCENE_TAXONOMY)


@pytest.fixture
def object_meta(scene_taxonomy):
    return ObjectMetaTable.from_dict(SCENE_OBJECT_META, scene_taxonomy)


@pytest.fixture
def scene_meta():
    return SceneMetaTable.from_dict(SCENE_META)


@pytest.fixture
def lexicon():
    return Lexicon.from_dict(LEXICON)


@pytest.fixture
def compat_rules():
    return [CompatRule.from_dict(rule) for rule in COMPAT_RULES]


@pytest.fixture
def scene_records():
    return [AnnotationRecord.from_dict(r) for r in SCENE_ANNOTATIONS]


@pytest.fixture
def scene_kb(scene_records, scene_taxonomy):
    return build_kb(scene_records, scene_taxonomy)


@pytest.fixture
def make_sentence():
    """Build a sentence graph from (source, label, target) triples of ``Kind:label`` ids."""
    def build(*edges):
        graph = SemanticGraph()
        for source, label, target in edges:
            for node_id in (source, target):
                kind, _, name = node_id.partition(':')
                graph.add_node(node_id, name, NodeKind.parse(kind))
            graph.add_edge(source, label, target)
        return graph
    return build


@pytest.fixture
def two_avc_net():
    """o root 0.5; a1 with P(a1|o)=0.9 and P(a1|not o)=0.1; a2 independent 0.5."""
    return BayesNet(
        ('o', 'a1', 'a2'),
        {'a1': ('o',)},
        {'o': np.array([0.5]), 'a1': np.array([0.1, 0.9]), 'a2': np.array([0.5])},
    )


@pytest.fixture
def scene_net():
    return BayesNet(
        ('person', 'trunk', 'sand', 'water'),
        {},
        {
            'person': np.array([0.7]),
            'trunk': np.array([0.3]),
            'sand': np.array([0.6]),
            'water': np.array([0.8]),
        },
    )


@pytest.fixture
def random_network():
    """Factory for random binary networks with parents drawn from earlier variables."""
    def build(rng: np.random.Generator, n: int, max_parents: int = 3) -> BayesNet:
        variables = tuple(f"v{i}" for i in range(n))
        parents, cpts = {}, {}
        for i, variable in enumerate(variables):
            k = int(rng.integers(0, min(i, max_parents) + 1))
            chosen = rng.choice(i, size=k, replace=False) if k else []
            parents[variable] = tuple(variables[j] for j in sorted(chosen))
            cpts[variable] = rng.uniform(0.05, 0.95, size=2 ** k)
        return BayesNet(variables, parents, cpts)
    return build


@pytest.fixture
def synthetic_annotations():
    """100 seeded agent/verb/recipient sentence graphs over the scene taxonomy."""
    rng = np.random.default_rng(7)
    agents = ['person', 'man', 'dog', 'boy']
    verbs = ['wear', 'hold', 'chase', 'sniff', 'climb']
    recipients = ['trunk', 'hat', 'ball', 'shorts', 'tree']
    records = []
    for i in range(100):
        agent = agents[int(rng.integers(len(agents)))]
        verb = verbs[int(rng.integers(len(verbs)))]
        recipient = recipients[int(rng.integers(len(recipients)))]
        records.append(AnnotationRecord.from_dict(_record(
            f"img{i // 2}", f"s{i % 2}",
            [('e0', verb, 'Event'), ('n0', agent, 'Entity'), ('n1', recipient, 'Entity')],
            [('e0', 'agent', 'n0'), ('e0', 'recipient', 'n1')],
        )))
    return records


@pytest.fixture
def synthetic_sdgs():
    """50 distinct single-event scene description graphs keyed by image id."""
    rng = np.random.default_rng(11)
    combos = list(product(
        ['beach', 'park', 'street'],
        ['wear', 'hold', 'chase', 'sniff'],
        ['person', 'dog', 'man'],
        ['hat', 'ball', 'trunk', 'shorts'],
    ))
    graphs = {}
    for n, index in enumerate(rng.choice(len(combos), size=50, replace=False)):
        scene, verb, agent, recipient = combos[int(index)]
        sdg = SceneDescriptionGraph(scene)
        event = sdg.ensure(verb, NodeKind.EVENT)
        sdg.add_fact(event, 'agent', sdg.ensure(agent, NodeKind.ENTITY), 'iii')
        sdg.add_fact(event, 'recipient', sdg.ensure(recipient, NodeKind.ENTITY), 'iii')
        sdg.add_fact(event, 'location', sdg.scene_id, 'ii')
        graphs[f"img{n:02d}"] = sdg
    return graphs


@pytest.fixture
def resource_dir(tmp_path):
    """Scene fixture resources written to disk the way a run configuration expects."""
    directory = tmp_path / 'resources'
    directory.mkdir()
    files = {
        'taxonomy.json': SCENE_TAXONOMY,
        'object_meta.json': SCENE_OBJECT_META,
        'scene_meta.json': SCENE_META,
        'compat_rules.json': COMPAT_RULES,
        'avc_rules.json': AVC_RULES,
        'lexicon.json': LEXICON,
    }
    for name, data in files.items():
        (directory / name).write_text(json.dumps(data), encoding='utf-8')
    (directory / 'stopwords.txt').write_text("a\nthe\nis\n", encoding='utf-8')
    return directory


@pytest.fixture
def run_config(resource_dir, tmp_path):
    config_path = tmp_path / 'config.json'
    config_path.write_text(json.dumps({
        'resources': {
            'taxonomy': 'resources/taxonomy.json',
            'object_meta': 'resources/object_meta.json',
            'scene_meta': 'resources/scene_meta.json',
            'stopwords': 'resources/stopwords.txt',
            'compat_rules': 'resources/compat_rules.json',
            'avc_rules': 'resources/avc_rules.json',
            'lexicon': 'resources/lexicon.json',
        },
        'seed': 3,
        'workers': 2,
        'output_dir': 'out',
    }), encoding='utf-8')
    return config_path


@pytest.fixture
def input_files(tmp_path):
    """Annotation, detection, query and gold files for an end-to-end run."""
    inputs = tmp_path / 'inputs'
    inputs.mkdir()
    return {
        'annotations': _write_jsonl(inputs / 'annotations.jsonl', SCENE_ANNOTATIONS),
        'training': _write_jsonl(inputs / 'training.jsonl', TRAINING_DETECTIONS),
        'detections': _write_jsonl(inputs / 'detections.jsonl', TEST_DETECTIONS),
        'queries': _write_jsonl(inputs / 'queries.jsonl', [
            {'query_id': 'q1', 'image_id': 't1', 'sentence': 'a person is wearing a trunk'},
        ]),
        'gold': _write_jsonl(inputs / 'gold.jsonl', [
            {'image_id': 't1', 'entities': ['person', 'trunk'], 'events': ['wear']},
            {'image_id': 't2', 'entities': ['dog', 'ball'], 'events': ['chase']},
        ]),
    }


@pytest.fixture(scope='session')
def packaged_resources():
    """Resources parsed from the files shipped in sdgraph/data."""
    return RunConfig().load_resources()


@pytest.fixture
def packaged_records():
    return [AnnotationRecord.from_dict(r) for r in PACKAGED_ANNOTATIONS]


@pytest.fixture
def packaged_scenes():
    return {d['image_id']: DetectionSet.from_dict(d) for d in PACKAGED_TRAINING}


@pytest.fixture
def synthetic_detections():
    """20 detection sets over the packaged detector classes and scenes."""
    return [DetectionSet.from_dict(d) for d in SYNTHETIC_DETECTIONS]


@pytest.fixture
def packaged_files(tmp_path):
    """Input files and a run configuration that keeps the packaged resources."""
    inputs = tmp_path / 'packaged'
    inputs.mkdir()
    config_path = inputs / 'config.json'
    config_path.write_text(json.dumps({
        'max_variables': 12,
        'seed': 5,
        'workers': 4,
        'output_dir': 'out',
    }), encoding='utf-8')
    return {
        'config': config_path,
        'annotations': _write_jsonl(inputs / 'annotations.jsonl', PACKAGED_ANNOTATIONS),
        'training': _write_jsonl(inputs / 'training.jsonl', PACKAGED_TRAINING),
        'detections': _write_jsonl(inputs / 'detections.jsonl', SYNTHETIC_DETECTIONS),
    }
