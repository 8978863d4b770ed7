"""Per-image reasoning: AVC inference, rectification, event search, SDG construction, concept ranking."""
from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations
import json
import logging
import math
from pathlib import Path
from typing import (
    AbstractSet, Any, Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple,
)

from sdgraph.bayesnet import BayesNet, query
from sdgraph.config import (
    ALPHA_HIGH, ALPHA_LOW, AVC_FREQ_THRESHOLD, EDGE_VOCABULARY, EPSILON_MISSING,
    MAX_CHAIN_EVENTS, MAX_CONNECTING_CHAINS,
)
from sdgraph.errors import ConfigError, InputError, NoScene, UnknownEntity, UnparseablePhrase
from sdgraph.ingest import Lexicon, split_constituent
from sdgraph.models import DetectionSet, NodeKind, ScoredLabel
from sdgraph.nlg import SentenceRealizer
from sdgraph.ontology import ObjectMetaTable, SceneMetaTable, Taxonomy
from sdgraph.semgraph import (
    Concept, Edge, EventChain, KnowledgeBase, SceneDescriptionGraph, find_connecting_events,
    generalize, node_key, shortest_event_path,
)
from sdgraph.utils import geometric_mean

logger = logging.getLogger(__name__)

ROLE_CONSTRAINTS = ('_must_be_animate', '_must_be_inanimate', '_any')


@dataclass(frozen=True)
class ReasonerConfig:
    alpha_h: float = ALPHA_HIGH
    alpha_l: float = ALPHA_LOW
    avc_freq_threshold: int = AVC_FREQ_THRESHOLD
    max_chain_events: int = MAX_CHAIN_EVENTS
    epsilon_missing: float = EPSILON_MISSING
    max_chains: int = MAX_CONNECTING_CHAINS

    def __post_init__(self):
        if not 0.0 <= self.alpha_l < self.alpha_h <= 1.0:
            raise ConfigError(
                f"Thresholds must satisfy 0 <= alpha_l < alpha_h <= 1, "
                f"got {self.alpha_l} and {self.alpha_h}"
            )
        if not 0.0 < self.epsilon_missing <= 1.0:
            raise ConfigError(f"epsilon_missing must lie in (0, 1], got {self.epsilon_missing}")
        if self.max_chain_events < 1 or self.max_chains < 1 or self.avc_freq_threshold < 0:
            raise ConfigError("Chain limits must be positive and the AVC threshold non-negative")


@dataclass(frozen=True)
class CompatRule:
    """Allowed pair of edge labels joining an event to two entities."""
    edge_label_pair: Tuple[str, str]
    constraints: Tuple[str, ...] = ()

    @classmethod
    def from_dict(
        cls, data: Mapping[str, Any], edge_vocabulary: AbstractSet[str] = EDGE_VOCABULARY
    ) -> 'CompatRule':
        try:
            first, second = data['edges']
        except (KeyError, TypeError, ValueError) as e:
            raise InputError(f"Compatibility rule needs two edge labels: {data}") from e
        rule = cls((first, second), tuple(data.get('constraints', [])))
        for label in rule.edge_label_pair:
            if label not in edge_vocabulary:
                raise InputError(f"Compatibility rule uses unknown edge label {label!r}")
        for constraint in rule.constraints:
            role, requirement = _split_constraint(constraint)
            if role not in rule.edge_label_pair:
                raise InputError(f"Constraint {constraint!r} names a role outside {rule.edge_label_pair}")
        return rule

    def satisfied(self, roles: Mapping[str, str], is_animate: Callable[[str], bool]) -> bool:
        """``roles`` maps each edge label of the pair to the entity playing it."""
        for constraint in self.constraints:
            role, requirement = _split_constraint(constraint)
            if requirement == '_must_be_animate' and not is_animate(roles[role]):
                return False
            if requirement == '_must_be_inanimate' and is_animate(roles[role]):
                return False
        return True


def _split_constraint(constraint: str) -> Tuple[str, str]:
    for suffix in ROLE_CONSTRAINTS:
        if constraint.endswith(suffix):
            return constraint[:-len(suffix)], suffix
    raise InputError(f"Unknown constraint {constraint!r}")


def load_compat_rules(
    path: Path, edge_vocabulary: AbstractSet[str] = EDGE_VOCABULARY
) -> List[CompatRule]:
    try:
        data = json.loads(Path(path).read_text(encoding='utf-8'))
    except (OSError, json.JSONDecodeError) as e:
        raise InputError(f"Cannot read compatibility rules {path}: {e}") from e
    return [CompatRule.from_dict(rule, edge_vocabulary) for rule in data]


@dataclass(frozen=True)
class RankedConcept:
    concept: Concept
    match_counter: int
    joint_score: float

    @property
    def concept_id(self) -> int:
        return self.concept.concept_id

    def to_dict(self) -> Dict[str, Any]:
        return {
            'concept_id': self.concept_id,
            'counter': self.match_counter,
            'joint_score': self.joint_score,
        }


@dataclass
class AvcInference:
    """Selected AVCs in selection order with the entropy of each accepted step."""
    c_inf: List[str] = field(default_factory=list)
    entropies: List[float] = field(default_factory=list)


@dataclass
class EventSelection:
    """Events surviving both filters, their compatible edges and the linked entities."""
    chains: List[EventChain] = field(default_factory=list)
    edges: Dict[str, Set[Edge]] = field(default_factory=dict)
    support: Counter = field(default_factory=Counter)
    o_ev: Set[str] = field(default_factory=set)

    @property
    def events(self) -> List[str]:
        return sorted(self.edges)


def collect_freq_avcs(
    scenes: Sequence[ScoredLabel],
    scene_meta: SceneMetaTable,
    threshold: int = AVC_FREQ_THRESHOLD,
) -> List[str]:
    """AVCs listed by more than ``threshold`` detected scenes.

    When none qualifies, the AVC list of the best-scoring scene known to
    S_M is used instead.
    """
    if not scenes:
        raise NoScene("No scene detections")
    counts: Counter = Counter()
    known = []
    for scene in scenes:
        meta = scene_meta.resolve(scene.label)
        if meta is None:
            logger.warning(f"Scene {scene.label!r} not in S_M, skipped")
            continue
        known.append(meta)
        counts.update(meta.avc_names)
    frequent = sorted(avc for avc, n in counts.items() if n > threshold)
    if frequent or not known:
        return frequent
    return sorted(known[0].avc_names)


def _avc_probabilities(
    candidates: Iterable[str], evidence: Mapping[str, int], bn: BayesNet
) -> Dict[str, float]:
    return {s: 1.0 if s in evidence else query(bn, s, evidence) for s in candidates}


def _entropy(probabilities: Iterable[float]) -> float:
    return sum(-p * math.log(p) for p in probabilities if p > 0.0)


def infer_avcs(
    c_freq: Iterable[str],
    o_img: Iterable[str],
    bn: BayesNet,
) -> AvcInference:
    """Greedy entropy-driven AVC selection.

    Each round picks the candidate with the highest P(s | C_inf, O_img), ties
    by name, and stops once the candidate entropy stops decreasing.
    """
    pool = set()
    for avc in c_freq:
        if avc in bn:
            pool.add(avc)
        else:
            logger.warning(f"AVC {avc!r} is not a network variable, removed from candidates")
    evidence = {o: 1 for o in o_img if o in bn}
    result = AvcInference()
    previous = math.inf
    while pool:
        probabilities = _avc_probabilities(sorted(pool), evidence, bn)
        best = min(probabilities, key=lambda s: (-probabilities[s], s))
        entropy = _entropy(probabilities.values())
        if entropy > previous:
            break
        previous = entropy
        pool.remove(best)
        result.c_inf.append(best)
        result.entropies.append(entropy)
        evidence[best] = 1
        logger.debug(f"Inferred AVC {best!r}, entropy {entropy:.6f}")
    return result


def rectify_objects(
    low: Sequence[Tuple[str, float]],
    o_img: Sequence[str],
    c_inf: Sequence[str],
    taxonomy: Taxonomy,
    bn: BayesNet,
    object_meta: Optional[ObjectMetaTable] = None,
) -> List[str]:
    """Replace each low-confidence entity by its most probable sibling.

    Siblings are lifted to their generalization class, the label space the
    network variables live in, before they are scored.
    """
    result = list(o_img)
    for label, score in sorted(low, key=lambda item: (-item[1], item[0])):
        lemma = object_meta.taxonomy_label(label) if object_meta else taxonomy.resolve(label)
        if lemma is None:
            logger.debug(f"Low-confidence {label!r} not in taxonomy, dropped")
            continue
        siblings = sorted(
            {taxonomy.superclass_of(s) for s in taxonomy.siblings_of(lemma)} & set(bn.variables)
        )
        if not siblings:
            logger.debug(f"No sibling of {label!r} is a network variable, dropped")
            continue
        evidence = {v: 1 for v in (*result, *c_inf) if v in bn}
        probabilities = _avc_probabilities(siblings, evidence, bn)
        o_max = min(siblings, key=lambda s: (-probabilities[s], s))
        logger.debug(f"Rectified {label!r} ({score:.2f}) to {o_max!r}")
        if o_max not in result:
            result.append(o_max)
    return result


def _concept_sense(
    concept: Concept, entity_id: str, kb: KnowledgeBase, taxonomy: Taxonomy
) -> Set[str]:
    """Superclasses an entity takes in one Concept, read from its non-event neighbors."""
    sense = set()
    for source, _, target in concept.edges:
        if entity_id not in (source, target):
            continue
        other = target if source == entity_id else source
        if kb.graph.kind(other) == NodeKind.EVENT:
            continue
        resolved = taxonomy.resolve(kb.graph.label(other))
        if resolved is not None:
            sense.add(taxonomy.superclass_of(resolved))
    if not sense:
        label = kb.graph.label(entity_id)
        resolved = taxonomy.resolve(label)
        sense.add(taxonomy.superclass_of(resolved) if resolved is not None else label)
    return sense


def filter_events(
    chains: Iterable[EventChain],
    rules: Sequence[CompatRule],
    kb: KnowledgeBase,
    object_meta: ObjectMetaTable,
    detected: Optional[Mapping[str, str]] = None,
) -> EventSelection:
    """Keep chains whose every event is edge-compatible and concept-consistent.

    ``detected`` maps KB entity ids to the detector class they came from;
    animacy and superclass checks prefer it over the KB label.
    """
    detected = detected or {}
    taxonomy = object_meta.taxonomy

    def is_animate(entity_id: str) -> bool:
        label = detected.get(entity_id, kb.graph.label(entity_id))
        return object_meta.is_animate(label)

    def detected_senses(entity_id: str) -> Optional[Set[str]]:
        if entity_id not in detected:
            return None
        senses = object_meta.superclasses(detected[entity_id])
        return senses or {kb.graph.label(entity_id)}

    def compatible(event: str, left: str, right: str) -> bool:
        labels = {n: {e.label for e in kb.graph.edges_between(event, n)} for n in (left, right)}
        for rule in rules:
            first, second = rule.edge_label_pair
            for a, b in ((left, right), (right, left)):
                if first in labels[a] and second in labels[b] \
                        and rule.satisfied({first: a, second: b}, is_animate):
                    return True
        return False

    def consistent(event: str, entity: str) -> bool:
        senses = detected_senses(entity)
        if senses is None:
            return True
        for concept in kb.concepts_with(event):
            linked = any(
                (event, entity) in ((s, t), (t, s)) for s, _, t in concept.edges
            )
            if linked and _concept_sense(concept, entity, kb, taxonomy) & senses:
                return True
        return False

    selection = EventSelection()
    verdicts: Dict[Tuple[str, str, str], bool] = {}
    for chain in chains:
        nodes = chain.nodes
        kept = True
        for i in range(1, len(nodes), 2):
            key = (nodes[i - 1], nodes[i], nodes[i + 1])
            if key not in verdicts:
                event, left, right = nodes[i], nodes[i - 1], nodes[i + 1]
                verdicts[key] = (
                    compatible(event, left, right)
                    and consistent(event, left)
                    and consistent(event, right)
                )
                if not verdicts[key]:
                    logger.debug(f"Rejected event {event} between {left} and {right}")
            kept = kept and verdicts[key]
        if not kept:
            continue
        selection.chains.append(chain)
        selection.o_ev.update(chain.entities)
        for i in range(1, len(nodes), 2):
            event = nodes[i]
            edges = selection.edges.setdefault(event, set())
            for neighbor in (nodes[i - 1], nodes[i + 1]):
                edges.update(e.key for e in kb.graph.edges_between(event, neighbor))
            selection.support[event] += 1
    return selection


def _copy_edge(sdg: SceneDescriptionGraph, edge: Edge, provenance: str) -> None:
    source, label, target = edge
    for node_id in (source, target):
        kind, _, node_label = node_id.partition(':')
        sdg.add_node(node_id, node_label, NodeKind.parse(kind))
    sdg.add_fact(source, label, target, provenance)


def construct_sdg(
    c_inf: Sequence[str],
    events: Mapping[str, Iterable[Edge]],
    o_img: Sequence[str],
    o_ev: AbstractSet[str],
    top_scene: Optional[str],
    kb: KnowledgeBase,
    is_animate: Callable[[str], bool],
    max_chain_events: int = MAX_CHAIN_EVENTS,
    support: Optional[Mapping[str, int]] = None,
) -> SceneDescriptionGraph:
    """Assemble the scene description graph from rules i to iv.

    ``events`` maps event node ids to their compatible edges; ``o_img`` and
    ``o_ev`` hold entity labels.
    """
    if not top_scene:
        raise NoScene("Cannot build a scene description graph without a scene")
    support = support or {}
    sdg = SceneDescriptionGraph(top_scene, kb.graph.edge_vocabulary)

    for avc in c_inf:
        sdg.add_fact(sdg.scene_id, 'component', sdg.ensure(avc, NodeKind.AVC), 'i')

    ordered_events = sorted(events, key=lambda e: (-support.get(e, 0), e))
    for event in ordered_events:
        for edge in sorted(events[event]):
            _copy_edge(sdg, edge, 'iii')
    for event in ordered_events:
        sdg.add_node(event, event.partition(':')[2], NodeKind.EVENT)
        sdg.add_fact(event, 'location', sdg.scene_id, 'ii')

    top_event = ordered_events[0] if ordered_events else None
    for label in o_img:
        if label in o_ev:
            continue
        entity = node_key(label, NodeKind.ENTITY)
        path = None
        if not is_animate(label) and top_event is not None:
            path = shortest_event_path(kb, entity, top_event, max_chain_events)
        if path:
            for edge in path:
                _copy_edge(sdg, edge, 'iv')
        else:
            sdg.add_fact(sdg.ensure(label, NodeKind.ENTITY), 'location', sdg.scene_id, 'iv')

    sdg.validate()
    return sdg


def rank_concepts(
    events: Mapping[str, AbstractSet[Edge]],
    o_ev: AbstractSet[str],
    o_img: Iterable[str],
    c_inf: Iterable[str],
    detection_scores: Mapping[str, float],
    kb: KnowledgeBase,
    cfg: ReasonerConfig = ReasonerConfig(),
    constituent_events: AbstractSet[str] = frozenset(),
) -> List[RankedConcept]:
    """Concepts holding all compatible edges of some surviving event, best first.

    Ordered by matched entity/AVC count, then the geometric mean of the
    detection scores of the Concept's entities and constituent-backed
    events, then concept id.
    """
    if not events:
        return []
    candidates: Dict[int, Concept] = {}
    for event, edges in events.items():
        for concept in kb.concepts_with(event):
            if set(edges) <= concept.edges:
                candidates[concept.concept_id] = concept

    pool = (set(o_img) - set(o_ev)) | set(c_inf)
    ranked = []
    for concept in candidates.values():
        labels = concept.labels()
        counter = sum(1 for label in pool if label in labels)
        scored = sorted(concept.labels(NodeKind.ENTITY)) + sorted(
            e for e in concept.labels(NodeKind.EVENT) if e in constituent_events
        )
        joint = geometric_mean(
            (detection_scores.get(label, cfg.epsilon_missing) for label in scored),
            cfg.epsilon_missing,
        )
        ranked.append(RankedConcept(concept, counter, joint))
    return sorted(ranked, key=lambda r: (-r.match_counter, -r.joint_score, r.concept_id))


def concept_sdg(
    ranked: RankedConcept, kb: KnowledgeBase, top_scene: str
) -> SceneDescriptionGraph:
    """Scene description graph made of one Concept's edges."""
    sdg = SceneDescriptionGraph(top_scene, kb.graph.edge_vocabulary)
    for edge in sorted(ranked.concept.edges):
        _copy_edge(sdg, edge, 'concept')
    return sdg


@dataclass
class InferenceResult:
    image_id: str
    c_freq: List[str]
    c_inf: List[str]
    entropies: List[float]
    o_img: List[str]
    o_ev: List[str]
    events: List[str]
    sdg: SceneDescriptionGraph
    ranked_concepts: List[RankedConcept]
    concept_sdg: Optional[SceneDescriptionGraph]
    sentences: List[str]

    def to_dict(self) -> Dict[str, Any]:
        sdg = self.sdg.to_dict()
        return {
            'image_id': self.image_id,
            'c_freq': self.c_freq,
            'c_inf': self.c_inf,
            'entropies': self.entropies,
            'o_img': self.o_img,
            'o_ev': self.o_ev,
            'events': self.events,
            'sdg': {
                'scene': sdg['scene'],
                'nodes': sdg['nodes'],
                'edges': [{k: v for k, v in e.items() if k != 'provenance'} for e in sdg['edges']],
                'provenance': [e['provenance'] for e in sdg['edges']],
            },
            'ranked_concepts': [r.to_dict() for r in self.ranked_concepts],
            'concept_sdg': self.concept_sdg.to_dict() if self.concept_sdg else None,
            'sentences': self.sentences,
        }


def sdg_from_result(record: Mapping[str, Any]) -> SceneDescriptionGraph:
    """Rebuild the SDG stored in a serialized inference result."""
    raw = record['sdg']
    edges = [
        {**edge, 'provenance': tag} for edge, tag in zip(raw['edges'], raw.get('provenance', []))
    ]
    return SceneDescriptionGraph.from_dict({**raw, 'edges': edges})


class Reasoner:
    """Runs the full per-image pipeline over shared read-only resources."""

    def __init__(
        self,
        kb: KnowledgeBase,
        bn: BayesNet,
        object_meta: ObjectMetaTable,
        scene_meta: SceneMetaTable,
        rules: Sequence[CompatRule],
        lexicon: Lexicon,
        cfg: ReasonerConfig = ReasonerConfig(),
    ):
        self.kb = kb
        self.bn = bn
        self.object_meta = object_meta
        self.taxonomy = object_meta.taxonomy
        self.scene_meta = scene_meta
        self.rules = list(rules)
        self.lexicon = lexicon.with_verbs(n.label for n in kb.graph.nodes(NodeKind.EVENT))
        self.cfg = cfg
        self.realizer = SentenceRealizer(lexicon, cfg.alpha_h)

    def entity_label(self, class_label: str) -> str:
        return self.object_meta.resolve_entity(class_label) or class_label

    def split_objects(
        self, detections: DetectionSet
    ) -> Tuple[List[str], List[Tuple[str, float]], Dict[str, float], Dict[str, str]]:
        """High-confidence entity labels, the rectification band, best scores and source classes."""
        best: Dict[str, Tuple[float, str]] = {}
        for obj in detections.objects:
            label = self.entity_label(obj.label)
            if label not in best or obj.score > best[label][0]:
                best[label] = (obj.score, obj.label)
        ordered = sorted(best, key=lambda label: (-best[label][0], label))
        high = [label for label in ordered if best[label][0] > self.cfg.alpha_h]
        low = [
            (best[label][1], best[label][0]) for label in ordered
            if self.cfg.alpha_l <= best[label][0] <= self.cfg.alpha_h
        ]
        scores = {label: score for label, (score, _) in best.items()}
        sources = {label: source for label, (_, source) in best.items()}
        return high, low, scores, sources

    def constituent_events(
        self, detections: DetectionSet
    ) -> Tuple[Dict[str, Set[Edge]], Dict[str, float]]:
        """Event edges and scores from constituents at or above alpha_l."""
        edges: Dict[str, Set[Edge]] = {}
        scores: Dict[str, float] = {}
        for constituent in detections.constituents:
            if constituent.score < self.cfg.alpha_l:
                continue
            try:
                partial = split_constituent(
                    constituent.label, self.lexicon, self.kb.graph.edge_vocabulary
                )
            except UnparseablePhrase as e:
                logger.warning(f"{detections.image_id}: {e}")
                continue
            partial = generalize(partial, self.taxonomy)
            ids = {n.id: node_key(n.label, n.kind) for n in partial.nodes()}
            for node in partial.nodes(NodeKind.EVENT):
                event = ids[node.id]
                scores[node.label] = max(scores.get(node.label, 0.0), constituent.score)
                event_edges = edges.setdefault(event, set())
                for edge in partial.incident_edges(node.id):
                    event_edges.add((ids[edge.source], edge.label, ids[edge.target]))
        return edges, scores

    def process(self, detections: DetectionSet) -> InferenceResult:
        if detections.top_scene is None:
            raise NoScene(f"No scene detections for image {detections.image_id}")
        o_img, low, scores, sources = self.split_objects(detections)
        constituent_edges, constituent_scores = self.constituent_events(detections)

        c_freq = collect_freq_avcs(detections.scenes, self.scene_meta, self.cfg.avc_freq_threshold)
        inference = infer_avcs(c_freq, o_img, self.bn)
        o_img = rectify_objects(low, o_img, inference.c_inf, self.taxonomy, self.bn, self.object_meta)

        chains: List[EventChain] = []
        for a, b in combinations(o_img, 2):
            try:
                chains.extend(find_connecting_events(
                    self.kb, a, b, self.cfg.max_chain_events, self.cfg.max_chains, self.object_meta
                ))
            except UnknownEntity as e:
                logger.debug(f"{detections.image_id}: {e}")
        detected = {node_key(label, NodeKind.ENTITY): src for label, src in sources.items()}
        selection = filter_events(chains, self.rules, self.kb, self.object_meta, detected)
        o_ev = {node_id.partition(':')[2] for node_id in selection.o_ev}

        events = {event: set(edges) for event, edges in selection.edges.items()}
        support = Counter(selection.support)
        for event, edges in constituent_edges.items():
            events.setdefault(event, set()).update(edges)
            support[event] += 1

        def is_animate(label: str) -> bool:
            return self.object_meta.is_animate(sources.get(label, label))

        sdg = construct_sdg(
            inference.c_inf, events, o_img, o_ev, detections.top_scene.label, self.kb,
            is_animate, self.cfg.max_chain_events, support,
        )
        ranked = rank_concepts(
            selection.edges, o_ev, o_img, inference.c_inf, {**scores, **constituent_scores},
            self.kb, self.cfg, frozenset(constituent_scores),
        )
        best_concept = concept_sdg(ranked[0], self.kb, detections.top_scene.label) if ranked else None

        event_scores = {
            e.partition(':')[2]: self._event_score(e, events[e], scores, constituent_scores)
            for e in events
        }
        sentences = self.realizer.realize(sdg, detections, event_scores)
        return InferenceResult(
            image_id=detections.image_id,
            c_freq=c_freq,
            c_inf=inference.c_inf,
            entropies=inference.entropies,
            o_img=o_img,
            o_ev=sorted(o_ev),
            events=sorted(e.partition(':')[2] for e in events),
            sdg=sdg,
            ranked_concepts=ranked,
            concept_sdg=best_concept,
            sentences=sentences,
        )

    def _event_score(
        self,
        event: str,
        edges: Iterable[Edge],
        scores: Mapping[str, float],
        constituent_scores: Mapping[str, float],
    ) -> float:
        """Joint detection score of an event's participants, for sentence ordering."""
        labels = {n.partition(':')[2] for s, _, t in edges for n in (s, t) if n != event}
        values = [scores.get(label, self.cfg.epsilon_missing) for label in sorted(labels)]
        label = event.partition(':')[2]
        if label in constituent_scores:
            values.append(constituent_scores[label])
        return geometric_mean(values, self.cfg.epsilon_missing)
