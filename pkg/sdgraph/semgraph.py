"""Labeled semantic graphs: Knowledge Base, Concepts and Scene Description Graphs."""
from collections import defaultdict, deque
from dataclasses import dataclass
import logging
from typing import AbstractSet, Any, Dict, FrozenSet, Iterator, List, Mapping, Optional, Set, Tuple

import networkx as nx

from sdgraph.config import EDGE_VOCABULARY, MAX_CHAIN_EVENTS, MAX_CONNECTING_CHAINS
from sdgraph.errors import InputError, InvariantViolation, UnknownEntity, UnknownLabel, UnknownNode
from sdgraph.models import AnnotationRecord, NodeKind
from sdgraph.ontology import ObjectMetaTable, Taxonomy

logger = logging.getLogger(__name__)

Edge = Tuple[str, str, str]

DOT_SHAPES: Dict[NodeKind, str] = {
    NodeKind.ENTITY: 'ellipse',
    NodeKind.EVENT: 'box',
    NodeKind.TRAIT: 'diamond',
    NodeKind.SCENE: 'doubleoctagon',
    NodeKind.AVC: 'note',
}


@dataclass(frozen=True)
class GraphNode:
    id: str
    label: str
    kind: NodeKind


@dataclass(frozen=True)
class GraphEdge:
    source: str
    label: str
    target: str

    @property
    def key(self) -> Edge:
        return (self.source, self.label, self.target)


def node_key(label: str, kind: NodeKind) -> str:
    """Canonical node id used once nodes are unified on (label, kind)."""
    return f"{kind.value}:{label}"


class SemanticGraph:
    """Directed multigraph of labeled nodes; parallel edges differ by label."""

    def __init__(self, edge_vocabulary: AbstractSet[str] = EDGE_VOCABULARY):
        self.graph = nx.MultiDiGraph()
        self.edge_vocabulary = frozenset(edge_vocabulary)

    @classmethod
    def from_annotation(
        cls,
        record: AnnotationRecord,
        edge_vocabulary: AbstractSet[str] = EDGE_VOCABULARY,
    ) -> 'SemanticGraph':
        graph = cls(edge_vocabulary)
        for node in record.nodes:
            graph.add_node(node.id, node.label, node.kind)
        for source, label, target in record.edges:
            graph.add_edge(source, label, target)
        return graph

    def __contains__(self, node_id: str) -> bool:
        return node_id in self.graph

    def __len__(self) -> int:
        return self.graph.number_of_nodes()

    @property
    def edge_count(self) -> int:
        return self.graph.number_of_edges()

    def add_node(self, node_id: str, label: str, kind: NodeKind) -> str:
        if not label:
            raise InputError(f"Node {node_id!r} has an empty label")
        if node_id in self.graph:
            existing = self.graph.nodes[node_id]
            if existing['kind'] != kind:
                raise InvariantViolation(
                    f"Node {node_id!r} already exists with kind {existing['kind'].value}"
                )
            return node_id
        self.graph.add_node(node_id, label=label, kind=kind)
        return node_id

    def add_edge(self, source: str, label: str, target: str, **attrs: Any) -> bool:
        """Add an edge; returns False when the same (source, label, target) exists."""
        if label not in self.edge_vocabulary:
            raise InputError(f"Edge label {label!r} is not in the relation vocabulary")
        for node_id in (source, target):
            if node_id not in self.graph:
                raise UnknownNode(f"Edge endpoint {node_id!r} is not a node")
        if self.graph.has_edge(source, target, key=label):
            return False
        self.graph.add_edge(source, target, key=label, **attrs)
        return True

    def has_edge(self, source: str, label: str, target: str) -> bool:
        return self.graph.has_edge(source, target, key=label)

    def node(self, node_id: str) -> GraphNode:
        try:
            attrs = self.graph.nodes[node_id]
        except KeyError:
            raise UnknownNode(f"Unknown node: {node_id!r}") from None
        return GraphNode(node_id, attrs['label'], attrs['kind'])

    def label(self, node_id: str) -> str:
        return self.node(node_id).label

    def kind(self, node_id: str) -> NodeKind:
        return self.node(node_id).kind

    def nodes(self, kind: Optional[NodeKind] = None) -> List[GraphNode]:
        found = [
            GraphNode(node_id, attrs['label'], attrs['kind'])
            for node_id, attrs in self.graph.nodes(data=True)
            if kind is None or attrs['kind'] == kind
        ]
        return sorted(found, key=lambda n: n.id)

    def edges(self) -> List[GraphEdge]:
        return sorted(
            (GraphEdge(u, key, v) for u, v, key in self.graph.edges(keys=True)),
            key=lambda e: e.key,
        )

    def incident_edges(self, node_id: str) -> List[GraphEdge]:
        self.node(node_id)
        incident = [GraphEdge(u, k, v) for u, v, k in self.graph.out_edges(node_id, keys=True)]
        incident += [GraphEdge(u, k, v) for u, v, k in self.graph.in_edges(node_id, keys=True)]
        return sorted(set(incident), key=lambda e: e.key)

    def edges_between(self, a: str, b: str) -> List[GraphEdge]:
        """Edges joining ``a`` and ``b`` in either direction."""
        found = [GraphEdge(a, k, b) for k in self.graph.get_edge_data(a, b, default={})]
        found += [GraphEdge(b, k, a) for k in self.graph.get_edge_data(b, a, default={})]
        return sorted(found, key=lambda e: e.key)

    def adjacent(self, node_id: str) -> Set[str]:
        """Ids of all nodes joined to ``node_id`` by an edge, direction-agnostic."""
        self.node(node_id)
        return set(self.graph.successors(node_id)) | set(self.graph.predecessors(node_id))

    def neighbors(self, node_id: str) -> Set[str]:
        """Labels of all adjacent nodes; edge labels are not included."""
        return {self.graph.nodes[n]['label'] for n in self.adjacent(node_id)}

    def to_dict(self) -> Dict[str, Any]:
        return {
            'nodes': [{'id': n.id, 'label': n.label, 'kind': n.kind.value} for n in self.nodes()],
            'edges': [
                {'from': e.source, 'label': e.label, 'to': e.target, **self._edge_attrs(e)}
                for e in self.edges()
            ],
        }

    def _edge_attrs(self, edge: GraphEdge) -> Dict[str, Any]:
        return dict(self.graph.edges[edge.source, edge.target, edge.label])

    @classmethod
    def from_dict(
        cls,
        data: Mapping[str, Any],
        edge_vocabulary: AbstractSet[str] = EDGE_VOCABULARY,
    ) -> 'SemanticGraph':
        graph = cls(edge_vocabulary)
        graph._load(data)
        return graph

    def _load(self, data: Mapping[str, Any]) -> None:
        try:
            for node in data.get('nodes', []):
                self.add_node(node['id'], node['label'], NodeKind.parse(node['kind']))
            for edge in data.get('edges', []):
                attrs = {k: v for k, v in edge.items() if k not in ('from', 'label', 'to')}
                self.add_edge(edge['from'], edge['label'], edge['to'], **attrs)
        except (KeyError, TypeError) as e:
            raise InputError(f"Malformed graph: {e}") from e


def generalize(graph: SemanticGraph, taxonomy: Taxonomy) -> SemanticGraph:
    """Replace every Entity label by its superclass, keeping the graph shape."""
    result = SemanticGraph(graph.edge_vocabulary)
    for node in graph.nodes():
        label = node.label
        if node.kind == NodeKind.ENTITY:
            resolved = taxonomy.resolve(label)
            if resolved is None:
                logger.warning(f"Entity {label!r} not in taxonomy, kept as is")
            else:
                label = taxonomy.superclass_of(resolved)
        result.add_node(node.id, label, node.kind)
    for edge in graph.edges():
        result.add_edge(edge.source, edge.label, edge.target)
    return result


@dataclass(frozen=True)
class Concept:
    """Generalized graph of one annotation sentence, as a set of KB edges."""
    concept_id: int
    edges: FrozenSet[Edge]
    source: Tuple[str, str]

    @property
    def node_ids(self) -> Set[str]:
        return {n for source, _, target in self.edges for n in (source, target)}

    def labels(self, kind: Optional[NodeKind] = None) -> Set[str]:
        """Node labels in this Concept, read from the canonical node ids."""
        found = set()
        for node_id in self.node_ids:
            node_kind, _, label = node_id.partition(':')
            if kind is None or node_kind == kind.value:
                found.add(label)
        return found


class KnowledgeBase:
    """Merged commonsense graph G plus the Concept set C."""

    def __init__(self, edge_vocabulary: AbstractSet[str] = EDGE_VOCABULARY):
        self.graph = SemanticGraph(edge_vocabulary)
        self.concepts: List[Concept] = []
        self._label_index: Dict[str, Set[str]] = defaultdict(set)
        self._concepts_by_node: Dict[str, List[int]] = defaultdict(list)

    def __repr__(self) -> str:
        return (
            f"KnowledgeBase(nodes={len(self.graph)}, edges={self.graph.edge_count}, "
            f"concepts={len(self.concepts)})"
        )

    @property
    def counts(self) -> Dict[str, int]:
        return {
            'nodes': len(self.graph),
            'edges': self.graph.edge_count,
            'concepts': len(self.concepts),
        }

    def _ensure_node(self, label: str, kind: NodeKind) -> str:
        node_id = node_key(label, kind)
        if node_id not in self.graph:
            self.graph.add_node(node_id, label, kind)
            self._label_index[label].add(node_id)
        return node_id

    def merge(self, sentence: SemanticGraph, source: Tuple[str, str]) -> Optional[Concept]:
        """Unify ``sentence`` into G on (label, kind) and record its Concept.

        Existing edges get their frequency bumped instead of being duplicated.
        A sentence without edges adds its nodes but yields no Concept.
        """
        mapping = {n.id: self._ensure_node(n.label, n.kind) for n in sentence.nodes()}
        concept_edges = set()
        for edge in sentence.edges():
            source_id, target_id = mapping[edge.source], mapping[edge.target]
            if self.graph.has_edge(source_id, edge.label, target_id):
                self.graph.graph.edges[source_id, target_id, edge.label]['frequency'] += 1
            else:
                self.graph.add_edge(source_id, edge.label, target_id, frequency=1)
            concept_edges.add((source_id, edge.label, target_id))

        if not concept_edges:
            logger.warning(f"Sentence {source} has no edges; no Concept recorded")
            return None
        concept = Concept(len(self.concepts), frozenset(concept_edges), tuple(source))
        self._register(concept)
        return concept

    def _register(self, concept: Concept) -> None:
        self.concepts.append(concept)
        for node_id in sorted(concept.node_ids):
            self._concepts_by_node[node_id].append(concept.concept_id)

    def concept(self, concept_id: int) -> Concept:
        return self.concepts[concept_id]

    def concepts_with(self, node_id: str) -> List[Concept]:
        return [self.concepts[i] for i in self._concepts_by_node.get(node_id, [])]

    def nodes_labeled(self, label: str) -> Set[str]:
        return set(self._label_index.get(label, set()))

    def frequency(self, edge: Edge) -> int:
        source, label, target = edge
        return self.graph.graph.edges[source, target, label]['frequency']

    def weight(self, node_id: str) -> int:
        """Sum of incident edge frequencies; drives greedy frontier ordering."""
        return int(self.graph.graph.degree(node_id, weight='frequency'))

    def entity_id(
        self,
        label: str,
        object_meta: Optional[ObjectMetaTable] = None,
    ) -> str:
        """Resolve a detector or lemma label to an Entity node, consulting O_T."""
        candidates = [label]
        if object_meta is not None:
            try:
                resolved = object_meta.resolve_entity(label)
            except UnknownLabel:
                resolved = None
            if resolved:
                candidates.append(resolved)
            meta = object_meta.get(label)
            if meta is not None:
                candidates.extend(sorted(meta.synonyms))
        for candidate in candidates:
            node_id = node_key(candidate, NodeKind.ENTITY)
            if node_id in self.graph:
                return node_id
        raise UnknownEntity(f"No Entity node for {label!r}")

    def heaviest_edge(self, a: str, b: str) -> Edge:
        """Most frequent edge joining two adjacent nodes, ties by edge tuple."""
        return min(
            (e.key for e in self.graph.edges_between(a, b)),
            key=lambda e: (-self.frequency(e), e),
        )

    def ordered_neighbors(self, node_id: str) -> List[str]:
        """Adjacent ids, heaviest first, ties by label."""
        return sorted(
            self.graph.adjacent(node_id),
            key=lambda n: (-self.weight(n), self.graph.label(n), n),
        )

    def to_dict(self) -> Dict[str, Any]:
        data = self.graph.to_dict()
        data['concepts'] = [
            {
                'concept_id': c.concept_id,
                'source': list(c.source),
                'edges': [{'from': s, 'label': l, 'to': t} for s, l, t in sorted(c.edges)],
            }
            for c in self.concepts
        ]
        return data

    @classmethod
    def from_dict(
        cls,
        data: Mapping[str, Any],
        edge_vocabulary: AbstractSet[str] = EDGE_VOCABULARY,
    ) -> 'KnowledgeBase':
        kb = cls(edge_vocabulary)
        kb.graph._load(data)
        for node in kb.graph.nodes():
            kb._label_index[node.label].add(node.id)
        try:
            for index, raw in enumerate(data.get('concepts', [])):
                edges = frozenset((e['from'], e['label'], e['to']) for e in raw['edges'])
                missing = [e for e in edges if not kb.graph.has_edge(*e)]
                if missing or not edges:
                    raise InputError(f"Concept {raw.get('concept_id')} references missing edges {missing}")
                if int(raw['concept_id']) != index:
                    raise InputError(f"Concept ids must be dense, got {raw['concept_id']} at {index}")
                kb._register(Concept(index, edges, tuple(raw['source'])))
        except (KeyError, TypeError) as e:
            raise InputError(f"Malformed knowledge base: {e}") from e
        return kb


@dataclass(frozen=True)
class EventChain:
    """Alternating entity/event node ids, starting and ending on an entity."""
    nodes: Tuple[str, ...]

    @property
    def labels(self) -> List[str]:
        return [n.partition(':')[2] for n in self.nodes]

    @property
    def events(self) -> List[str]:
        return list(self.nodes[1::2])

    @property
    def entities(self) -> List[str]:
        return list(self.nodes[0::2])

    def __len__(self) -> int:
        return len(self.nodes)


def _alternating_paths(
    kb: KnowledgeBase, start: str, max_events: int, stop_at: Optional[str] = None
) -> Iterator[Tuple[str, ...]]:
    """Breadth-first simple paths from ``start`` alternating Entity and Event.

    Paths are not extended past ``stop_at``.
    """
    queue = deque([(start,)])
    while queue:
        path = queue.popleft()
        yield path
        tail = path[-1]
        if tail == stop_at:
            continue
        want = NodeKind.EVENT if kb.graph.kind(tail) == NodeKind.ENTITY else NodeKind.ENTITY
        events_so_far = len(path) // 2
        if want == NodeKind.EVENT and events_so_far >= max_events:
            continue
        for neighbor in kb.ordered_neighbors(tail):
            if neighbor not in path and kb.graph.kind(neighbor) == want:
                queue.append(path + (neighbor,))


def find_connecting_events(
    kb: KnowledgeBase,
    a: str,
    b: str,
    max_events: int = MAX_CHAIN_EVENTS,
    limit: int = MAX_CONNECTING_CHAINS,
    object_meta: Optional[ObjectMetaTable] = None,
) -> List[EventChain]:
    """Greedy breadth-first search for event chains linking two entities.

    Frontiers expand heaviest neighbor first (summed edge frequency), ties by
    label, and the search stops once ``limit`` chains are found.
    """
    if a == b:
        return []
    start = kb.entity_id(a, object_meta)
    goal = kb.entity_id(b, object_meta)
    if start == goal:
        return []

    chains: List[EventChain] = []
    for path in _alternating_paths(kb, start, max_events, stop_at=goal):
        if len(path) == 1 or path[-1] != goal:
            continue
        chains.append(EventChain(path))
        if len(chains) >= limit:
            break
    return chains


def shortest_event_path(
    kb: KnowledgeBase,
    entity: str,
    event: str,
    max_events: int = MAX_CHAIN_EVENTS,
) -> Optional[List[Edge]]:
    """KB edges along the shortest alternating path from an Entity to an Event node.

    Returns None when the event is not reachable with at most ``max_events``
    event nodes on the path (the target event included).
    """
    if entity not in kb.graph or event not in kb.graph:
        return None
    for path in _alternating_paths(kb, entity, max_events, stop_at=event):
        if path[-1] == event:
            return [kb.heaviest_edge(u, v) for u, v in zip(path, path[1:])]
    return None


class SceneDescriptionGraph(SemanticGraph):
    """Per-image output graph with one scene node and per-edge provenance."""

    def __init__(self, scene: str, edge_vocabulary: AbstractSet[str] = EDGE_VOCABULARY):
        super().__init__(edge_vocabulary)
        self.scene = scene
        self.scene_id = node_key(scene, NodeKind.SCENE)
        super().add_node(self.scene_id, scene, NodeKind.SCENE)

    def add_node(self, node_id: str, label: str, kind: NodeKind) -> str:
        if kind == NodeKind.SCENE and node_id != self.scene_id:
            raise InvariantViolation("A scene description graph has exactly one scene node")
        return super().add_node(node_id, label, kind)

    def ensure(self, label: str, kind: NodeKind) -> str:
        return self.add_node(node_key(label, kind), label, kind)

    def add_fact(self, source: str, label: str, target: str, provenance: str) -> bool:
        """Add ``has(source, label, target)``; the first provenance tag wins."""
        return self.add_edge(source, label, target, provenance=provenance)

    def provenance(self, edge: Edge) -> str:
        source, label, target = edge
        return self.graph.edges[source, target, label]['provenance']

    @property
    def provenance_map(self) -> Dict[Edge, str]:
        return {e.key: self.provenance(e.key) for e in self.edges()}

    def validate(self) -> None:
        scenes = self.nodes(NodeKind.SCENE)
        if len(scenes) != 1:
            raise InvariantViolation(f"Expected one scene node, found {len(scenes)}")
        for event in self.nodes(NodeKind.EVENT):
            if not self.adjacent(event.id):
                raise InvariantViolation(f"Event {event.label!r} has no incident edge")

    def to_dict(self) -> Dict[str, Any]:
        data = super().to_dict()
        data['scene'] = self.scene
        return data

    @classmethod
    def from_dict(
        cls,
        data: Mapping[str, Any],
        edge_vocabulary: AbstractSet[str] = EDGE_VOCABULARY,
    ) -> 'SceneDescriptionGraph':
        try:
            sdg = cls(data['scene'], edge_vocabulary)
        except KeyError as e:
            raise InputError("Scene description graph without a scene") from e
        sdg._load(data)
        return sdg


def _dot_quote(text: str) -> str:
    return '"' + text.replace('\\', '\\\\').replace('"', '\\"') + '"'


def to_dot(graph: SemanticGraph, name: str = 'G') -> str:
    """Render a graph as a Graphviz digraph; node shape encodes the kind."""
    lines = [f"digraph {_dot_quote(name)} {{"]
    for node in graph.nodes():
        lines.append(
            f"   {_dot_quote(node.id)} [label={_dot_quote(node.label)}, "
            f"shape={DOT_SHAPES[node.kind]}];"
        )
    for edge in graph.edges():
        lines.append(
            f"   {_dot_quote(edge.source)} -> {_dot_quote(edge.target)} "
            f"[label={_dot_quote(edge.label)}];"
        )
    lines.append("}")
    return "\n".join(lines) + "\n"
