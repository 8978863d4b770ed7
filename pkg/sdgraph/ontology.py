"""Lexical resources: taxonomy, object metadata (O_T) and scene metadata (S_M)."""
from dataclasses import dataclass
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, FrozenSet, Iterable, List, Mapping, Optional, Set, Tuple

import networkx as nx

from sdgraph.errors import InputError, TaxonomyError, UnknownLabel

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TaxonomyNode:
    """One lemma in the hypernym DAG."""
    label: str
    parents: FrozenSet[str]
    children: FrozenSet[str]
    synonyms: FrozenSet[str]
    animate: bool
    count: int
    is_generalization_class: bool = False


class Taxonomy:
    """Hypernym DAG with corpus counts.

    Edges point from hypernym to hyponym. The DAG has a single root, and
    information content is computed from subsumed counts:
    subsumed(x) = count(x) + sum(subsumed(c) for c in children(x)).
    """

    def __init__(self, records: Iterable[Mapping[str, Any]]):
        self._graph = nx.DiGraph()
        raw: Dict[str, Mapping[str, Any]] = {}
        for record in records:
            try:
                label = str(record['label']).lower()
            except KeyError as e:
                raise TaxonomyError(f"Taxonomy record without label: {record}") from e
            if label in raw:
                raise TaxonomyError(f"Duplicate taxonomy label: {label!r}")
            raw[label] = record
            self._graph.add_node(label)

        for label, record in raw.items():
            for parent in record.get('parents', []):
                parent = str(parent).lower()
                if parent not in raw:
                    raise TaxonomyError(f"{label!r} names unknown parent {parent!r}")
                self._graph.add_edge(parent, label)

        if not raw:
            raise TaxonomyError("Taxonomy is empty")
        if not nx.is_directed_acyclic_graph(self._graph):
            raise TaxonomyError("Taxonomy contains a cycle")
        roots = [n for n in self._graph.nodes if self._graph.in_degree(n) == 0]
        if len(roots) != 1:
            raise TaxonomyError(f"Taxonomy must have exactly one root, found {sorted(roots)}")
        self.root: str = roots[0]

        self._nodes: Dict[str, TaxonomyNode] = {}
        for label, record in raw.items():
            count = int(record.get('count', 0))
            if count < 0:
                raise TaxonomyError(f"Negative count for {label!r}")
            self._nodes[label] = TaxonomyNode(
                label=label,
                parents=frozenset(self._graph.predecessors(label)),
                children=frozenset(self._graph.successors(label)),
                synonyms=frozenset(str(s).lower() for s in record.get('synonyms', [])),
                animate=bool(record.get('animate', False)),
                count=count,
                is_generalization_class=bool(record.get('is_generalization_class', False)),
            )

        for label, node in self._nodes.items():
            if node.animate:
                inanimate = [c for c in nx.descendants(self._graph, label) if not self._nodes[c].animate]
                if inanimate:
                    raise TaxonomyError(
                        f"Animate node {label!r} has inanimate descendants {sorted(inanimate)}"
                    )

        self._subsumed: Dict[str, int] = {}
        for label in reversed(list(nx.topological_sort(self._graph))):
            node = self._nodes[label]
            self._subsumed[label] = node.count + sum(self._subsumed[c] for c in node.children)
        if self._subsumed[self.root] <= 0:
            raise TaxonomyError("Root subsumed count must be strictly positive")

        self._synonym_index: Dict[str, str] = {}
        for label in sorted(self._nodes):
            for synonym in self._nodes[label].synonyms:
                self._synonym_index.setdefault(synonym, label)
        self._lin_cache: Dict[Tuple[str, str], float] = {}

    @classmethod
    def from_file(cls, path: Path) -> 'Taxonomy':
        try:
            records = json.loads(Path(path).read_text(encoding='utf-8'))
        except (OSError, json.JSONDecodeError) as e:
            raise TaxonomyError(f"Cannot read taxonomy {path}: {e}") from e
        if not isinstance(records, list):
            raise TaxonomyError(f"Taxonomy {path} must hold a JSON array")
        return cls(records)

    def __contains__(self, label: str) -> bool:
        return label in self._nodes

    def __len__(self) -> int:
        return len(self._nodes)

    @property
    def labels(self) -> List[str]:
        return sorted(self._nodes)

    def node(self, label: str) -> TaxonomyNode:
        try:
            return self._nodes[label]
        except KeyError:
            raise UnknownLabel(label) from None

    def resolve(self, word: str) -> Optional[str]:
        """Map a word to its taxonomy label, through synonyms if needed."""
        word = word.lower()
        if word in self._nodes:
            return word
        return self._synonym_index.get(word)

    def is_animate(self, label: str) -> bool:
        return self.node(label).animate

    def ancestors(self, label: str) -> Set[str]:
        """All hypernyms of ``label``, excluding itself."""
        self.node(label)
        return nx.ancestors(self._graph, label)

    def superclass_of(self, label: str) -> str:
        """Nearest ancestor-or-self marked as a generalization class, else the root."""
        self.node(label)
        frontier = [label]
        seen = {label}
        while frontier:
            marked = sorted(n for n in frontier if self._nodes[n].is_generalization_class)
            if marked:
                return marked[0]
            next_frontier = set()
            for current in frontier:
                next_frontier.update(p for p in self._nodes[current].parents if p not in seen)
            seen.update(next_frontier)
            frontier = sorted(next_frontier)
        return self.root

    def siblings_of(self, label: str) -> Set[str]:
        """Children of every hypernym of ``label``, minus ``label`` itself."""
        node = self.node(label)
        siblings: Set[str] = set()
        for parent in node.parents:
            siblings.update(self._nodes[parent].children)
        siblings.discard(label)
        return siblings

    def subsumed_count(self, label: str) -> int:
        self.node(label)
        return self._subsumed[label]

    def information_content(self, label: str) -> float:
        return -math.log(self.subsumed_count(label) / self._subsumed[self.root])

    def lowest_common_subsumer(self, a: str, b: str) -> str:
        """Most informative common ancestor-or-self; ties go to the smaller label."""
        common = (self.ancestors(a) | {a}) & (self.ancestors(b) | {b})
        return min(common, key=lambda n: (-self.information_content(n), n))

    def lin_similarity(self, a: str, b: str) -> float:
        """Lin similarity 2*IC(lcs) / (IC(a) + IC(b)), natural-log IC."""
        key = (a, b) if a <= b else (b, a)
        cached = self._lin_cache.get(key)
        if cached is not None:
            return cached
        ic_a = self.information_content(a)
        ic_b = self.information_content(b)
        if ic_a + ic_b == 0:
            value = 0.0
        else:
            lcs = self.lowest_common_subsumer(a, b)
            value = min(1.0, max(0.0, 2.0 * self.information_content(lcs) / (ic_a + ic_b)))
        self._lin_cache[key] = value
        return value

    def label_similarity(self, a: str, b: str) -> float:
        """Lin similarity made total over arbitrary graph labels.

        Identical labels score 1.0, including the root. Labels missing from
        the taxonomy score 0.0 against anything else.
        """
        if a == b:
            return 1.0
        if a in self._nodes and b in self._nodes:
            return self.lin_similarity(a, b)
        return 0.0


@dataclass(frozen=True)
class ObjectMeta:
    """O_T entry for one detector object class."""
    class_label: str
    synonyms: FrozenSet[str]
    hypernyms: FrozenSet[str]
    hyponyms: FrozenSet[str]
    animate: bool


class ObjectMetaTable:
    """Object metadata keyed by detector class label."""

    def __init__(self, entries: Mapping[str, ObjectMeta], taxonomy: Taxonomy):
        self.taxonomy = taxonomy
        for meta in entries.values():
            for label in (*meta.synonyms, *meta.hypernyms, *meta.hyponyms):
                if label not in taxonomy:
                    raise InputError(
                        f"O_T entry {meta.class_label!r} references unknown label {label!r}"
                    )
        self._entries: Dict[str, ObjectMeta] = dict(entries)

    @classmethod
    def from_file(cls, path: Path, taxonomy: Taxonomy) -> 'ObjectMetaTable':
        try:
            data = json.loads(Path(path).read_text(encoding='utf-8'))
        except (OSError, json.JSONDecodeError) as e:
            raise InputError(f"Cannot read object metadata {path}: {e}") from e
        return cls.from_dict(data, taxonomy)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], taxonomy: Taxonomy) -> 'ObjectMetaTable':
        entries = {}
        for class_label, body in data.items():
            class_label = class_label.lower()
            entries[class_label] = ObjectMeta(
                class_label=class_label,
                synonyms=frozenset(s.lower() for s in body.get('synonyms', [])),
                hypernyms=frozenset(h.lower() for h in body.get('hypernyms', [])),
                hyponyms=frozenset(h.lower() for h in body.get('hyponyms', [])),
                animate=bool(body.get('animate', False)),
            )
        return cls(entries, taxonomy)

    def __contains__(self, class_label: str) -> bool:
        return class_label in self._entries

    def get(self, class_label: str) -> Optional[ObjectMeta]:
        return self._entries.get(class_label)

    def taxonomy_label(self, class_label: str) -> Optional[str]:
        """Taxonomy lemma for a detector class, before generalization."""
        direct = self.taxonomy.resolve(class_label)
        if direct is not None:
            return direct
        meta = self._entries.get(class_label)
        if meta is None:
            return None
        for synonym in sorted(meta.synonyms):
            if synonym in self.taxonomy:
                return synonym
        return None

    def resolve_entity(self, class_label: str) -> Optional[str]:
        """Generalized KB entity label for a detector class."""
        label = self.taxonomy_label(class_label)
        return self.taxonomy.superclass_of(label) if label is not None else None

    def is_animate(self, class_label: str) -> bool:
        meta = self._entries.get(class_label)
        if meta is not None:
            return meta.animate
        label = self.taxonomy_label(class_label)
        return label is not None and self.taxonomy.is_animate(label)

    def superclasses(self, class_label: str) -> Set[str]:
        """Generalization classes a detector class belongs to."""
        found: Set[str] = set()
        meta = self._entries.get(class_label)
        if meta is not None:
            found.update(self.taxonomy.superclass_of(h) for h in meta.hypernyms)
        label = self.taxonomy_label(class_label)
        if label is not None:
            found.add(self.taxonomy.superclass_of(label))
        found.discard(self.taxonomy.root)
        return found


@dataclass(frozen=True)
class SceneMeta:
    """S_M entry: a scene class with its synonyms and prior-weighted AVCs."""
    scene_label: str
    synonyms: FrozenSet[str]
    avcs: Tuple[Tuple[str, float], ...]

    def __post_init__(self):
        names = [name for name, _ in self.avcs]
        if len(names) != len(set(names)):
            raise InputError(f"Duplicate AVC names for scene {self.scene_label!r}")
        for name, prior in self.avcs:
            if not 0.0 <= prior <= 1.0:
                raise InputError(f"Prior {prior} of AVC {name!r} out of [0, 1]")

    @property
    def avc_names(self) -> List[str]:
        return [name for name, _ in self.avcs]


class SceneMetaTable:
    """Scene-to-AVC mapping keyed by scene label, reachable through synonyms."""

    def __init__(self, entries: Iterable[SceneMeta]):
        self._entries: Dict[str, SceneMeta] = {}
        self._synonyms: Dict[str, str] = {}
        for meta in entries:
            self._entries[meta.scene_label] = meta
        for label in sorted(self._entries):
            for synonym in self._entries[label].synonyms:
                self._synonyms.setdefault(synonym, label)

    @classmethod
    def from_file(cls, path: Path) -> 'SceneMetaTable':
        try:
            data = json.loads(Path(path).read_text(encoding='utf-8'))
        except (OSError, json.JSONDecodeError) as e:
            raise InputError(f"Cannot read scene metadata {path}: {e}") from e
        return cls.from_dict(data, str(path))

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], where: str = 'scene metadata') -> 'SceneMetaTable':
        try:
            return cls(
                SceneMeta(
                    scene_label=label,
                    synonyms=frozenset(body.get('synonyms', [])),
                    avcs=tuple((a['name'], float(a['prior'])) for a in body.get('avcs', [])),
                )
                for label, body in data.items()
            )
        except (KeyError, TypeError, ValueError) as e:
            raise InputError(f"Malformed {where}: {e}") from e

    def resolve(self, scene: str) -> Optional[SceneMeta]:
        if scene in self._entries:
            return self._entries[scene]
        label = self._synonyms.get(scene)
        return self._entries[label] if label else None

    def __contains__(self, scene: str) -> bool:
        return self.resolve(scene) is not None

    @property
    def avc_names(self) -> Set[str]:
        return {name for meta in self._entries.values() for name in meta.avc_names}
